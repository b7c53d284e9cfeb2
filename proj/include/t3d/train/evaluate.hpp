#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "t3d/metrics/metrics.hpp"
#include "t3d/model/reconstruction_model.hpp"
#include "t3d/train/config.hpp"
#include "t3d/train/data_source.hpp"

namespace t3d::train {

inline constexpr double kDefaultThreshold = 0.5;

/// The inputs supplied do not match what the model variant reads (mask given to a topogram-only model,
/// mask missing for a mask model, ...).
class VariantMismatch : public Error {
 public:
  using Error::Error;
};

/// Probability grid for one observation: decode of the observation latent with inference batch-norm.
voxel::VoxelGrid predict(const model::ReconstructionModel<float>& model, const voxel::Topogram* topogram,
                         const voxel::Mask2D* mask, voxel::Spacing spacing);

/// Batched predictions for the given cases, each carrying its ground-truth spacing.
std::vector<metrics::LabeledGrid> predict_cases(const model::ReconstructionModel<float>& model, const DataSource& source,
                                                const std::vector<std::string>& ids, int batch_size = 8);

/// Binarised predictions scored against the ground-truth shapes.
metrics::MetricsReport evaluate(const model::ReconstructionModel<float>& model, const DataSource& source,
                                const std::vector<std::string>& ids, double threshold = kDefaultThreshold);

struct AblationRun {
  std::string label;
  TrainingConfig config;
};

struct AblationResult {
  std::vector<std::pair<std::string, metrics::MetricsReport>> reports;
  nlohmann::json tables;
};

/// Trains every configuration on the split's training ids and evaluates it on the test ids.
AblationResult run_ablation(const std::vector<AblationRun>& runs, const DatasetSplit& split, const DataSource& source,
                            const std::function<void(const std::string&)>& progress = {});

}  // namespace t3d::train
