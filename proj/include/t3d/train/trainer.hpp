#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "t3d/model/checkpoint.hpp"
#include "t3d/train/config.hpp"
#include "t3d/train/data_source.hpp"

namespace t3d::train {

/// A loss term became NaN or infinite; `term` names it.
class TrainingDiverged : public Error {
 public:
  TrainingDiverged(std::string term, int epoch, std::int64_t step);
  const std::string& term() const { return term_; }

 private:
  std::string term_;
};

struct StepRecord {
  int epoch = 0;
  std::int64_t step = 0;
  int batch_size = 0;
  model::LossComponents terms;
  double total = 0.0;
  double wall_ms = 0.0;
};

struct EpochRecord {
  int epoch = 0;
  int steps = 0;
  model::LossComponents mean;
  double mean_total = 0.0;
  double wall_ms = 0.0;
  std::optional<nlohmann::json> snapshot;  ///< evaluation snapshot when requested
};

struct TrainingLog {
  std::vector<StepRecord> steps;
  std::vector<EpochRecord> epochs;
};

nlohmann::json to_json(const StepRecord& record);
nlohmann::json to_json(const EpochRecord& record);

struct TrainOptions {
  std::filesystem::path log_path;         ///< JSON-lines log, one record per step plus one per epoch
  std::filesystem::path checkpoint_path;  ///< written every checkpoint_every epochs and at the end
  const model::Checkpoint* resume = nullptr;
  int snapshot_every = 0;  ///< epochs between training-set evaluation snapshots; 0 disables
  std::function<void(const EpochRecord&)> on_epoch;
};

struct TrainingResult {
  model::Checkpoint checkpoint;
  TrainingLog log;
};

/// Joint training with Adam on the combined objective. The mask target is the projection of the training
/// shape. Shuffling and reparameterisation noise are drawn from streams keyed by (seed, epoch, batch), so a
/// run resumed from any checkpoint continues bit-identically.
TrainingResult train(const TrainingConfig& config, const DatasetSplit& split, const DataSource& source,
                     const TrainOptions& options = {});

}  // namespace t3d::train
