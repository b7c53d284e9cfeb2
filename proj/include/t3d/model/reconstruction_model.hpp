#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "t3d/model/losses.hpp"
#include "t3d/model/network.hpp"
#include "t3d/model/spec.hpp"
#include "t3d/voxel/grid.hpp"

namespace t3d::model {

enum class Variant { topogram_only, topogram_mask, mask_only, no_shape_encoder };

std::string_view to_string(Variant variant);
Variant variant_from_string(std::string_view text);

bool reads_topogram(Variant variant);
bool reads_mask(Variant variant);
bool has_shape_encoder(Variant variant);
/// 50 / 0.1 / 50 / 1e-4 with the terms a variant cannot use set to zero.
LossWeights default_weights(Variant variant);

struct ModelConfig {
  Variant variant = Variant::topogram_mask;
  ModelDims dims;
  voxel::Axis axis = voxel::kCanonicalAxis;
  bool operator==(const ModelConfig&) const = default;
};

nlohmann::json to_json(const ModelConfig& config);
/// Specs of the networks a configuration instantiates, in parameter order.
std::vector<NetworkSpec> network_specs(const ModelConfig& config);
ModelConfig model_config_from_json(const nlohmann::json& j);

/// Shapes are (N,1,D,D,D); topograms (N,1,1,S,S); masks (N,1,1,M,M). Unused inputs may be left empty.
template <typename T>
struct Batch {
  Tensor<T> shapes;
  Tensor<T> topograms;
  Tensor<T> masks;
  int size() const;
};

template <typename T>
Tensor<T> volume_batch(int n, int dim) {
  return Tensor<T>(n, 1, dim, dim, dim);
}
template <typename T>
Tensor<T> image_batch(int n, int dim) {
  return Tensor<T>(n, 1, 1, dim, dim);
}
template <typename T>
void set_example(Tensor<T>& tensor, int n, std::span<const float> values) {
  auto dst = tensor.example(n);
  if (dst.size() != values.size()) throw DimensionMismatch("example does not fit the batch tensor");
  for (std::size_t i = 0; i < values.size(); ++i) dst[i] = static_cast<T>(values[i]);
}

/// Probability grid of example n of a decoder output.
voxel::VoxelGrid probability_grid(const Tensor<float>& decoded, int n, voxel::Spacing spacing);

template <typename T>
struct StepOutput {
  LossComponents terms;
  double total = 0.0;
};

/// The shape VAE with the observation encoders of one variant.
template <typename T>
class ReconstructionModel {
 public:
  explicit ReconstructionModel(ModelConfig config);

  const ModelConfig& config() const { return config_; }
  void initialize(std::uint64_t seed);

  /// Training-mode forward and backward on one batch. Gradients accumulate; call zero_grad first.
  /// `noise` holds N x latent standard normal samples for the reparameterisation. Mode::eval freezes
  /// batch-norm at its population statistics. `relu_pattern`, when given, receives the on/off state of
  /// every ReLU unit of the step.
  StepOutput<T> train_step(const Batch<T>& batch, const LossWeights& weights, std::span<const T> noise,
                           Mode mode = Mode::train, std::vector<bool>* relu_pattern = nullptr);

  /// Loss terms with inference batch-norm and z = mu on the shape path.
  LossComponents evaluate_losses(const Batch<T>& batch, const LossWeights& weights) const;

  /// (N, 2*latent) raw encoder outputs turned into posteriors.
  std::vector<GaussianPosterior> encode_shape(const Tensor<T>& shapes) const;
  /// Observation latent (N, latent, 1, 1, 1) from the inputs the variant reads.
  Tensor<T> encode_observation(const Batch<T>& batch) const;
  Tensor<T> decode(const Tensor<T>& latent) const;
  Tensor<T> predict(const Batch<T>& batch) const { return decode(encode_observation(batch)); }

  void zero_grad();
  std::vector<ParamView<T>> parameters();
  std::vector<ParamView<const T>> parameters() const;
  std::size_t parameter_count() const;

  /// Sets every batch-norm population statistic from `chunks` batches of training data.
  void calibrate_batchnorm(std::size_t chunks, const std::function<Batch<T>(std::size_t)>& batch_for_chunk);

  Network<T>* shape_encoder() { return shape_encoder_ ? &*shape_encoder_ : nullptr; }
  Network<T>& decoder() { return decoder_; }
  Network<T>* topogram_branch() { return topogram_branch_ ? &*topogram_branch_ : nullptr; }
  Network<T>* mask_branch() { return mask_branch_ ? &*mask_branch_ : nullptr; }
  Network<T>* combiner() { return combiner_ ? &*combiner_ : nullptr; }
  std::vector<const Network<T>*> networks() const;

 private:
  struct ObservationTape {
    typename Network<T>::Tape topogram, mask, combiner;
  };

  Tensor<T> observation_forward(const Batch<T>& batch, Mode mode, ObservationTape* tape) const;
  void observation_backward(const ObservationTape& tape, const Tensor<T>& grad);
  void check_batch(const Batch<T>& batch, bool need_shapes, bool need_masks) const;

  ModelConfig config_;
  std::optional<Network<T>> shape_encoder_;
  Network<T> decoder_;
  std::optional<Network<T>> topogram_branch_;
  std::optional<Network<T>> mask_branch_;
  std::optional<Network<T>> combiner_;
};

extern template class ReconstructionModel<float>;
extern template class ReconstructionModel<double>;

}  // namespace t3d::model
