#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>

#include <json.hpp>

#include "t3d/model/losses.hpp"
#include "t3d/model/reconstruction_model.hpp"

namespace t3d::train {

/// Joint training settings. Defaults follow the reference protocol: Adam at 1e-4, 250 epochs, batch 32,
/// production tensor sizes and the variant's default loss weights.
struct TrainingConfig {
  model::Variant variant = model::Variant::topogram_mask;
  model::LossWeights alphas = model::default_weights(model::Variant::topogram_mask);
  double learning_rate = 1e-4;
  int epochs = 250;
  int batch_size = 32;
  std::uint64_t seed = 0;
  std::optional<std::uint64_t> init_seed;     ///< derived from seed when absent
  std::optional<std::uint64_t> shuffle_seed;  ///< derived from seed when absent
  std::optional<std::uint64_t> noise_seed;    ///< derived from seed when absent
  model::ModelDims dims = model::ModelDims::production();
  voxel::Axis axis = voxel::kCanonicalAxis;
  int checkpoint_every = 0;  ///< epochs between intermediate checkpoints; 0 disables

  std::uint64_t effective_init_seed() const;
  std::uint64_t effective_shuffle_seed() const;
  std::uint64_t effective_noise_seed() const;
  model::ModelConfig model_config() const { return {variant, dims, axis}; }

  /// Enforces the variant's weight constraints and checks ranges; throws InvalidArgument.
  void validate() const;
  bool operator==(const TrainingConfig&) const = default;
};

/// Config with the given variant and its default weights.
TrainingConfig default_config(model::Variant variant);

/// Parses a JSON config. Missing keys take their defaults; unknown keys are rejected. Keys:
/// variant, alphas{alpha1..alpha4}, learning_rate, epochs, batch_size, seed, init_seed, shuffle_seed,
/// noise_seed, dims ("production" | "reduced"), grid_dim, topo_dim, mask_dim, latent_dim, base_channels,
/// axis, checkpoint_every. Loss weights of terms a variant cannot use are forced to zero.
TrainingConfig config_from_json(const nlohmann::json& j);
TrainingConfig read_config(const std::filesystem::path& path);
nlohmann::json to_json(const TrainingConfig& config);

}  // namespace t3d::train
