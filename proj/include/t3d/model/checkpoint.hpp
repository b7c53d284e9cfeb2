#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "t3d/model/adam.hpp"
#include "t3d/model/reconstruction_model.hpp"

namespace t3d::model {

inline constexpr std::string_view kCheckpointMagic = "T3DCKPT1";

/// Self-describing model snapshot: JSON header followed by named little-endian float32 arrays.
struct Checkpoint {
  struct Array {
    std::vector<int> shape;
    std::vector<float> values;
    bool operator==(const Array&) const = default;
  };

  ModelConfig model;
  nlohmann::json training = nlohmann::json::object();
  nlohmann::json summary = nlohmann::json::object();
  std::uint64_t seed = 0;
  int epoch = 0;
  std::int64_t step = 0;
  std::optional<std::int64_t> optimizer_steps;
  std::map<std::string, Array> arrays;
};

std::string encode_checkpoint(const Checkpoint& checkpoint);
Checkpoint decode_checkpoint(std::string_view bytes);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);
/// Only the JSON header, without reading the arrays.
nlohmann::json read_checkpoint_header(const std::filesystem::path& path);

/// Model parameters (and optimizer moments when given) as checkpoint arrays.
Checkpoint snapshot(const ReconstructionModel<float>& model, const Adam* optimizer);
/// Builds the model described by the checkpoint and loads its parameters.
ReconstructionModel<float> restore_model(const Checkpoint& checkpoint);
void load_parameters(ReconstructionModel<float>& model, const Checkpoint& checkpoint);
/// Optimizer with the checkpointed moments and step count; throws if the checkpoint carries none.
Adam restore_optimizer(const Checkpoint& checkpoint, AdamConfig config);

}  // namespace t3d::model
