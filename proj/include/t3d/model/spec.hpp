#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "t3d/error.hpp"

namespace t3d::model {

class SpecError : public Error {
 public:
  using Error::Error;
};

enum class Norm { batch_norm, none };
enum class Activation { relu, sigmoid, none };
enum class Role { shape_encoder, shape_decoder, topogram_branch, mask_branch, combiner };

std::string_view to_string(Role role);
Role role_from_string(std::string_view text);

struct ConvLayerSpec {
  int in_channels = 1;
  int out_channels = 1;
  int kernel = 1;
  int stride = 1;
  int padding = 0;
  Norm norm = Norm::none;
  Activation activation = Activation::none;
  bool transposed = false;

  /// Spatial output extent for a given input extent; throws SpecError when not a positive integer.
  int output_size(int input) const;
  bool operator==(const ConvLayerSpec&) const = default;
};

struct DenseSpec {
  int in_features = 1;
  int out_features = 1;
  Activation activation = Activation::none;
  bool operator==(const DenseSpec&) const = default;
};

struct NetworkSpec {
  Role role = Role::shape_encoder;
  int rank = 3;  ///< spatial dimensionality of the conv chain: 2 or 3
  int input_channels = 1;
  int input_size = 1;
  std::vector<ConvLayerSpec> layers;
  std::optional<DenseSpec> dense;
  int output_channels = 1;
  int output_size = 1;

  /// Spatial extents from input through every layer. Throws SpecError on any inconsistency,
  /// including a chain that does not end at the declared output size and channel count.
  std::vector<int> spatial_chain() const;
  void validate() const { (void)spatial_chain(); }
  bool operator==(const NetworkSpec&) const = default;
};

/// Tensor extents of the whole model. Production: 64^3 grid, 256^2 topogram, 64^2 mask, latent 200.
struct ModelDims {
  int grid = 64;
  int topogram = 256;
  int mask = 64;
  int latent = 200;
  int base_channels = 64;  ///< channels of the first conv layer; later layers double

  static ModelDims production() { return {}; }
  /// Desk-scale configuration: 32^3 / 128^2 / 32^2, latent 64.
  static ModelDims reduced(int base_channels = 16) { return {32, 128, 32, 64, base_channels}; }
  void validate() const;
  bool operator==(const ModelDims&) const = default;
};

/// 3D conv encoder: kernel-4 stride-2 pad-1 halvings down to 4^3, then a valid conv to 1^3 emitting
/// 2 * latent channels (mean and log-variance).
NetworkSpec shape_encoder_spec(const ModelDims& dims);
/// Transposed-conv mirror of the shape encoder ending in a sigmoid over a single channel.
NetworkSpec shape_decoder_spec(const ModelDims& dims);
/// 2D conv encoder: kernel 11 stride 4 stem, up to three kernel-5 stride-2 halvings, valid conv to 1^2.
NetworkSpec topogram_encoder_spec(const ModelDims& dims);
/// 2D conv encoder for masks: kernel 3 stride 4 stem, then kernel-3 stride-2 halvings to 1^2.
NetworkSpec mask_branch_spec(const ModelDims& dims);
/// Single fully connected layer from the concatenated branch features (2 * latent) to the latent.
NetworkSpec combiner_spec(const ModelDims& dims);

nlohmann::json to_json(const NetworkSpec& spec);
NetworkSpec network_spec_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ModelDims& dims);
ModelDims model_dims_from_json(const nlohmann::json& j);

}  // namespace t3d::model
