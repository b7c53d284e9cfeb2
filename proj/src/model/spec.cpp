#include "t3d/model/spec.hpp"

#include <bit>

namespace t3d::model {

namespace {

std::string_view to_string(Norm n) { return n == Norm::batch_norm ? "batch-norm" : "none"; }

std::string_view to_string(Activation a) {
  switch (a) {
    case Activation::relu: return "relu";
    case Activation::sigmoid: return "sigmoid";
    case Activation::none: return "none";
  }
  return "none";
}

Norm norm_from_string(std::string_view s) {
  if (s == "batch-norm") return Norm::batch_norm;
  if (s == "none") return Norm::none;
  throw SpecError("unknown normalization '" + std::string(s) + "'");
}

Activation activation_from_string(std::string_view s) {
  if (s == "relu") return Activation::relu;
  if (s == "sigmoid") return Activation::sigmoid;
  if (s == "none") return Activation::none;
  throw SpecError("unknown activation '" + std::string(s) + "'");
}

ConvLayerSpec hidden(int in, int out, int kernel, int stride, int padding, bool transposed = false) {
  return {in, out, kernel, stride, padding, Norm::batch_norm, Activation::relu, transposed};
}

ConvLayerSpec head(int in, int out, int kernel, int stride, int padding, Activation act, bool transposed = false) {
  return {in, out, kernel, stride, padding, Norm::none, act, transposed};
}

}  // namespace

std::string_view to_string(Role role) {
  switch (role) {
    case Role::shape_encoder: return "shape-encoder";
    case Role::shape_decoder: return "shape-decoder";
    case Role::topogram_branch: return "topogram-branch";
    case Role::mask_branch: return "mask-branch";
    case Role::combiner: return "combiner";
  }
  return "?";
}

Role role_from_string(std::string_view s) {
  for (Role r : {Role::shape_encoder, Role::shape_decoder, Role::topogram_branch, Role::mask_branch, Role::combiner}) {
    if (to_string(r) == s) return r;
  }
  throw SpecError("unknown network role '" + std::string(s) + "'");
}

int ConvLayerSpec::output_size(int input) const {
  if (kernel <= 0 || stride <= 0 || padding < 0 || input <= 0) throw SpecError("non-positive layer geometry");
  if (transposed) {
    const int out = (input - 1) * stride - 2 * padding + kernel;
    if (out <= 0) throw SpecError("transposed conv produces a non-positive extent");
    return out;
  }
  const int span = input + 2 * padding - kernel;
  if (span < 0) throw SpecError("kernel " + std::to_string(kernel) + " larger than padded input " + std::to_string(input));
  return span / stride + 1;
}

std::vector<int> NetworkSpec::spatial_chain() const {
  if (rank != 2 && rank != 3) throw SpecError("network rank must be 2 or 3");
  std::vector<int> chain{input_size};
  int channels = input_channels;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& l = layers[i];
    if (l.in_channels != channels) {
      throw SpecError("layer " + std::to_string(i) + " expects " + std::to_string(l.in_channels) + " channels, chain provides " +
                      std::to_string(channels));
    }
    if (l.out_channels <= 0) throw SpecError("layer " + std::to_string(i) + " has no output channels");
    chain.push_back(l.output_size(chain.back()));
    channels = l.out_channels;
  }
  if (dense) {
    const std::size_t flat = static_cast<std::size_t>(channels) * chain.back() * chain.back() * (rank == 3 ? chain.back() : 1);
    if (static_cast<std::size_t>(dense->in_features) != flat) throw SpecError("dense head input width does not match the chain");
    if (chain.back() != 1) throw SpecError("dense head requires a 1-voxel spatial extent");
    channels = dense->out_features;
  }
  if (chain.back() != output_size) {
    throw SpecError("chain ends at spatial size " + std::to_string(chain.back()) + ", declared " + std::to_string(output_size));
  }
  if (channels != output_channels) {
    throw SpecError("chain ends with " + std::to_string(channels) + " channels, declared " + std::to_string(output_channels));
  }
  return chain;
}

void ModelDims::validate() const {
  auto pow2 = [](int v) { return v > 0 && std::has_single_bit(static_cast<unsigned>(v)); };
  if (!pow2(grid) || grid < 8 || grid > 64) throw SpecError("grid dimension must be a power of two in [8, 64]");
  if (mask != grid) throw SpecError("mask dimension must equal the grid dimension");
  if (topogram != 4 * grid) throw SpecError("topogram dimension must be four times the grid dimension");
  if (latent <= 0 || base_channels <= 0) throw SpecError("latent and base channel counts must be positive");
}

NetworkSpec shape_encoder_spec(const ModelDims& dims) {
  dims.validate();
  NetworkSpec spec{Role::shape_encoder, 3, 1, dims.grid, {}, std::nullopt, 2 * dims.latent, 1};
  int size = dims.grid;
  int channels = 1;
  int width = dims.base_channels;
  while (size > 4) {
    spec.layers.push_back(hidden(channels, width, 4, 2, 1));
    channels = width;
    width *= 2;
    size /= 2;
  }
  spec.layers.push_back(head(channels, 2 * dims.latent, size, 1, 0, Activation::none));
  spec.validate();
  return spec;
}

NetworkSpec shape_decoder_spec(const ModelDims& dims) {
  const auto encoder = shape_encoder_spec(dims);
  NetworkSpec spec{Role::shape_decoder, 3, dims.latent, 1, {}, std::nullopt, 1, dims.grid};
  const auto& enc = encoder.layers;
  const std::size_t n = enc.size();
  // Layer i of the decoder undoes encoder layer n-1-i and emits that layer's input channel count.
  int channels = dims.latent;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& mirror = enc[n - 1 - i];
    const bool last = i + 1 == n;
    const int out = last ? 1 : mirror.in_channels;
    if (last) {
      spec.layers.push_back(head(channels, out, mirror.kernel, mirror.stride, mirror.padding, Activation::sigmoid, true));
    } else {
      spec.layers.push_back(hidden(channels, out, mirror.kernel, mirror.stride, mirror.padding, true));
    }
    channels = out;
  }
  spec.validate();
  return spec;
}

NetworkSpec topogram_encoder_spec(const ModelDims& dims) {
  dims.validate();
  NetworkSpec spec{Role::topogram_branch, 2, 1, dims.topogram, {}, std::nullopt, dims.latent, 1};
  int width = dims.base_channels;
  spec.layers.push_back(hidden(1, width, 11, 4, 5));
  int size = spec.layers.back().output_size(dims.topogram);
  int channels = width;
  for (int i = 0; i < 3 && size > 1; ++i) {
    width *= 2;
    spec.layers.push_back(hidden(channels, width, 5, 2, 2));
    size = spec.layers.back().output_size(size);
    channels = width;
  }
  spec.layers.push_back(head(channels, dims.latent, size, 1, 0, Activation::none));
  spec.validate();
  return spec;
}

NetworkSpec mask_branch_spec(const ModelDims& dims) {
  dims.validate();
  NetworkSpec spec{Role::mask_branch, 2, 1, dims.mask, {}, std::nullopt, dims.latent, 1};
  int width = dims.base_channels;
  ConvLayerSpec stem = hidden(1, width, 3, 4, 1);
  int size = stem.output_size(dims.mask);
  int channels = 1;
  if (size == 1) {
    spec.layers.push_back(head(1, dims.latent, 3, 4, 1, Activation::none));
    spec.validate();
    return spec;
  }
  spec.layers.push_back(stem);
  channels = width;
  while (size > 1) {
    ConvLayerSpec layer = hidden(channels, width * 2, 3, 2, 1);
    size = layer.output_size(size);
    if (size == 1) {
      layer = head(channels, dims.latent, 3, 2, 1, Activation::none);
    }
    spec.layers.push_back(layer);
    width *= 2;
    channels = layer.out_channels;
  }
  spec.validate();
  return spec;
}

NetworkSpec combiner_spec(const ModelDims& dims) {
  dims.validate();
  NetworkSpec spec{Role::combiner, 3, 2 * dims.latent, 1, {}, DenseSpec{2 * dims.latent, dims.latent, Activation::none},
                   dims.latent, 1};
  spec.validate();
  return spec;
}

nlohmann::json to_json(const NetworkSpec& spec) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : spec.layers) {
    layers.push_back({{"in_channels", l.in_channels},
                      {"out_channels", l.out_channels},
                      {"kernel", l.kernel},
                      {"stride", l.stride},
                      {"padding", l.padding},
                      {"normalization", to_string(l.norm)},
                      {"activation", to_string(l.activation)},
                      {"transposed", l.transposed}});
  }
  nlohmann::json j = {{"role", to_string(spec.role)},
                      {"rank", spec.rank},
                      {"input_channels", spec.input_channels},
                      {"input_size", spec.input_size},
                      {"layers", layers},
                      {"output_channels", spec.output_channels},
                      {"output_size", spec.output_size}};
  if (spec.dense) {
    j["dense"] = {{"in_features", spec.dense->in_features},
                  {"out_features", spec.dense->out_features},
                  {"activation", to_string(spec.dense->activation)}};
  }
  return j;
}

NetworkSpec network_spec_from_json(const nlohmann::json& j) {
  try {
    NetworkSpec spec;
    spec.role = role_from_string(j.at("role").get<std::string>());
    spec.rank = j.at("rank").get<int>();
    spec.input_channels = j.at("input_channels").get<int>();
    spec.input_size = j.at("input_size").get<int>();
    spec.output_channels = j.at("output_channels").get<int>();
    spec.output_size = j.at("output_size").get<int>();
    for (const auto& l : j.at("layers")) {
      spec.layers.push_back({l.at("in_channels").get<int>(), l.at("out_channels").get<int>(), l.at("kernel").get<int>(),
                             l.at("stride").get<int>(), l.at("padding").get<int>(),
                             norm_from_string(l.at("normalization").get<std::string>()),
                             activation_from_string(l.at("activation").get<std::string>()), l.at("transposed").get<bool>()});
    }
    if (j.contains("dense")) {
      const auto& d = j.at("dense");
      spec.dense = DenseSpec{d.at("in_features").get<int>(), d.at("out_features").get<int>(),
                             activation_from_string(d.at("activation").get<std::string>())};
    }
    spec.validate();
    return spec;
  } catch (const nlohmann::json::exception& e) {
    throw SpecError(std::string("malformed network spec: ") + e.what());
  }
}

nlohmann::json to_json(const ModelDims& d) {
  return {{"grid", d.grid}, {"topogram", d.topogram}, {"mask", d.mask}, {"latent", d.latent}, {"base_channels", d.base_channels}};
}

ModelDims model_dims_from_json(const nlohmann::json& j) {
  try {
    ModelDims d{j.at("grid").get<int>(), j.at("topogram").get<int>(), j.at("mask").get<int>(), j.at("latent").get<int>(),
                j.at("base_channels").get<int>()};
    d.validate();
    return d;
  } catch (const nlohmann::json::exception& e) {
    throw SpecError(std::string("malformed model dims: ") + e.what());
  }
}

}  // namespace t3d::model
