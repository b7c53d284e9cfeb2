#include "t3d/train/config.hpp"

#include <set>
#include <string>

#include "t3d/random.hpp"
#include "t3d/voxel/io.hpp"

namespace t3d::train {

namespace {

void force_variant_weights(TrainingConfig& c) {
  if (c.variant == model::Variant::no_shape_encoder) {
    c.alphas.alpha1 = 0.0;
    c.alphas.alpha2 = 0.0;
  }
  if (c.variant == model::Variant::topogram_only || c.variant == model::Variant::no_shape_encoder) c.alphas.alpha4 = 0.0;
}

}  // namespace

std::uint64_t TrainingConfig::effective_init_seed() const { return init_seed.value_or(derive_seed(seed, {0x1417})); }
std::uint64_t TrainingConfig::effective_shuffle_seed() const { return shuffle_seed.value_or(derive_seed(seed, {0x5a0f})); }
std::uint64_t TrainingConfig::effective_noise_seed() const { return noise_seed.value_or(derive_seed(seed, {0x7015})); }

void TrainingConfig::validate() const {
  dims.validate();
  if (epochs < 0) throw InvalidArgument("epochs must be nonnegative");
  if (batch_size <= 0) throw InvalidArgument("batch_size must be positive");
  if (!(learning_rate > 0)) throw InvalidArgument("learning_rate must be positive");
  if (checkpoint_every < 0) throw InvalidArgument("checkpoint_every must be nonnegative");
  const auto& a = alphas;
  if (a.alpha1 < 0 || a.alpha2 < 0 || a.alpha3 < 0 || a.alpha4 < 0) throw InvalidArgument("loss weights must be nonnegative");
  if (variant == model::Variant::no_shape_encoder && (a.alpha1 != 0 || a.alpha2 != 0)) {
    throw InvalidArgument("no-shape-encoder training requires alpha1 = alpha2 = 0");
  }
  if ((variant == model::Variant::topogram_only || variant == model::Variant::no_shape_encoder) && a.alpha4 != 0) {
    throw InvalidArgument(std::string(model::to_string(variant)) + " training does not use the mask loss (alpha4 must be 0)");
  }
}

TrainingConfig default_config(model::Variant variant) {
  TrainingConfig c;
  c.variant = variant;
  c.alphas = model::default_weights(variant);
  return c;
}

TrainingConfig config_from_json(const nlohmann::json& j) {
  static const std::set<std::string> known = {"variant",    "alphas",     "learning_rate", "epochs",       "batch_size",
                                              "seed",       "init_seed",  "shuffle_seed",  "noise_seed",   "dims",
                                              "grid_dim",   "topo_dim",   "mask_dim",      "latent_dim",   "base_channels",
                                              "axis",       "checkpoint_every"};
  if (!j.is_object()) throw InvalidArgument("training config must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (!known.count(key)) throw InvalidArgument("unknown training config key '" + key + "'");
  }
  try {
    TrainingConfig c = default_config(model::variant_from_string(j.value("variant", std::string("topogram+mask"))));
    if (j.contains("alphas")) {
      const auto& a = j.at("alphas");
      for (const auto& [key, value] : a.items()) {
        if (key != "alpha1" && key != "alpha2" && key != "alpha3" && key != "alpha4") {
          throw InvalidArgument("unknown loss weight '" + key + "'");
        }
      }
      c.alphas.alpha1 = a.value("alpha1", c.alphas.alpha1);
      c.alphas.alpha2 = a.value("alpha2", c.alphas.alpha2);
      c.alphas.alpha3 = a.value("alpha3", c.alphas.alpha3);
      c.alphas.alpha4 = a.value("alpha4", c.alphas.alpha4);
    }
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.seed = j.value("seed", c.seed);
    if (j.contains("init_seed")) c.init_seed = j.at("init_seed").get<std::uint64_t>();
    if (j.contains("shuffle_seed")) c.shuffle_seed = j.at("shuffle_seed").get<std::uint64_t>();
    if (j.contains("noise_seed")) c.noise_seed = j.at("noise_seed").get<std::uint64_t>();
    const std::string preset = j.value("dims", std::string("production"));
    if (preset == "reduced") {
      c.dims = model::ModelDims::reduced();
    } else if (preset != "production") {
      throw InvalidArgument("dims must be 'production' or 'reduced'");
    }
    c.dims.grid = j.value("grid_dim", c.dims.grid);
    c.dims.topogram = j.value("topo_dim", c.dims.topogram);
    c.dims.mask = j.value("mask_dim", c.dims.mask);
    c.dims.latent = j.value("latent_dim", c.dims.latent);
    c.dims.base_channels = j.value("base_channels", c.dims.base_channels);
    if (j.contains("axis")) c.axis = voxel::axis_from_string(j.at("axis").get<std::string>());
    c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
    force_variant_weights(c);
    c.validate();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("training config: ") + e.what());
  }
}

TrainingConfig read_config(const std::filesystem::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(voxel::read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(path.string() + ": " + e.what());
  }
  return config_from_json(j);
}

nlohmann::json to_json(const TrainingConfig& c) {
  nlohmann::json j = {{"variant", model::to_string(c.variant)},
                      {"alphas", {{"alpha1", c.alphas.alpha1}, {"alpha2", c.alphas.alpha2}, {"alpha3", c.alphas.alpha3}, {"alpha4", c.alphas.alpha4}}},
                      {"learning_rate", c.learning_rate},
                      {"epochs", c.epochs},
                      {"batch_size", c.batch_size},
                      {"seed", c.seed},
                      {"grid_dim", c.dims.grid},
                      {"topo_dim", c.dims.topogram},
                      {"mask_dim", c.dims.mask},
                      {"latent_dim", c.dims.latent},
                      {"base_channels", c.dims.base_channels},
                      {"axis", voxel::to_string(c.axis)},
                      {"checkpoint_every", c.checkpoint_every}};
  if (c.init_seed) j["init_seed"] = *c.init_seed;
  if (c.shuffle_seed) j["shuffle_seed"] = *c.shuffle_seed;
  if (c.noise_seed) j["noise_seed"] = *c.noise_seed;
  return j;
}

}  // namespace t3d::train
