#include <gtest/gtest.h>

#include <random>

#include "support/oracles.hpp"
#include "t3d/model/adam.hpp"
#include "t3d/model/checkpoint.hpp"
#include "t3d/voxel/io.hpp"

using namespace t3d;
using namespace t3d::model;

namespace {

const ModelConfig kConfig{Variant::topogram_mask, ModelDims{8, 32, 8, 4, 2}, voxel::Axis::y};

Batch<float> random_batch(int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  Batch<float> b;
  b.shapes = volume_batch<float>(n, 8);
  for (auto& v : b.shapes.data) v = u(rng) < 0.3f ? 1.0f : 0.0f;
  b.topograms = image_batch<float>(n, 32);
  for (auto& v : b.topograms.data) v = u(rng);
  b.masks = image_batch<float>(n, 8);
  for (auto& v : b.masks.data) v = u(rng) < 0.5f ? 1.0f : 0.0f;
  return b;
}

// One optimizer step so that parameters and moments are non-trivial.
Checkpoint trained_checkpoint(Adam& adam) {
  ReconstructionModel<float> m(kConfig);
  m.initialize(4);
  const auto b = random_batch(2, 5);
  std::vector<float> noise(2 * 4, 0.1f);
  m.zero_grad();
  m.train_step(b, default_weights(kConfig.variant), noise);
  adam.step(m.parameters());
  auto c = snapshot(m, &adam);
  c.training = {{"note", "unit"}};
  c.summary = {{"loss", 1.5}};
  c.seed = 99;
  c.epoch = 3;
  c.step = 17;
  return c;
}

}  // namespace

TEST(Checkpoint, EncodeDecodeRoundTrip) {
  Adam adam({1e-3});
  const auto c = trained_checkpoint(adam);
  const auto bytes = encode_checkpoint(c);
  EXPECT_EQ(bytes.substr(0, 8), "T3DCKPT1");
  const auto back = decode_checkpoint(bytes);
  EXPECT_EQ(back.model, c.model);
  EXPECT_EQ(back.training, c.training);
  EXPECT_EQ(back.summary, c.summary);
  EXPECT_EQ(back.seed, 99u);
  EXPECT_EQ(back.epoch, 3);
  EXPECT_EQ(back.step, 17);
  EXPECT_EQ(back.optimizer_steps, std::optional<std::int64_t>(1));
  EXPECT_EQ(back.arrays, c.arrays);
  EXPECT_EQ(encode_checkpoint(back), bytes);
}

TEST(Checkpoint, SaveLoadSaveIsByteIdentical) {
  test::TempDir dir("ckpt");
  Adam adam;
  save_checkpoint(dir / "a.ckpt", trained_checkpoint(adam));
  save_checkpoint(dir / "b.ckpt", load_checkpoint(dir / "a.ckpt"));
  EXPECT_EQ(voxel::read_file(dir / "a.ckpt"), voxel::read_file(dir / "b.ckpt"));
  const auto header = read_checkpoint_header(dir / "a.ckpt");
  EXPECT_EQ(header.at("model").at("variant"), "topogram+mask");
  EXPECT_EQ(header.at("epoch"), 3);
  EXPECT_TRUE(header.contains("arrays"));
  EXPECT_TRUE(header.contains("networks"));
}

TEST(Checkpoint, RestoredModelPredictsIdentically) {
  Adam adam;
  const auto c = trained_checkpoint(adam);
  const auto m = restore_model(decode_checkpoint(encode_checkpoint(c)));
  ReconstructionModel<float> direct(kConfig);
  load_parameters(direct, c);
  const auto b = random_batch(3, 8);
  EXPECT_EQ(m.predict(b).data, direct.predict(b).data);
}

TEST(Checkpoint, OptimizerStateRoundTrips) {
  Adam adam({1e-3});
  const auto c = trained_checkpoint(adam);
  const auto restored = restore_optimizer(decode_checkpoint(encode_checkpoint(c)), {1e-3});
  EXPECT_EQ(restored.steps(), adam.steps());
  ASSERT_EQ(restored.moments().size(), adam.moments().size());
  for (const auto& [name, mom] : adam.moments()) {
    EXPECT_EQ(restored.moments().at(name).m, mom.m) << name;
    EXPECT_EQ(restored.moments().at(name).v, mom.v) << name;
  }
  auto without = c;
  without.optimizer_steps.reset();
  EXPECT_THROW(restore_optimizer(without, {}), InvalidArgument);
}

TEST(Checkpoint, DistinctErrors) {
  Adam adam;
  const auto bytes = encode_checkpoint(trained_checkpoint(adam));
  EXPECT_THROW(decode_checkpoint("NOTACKPT" + bytes.substr(8)), MalformedHeader);
  EXPECT_THROW(decode_checkpoint(bytes.substr(0, bytes.size() - 4)), TruncatedPayload);
  EXPECT_THROW(decode_checkpoint(bytes.substr(0, 20)), TruncatedPayload);
  EXPECT_THROW(decode_checkpoint(bytes + "abcd"), DimensionMismatch);
}

TEST(Checkpoint, RejectsOtherModelConfig) {
  Adam adam;
  const auto c = trained_checkpoint(adam);
  ReconstructionModel<float> other({Variant::topogram_only, kConfig.dims, voxel::Axis::y});
  EXPECT_THROW(load_parameters(other, c), DimensionMismatch);
}

TEST(Adam, MatchesScalarReference) {
  std::vector<float> value{0.5f, -1.0f, 2.0f}, grad(3);
  ParamView<float> view{"w", {3}, value, grad};
  Adam adam({0.01, 0.9, 0.999, 1e-8});
  std::vector<double> ref(value.begin(), value.end()), m(3, 0.0), v(3, 0.0);
  for (int t = 1; t <= 5; ++t) {
    for (int i = 0; i < 3; ++i) grad[i] = static_cast<float>(std::sin(t + i) * (i + 1));
    adam.step({view});
    for (int i = 0; i < 3; ++i) {
      const double g = grad[i];
      m[i] = 0.9 * m[i] + 0.1 * g;
      v[i] = 0.999 * v[i] + 0.001 * g * g;
      const double mh = m[i] / (1 - std::pow(0.9, t)), vh = v[i] / (1 - std::pow(0.999, t));
      ref[i] -= 0.01 * mh / (std::sqrt(vh) + 1e-8);
    }
  }
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(value[i], ref[i], 1e-6);
  EXPECT_EQ(adam.steps(), 5);
}

TEST(Adam, SkipsNonTrainableBuffers) {
  std::vector<float> stats{1.0f, 2.0f};
  ParamView<float> view{"bn_mean", {2}, stats, {}};
  Adam adam;
  adam.step({view});
  EXPECT_EQ(stats, (std::vector<float>{1.0f, 2.0f}));
  EXPECT_TRUE(adam.moments().empty());
}
