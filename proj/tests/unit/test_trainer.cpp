#include <gtest/gtest.h>

#include <atomic>
#include <fstream>
#include <mutex>

#include "support/oracles.hpp"
#include "t3d/train/trainer.hpp"
#include "t3d/voxel/projection.hpp"

using namespace t3d;
using namespace t3d::train;

namespace {

std::vector<phantom::ExampleTriple> tiny_cases(int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(0.0f, 0.9f);
  std::vector<phantom::ExampleTriple> out;
  for (int i = 0; i < n; ++i) {
    auto shape = test::random_binary_grid(8, rng, 0.3, {2.0, 2.0, 2.0});
    std::vector<float> topo(32 * 32);
    for (auto& v : topo) v = u(rng);
    auto mask = voxel::project_orthographic(shape, voxel::Axis::y);
    out.push_back({"c" + std::to_string(i), std::move(shape), voxel::Topogram(voxel::Image2D(32, 32, topo)), std::move(mask),
                   {2.0, 2.0, 2.0}});
  }
  return out;
}

DatasetSplit split_of(const std::vector<phantom::ExampleTriple>& cases) {
  DatasetSplit s;
  for (std::size_t i = 0; i + 1 < cases.size(); ++i) s.train_ids.push_back(cases[i].id);
  s.test_ids.push_back(cases.back().id);
  return s;
}

TrainingConfig tiny_config(model::Variant v, int epochs) {
  auto c = default_config(v);
  c.dims = {8, 32, 8, 4, 2};
  c.epochs = epochs;
  c.batch_size = 2;
  c.learning_rate = 1e-3;
  c.seed = 17;
  return c;
}

class RecordingSource final : public DataSource {
 public:
  explicit RecordingSource(const DataSource& inner) : inner_(inner) {}
  bool contains(const std::string& id) const override { return inner_.contains(id); }
  ExampleRecord load(const std::string& id, Fields f) const override {
    if (f.topogram) topogram_loads++;
    if (f.mask) mask_loads++;
    return inner_.load(id, f);
  }
  mutable std::atomic<int> topogram_loads{0};
  mutable std::atomic<int> mask_loads{0};

 private:
  const DataSource& inner_;
};

}  // namespace

TEST(Trainer, StepsCoverEveryExampleOncePerEpoch) {
  const auto cases = tiny_cases(6, 1);
  const InMemoryDataSource src(cases);
  const auto r = train::train(tiny_config(model::Variant::topogram_mask, 2), split_of(cases), src);
  ASSERT_EQ(r.log.steps.size(), 6u);
  ASSERT_EQ(r.log.epochs.size(), 2u);
  for (std::size_t i = 0; i < r.log.steps.size(); ++i) {
    EXPECT_EQ(r.log.steps[i].step, static_cast<std::int64_t>(i + 1));
    EXPECT_EQ(r.log.steps[i].batch_size, i % 3 == 2 ? 1 : 2);
  }
  EXPECT_EQ(r.log.epochs[0].steps, 3);
  EXPECT_EQ(r.checkpoint.epoch, 2);
  EXPECT_EQ(r.checkpoint.step, 6);
  EXPECT_EQ(r.checkpoint.summary["spacing_mm"], nlohmann::json({2.0, 2.0, 2.0}));
  double weighted = 0.0;
  for (int i = 0; i < 3; ++i) weighted += r.log.steps[i].batch_size * r.log.steps[i].total;
  EXPECT_NEAR(r.log.epochs[0].mean_total, weighted / 5.0, 1e-9);
}

TEST(Trainer, SameSeedGivesIdenticalCheckpoint) {
  const auto cases = tiny_cases(5, 2);
  const InMemoryDataSource src(cases);
  const auto cfg = tiny_config(model::Variant::topogram_mask, 3);
  const auto a = train::train(cfg, split_of(cases), src);
  const auto b = train::train(cfg, split_of(cases), src);
  EXPECT_EQ(model::encode_checkpoint(a.checkpoint), model::encode_checkpoint(b.checkpoint));
  auto other = cfg;
  other.seed = 18;
  EXPECT_NE(train::train(other, split_of(cases), src).checkpoint.arrays, a.checkpoint.arrays);
}

TEST(Trainer, SeedStreamsAreIsolated) {
  const auto cases = tiny_cases(5, 3);
  const InMemoryDataSource src(cases);
  auto base = tiny_config(model::Variant::topogram_mask, 0);
  const auto init = train::train(base, split_of(cases), src).checkpoint.arrays;
  auto shuffled = base;
  shuffled.shuffle_seed = 1234;
  shuffled.noise_seed = 99;
  EXPECT_EQ(train::train(shuffled, split_of(cases), src).checkpoint.arrays, init);
  auto reinit = base;
  reinit.init_seed = 1234;
  EXPECT_NE(train::train(reinit, split_of(cases), src).checkpoint.arrays, init);

  base.epochs = 1;
  shuffled.epochs = 1;
  EXPECT_NE(train::train(shuffled, split_of(cases), src).checkpoint.arrays, train::train(base, split_of(cases), src).checkpoint.arrays);
}

TEST(Trainer, ResumeContinuesBitIdentically) {
  const auto cases = tiny_cases(5, 4);
  const InMemoryDataSource src(cases);
  test::TempDir dir("resume");
  auto cfg = tiny_config(model::Variant::topogram_mask, 4);
  const auto full = train::train(cfg, split_of(cases), src);

  cfg.epochs = 2;
  TrainOptions first;
  first.checkpoint_path = dir / "half.ckpt";
  first.log_path = dir / "log.jsonl";
  train::train(cfg, split_of(cases), src, first);
  const auto half = model::load_checkpoint(dir / "half.ckpt");
  EXPECT_EQ(half.epoch, 2);

  cfg.epochs = 4;
  TrainOptions second;
  second.resume = &half;
  second.log_path = dir / "log.jsonl";
  const auto resumed = train::train(cfg, split_of(cases), src, second);
  EXPECT_EQ(resumed.checkpoint.arrays, full.checkpoint.arrays);
  EXPECT_EQ(resumed.checkpoint.step, full.checkpoint.step);
  ASSERT_EQ(resumed.log.steps.size(), 4u);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(resumed.log.steps[i].total, full.log.steps[4 + i].total);

  std::ifstream in(dir / "log.jsonl");
  std::string line;
  int steps = 0, epochs = 0;
  while (std::getline(in, line)) {
    const auto j = nlohmann::json::parse(line);
    if (j["type"] == "step") ++steps;
    if (j["type"] == "epoch") ++epochs;
    for (const char* key : {"rec_shape", "kl", "rec_observation", "mask"}) ASSERT_TRUE(j["terms"].contains(key));
  }
  EXPECT_EQ(steps, 8);
  EXPECT_EQ(epochs, 4);

  auto changed = cfg;
  changed.learning_rate = 5e-4;
  EXPECT_THROW(train::train(changed, split_of(cases), src, second), InvalidArgument);
}

TEST(Trainer, IntermediateCheckpointsAndSnapshots) {
  const auto cases = tiny_cases(5, 5);
  const InMemoryDataSource src(cases);
  test::TempDir dir("intermediate");
  auto cfg = tiny_config(model::Variant::mask_only, 3);
  cfg.checkpoint_every = 1;
  TrainOptions o;
  o.checkpoint_path = dir / "run.ckpt";
  o.snapshot_every = 2;
  std::vector<int> seen;
  o.on_epoch = [&](const EpochRecord& e) {
    if (e.epoch < 3) seen.push_back(model::load_checkpoint(dir / "run.ckpt").epoch);
    EXPECT_EQ(e.snapshot.has_value(), e.epoch != 1);
    if (e.snapshot) {
      const double iou = (*e.snapshot)["train_iou"];
      EXPECT_GE(iou, 0.0);
      EXPECT_LE(iou, 1.0);
    }
  };
  train::train(cfg, split_of(cases), src, o);
  EXPECT_EQ(seen, (std::vector<int>{1, 2}));
  EXPECT_EQ(model::load_checkpoint(dir / "run.ckpt").epoch, 3);
}

TEST(Trainer, VariantsUseOnlyTheirInputs) {
  const auto cases = tiny_cases(5, 6);
  const InMemoryDataSource inner(cases);

  const auto topo = train::train(tiny_config(model::Variant::topogram_only, 1), split_of(cases), inner);
  for (const auto& s : topo.log.steps) EXPECT_EQ(s.terms.mask, 0.0);
  for (const auto& [name, arr] : topo.checkpoint.arrays) EXPECT_EQ(name.rfind("mask_branch", 0), std::string::npos) << name;

  const RecordingSource rec(inner);
  const auto mask = train::train(tiny_config(model::Variant::mask_only, 1), split_of(cases), rec);
  EXPECT_EQ(rec.topogram_loads.load(), 0);
  for (const auto& s : mask.log.steps) EXPECT_GT(s.terms.mask, 0.0);
  for (const auto& [name, arr] : mask.checkpoint.arrays) EXPECT_EQ(name.rfind("topogram_branch", 0), std::string::npos) << name;

  const auto before = train::train(tiny_config(model::Variant::no_shape_encoder, 0), split_of(cases), inner).checkpoint;
  const auto after = train::train(tiny_config(model::Variant::no_shape_encoder, 2), split_of(cases), inner).checkpoint;
  int changed_decoder = 0;
  for (const auto& [name, arr] : after.arrays) {
    if (name.rfind("shape_encoder", 0) == 0) EXPECT_EQ(arr, before.arrays.at(name)) << name;
    if (name.rfind("decoder", 0) == 0 && name.find("weight") != std::string::npos && !(arr == before.arrays.at(name)))
      ++changed_decoder;
  }
  EXPECT_GT(changed_decoder, 0);
}

TEST(Trainer, DivergenceIsReported) {
  const auto cases = tiny_cases(5, 7);
  const InMemoryDataSource src(cases);
  auto cfg = tiny_config(model::Variant::topogram_mask, 5);
  cfg.learning_rate = 1e30;
  try {
    train::train(cfg, split_of(cases), src);
    FAIL() << "expected divergence";
  } catch (const TrainingDiverged& e) {
    EXPECT_FALSE(e.term().empty());
  }
}

TEST(Trainer, RejectsBadInputs) {
  const auto cases = tiny_cases(5, 8);
  const InMemoryDataSource src(cases);
  auto cfg = tiny_config(model::Variant::topogram_mask, 1);
  cfg.dims = model::ModelDims::reduced(2);
  EXPECT_THROW(train::train(cfg, split_of(cases), src), DimensionMismatch);
  auto missing = split_of(cases);
  missing.train_ids.push_back("ghost");
  EXPECT_THROW(train::train(tiny_config(model::Variant::topogram_mask, 1), missing, src), InvalidArgument);
  auto bad = tiny_config(model::Variant::no_shape_encoder, 1);
  bad.alphas.alpha1 = 1.0;
  EXPECT_THROW(train::train(bad, split_of(cases), src), InvalidArgument);
}

TEST(TrainingConfig, JsonRoundTripAndValidation) {
  auto c = tiny_config(model::Variant::mask_only, 7);
  c.init_seed = 5;
  EXPECT_EQ(config_from_json(to_json(c)), c);
  EXPECT_THROW(config_from_json({{"epochz", 3}}), InvalidArgument);
  EXPECT_THROW(config_from_json({{"batch_size", 0}}), InvalidArgument);
  EXPECT_EQ(config_from_json({{"variant", "no-shape-encoder"}, {"alphas", {{"alpha1", 1.0}}}}).alphas.alpha1, 0.0);
  EXPECT_THROW(config_from_json({{"learning_rate", -1.0}}), InvalidArgument);
  const auto d = config_from_json({{"variant", "topogram-only"}});
  EXPECT_EQ(d.alphas.alpha4, 0.0);
  EXPECT_EQ(d.learning_rate, 1e-4);
  EXPECT_EQ(d.epochs, 250);
  EXPECT_EQ(d.batch_size, 32);
  EXPECT_EQ(d.dims, model::ModelDims::production());
  EXPECT_NE(d.effective_init_seed(), d.effective_shuffle_seed());
  EXPECT_NE(d.effective_shuffle_seed(), d.effective_noise_seed());
}
