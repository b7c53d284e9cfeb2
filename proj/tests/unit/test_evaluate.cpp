#include <gtest/gtest.h>

#include "support/oracles.hpp"
#include "t3d/train/evaluate.hpp"
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
    auto shape = test::random_binary_grid(8, rng, 0.3, {1.5, 1.5, 1.5});
    std::vector<float> topo(32 * 32);
    for (auto& v : topo) v = u(rng);
    auto mask = voxel::project_orthographic(shape, voxel::Axis::y);
    out.push_back({"c" + std::to_string(i), std::move(shape), voxel::Topogram(voxel::Image2D(32, 32, topo)), std::move(mask),
                   {1.5, 1.5, 1.5}});
  }
  return out;
}

TrainingConfig tiny_config(model::Variant v) {
  auto c = default_config(v);
  c.dims = {8, 32, 8, 4, 2};
  c.epochs = 2;
  c.batch_size = 3;
  c.learning_rate = 1e-3;
  c.seed = 5;
  return c;
}

struct Fixture {
  std::vector<phantom::ExampleTriple> cases = tiny_cases(7, 21);
  InMemoryDataSource source{cases};
  DatasetSplit split{{"c0", "c1", "c2", "c3", "c4"}, {"c5", "c6"}, {}};
};

}  // namespace

TEST(Predict, DeterministicAndStrictlyInsideUnitInterval) {
  Fixture f;
  for (auto v : {model::Variant::topogram_only, model::Variant::topogram_mask, model::Variant::mask_only,
                 model::Variant::no_shape_encoder}) {
    const auto m = model::restore_model(train::train(tiny_config(v), f.split, f.source).checkpoint);
    const auto& c = f.cases[5];
    const auto* topo = model::reads_topogram(v) ? &c.topogram : nullptr;
    const auto* mask = model::reads_mask(v) ? &c.mask : nullptr;
    const auto a = predict(m, topo, mask, c.spacing);
    const auto b = predict(m, topo, mask, c.spacing);
    EXPECT_EQ(a, b);
    EXPECT_EQ(a.spacing(), c.spacing);
    EXPECT_EQ(a.kind(), voxel::Occupancy::probability);
    for (float p : a.values()) {
      ASSERT_GT(p, 0.0f);
      ASSERT_LT(p, 1.0f);
    }
  }
}

TEST(Predict, BatchedMatchesSingle) {
  Fixture f;
  const auto m = model::restore_model(train::train(tiny_config(model::Variant::topogram_mask), f.split, f.source).checkpoint);
  const std::vector<std::string> ids{"c0", "c3", "c5", "c6", "c1"};
  const auto batched = predict_cases(m, f.source, ids, 2);
  ASSERT_EQ(batched.size(), ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    EXPECT_EQ(batched[i].id, ids[i]);
    const auto& c = f.cases[std::stoi(ids[i].substr(1))];
    const auto single = predict(m, &c.topogram, &c.mask, c.spacing);
    for (std::size_t k = 0; k < single.size(); ++k) ASSERT_NEAR(batched[i].grid.values()[k], single.values()[k], 1e-6);
  }
  EXPECT_THROW(predict_cases(m, f.source, ids, 0), InvalidArgument);
}

TEST(Predict, RejectsInputsTheVariantDoesNotRead) {
  Fixture f;
  const auto& c = f.cases[0];
  const model::ReconstructionModel<float> topo(tiny_config(model::Variant::topogram_only).model_config());
  const model::ReconstructionModel<float> joint(tiny_config(model::Variant::topogram_mask).model_config());
  const model::ReconstructionModel<float> mask(tiny_config(model::Variant::mask_only).model_config());
  EXPECT_THROW(predict(topo, &c.topogram, &c.mask, c.spacing), VariantMismatch);
  EXPECT_THROW(predict(joint, &c.topogram, nullptr, c.spacing), VariantMismatch);
  EXPECT_THROW(predict(mask, nullptr, nullptr, c.spacing), VariantMismatch);
  EXPECT_THROW(predict(topo, nullptr, nullptr, c.spacing), VariantMismatch);
  const voxel::Topogram wrong(voxel::Image2D(16, 16));
  EXPECT_THROW(predict(topo, &wrong, nullptr, c.spacing), DimensionMismatch);
}

TEST(Evaluate, MatchesOracleScoring) {
  Fixture f;
  const auto m = model::restore_model(train::train(tiny_config(model::Variant::mask_only), f.split, f.source).checkpoint);
  const double threshold = 0.4;
  const auto report = evaluate(m, f.source, f.split.test_ids, threshold);
  ASSERT_EQ(report.per_case.size(), 2u);
  double mean = 0.0;
  for (const auto& row : report.per_case) {
    const auto& c = f.cases[std::stoi(row.id.substr(1))];
    const auto p = predict(m, nullptr, &c.mask, c.spacing);
    std::vector<float> bin(p.size());
    for (std::size_t k = 0; k < p.size(); ++k) bin[k] = p.values()[k] >= threshold ? 1.0f : 0.0f;
    const voxel::VoxelGrid b(8, c.spacing, voxel::Occupancy::binary, bin);
    EXPECT_NEAR(row.iou, test::iou_oracle(b, c.shape), 1e-12);
    EXPECT_NEAR(row.dice, test::dice_oracle(b, c.shape), 1e-12);
    const double gt_ml = test::set_counts(c.shape, c.shape).both * 1.5 * 1.5 * 1.5 / 1000.0;
    EXPECT_NEAR(row.volume_gt_ml, gt_ml, 1e-9);
    mean += row.iou / 2.0;
  }
  EXPECT_NEAR(report.aggregate.iou, mean, 1e-12);
}

TEST(Evaluate, CheckpointFileReproducesPredictions) {
  Fixture f;
  test::TempDir dir("evaluate");
  const auto trained = train::train(tiny_config(model::Variant::topogram_mask), f.split, f.source).checkpoint;
  model::save_checkpoint(dir / "m.ckpt", trained);
  const auto a = model::restore_model(trained);
  const auto b = model::restore_model(model::load_checkpoint(dir / "m.ckpt"));
  const auto& c = f.cases[6];
  EXPECT_EQ(predict(a, &c.topogram, &c.mask, c.spacing), predict(b, &c.topogram, &c.mask, c.spacing));
}

TEST(Ablation, TrainsAndTabulatesEveryRun) {
  Fixture f;
  std::vector<AblationRun> runs{{"joint", tiny_config(model::Variant::topogram_mask)},
                                {"topo", tiny_config(model::Variant::topogram_only)}};
  std::vector<std::string> progress;
  const auto r = run_ablation(runs, f.split, f.source, [&](const std::string& s) { progress.push_back(s); });
  ASSERT_EQ(r.reports.size(), 2u);
  EXPECT_EQ(r.reports[0].first, "joint");
  EXPECT_EQ(progress.size(), 4u);
  EXPECT_EQ(r.tables["methods"], nlohmann::json({"joint", "topo"}));
  EXPECT_NEAR(r.tables["shape_reconstruction"]["IoU"]["topo"].get<double>(), r.reports[1].second.aggregate.iou, 1e-12);
  EXPECT_THROW(run_ablation(runs, DatasetSplit{{"c0"}, {"c0"}, {}}, f.source), InvalidArgument);
}
