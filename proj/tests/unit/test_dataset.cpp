#include <gtest/gtest.h>

#include <set>

#include "support/oracles.hpp"
#include "t3d/phantom/dataset.hpp"
#include "t3d/train/data_source.hpp"
#include "t3d/voxel/io.hpp"

using namespace t3d;

namespace {

phantom::SynthesisOptions small_options() {
  phantom::SynthesisOptions o;
  o.grid = 16;
  o.topogram_upsample = 4;
  o.field_of_view_mm = 32.0;
  return o;
}

std::string mask_oracle_string(const voxel::VoxelGrid& g) {
  const auto proj = test::or_projection(g, voxel::Axis::y);
  std::string s;
  for (float v : proj) s.push_back(v == 1.0f ? '1' : '0');
  return s;
}

std::string mask_string(const voxel::Mask2D& m) {
  std::string s;
  for (float v : m.values()) s.push_back(v == 1.0f ? '1' : '0');
  return s;
}

}  // namespace

TEST(Dataset, TrainCountMirrorsReferenceSplit) {
  EXPECT_EQ(phantom::train_count(2129), 1554);
  EXPECT_EQ(phantom::train_count(10), 7);
  EXPECT_EQ(phantom::train_count(200), 146);
}

TEST(Dataset, SynthesizedCasesAreConsistent) {
  test::TempDir dir("dataset");
  const auto opts = small_options();
  const auto manifest_path = phantom::synthesize_dataset(10, 5, dir.path(), opts);
  EXPECT_TRUE(std::filesystem::exists(manifest_path));
  const auto m = phantom::read_manifest(dir.path());
  ASSERT_EQ(m.cases.size(), 10u);
  EXPECT_EQ(m.ids("train").size(), 7u);
  EXPECT_EQ(m.ids("test").size(), 3u);
  EXPECT_EQ(m.grid, 16);
  EXPECT_EQ(m.topogram, 64);
  EXPECT_DOUBLE_EQ(m.spacing.x, 2.0);
  std::set<std::string> ids;
  for (const auto& c : m.cases) {
    ids.insert(c.id);
    const auto t = phantom::load_case(dir.path(), c, m);
    EXPECT_EQ(t.shape.dim(), 16);
    EXPECT_EQ(t.topogram.image().width(), 64);
    EXPECT_EQ(t.mask.width(), 16);
    EXPECT_EQ(mask_string(t.mask), mask_oracle_string(t.shape)) << c.id;
    for (float v : t.topogram.values()) {
      ASSERT_GE(v, 0.0f);
      ASSERT_LT(v, 1.0f);
    }
    const auto direct = phantom::synthesize_case(c.id, c.seed, opts);
    EXPECT_EQ(direct.shape, t.shape);
    EXPECT_EQ(direct.mask, t.mask);
    EXPECT_EQ(direct.topogram.image(), t.topogram.image());
  }
  EXPECT_EQ(ids.size(), 10u);
}

TEST(Dataset, RepeatedSynthesisIsByteIdentical) {
  test::TempDir a("dataset_a"), b("dataset_b");
  phantom::synthesize_dataset(6, 11, a.path(), small_options());
  phantom::synthesize_dataset(6, 11, b.path(), small_options());
  EXPECT_EQ(voxel::read_file(a / "manifest.json"), voxel::read_file(b / "manifest.json"));
  const auto m = phantom::read_manifest(a.path());
  for (const auto& c : m.cases) {
    for (const auto& rel : {c.shape_path, c.topogram_path, c.mask_path})
      EXPECT_EQ(voxel::read_file(a / rel), voxel::read_file(b / rel)) << rel;
  }
  test::TempDir other("dataset_c");
  phantom::synthesize_dataset(6, 12, other.path(), small_options());
  EXPECT_NE(voxel::read_file(a / m.cases[0].shape_path), voxel::read_file(other / m.cases[0].shape_path));
}

TEST(Dataset, ManifestRoundTripAndValidation) {
  phantom::Manifest m;
  m.seed = 99;
  m.spacing = {1.5, 1.5, 2.0};
  m.grid = 32;
  m.topogram = 128;
  m.axis = "z";
  m.cases.push_back({"a", 1, "train", "a/s", "a/t", "a/m"});
  m.cases.push_back({"b", 2, "test", "b/s", "b/t", "b/m"});
  const auto back = phantom::manifest_from_json(phantom::to_json(m));
  EXPECT_EQ(phantom::to_json(back), phantom::to_json(m));
  EXPECT_EQ(back.ids("all"), (std::vector<std::string>{"a", "b"}));

  auto dup = phantom::to_json(m);
  dup["cases"][1]["id"] = "a";
  EXPECT_THROW(phantom::manifest_from_json(dup), InvalidArgument);
  auto missing = phantom::to_json(m);
  missing.erase("grid");
  EXPECT_THROW(phantom::manifest_from_json(missing), MalformedHeader);
  EXPECT_THROW(phantom::synthesize_dataset(0, 1, "/tmp/unused", small_options()), InvalidArgument);
}

TEST(Dataset, SplitValidation) {
  train::DatasetSplit ok{{"a", "b"}, {"c"}, {}};
  EXPECT_NO_THROW(ok.validate());
  EXPECT_THROW((train::DatasetSplit{{}, {"c"}, {}}.validate()), InvalidArgument);
  EXPECT_THROW((train::DatasetSplit{{"a"}, {}, {}}.validate()), InvalidArgument);
  EXPECT_THROW((train::DatasetSplit{{"a", "b"}, {"b"}, {}}.validate()), InvalidArgument);
  EXPECT_THROW((train::DatasetSplit{{"a", "a"}, {"b"}, {}}.validate()), InvalidArgument);
}

TEST(DataSource, DirectoryAndMemoryAgree) {
  test::TempDir dir("datasource");
  const auto opts = small_options();
  phantom::synthesize_dataset(4, 3, dir.path(), opts);
  const train::DatasetDirectory disk(dir.path());
  std::vector<phantom::ExampleTriple> cases;
  for (const auto& c : disk.manifest().cases) cases.push_back(phantom::load_case(dir.path(), c, disk.manifest()));
  const train::InMemoryDataSource memory(cases);
  for (const auto& c : disk.manifest().cases) {
    ASSERT_TRUE(disk.contains(c.id));
    ASSERT_TRUE(memory.contains(c.id));
    const auto a = disk.load(c.id, {});
    const auto b = memory.load(c.id, {});
    EXPECT_EQ(*a.shape, *b.shape);
    EXPECT_EQ(*a.topogram, *b.topogram);
    EXPECT_EQ(*a.mask, *b.mask);
    const auto partial = disk.load(c.id, {false, true, false});
    EXPECT_FALSE(partial.shape);
    EXPECT_TRUE(partial.topogram);
    EXPECT_FALSE(partial.mask);
  }
  EXPECT_FALSE(disk.contains("nope"));
  EXPECT_THROW(disk.load("nope", {}), InvalidArgument);
  EXPECT_THROW(memory.load("nope", {}), InvalidArgument);
  cases.push_back(cases.front());
  EXPECT_THROW(train::InMemoryDataSource{cases}, InvalidArgument);
  const auto split = train::split_from_manifest(disk.manifest());
  EXPECT_EQ(split.train_ids.size(), 3u);
  EXPECT_EQ(split.test_ids.size(), 1u);
}
