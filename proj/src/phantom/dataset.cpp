#include "t3d/phantom/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>
#include <set>

#include "t3d/random.hpp"
#include "t3d/voxel/io.hpp"
#include "t3d/voxel/projection.hpp"

namespace t3d::phantom {

namespace {

constexpr const char* kManifestName = "manifest.json";

std::string case_id(int i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "case-%04d", i);
  return buf;
}

}  // namespace

int train_count(int n) { return static_cast<int>(std::lround(n * 1554.0 / 2129.0)); }

ExampleTriple synthesize_case(const std::string& id, std::uint64_t seed, const SynthesisOptions& o) {
  PhantomParams params = o.phantom;
  params.seed = derive_seed(seed, {1});
  params.dim = o.grid;
  const double step = o.field_of_view_mm / o.grid;
  params.spacing = {step, step, step};
  auto shape = generate_phantom(params);
  const auto body = sample_body(o.body, derive_seed(seed, {2}));
  const auto scene = build_scene(shape, body, o.axis, o.topogram_upsample);
  const auto raw = simulate_topogram(scene, o.axis, o.source_intensity, o.noise_sigma, derive_seed(seed, {3}));
  voxel::Topogram topogram(voxel::quantize(raw.image(), 65535), raw.meta());
  auto mask = voxel::project_orthographic(shape, o.axis);
  return {id, std::move(shape), std::move(topogram), std::move(mask), params.spacing};
}

std::vector<std::string> Manifest::ids(const std::string& split) const {
  std::vector<std::string> out;
  for (const auto& c : cases) {
    if (split == "all" || c.split == split) out.push_back(c.id);
  }
  return out;
}

nlohmann::json to_json(const Manifest& m) {
  nlohmann::json cases = nlohmann::json::array();
  for (const auto& c : m.cases) {
    cases.push_back({{"id", c.id},
                     {"seed", c.seed},
                     {"split", c.split},
                     {"paths", {{"shape", c.shape_path}, {"topogram", c.topogram_path}, {"mask", c.mask_path}}}});
  }
  return {{"version", m.version},
          {"seed", m.seed},
          {"spacing_mm", {m.spacing.x, m.spacing.y, m.spacing.z}},
          {"grid", m.grid},
          {"topogram", m.topogram},
          {"axis", m.axis},
          {"cases", cases}};
}

Manifest manifest_from_json(const nlohmann::json& j) {
  try {
    Manifest m;
    m.version = j.at("version").get<int>();
    m.seed = j.at("seed").get<std::uint64_t>();
    const auto sp = j.at("spacing_mm").get<std::vector<double>>();
    if (sp.size() != 3) throw MalformedHeader("manifest spacing_mm must have three entries");
    m.spacing = {sp[0], sp[1], sp[2]};
    m.grid = j.at("grid").get<int>();
    m.topogram = j.at("topogram").get<int>();
    m.axis = j.at("axis").get<std::string>();
    std::set<std::string> seen;
    for (const auto& c : j.at("cases")) {
      ManifestCase mc;
      mc.id = c.at("id").get<std::string>();
      mc.seed = c.at("seed").get<std::uint64_t>();
      mc.split = c.at("split").get<std::string>();
      mc.shape_path = c.at("paths").at("shape").get<std::string>();
      mc.topogram_path = c.at("paths").at("topogram").get<std::string>();
      mc.mask_path = c.at("paths").at("mask").get<std::string>();
      if (!seen.insert(mc.id).second) throw InvalidArgument("duplicate case id '" + mc.id + "' in manifest");
      m.cases.push_back(std::move(mc));
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw MalformedHeader(std::string("manifest: ") + e.what());
  }
}

std::filesystem::path synthesize_dataset(int n, std::uint64_t seed, const std::filesystem::path& out_dir,
                                         const SynthesisOptions& options) {
  if (n <= 0) throw InvalidArgument("dataset size must be positive");
  Manifest m;
  m.seed = seed;
  const double step = options.field_of_view_mm / options.grid;
  m.spacing = {step, step, step};
  m.grid = options.grid;
  m.topogram = options.grid * options.topogram_upsample;
  m.axis = std::string(voxel::to_string(options.axis));

  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(derive_seed(seed, {0xdada}));
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<bool> is_train(n, false);
  for (int k = 0; k < train_count(n); ++k) is_train[order[k]] = true;

  std::error_code ec;
  std::filesystem::create_directories(out_dir / "cases", ec);
  if (ec) throw IoError("cannot create " + (out_dir / "cases").string() + ": " + ec.message());
  for (int i = 0; i < n; ++i) {
    ManifestCase c;
    c.id = case_id(i);
    c.seed = derive_seed(seed, {static_cast<std::uint64_t>(i)});
    c.split = is_train[i] ? "train" : "test";
    const std::string rel = "cases/" + c.id + "/";
    c.shape_path = rel + "shape.vgrid";
    c.topogram_path = rel + "topogram.pgm";
    c.mask_path = rel + "mask.pgm";
    const auto triple = synthesize_case(c.id, c.seed, options);
    std::filesystem::create_directories(out_dir / rel, ec);
    if (ec) throw IoError("cannot create " + (out_dir / rel).string() + ": " + ec.message());
    voxel::write_grid(out_dir / c.shape_path, triple.shape);
    voxel::write_topogram(out_dir / c.topogram_path, triple.topogram);
    voxel::write_mask(out_dir / c.mask_path, triple.mask);
    m.cases.push_back(std::move(c));
  }
  const auto path = out_dir / kManifestName;
  voxel::write_file(path, to_json(m).dump(2) + "\n");
  return path;
}

Manifest read_manifest(const std::filesystem::path& dataset_dir) {
  const auto path = dataset_dir / kManifestName;
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(voxel::read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw MalformedHeader(path.string() + ": " + e.what());
  }
  return manifest_from_json(j);
}

ExampleTriple load_case(const std::filesystem::path& dir, const ManifestCase& entry, const Manifest& manifest) {
  auto shape = voxel::read_grid(dir / entry.shape_path);
  auto raw = voxel::read_topogram(dir / entry.topogram_path);
  voxel::Topogram topogram(raw.image(), {raw.meta().source_intensity, voxel::axis_from_string(manifest.axis)});
  auto mask = voxel::read_mask(dir / entry.mask_path);
  return {entry.id, std::move(shape), std::move(topogram), std::move(mask), manifest.spacing};
}

}  // namespace t3d::phantom
