#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "t3d/phantom/phantom.hpp"
#include "t3d/phantom/topogram.hpp"
#include "t3d/voxel/grid.hpp"

namespace t3d::phantom {

struct ExampleTriple {
  std::string id;
  voxel::VoxelGrid shape;
  voxel::Topogram topogram;
  voxel::Mask2D mask;
  voxel::Spacing spacing;
};

struct SynthesisOptions {
  int grid = 64;
  int topogram_upsample = 4;
  double field_of_view_mm = 96.0;  ///< spacing = field_of_view_mm / grid
  voxel::Axis axis = voxel::kCanonicalAxis;
  double noise_sigma = 0.0;
  double source_intensity = 1.0;
  PhantomParams phantom;  ///< seed and dim are set per case
  BodyParams body;
};

/// Number of training cases for a dataset of n, mirroring a 1554/2129 split.
int train_count(int n);

/// One synthetic case; the topogram is quantised exactly as its 16-bit file will be read back.
ExampleTriple synthesize_case(const std::string& id, std::uint64_t seed, const SynthesisOptions& options);

struct ManifestCase {
  std::string id;
  std::uint64_t seed = 0;
  std::string split;  ///< "train" or "test"
  std::string shape_path;
  std::string topogram_path;
  std::string mask_path;
};

struct Manifest {
  int version = 1;
  std::uint64_t seed = 0;
  voxel::Spacing spacing;
  int grid = 64;
  int topogram = 256;
  std::string axis = "y";
  std::vector<ManifestCase> cases;

  std::vector<std::string> ids(const std::string& split) const;
};

nlohmann::json to_json(const Manifest& manifest);
Manifest manifest_from_json(const nlohmann::json& j);

/// Writes n cases under out_dir/cases/<id>/ and out_dir/manifest.json; returns the manifest path.
std::filesystem::path synthesize_dataset(int n, std::uint64_t seed, const std::filesystem::path& out_dir,
                                         const SynthesisOptions& options = {});

Manifest read_manifest(const std::filesystem::path& dataset_dir);
ExampleTriple load_case(const std::filesystem::path& dataset_dir, const ManifestCase& entry, const Manifest& manifest);

}  // namespace t3d::phantom
