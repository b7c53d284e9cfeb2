#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "t3d/error.hpp"
#include "t3d/voxel/grid.hpp"

namespace t3d::phantom {

/// Phantom parameters could not produce a shape meeting the margin/volume/connectivity constraints.
class PhantomError : public Error {
 public:
  using Error::Error;
};

struct Range {
  double lo = 0.0;
  double hi = 0.0;
};

/// Sampling ranges of the organ phantom. Lengths are fractions of the grid dimension.
struct PhantomParams {
  std::uint64_t seed = 0;
  int dim = 64;
  voxel::Spacing spacing{1.5, 1.5, 1.5};

  Range semi_axis_x{0.18, 0.32};
  Range semi_axis_y{0.12, 0.30};  ///< anterior-posterior half thickness
  Range semi_axis_z{0.20, 0.34};
  Range exponent{0.55, 1.0};     ///< superellipsoid shape exponents (1 = ellipsoid)
  double center_jitter = 0.08;   ///< in-plane (x, z) offset of the organ centre

  int lobes_min = 0;
  int lobes_max = 3;
  Range lobe_offset{0.45, 0.85};  ///< distance of a lobe centre, relative to the base semi-axes
  Range lobe_scale{0.35, 0.6};    ///< lobe semi-axes relative to the base semi-axes

  double deformation = 0.05;  ///< amplitude of the low-frequency displacement field

  double min_fraction = 0.02;
  double max_fraction = 0.40;
  int max_attempts = 32;
};

struct Ellipsoid {
  std::array<double, 3> center;
  std::array<double, 3> semi_axes;
};

/// Concrete geometry drawn from PhantomParams, in voxel units with voxel centres at i + 0.5.
struct PhantomGeometry {
  int dim = 64;
  std::array<double, 3> center{};
  std::array<double, 3> semi_axes{};
  double e1 = 1.0;  ///< north-south exponent (z)
  double e2 = 1.0;  ///< east-west exponent (x-y)
  std::vector<Ellipsoid> lobes;
  struct Wave {
    std::array<double, 3> amplitude;
    std::array<double, 3> frequency;
    double phase;
  };
  std::vector<Wave> waves;

  /// Inside test of the deformed union at a point.
  bool contains(double x, double y, double z) const;
};

PhantomGeometry sample_geometry(const PhantomParams& params, std::uint64_t seed);

/// Voxelises the geometry (voxel centres) and keeps the largest 6-connected component.
voxel::VoxelGrid rasterize(const PhantomGeometry& geometry, voxel::Spacing spacing);

/// Deterministic organ phantom. Retries derived seeds until the shape keeps a one-voxel empty margin and a
/// volume fraction inside [min_fraction, max_fraction].
voxel::VoxelGrid generate_phantom(const PhantomParams& params);

/// Number of 6-connected components of the set voxels.
int connected_components(const voxel::VoxelGrid& grid);

}  // namespace t3d::phantom
