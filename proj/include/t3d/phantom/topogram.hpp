#pragma once

#include <cstdint>
#include <vector>

#include "t3d/voxel/grid.hpp"

namespace t3d::phantom {

/// Linear attenuation coefficients in 1/mm.
struct Attenuation {
  double air = 0.0;
  double soft_tissue = 0.019;
  double organ = 0.021;
  double bone = 0.048;
};

/// Box of attenuation coefficients (1/mm), x-fastest, with per-axis voxel spacing in mm.
struct AttenuationVolume {
  int nx = 0;
  int ny = 0;
  int nz = 0;
  voxel::Spacing spacing;
  std::vector<double> mu;

  AttenuationVolume() = default;
  AttenuationVolume(int nx, int ny, int nz, voxel::Spacing spacing);
  double& at(int x, int y, int z) { return mu[static_cast<std::size_t>(x) + static_cast<std::size_t>(nx) * (y + static_cast<std::size_t>(ny) * z)]; }
  double at(int x, int y, int z) const { return mu[static_cast<std::size_t>(x) + static_cast<std::size_t>(nx) * (y + static_cast<std::size_t>(ny) * z)]; }
};

/// Torso and spine of the simulated body. Fractions are of the field of view.
struct BodyParams {
  double torso_x = 0.47;  ///< lateral half width
  double torso_y = 0.42;  ///< anterior-posterior half depth
  double spine_x = 0.06;
  double spine_y = 0.07;
  double spine_offset = 0.30;  ///< posterior offset of the spine centre from the field centre
  Attenuation attenuation;
};

/// Body params with per-case variation of torso and spine geometry.
BodyParams sample_body(const BodyParams& base, std::uint64_t seed);

/// Scene for a topogram of `upsample`x the grid resolution in the image plane of `axis`: the organ is
/// placed by nearest-neighbour upsampling, torso and spine are analytic cylinders along z.
AttenuationVolume build_scene(const voxel::VoxelGrid& organ, const BodyParams& body, voxel::Axis axis, int upsample);

/// Parallel-beam Beer-Lambert projection along `axis`: pixel = 1 - exp(-sum(mu * step)).
/// Optional Gaussian pixel noise (clamped to [0,1)) from `noise_seed`.
voxel::Topogram simulate_topogram(const AttenuationVolume& scene, voxel::Axis axis, double source_intensity = 1.0,
                                  double noise_sigma = 0.0, std::uint64_t noise_seed = 0);

}  // namespace t3d::phantom
