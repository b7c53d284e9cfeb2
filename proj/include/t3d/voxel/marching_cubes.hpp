#pragma once

#include <array>
#include <vector>

#include "t3d/voxel/grid.hpp"

namespace t3d::voxel {

/// Triangle mesh in millimetres. Vertices are shared between adjacent triangles.
struct TriangleMesh {
  std::vector<std::array<double, 3>> vertices;
  std::vector<std::array<int, 3>> triangles;

  bool empty() const { return triangles.empty(); }
  double surface_area_mm2() const;
  /// Signed volume by the divergence theorem; positive for outward-facing triangles.
  double enclosed_volume_mm3() const;
  double enclosed_volume_ml() const { return enclosed_volume_mm3() / 1000.0; }
  /// Every undirected edge used by exactly two triangles.
  bool is_closed() const;
  /// V - E + F.
  long long euler_characteristic() const;
};

/// Iso-surface of the grid sampled at voxel centres ((i + 0.5) * spacing). The grid is padded with one
/// empty voxel shell so the surface is always closed. Corners with value >= iso count as inside; on
/// ambiguous faces the fixed 256-case table separates the outside corners, which keeps the surface
/// consistent between neighbouring cells. Requires 0 < iso < 1.
TriangleMesh marching_cubes(const VoxelGrid& grid, double iso);

}  // namespace t3d::voxel
