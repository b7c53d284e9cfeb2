#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "t3d/voxel/grid.hpp"

namespace t3d::voxel {

/// Ray addressing for an axis-aligned orthographic projection of a D^3 x-fastest volume.
/// Output pixel (u, v) collects voxels base(u, v) + t * stride for t in [0, D).
struct RayLayout {
  int dim;
  std::size_t u_step;
  std::size_t v_step;
  std::size_t stride;

  static RayLayout of(int dim, Axis axis) {
    const std::size_t d = static_cast<std::size_t>(dim);
    switch (axis) {
      case Axis::x: return {dim, d, d * d, 1};
      case Axis::y: return {dim, 1, d * d, d};
      case Axis::z: return {dim, 1, d, d * d};
    }
    return {dim, 1, d, d * d};
  }
  std::size_t base(int u, int v) const { return u * u_step + v * v_step; }
};

/// Hard silhouette: pixel is 1 iff any voxel on its ray is set. Rejects probability grids.
Mask2D project_orthographic(const VoxelGrid& shape, Axis axis);

/// Complement-product pooling 1 - prod(1 - p) along each ray.
Mask2D soft_project(const VoxelGrid& shape, Axis axis);

/// Buffer-level soft projection for one D^3 volume; `out` has D*D entries.
template <typename T>
void soft_project(std::span<const T> probs, int dim, Axis axis, std::span<T> out) {
  const auto layout = RayLayout::of(dim, axis);
  for (int v = 0; v < dim; ++v) {
    for (int u = 0; u < dim; ++u) {
      const std::size_t base = layout.base(u, v);
      T transmit = T(1);
      for (int t = 0; t < dim; ++t) transmit *= T(1) - probs[base + t * layout.stride];
      out[static_cast<std::size_t>(v) * dim + u] = T(1) - transmit;
    }
  }
}

/// Vector-Jacobian product of soft_project: accumulates d(out)/d(p) * grad_out into grad_probs.
/// Uses prefix/suffix products so no division by (1 - p) is needed.
template <typename T>
void soft_project_backward(std::span<const T> probs, int dim, Axis axis, std::span<const T> grad_out,
                           std::span<T> grad_probs) {
  const auto layout = RayLayout::of(dim, axis);
  std::vector<T> prefix(static_cast<std::size_t>(dim) + 1);
  for (int v = 0; v < dim; ++v) {
    for (int u = 0; u < dim; ++u) {
      const std::size_t base = layout.base(u, v);
      const T g = grad_out[static_cast<std::size_t>(v) * dim + u];
      prefix[0] = T(1);
      for (int t = 0; t < dim; ++t) prefix[t + 1] = prefix[t] * (T(1) - probs[base + t * layout.stride]);
      T suffix = T(1);
      for (int t = dim - 1; t >= 0; --t) {
        const std::size_t idx = base + t * layout.stride;
        grad_probs[idx] += g * prefix[t] * suffix;
        suffix *= T(1) - probs[idx];
      }
    }
  }
}

}  // namespace t3d::voxel
