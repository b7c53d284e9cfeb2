#include "t3d/voxel/projection.hpp"

#include "t3d/error.hpp"

namespace t3d::voxel {

Mask2D project_orthographic(const VoxelGrid& shape, Axis axis) {
  if (!shape.is_binary()) {
    throw InvalidArgument("project_orthographic requires a binary grid; use soft_project for probabilities");
  }
  const int d = shape.dim();
  const auto layout = RayLayout::of(d, axis);
  const auto values = shape.values();
  std::vector<float> out(static_cast<std::size_t>(d) * d, 0.0f);
  for (int v = 0; v < d; ++v) {
    for (int u = 0; u < d; ++u) {
      const std::size_t base = layout.base(u, v);
      for (int t = 0; t < d; ++t) {
        if (values[base + t * layout.stride] != 0.0f) {
          out[static_cast<std::size_t>(v) * d + u] = 1.0f;
          break;
        }
      }
    }
  }
  return Mask2D(Image2D(d, d, std::move(out)), Occupancy::binary);
}

Mask2D soft_project(const VoxelGrid& shape, Axis axis) {
  const int d = shape.dim();
  std::vector<float> out(static_cast<std::size_t>(d) * d);
  soft_project<float>(shape.values(), d, axis, out);
  return Mask2D(Image2D(d, d, std::move(out)), Occupancy::probability);
}

}  // namespace t3d::voxel
