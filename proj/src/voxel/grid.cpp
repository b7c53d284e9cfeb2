#include "t3d/voxel/grid.hpp"

#include <bit>
#include <cmath>
#include <string>

#include "t3d/error.hpp"

namespace t3d::voxel {

namespace {

void check_unit_range(std::span<const float> values, Occupancy kind, const char* what) {
  for (float v : values) {
    if (!(v >= 0.0f && v <= 1.0f)) {
      throw InvalidArgument(std::string(what) + ": value outside [0,1]");
    }
    if (kind == Occupancy::binary && v != 0.0f && v != 1.0f) {
      throw InvalidArgument(std::string(what) + ": binary data must be 0 or 1");
    }
  }
}

}  // namespace

std::string_view to_string(Occupancy kind) {
  return kind == Occupancy::binary ? "binary" : "probability";
}

Occupancy occupancy_from_string(std::string_view text) {
  if (text == "binary") return Occupancy::binary;
  if (text == "probability") return Occupancy::probability;
  throw InvalidArgument("unknown occupancy kind '" + std::string(text) + "'");
}

std::string_view to_string(Axis axis) {
  switch (axis) {
    case Axis::x: return "x";
    case Axis::y: return "y";
    case Axis::z: return "z";
  }
  return "?";
}

Axis axis_from_string(std::string_view text) {
  if (text == "x") return Axis::x;
  if (text == "y") return Axis::y;
  if (text == "z") return Axis::z;
  throw InvalidArgument("unknown axis '" + std::string(text) + "'");
}

double Spacing::along(Axis axis) const {
  switch (axis) {
    case Axis::x: return x;
    case Axis::y: return y;
    case Axis::z: return z;
  }
  return x;
}

VoxelGrid::VoxelGrid(int dim, Spacing spacing, Occupancy kind)
    : VoxelGrid(dim, spacing, kind, std::vector<float>(static_cast<std::size_t>(dim) * dim * dim, 0.0f)) {}

VoxelGrid::VoxelGrid(int dim, Spacing spacing, Occupancy kind, std::vector<float> values)
    : dim_(dim), spacing_(spacing), kind_(kind), values_(std::move(values)) {
  if (dim < kMinDim || dim > kMaxDim || !std::has_single_bit(static_cast<unsigned>(dim))) {
    throw DimensionMismatch("grid dimension must be a power of two in [" + std::to_string(kMinDim) + ", " +
                            std::to_string(kMaxDim) + "], got " + std::to_string(dim));
  }
  if (!(spacing.x > 0.0 && spacing.y > 0.0 && spacing.z > 0.0) || !std::isfinite(spacing.voxel_volume_mm3())) {
    throw InvalidArgument("grid spacing must be strictly positive");
  }
  if (values_.size() != static_cast<std::size_t>(dim) * dim * dim) {
    throw DimensionMismatch("grid payload has " + std::to_string(values_.size()) + " values, expected " +
                            std::to_string(static_cast<std::size_t>(dim) * dim * dim));
  }
  check_unit_range(values_, kind_, "VoxelGrid");
}

Image2D::Image2D(int width, int height, std::vector<float> values)
    : width_(width), height_(height), values_(std::move(values)) {
  if (width <= 0 || height <= 0) throw DimensionMismatch("image dimensions must be positive");
  if (values_.size() != static_cast<std::size_t>(width) * height) {
    throw DimensionMismatch("image payload size does not match " + std::to_string(width) + "x" +
                            std::to_string(height));
  }
  check_unit_range(values_, Occupancy::probability, "Image2D");
}

Image2D::Image2D(int width, int height)
    : Image2D(width, height, std::vector<float>(static_cast<std::size_t>(width) * height, 0.0f)) {}

Mask2D::Mask2D(Image2D image, Occupancy kind) : image_(std::move(image)), kind_(kind) {
  check_unit_range(image_.values(), kind_, "Mask2D");
}

bool Mask2D::empty() const {
  for (float v : values()) {
    if (v != 0.0f) return false;
  }
  return true;
}

Topogram::Topogram(Image2D image, AcquisitionMeta meta) : image_(std::move(image)), meta_(meta) {
  if (image_.width() != image_.height()) throw DimensionMismatch("topogram must be square");
}

VoxelGrid binarize(const VoxelGrid& grid, double threshold) {
  if (!(threshold > 0.0 && threshold < 1.0)) throw InvalidArgument("binarize threshold must lie in (0,1)");
  std::vector<float> out(grid.size());
  auto in = grid.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = in[i] >= threshold ? 1.0f : 0.0f;
  return VoxelGrid(grid.dim(), grid.spacing(), Occupancy::binary, std::move(out));
}

Mask2D binarize(const Mask2D& mask, double threshold) {
  if (!(threshold > 0.0 && threshold < 1.0)) throw InvalidArgument("binarize threshold must lie in (0,1)");
  std::vector<float> out(mask.image().size());
  auto in = mask.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = in[i] >= threshold ? 1.0f : 0.0f;
  return Mask2D(Image2D(mask.width(), mask.height(), std::move(out)), Occupancy::binary);
}

VolumeMeasure voxel_volume(const VoxelGrid& grid) {
  if (!grid.is_binary()) throw InvalidArgument("voxel_volume requires a binary grid");
  long long count = 0;
  for (float v : grid.values()) count += v != 0.0f;
  return {count, static_cast<double>(count) * grid.spacing().voxel_volume_mm3() / 1000.0};
}

}  // namespace t3d::voxel
