#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

namespace t3d::voxel {

enum class Occupancy { binary, probability };

std::string_view to_string(Occupancy kind);
Occupancy occupancy_from_string(std::string_view text);

/// Projection / viewing axis. `y` is the anterior-posterior axis of the phantoms.
enum class Axis { x = 0, y = 1, z = 2 };

std::string_view to_string(Axis axis);
Axis axis_from_string(std::string_view text);

inline constexpr Axis kCanonicalAxis = Axis::y;

/// Millimetres per voxel along x, y and z.
struct Spacing {
  double x = 1.0;
  double y = 1.0;
  double z = 1.0;

  double voxel_volume_mm3() const { return x * y * z; }
  double along(Axis axis) const;
  bool operator==(const Spacing&) const = default;
};

/// Cubic D^3 occupancy volume, x-fastest storage. Immutable once built.
class VoxelGrid {
 public:
  static constexpr int kMinDim = 8;
  static constexpr int kMaxDim = 64;

  VoxelGrid(int dim, Spacing spacing, Occupancy kind);
  VoxelGrid(int dim, Spacing spacing, Occupancy kind, std::vector<float> values);

  int dim() const { return dim_; }
  std::size_t size() const { return values_.size(); }
  const Spacing& spacing() const { return spacing_; }
  Occupancy kind() const { return kind_; }
  bool is_binary() const { return kind_ == Occupancy::binary; }

  std::size_t index(int x, int y, int z) const {
    return static_cast<std::size_t>(x) +
           static_cast<std::size_t>(dim_) * (static_cast<std::size_t>(y) + static_cast<std::size_t>(dim_) * z);
  }
  float at(int x, int y, int z) const { return values_[index(x, y, z)]; }
  bool in_bounds(int x, int y, int z) const {
    return x >= 0 && y >= 0 && z >= 0 && x < dim_ && y < dim_ && z < dim_;
  }

  std::span<const float> values() const { return values_; }

  bool operator==(const VoxelGrid&) const = default;

 private:
  int dim_;
  Spacing spacing_;
  Occupancy kind_;
  std::vector<float> values_;
};

/// Square 2D image with values in [0,1], row-major with u fastest.
class Image2D {
 public:
  Image2D(int width, int height, std::vector<float> values);
  Image2D(int width, int height);

  int width() const { return width_; }
  int height() const { return height_; }
  std::size_t size() const { return values_.size(); }
  float at(int u, int v) const { return values_[static_cast<std::size_t>(v) * width_ + u]; }
  std::span<const float> values() const { return values_; }

  bool operator==(const Image2D&) const = default;

 private:
  int width_;
  int height_;
  std::vector<float> values_;
};

/// 2D organ silhouette, binary annotation or soft projection.
class Mask2D {
 public:
  Mask2D(Image2D image, Occupancy kind);

  const Image2D& image() const { return image_; }
  int width() const { return image_.width(); }
  int height() const { return image_.height(); }
  float at(int u, int v) const { return image_.at(u, v); }
  std::span<const float> values() const { return image_.values(); }
  Occupancy kind() const { return kind_; }
  bool is_binary() const { return kind_ == Occupancy::binary; }
  bool empty() const;

  bool operator==(const Mask2D&) const = default;

 private:
  Image2D image_;
  Occupancy kind_;
};

struct AcquisitionMeta {
  double source_intensity = 1.0;
  Axis axis = kCanonicalAxis;
  bool operator==(const AcquisitionMeta&) const = default;
};

class Topogram {
 public:
  Topogram(Image2D image, AcquisitionMeta meta = {});

  const Image2D& image() const { return image_; }
  int dim() const { return image_.width(); }
  std::span<const float> values() const { return image_.values(); }
  const AcquisitionMeta& meta() const { return meta_; }

  bool operator==(const Topogram&) const = default;

 private:
  Image2D image_;
  AcquisitionMeta meta_;
};

/// Thresholds a probability grid: 1 where p >= threshold. Requires 0 < threshold < 1.
VoxelGrid binarize(const VoxelGrid& grid, double threshold);
Mask2D binarize(const Mask2D& mask, double threshold);

struct VolumeMeasure {
  long long count = 0;
  double milliliters = 0.0;
};

/// Set-voxel count and the physical volume it covers. Requires a binary grid.
VolumeMeasure voxel_volume(const VoxelGrid& grid);

}  // namespace t3d::voxel
