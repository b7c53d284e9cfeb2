#pragma once

#include <filesystem>
#include <string>

#include "t3d/voxel/grid.hpp"
#include "t3d/voxel/marching_cubes.hpp"

namespace t3d::voxel {

// .vgrid: ASCII header "VGRID <D> <D> <D> <sx> <sy> <sz> <kind>\n" followed by D^3
// little-endian float32 values, x fastest.
std::string encode_grid(const VoxelGrid& grid);
VoxelGrid decode_grid(const std::string& bytes);
void write_grid(const std::filesystem::path& path, const VoxelGrid& grid);
VoxelGrid read_grid(const std::filesystem::path& path);

/// Binary PGM (P5). Values are quantised to maxval (255 or 65535) on write and divided by maxval on read.
struct GrayImage {
  Image2D image;
  int maxval;
};

std::string encode_pgm(const Image2D& image, int maxval);
/// The image a write/read round trip at `maxval` would produce.
Image2D quantize(const Image2D& image, int maxval);
GrayImage decode_pgm(const std::string& bytes);
void write_image(const std::filesystem::path& path, const Image2D& image, int maxval);
GrayImage read_image(const std::filesystem::path& path);

/// Masks are written as 8-bit 0/255. On read, values are classified binary when every pixel is 0 or 1.
void write_mask(const std::filesystem::path& path, const Mask2D& mask);
Mask2D read_mask(const std::filesystem::path& path);
Mask2D mask_from_image(const Image2D& image);

/// Topograms are written as 16-bit PGM.
void write_topogram(const std::filesystem::path& path, const Topogram& topogram);
Topogram read_topogram(const std::filesystem::path& path);

/// ASCII OBJ with `v` and `f` records only, coordinates in millimetres.
std::string encode_obj(const TriangleMesh& mesh);
TriangleMesh decode_obj(const std::string& text);
void write_mesh(const std::filesystem::path& path, const TriangleMesh& mesh);
TriangleMesh read_mesh(const std::filesystem::path& path);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& bytes);

}  // namespace t3d::voxel
