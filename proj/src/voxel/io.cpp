#include "t3d/voxel/io.hpp"

#include <bit>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string_view>
#include <vector>

#include "t3d/error.hpp"

namespace t3d::voxel {

namespace {

static_assert(std::endian::native == std::endian::little, "payload encoding assumes a little-endian host");

std::string format_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, end);
}

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != '\r') ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

template <typename T>
bool parse_number(std::string_view text, T& out) {
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
  return ec == std::errc() && ptr == text.data() + text.size();
}

}  // namespace

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

std::string encode_grid(const VoxelGrid& grid) {
  const auto& s = grid.spacing();
  const std::string d = std::to_string(grid.dim());
  std::string out = "VGRID " + d + " " + d + " " + d + " " + format_double(s.x) + " " + format_double(s.y) + " " +
                    format_double(s.z) + " " + std::string(to_string(grid.kind())) + "\n";
  const std::size_t header = out.size();
  out.resize(header + grid.size() * sizeof(float));
  std::memcpy(out.data() + header, grid.values().data(), grid.size() * sizeof(float));
  return out;
}

VoxelGrid decode_grid(const std::string& bytes) {
  const auto newline = bytes.find('\n');
  if (newline == std::string::npos || newline > 256) throw MalformedHeader("vgrid: missing header line");
  const auto fields = split_ws(std::string_view(bytes).substr(0, newline));
  if (fields.size() != 8 || fields[0] != "VGRID") throw MalformedHeader("vgrid: header must have 8 fields starting with VGRID");
  int dims[3];
  double spacing[3];
  for (int i = 0; i < 3; ++i) {
    if (!parse_number(fields[1 + i], dims[i]) || dims[i] <= 0) throw MalformedHeader("vgrid: bad dimension field");
    if (!parse_number(fields[4 + i], spacing[i])) throw MalformedHeader("vgrid: bad spacing field");
  }
  Occupancy kind;
  try {
    kind = occupancy_from_string(fields[7]);
  } catch (const InvalidArgument&) {
    throw MalformedHeader("vgrid: unknown kind '" + std::string(fields[7]) + "'");
  }
  if (dims[0] != dims[1] || dims[1] != dims[2]) throw DimensionMismatch("vgrid: grid must be cubic");
  const std::size_t count = static_cast<std::size_t>(dims[0]) * dims[1] * dims[2];
  const std::size_t payload = bytes.size() - newline - 1;
  if (payload < count * sizeof(float)) {
    throw TruncatedPayload("vgrid: payload has " + std::to_string(payload) + " bytes, header declares " +
                           std::to_string(count * sizeof(float)));
  }
  if (payload > count * sizeof(float)) throw DimensionMismatch("vgrid: payload longer than the declared dimensions");
  std::vector<float> values(count);
  std::memcpy(values.data(), bytes.data() + newline + 1, count * sizeof(float));
  return VoxelGrid(dims[0], Spacing{spacing[0], spacing[1], spacing[2]}, kind, std::move(values));
}

void write_grid(const std::filesystem::path& path, const VoxelGrid& grid) { write_file(path, encode_grid(grid)); }
VoxelGrid read_grid(const std::filesystem::path& path) { return decode_grid(read_file(path)); }

std::string encode_pgm(const Image2D& image, int maxval) {
  if (maxval != 255 && maxval != 65535) throw InvalidArgument("pgm maxval must be 255 or 65535");
  std::string out = "P5\n" + std::to_string(image.width()) + " " + std::to_string(image.height()) + "\n" +
                    std::to_string(maxval) + "\n";
  const int bytes_per = maxval > 255 ? 2 : 1;
  const std::size_t header = out.size();
  out.resize(header + image.size() * bytes_per);
  auto values = image.values();
  for (std::size_t i = 0; i < values.size(); ++i) {
    const auto q = static_cast<std::uint32_t>(std::lround(static_cast<double>(values[i]) * maxval));
    if (bytes_per == 1) {
      out[header + i] = static_cast<char>(q);
    } else {
      // PGM stores 16-bit samples most significant byte first.
      out[header + 2 * i] = static_cast<char>(q >> 8);
      out[header + 2 * i + 1] = static_cast<char>(q & 0xff);
    }
  }
  return out;
}

GrayImage decode_pgm(const std::string& bytes) {
  // Header: magic, width, height, maxval separated by whitespace, comments allowed, then one whitespace byte.
  std::size_t pos = 0;
  std::vector<std::string> tokens;
  while (tokens.size() < 4) {
    while (pos < bytes.size() && std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
    if (pos < bytes.size() && bytes[pos] == '#') {
      while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      continue;
    }
    const std::size_t start = pos;
    while (pos < bytes.size() && !std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
    if (start == pos) throw MalformedHeader("pgm: incomplete header");
    tokens.emplace_back(bytes.substr(start, pos - start));
  }
  if (tokens[0] != "P5") throw MalformedHeader("pgm: only binary P5 images are supported");
  int width = 0, height = 0, maxval = 0;
  if (!parse_number(std::string_view(tokens[1]), width) || !parse_number(std::string_view(tokens[2]), height) ||
      !parse_number(std::string_view(tokens[3]), maxval) || width <= 0 || height <= 0 || maxval <= 0 ||
      maxval > 65535) {
    throw MalformedHeader("pgm: bad width/height/maxval");
  }
  ++pos;  // single whitespace byte after maxval
  const int bytes_per = maxval > 255 ? 2 : 1;
  const std::size_t count = static_cast<std::size_t>(width) * height;
  const std::size_t payload = bytes.size() >= pos ? bytes.size() - pos : 0;
  if (payload < count * bytes_per) throw TruncatedPayload("pgm: payload shorter than width*height");
  if (payload > count * bytes_per) throw DimensionMismatch("pgm: payload longer than width*height");
  std::vector<float> values(count);
  const auto* data = reinterpret_cast<const unsigned char*>(bytes.data() + pos);
  for (std::size_t i = 0; i < count; ++i) {
    const std::uint32_t q = bytes_per == 1 ? data[i] : (static_cast<std::uint32_t>(data[2 * i]) << 8) | data[2 * i + 1];
    if (q > static_cast<std::uint32_t>(maxval)) throw MalformedHeader("pgm: sample exceeds maxval");
    values[i] = static_cast<float>(static_cast<double>(q) / maxval);
  }
  return {Image2D(width, height, std::move(values)), maxval};
}

Image2D quantize(const Image2D& image, int maxval) {
  if (maxval != 255 && maxval != 65535) throw InvalidArgument("pgm maxval must be 255 or 65535");
  std::vector<float> values(image.values().begin(), image.values().end());
  for (auto& v : values) {
    const auto q = std::lround(static_cast<double>(v) * maxval);
    v = static_cast<float>(static_cast<double>(q) / maxval);
  }
  return Image2D(image.width(), image.height(), std::move(values));
}

void write_image(const std::filesystem::path& path, const Image2D& image, int maxval) {
  write_file(path, encode_pgm(image, maxval));
}

GrayImage read_image(const std::filesystem::path& path) { return decode_pgm(read_file(path)); }

Mask2D mask_from_image(const Image2D& image) {
  bool binary = true;
  for (float v : image.values()) binary = binary && (v == 0.0f || v == 1.0f);
  return Mask2D(image, binary ? Occupancy::binary : Occupancy::probability);
}

void write_mask(const std::filesystem::path& path, const Mask2D& mask) { write_image(path, mask.image(), 255); }
Mask2D read_mask(const std::filesystem::path& path) { return mask_from_image(read_image(path).image); }

void write_topogram(const std::filesystem::path& path, const Topogram& topogram) {
  write_image(path, topogram.image(), 65535);
}

Topogram read_topogram(const std::filesystem::path& path) { return Topogram(read_image(path).image); }

std::string encode_obj(const TriangleMesh& mesh) {
  std::string out;
  out.reserve(mesh.vertices.size() * 40 + mesh.triangles.size() * 24);
  for (const auto& v : mesh.vertices) {
    out += "v " + format_double(v[0]) + " " + format_double(v[1]) + " " + format_double(v[2]) + "\n";
  }
  for (const auto& t : mesh.triangles) {
    out += "f " + std::to_string(t[0] + 1) + " " + std::to_string(t[1] + 1) + " " + std::to_string(t[2] + 1) + "\n";
  }
  return out;
}

TriangleMesh decode_obj(const std::string& text) {
  TriangleMesh mesh;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto fields = split_ws(line);
    if (fields.empty() || fields[0].starts_with('#')) continue;
    if (fields[0] == "v") {
      std::array<double, 3> v{};
      if (fields.size() < 4) throw MalformedHeader("obj: short vertex record at line " + std::to_string(line_no));
      for (int i = 0; i < 3; ++i) {
        if (!parse_number(fields[1 + i], v[i])) throw MalformedHeader("obj: bad vertex at line " + std::to_string(line_no));
      }
      mesh.vertices.push_back(v);
    } else if (fields[0] == "f") {
      if (fields.size() != 4) throw MalformedHeader("obj: only triangular faces are supported (line " + std::to_string(line_no) + ")");
      std::array<int, 3> t{};
      for (int i = 0; i < 3; ++i) {
        auto field = fields[1 + i];
        field = field.substr(0, field.find('/'));
        if (!parse_number(field, t[i])) throw MalformedHeader("obj: bad face at line " + std::to_string(line_no));
        t[i] -= 1;
      }
      mesh.triangles.push_back(t);
    } else {
      throw MalformedHeader("obj: unsupported record '" + std::string(fields[0]) + "'");
    }
  }
  for (const auto& t : mesh.triangles) {
    for (int i : t) {
      if (i < 0 || i >= static_cast<int>(mesh.vertices.size())) throw DimensionMismatch("obj: face index out of range");
    }
  }
  return mesh;
}

void write_mesh(const std::filesystem::path& path, const TriangleMesh& mesh) { write_file(path, encode_obj(mesh)); }
TriangleMesh read_mesh(const std::filesystem::path& path) { return decode_obj(read_file(path)); }

}  // namespace t3d::voxel
