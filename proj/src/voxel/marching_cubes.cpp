#include "t3d/voxel/marching_cubes.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <set>
#include <unordered_map>
#include <utility>

#include "mc_tables.hpp"
#include "t3d/error.hpp"

namespace t3d::voxel {

namespace {

using detail::kEdgeTable;
using detail::kTriTable;

// Corner offsets (x, y, z) in table order.
constexpr int kCorner[8][3] = {{0, 0, 0}, {1, 0, 0}, {1, 0, 1}, {0, 0, 1},
                               {0, 1, 0}, {1, 1, 0}, {1, 1, 1}, {0, 1, 1}};
constexpr int kEdgeCorners[12][2] = {{0, 1}, {1, 2}, {2, 3}, {3, 0}, {4, 5}, {5, 6},
                                     {6, 7}, {7, 4}, {0, 4}, {1, 5}, {2, 6}, {3, 7}};

// Keeps interpolated vertices off grid corners so that ties at the iso value cannot collapse triangles.
constexpr double kEdgeMargin = 1e-3;

std::array<double, 3> cross(const std::array<double, 3>& a, const std::array<double, 3>& b) {
  return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}

std::array<double, 3> sub(const std::array<double, 3>& a, const std::array<double, 3>& b) {
  return {a[0] - b[0], a[1] - b[1], a[2] - b[2]};
}

}  // namespace

double TriangleMesh::surface_area_mm2() const {
  double area = 0.0;
  for (const auto& t : triangles) {
    const auto n = cross(sub(vertices[t[1]], vertices[t[0]]), sub(vertices[t[2]], vertices[t[0]]));
    area += 0.5 * std::sqrt(n[0] * n[0] + n[1] * n[1] + n[2] * n[2]);
  }
  return area;
}

double TriangleMesh::enclosed_volume_mm3() const {
  double six_v = 0.0;
  for (const auto& t : triangles) {
    const auto& a = vertices[t[0]];
    const auto c = cross(vertices[t[1]], vertices[t[2]]);
    six_v += a[0] * c[0] + a[1] * c[1] + a[2] * c[2];
  }
  return six_v / 6.0;
}

bool TriangleMesh::is_closed() const {
  std::map<std::pair<int, int>, int> uses;
  for (const auto& t : triangles) {
    for (int e = 0; e < 3; ++e) {
      int a = t[e];
      int b = t[(e + 1) % 3];
      if (a > b) std::swap(a, b);
      ++uses[{a, b}];
    }
  }
  return std::all_of(uses.begin(), uses.end(), [](const auto& kv) { return kv.second == 2; });
}

long long TriangleMesh::euler_characteristic() const {
  std::set<std::pair<int, int>> edges;
  for (const auto& t : triangles) {
    for (int e = 0; e < 3; ++e) {
      edges.insert(std::minmax(t[e], t[(e + 1) % 3]));
    }
  }
  return static_cast<long long>(vertices.size()) - static_cast<long long>(edges.size()) +
         static_cast<long long>(triangles.size());
}

TriangleMesh marching_cubes(const VoxelGrid& grid, double iso) {
  if (!(iso > 0.0 && iso < 1.0)) throw InvalidArgument("marching_cubes iso level must lie in (0,1)");

  const int d = grid.dim();
  const int p = d + 2;  // padded extent
  const Spacing s = grid.spacing();
  auto sample = [&](int x, int y, int z) -> double {
    const int gx = x - 1, gy = y - 1, gz = z - 1;
    return grid.in_bounds(gx, gy, gz) ? grid.at(gx, gy, gz) : 0.0;
  };

  TriangleMesh mesh;
  // Key: padded corner index * 3 + axis of the edge leaving that corner in the positive direction.
  std::unordered_map<std::int64_t, int> edge_vertex;

  auto vertex_on_edge = [&](int x, int y, int z, int c0, int c1) -> int {
    int ax = x + kCorner[c0][0], ay = y + kCorner[c0][1], az = z + kCorner[c0][2];
    int bx = x + kCorner[c1][0], by = y + kCorner[c1][1], bz = z + kCorner[c1][2];
    if (ax + ay + az > bx + by + bz) {
      std::swap(ax, bx);
      std::swap(ay, by);
      std::swap(az, bz);
    }
    const int axis = bx != ax ? 0 : (by != ay ? 1 : 2);
    const std::int64_t key = (static_cast<std::int64_t>(ax) + static_cast<std::int64_t>(p) * (ay + static_cast<std::int64_t>(p) * az)) * 3 + axis;
    if (auto it = edge_vertex.find(key); it != edge_vertex.end()) return it->second;

    const double va = sample(ax, ay, az);
    const double vb = sample(bx, by, bz);
    double t = (iso - va) / (vb - va);
    t = std::clamp(t, kEdgeMargin, 1.0 - kEdgeMargin);
    const double pos[3] = {ax + t * (bx - ax), ay + t * (by - ay), az + t * (bz - az)};
    const int index = static_cast<int>(mesh.vertices.size());
    mesh.vertices.push_back({(pos[0] - 0.5) * s.x, (pos[1] - 0.5) * s.y, (pos[2] - 0.5) * s.z});
    edge_vertex.emplace(key, index);
    return index;
  };

  for (int z = 0; z + 1 < p; ++z) {
    for (int y = 0; y + 1 < p; ++y) {
      for (int x = 0; x + 1 < p; ++x) {
        int config = 0;
        for (int c = 0; c < 8; ++c) {
          if (sample(x + kCorner[c][0], y + kCorner[c][1], z + kCorner[c][2]) < iso) config |= 1 << c;
        }
        if (kEdgeTable[config] == 0) continue;
        const int* tri = kTriTable[config];
        for (int i = 0; tri[i] != -1; i += 3) {
          std::array<int, 3> t{};
          for (int k = 0; k < 3; ++k) {
            const int e = tri[i + k];
            t[k] = vertex_on_edge(x, y, z, kEdgeCorners[e][0], kEdgeCorners[e][1]);
          }
          // Table winding faces inward in this corner layout; flip to outward normals.
          mesh.triangles.push_back({t[0], t[2], t[1]});
        }
      }
    }
  }
  return mesh;
}

}  // namespace t3d::voxel
