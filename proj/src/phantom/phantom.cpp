#include "t3d/phantom/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "t3d/random.hpp"

namespace t3d::phantom {

namespace {

double sample(std::mt19937_64& rng, Range r) {
  return std::uniform_real_distribution<double>(r.lo, r.hi)(rng);
}

double superellipsoid_level(const std::array<double, 3>& p, const std::array<double, 3>& c, const std::array<double, 3>& a,
                            double e1, double e2) {
  const double x = std::abs((p[0] - c[0]) / a[0]);
  const double y = std::abs((p[1] - c[1]) / a[1]);
  const double z = std::abs((p[2] - c[2]) / a[2]);
  const double xy = std::pow(std::pow(x, 2.0 / e2) + std::pow(y, 2.0 / e2), e2 / e1);
  return xy + std::pow(z, 2.0 / e1);
}

// Labels 6-connected components; returns the label per voxel (0 = empty) and the size of each label.
std::vector<int> label_components(const voxel::VoxelGrid& grid, std::vector<long long>& sizes) {
  const int d = grid.dim();
  const auto values = grid.values();
  std::vector<int> label(values.size(), 0);
  sizes.assign(1, 0);
  std::vector<std::size_t> stack;
  for (std::size_t start = 0; start < values.size(); ++start) {
    if (values[start] == 0.0f || label[start] != 0) continue;
    const int id = static_cast<int>(sizes.size());
    sizes.push_back(0);
    stack.push_back(start);
    label[start] = id;
    while (!stack.empty()) {
      const std::size_t i = stack.back();
      stack.pop_back();
      ++sizes[id];
      const int x = static_cast<int>(i % d);
      const int y = static_cast<int>((i / d) % d);
      const int z = static_cast<int>(i / (static_cast<std::size_t>(d) * d));
      const int nb[6][3] = {{x - 1, y, z}, {x + 1, y, z}, {x, y - 1, z}, {x, y + 1, z}, {x, y, z - 1}, {x, y, z + 1}};
      for (const auto& n : nb) {
        if (!grid.in_bounds(n[0], n[1], n[2])) continue;
        const std::size_t j = grid.index(n[0], n[1], n[2]);
        if (values[j] != 0.0f && label[j] == 0) {
          label[j] = id;
          stack.push_back(j);
        }
      }
    }
  }
  return label;
}

bool has_margin(const voxel::VoxelGrid& grid) {
  const int d = grid.dim();
  for (int z = 0; z < d; ++z) {
    for (int y = 0; y < d; ++y) {
      for (int x = 0; x < d; ++x) {
        const bool border = x == 0 || y == 0 || z == 0 || x == d - 1 || y == d - 1 || z == d - 1;
        if (border && grid.at(x, y, z) != 0.0f) return false;
      }
    }
  }
  return true;
}

}  // namespace

bool PhantomGeometry::contains(double x, double y, double z) const {
  std::array<double, 3> p{x, y, z};
  for (const auto& w : waves) {
    const double s = std::sin(2.0 * std::numbers::pi * (w.frequency[0] * x + w.frequency[1] * y + w.frequency[2] * z) / dim + w.phase);
    for (int k = 0; k < 3; ++k) p[k] += w.amplitude[k] * s;
  }
  if (superellipsoid_level(p, center, semi_axes, e1, e2) <= 1.0) return true;
  for (const auto& lobe : lobes) {
    if (superellipsoid_level(p, lobe.center, lobe.semi_axes, 1.0, 1.0) <= 1.0) return true;
  }
  return false;
}

PhantomGeometry sample_geometry(const PhantomParams& params, std::uint64_t seed) {
  if (params.dim < voxel::VoxelGrid::kMinDim) throw InvalidArgument("phantom dimension too small");
  if (params.lobes_min < 0 || params.lobes_max < params.lobes_min) throw InvalidArgument("invalid lobe count range");
  std::mt19937_64 rng(seed);
  const double d = params.dim;
  PhantomGeometry g;
  g.dim = params.dim;
  g.semi_axes = {sample(rng, params.semi_axis_x) * d, sample(rng, params.semi_axis_y) * d, sample(rng, params.semi_axis_z) * d};
  g.e1 = sample(rng, params.exponent);
  g.e2 = sample(rng, params.exponent);
  const double jx = sample(rng, {-params.center_jitter, params.center_jitter}) * d;
  const double jz = sample(rng, {-params.center_jitter, params.center_jitter}) * d;
  g.center = {d / 2.0 + jx, d / 2.0, d / 2.0 + jz};

  const int lobes = std::uniform_int_distribution<int>(params.lobes_min, params.lobes_max)(rng);
  std::normal_distribution<double> normal;
  for (int i = 0; i < lobes; ++i) {
    std::array<double, 3> dir{normal(rng), normal(rng), normal(rng)};
    const double len = std::sqrt(dir[0] * dir[0] + dir[1] * dir[1] + dir[2] * dir[2]);
    const double reach = sample(rng, params.lobe_offset);
    Ellipsoid lobe;
    for (int k = 0; k < 3; ++k) {
      lobe.center[k] = g.center[k] + reach * g.semi_axes[k] * dir[k] / std::max(len, 1e-12);
      lobe.semi_axes[k] = sample(rng, params.lobe_scale) * g.semi_axes[k];
    }
    g.lobes.push_back(lobe);
  }

  if (params.deformation > 0.0) {
    for (int i = 0; i < 2; ++i) {
      PhantomGeometry::Wave w;
      for (int k = 0; k < 3; ++k) {
        w.amplitude[k] = sample(rng, {-params.deformation, params.deformation}) * d;
        w.frequency[k] = sample(rng, {-1.0, 1.0});
      }
      w.phase = sample(rng, {0.0, 2.0 * std::numbers::pi});
      g.waves.push_back(w);
    }
  }
  return g;
}

voxel::VoxelGrid rasterize(const PhantomGeometry& g, voxel::Spacing spacing) {
  const int d = g.dim;
  std::vector<float> values(static_cast<std::size_t>(d) * d * d, 0.0f);
  std::size_t i = 0;
  for (int z = 0; z < d; ++z) {
    for (int y = 0; y < d; ++y) {
      for (int x = 0; x < d; ++x, ++i) values[i] = g.contains(x + 0.5, y + 0.5, z + 0.5) ? 1.0f : 0.0f;
    }
  }
  voxel::VoxelGrid raw(d, spacing, voxel::Occupancy::binary, values);
  std::vector<long long> sizes;
  const auto label = label_components(raw, sizes);
  if (sizes.size() <= 2) return raw;
  const int keep = static_cast<int>(std::max_element(sizes.begin() + 1, sizes.end()) - sizes.begin());
  for (std::size_t j = 0; j < values.size(); ++j) values[j] = label[j] == keep ? 1.0f : 0.0f;
  return voxel::VoxelGrid(d, spacing, voxel::Occupancy::binary, std::move(values));
}

voxel::VoxelGrid generate_phantom(const PhantomParams& params) {
  const double total = std::pow(static_cast<double>(params.dim), 3);
  for (int attempt = 0; attempt < params.max_attempts; ++attempt) {
    const auto geometry = sample_geometry(params, derive_seed(params.seed, {static_cast<std::uint64_t>(attempt)}));
    auto grid = rasterize(geometry, params.spacing);
    const double fraction = static_cast<double>(voxel::voxel_volume(grid).count) / total;
    if (fraction >= params.min_fraction && fraction <= params.max_fraction && has_margin(grid)) return grid;
  }
  throw PhantomError("no phantom satisfying the margin and volume constraints after " +
                     std::to_string(params.max_attempts) + " attempts (seed " + std::to_string(params.seed) + ")");
}

int connected_components(const voxel::VoxelGrid& grid) {
  std::vector<long long> sizes;
  label_components(grid, sizes);
  return static_cast<int>(sizes.size()) - 1;
}

}  // namespace t3d::phantom
