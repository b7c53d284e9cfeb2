#include "t3d/phantom/topogram.hpp"

#include <cmath>
#include <random>

#include "t3d/error.hpp"

namespace t3d::phantom {

AttenuationVolume::AttenuationVolume(int nx_, int ny_, int nz_, voxel::Spacing spacing_)
    : nx(nx_), ny(ny_), nz(nz_), spacing(spacing_), mu(static_cast<std::size_t>(nx_) * ny_ * nz_, 0.0) {
  if (nx <= 0 || ny <= 0 || nz <= 0) throw InvalidArgument("attenuation volume extents must be positive");
}

BodyParams sample_body(const BodyParams& base, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto jitter = [&rng](double v, double rel) { return v * std::uniform_real_distribution<double>(1.0 - rel, 1.0 + rel)(rng); };
  BodyParams b = base;
  b.torso_x = std::min(jitter(base.torso_x, 0.05), 0.5);
  b.torso_y = std::min(jitter(base.torso_y, 0.08), 0.5);
  b.spine_x = jitter(base.spine_x, 0.15);
  b.spine_y = jitter(base.spine_y, 0.15);
  b.spine_offset = jitter(base.spine_offset, 0.05);
  return b;
}

AttenuationVolume build_scene(const voxel::VoxelGrid& organ, const BodyParams& body, voxel::Axis axis, int upsample) {
  const auto& a = body.attenuation;
  if (a.air < 0 || a.soft_tissue < 0 || a.organ < 0 || a.bone < 0) throw InvalidArgument("negative attenuation");
  if (upsample < 1) throw InvalidArgument("upsample factor must be at least 1");
  if (!organ.is_binary()) throw InvalidArgument("scene organ must be a binary grid");
  const int d = organ.dim();
  const int ax = static_cast<int>(axis);
  int n[3] = {d * upsample, d * upsample, d * upsample};
  n[ax] = d;
  const voxel::Spacing s = organ.spacing();
  double step[3] = {s.x / upsample, s.y / upsample, s.z / upsample};
  step[ax] = s.along(axis);
  AttenuationVolume scene(n[0], n[1], n[2], {step[0], step[1], step[2]});

  const double half = d / 2.0;
  for (int k = 0; k < n[2]; ++k) {
    for (int j = 0; j < n[1]; ++j) {
      for (int i = 0; i < n[0]; ++i) {
        const int idx[3] = {i, j, k};
        double p[3];
        int g[3];
        for (int c = 0; c < 3; ++c) {
          const int f = c == ax ? 1 : upsample;
          p[c] = (idx[c] + 0.5) / f;
          g[c] = idx[c] / f;
        }
        const double tx = (p[0] - half) / (body.torso_x * d);
        const double ty = (p[1] - half) / (body.torso_y * d);
        double mu = a.air;
        if (tx * tx + ty * ty <= 1.0) {
          mu = a.soft_tissue;
          if (organ.at(g[0], g[1], g[2]) != 0.0f) mu = a.organ;
          const double bx = (p[0] - half) / (body.spine_x * d);
          const double by = (p[1] - half - body.spine_offset * d) / (body.spine_y * d);
          if (bx * bx + by * by <= 1.0) mu = a.bone;
        } else if (organ.at(g[0], g[1], g[2]) != 0.0f) {
          mu = a.organ;
        }
        scene.at(i, j, k) = mu;
      }
    }
  }
  return scene;
}

voxel::Topogram simulate_topogram(const AttenuationVolume& scene, voxel::Axis axis, double source_intensity,
                                  double noise_sigma, std::uint64_t noise_seed) {
  if (source_intensity <= 0) throw InvalidArgument("source intensity must be positive");
  if (noise_sigma < 0) throw InvalidArgument("noise sigma must be nonnegative");
  for (double m : scene.mu) {
    if (m < 0) throw InvalidArgument("negative attenuation");
  }
  int w = scene.nx, h = scene.nz, len = scene.ny;
  if (axis == voxel::Axis::x) {
    w = scene.ny;
    len = scene.nx;
  } else if (axis == voxel::Axis::z) {
    h = scene.ny;
    len = scene.nz;
  }
  if (w != h) throw DimensionMismatch("topogram image plane must be square");
  const double step = scene.spacing.along(axis);
  const float below_one = std::nextafter(1.0f, 0.0f);
  std::mt19937_64 rng(noise_seed);
  std::normal_distribution<double> noise(0.0, noise_sigma > 0 ? noise_sigma : 1.0);
  std::vector<float> pixels(static_cast<std::size_t>(w) * h);
  for (int v = 0; v < h; ++v) {
    for (int u = 0; u < w; ++u) {
      double integral = 0.0;
      for (int t = 0; t < len; ++t) {
        switch (axis) {
          case voxel::Axis::x: integral += scene.at(t, u, v); break;
          case voxel::Axis::y: integral += scene.at(u, t, v); break;
          case voxel::Axis::z: integral += scene.at(u, v, t); break;
        }
      }
      double value = 1.0 - std::exp(-integral * step);
      if (noise_sigma > 0) value += noise(rng);
      pixels[static_cast<std::size_t>(v) * w + u] = std::clamp(static_cast<float>(value), 0.0f, below_one);
    }
  }
  return voxel::Topogram(voxel::Image2D(w, h, std::move(pixels)), {source_intensity, axis});
}

}  // namespace t3d::phantom
