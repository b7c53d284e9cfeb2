#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "t3d/model/reconstruction_model.hpp"

namespace t3d::test {

struct GradCheckOptions {
  model::Variant variant = model::Variant::topogram_mask;
  model::LossWeights weights = model::default_weights(model::Variant::topogram_mask);
  std::uint64_t seed = 1;
  int batch = 4;
  int base_channels = 2;
  double step = 1e-3;
  double tiny = 1e-6;
  int min_checked = 200;
  bool richardson = false;  // combine steps h and h/2 to cancel the O(h^2) term
};

struct GradCheckResult {
  int checked = 0;
  int skipped_kinks = 0;  // samples whose perturbation flipped a ReLU
  int tiny = 0;
  double worst_relative = 0.0;
  std::string worst_name;
  std::vector<std::string> failures;  // relative error >= 1e-3
};

// Double-precision model with dims 8^3 / 32^2 / 8^2 and latent 4; analytic gradients against central
// differences of the training-mode objective at randomly sampled parameters.
inline GradCheckResult gradient_check(const GradCheckOptions& o) {
  const model::ModelDims dims{8, 32, 8, 4, o.base_channels};
  model::ReconstructionModel<double> m({o.variant, dims, voxel::Axis::y});
  m.initialize(o.seed);
  std::mt19937_64 rng(o.seed * 7919 + 13);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> gauss;
  model::Batch<double> b;
  b.shapes = model::volume_batch<double>(o.batch, 8);
  for (auto& x : b.shapes.data) x = u(rng) < 0.3 ? 1.0 : 0.0;
  b.topograms = model::image_batch<double>(o.batch, 32);
  for (auto& x : b.topograms.data) x = u(rng);
  b.masks = model::image_batch<double>(o.batch, 8);
  for (auto& x : b.masks.data) x = u(rng) < 0.5 ? 1.0 : 0.0;
  std::vector<double> noise(static_cast<std::size_t>(o.batch) * dims.latent);
  for (auto& x : noise) x = gauss(rng);

  m.zero_grad();
  std::vector<bool> pattern;
  m.train_step(b, o.weights, noise, model::Mode::train, &pattern);
  auto params = m.parameters();
  struct Sample {
    std::size_t param;
    std::size_t index;
    double grad;
  };
  std::vector<Sample> pool;
  for (std::size_t p = 0; p < params.size(); ++p) {
    if (!params[p].trainable()) continue;
    for (std::size_t i = 0; i < params[p].value.size(); ++i) pool.push_back({p, i, params[p].grad[i]});
  }
  std::shuffle(pool.begin(), pool.end(), rng);

  GradCheckResult r;
  auto loss_at = [&](double& slot, double value, bool& kink) {
    slot = value;
    std::vector<bool> seen;
    const double l = m.train_step(b, o.weights, noise, model::Mode::train, &seen).total;
    kink = kink || seen != pattern;
    return l;
  };
  for (const auto& s : pool) {
    if (r.checked >= o.min_checked) break;
    double& slot = params[s.param].value[s.index];
    const double orig = slot;
    const double h = o.step;
    bool kink = false;
    double numeric = (loss_at(slot, orig + h, kink) - loss_at(slot, orig - h, kink)) / (2.0 * h);
    if (o.richardson) {
      const double half = (loss_at(slot, orig + h / 2, kink) - loss_at(slot, orig - h / 2, kink)) / h;
      numeric = (4.0 * half - numeric) / 3.0;
    }
    slot = orig;
    if (kink) {
      ++r.skipped_kinks;
      continue;
    }
    if (std::abs(s.grad) <= o.tiny) {
      ++r.tiny;
      continue;
    }
    ++r.checked;
    const double rel = std::abs(s.grad - numeric) / std::max(std::abs(s.grad), std::abs(numeric));
    const std::string name = params[s.param].name + "[" + std::to_string(s.index) + "]";
    if (rel > r.worst_relative) {
      r.worst_relative = rel;
      r.worst_name = name;
    }
    if (rel >= 1e-3) {
      r.failures.push_back(name + " analytic " + std::to_string(s.grad) + " numeric " + std::to_string(numeric));
    }
  }
  return r;
}

}  // namespace t3d::test
