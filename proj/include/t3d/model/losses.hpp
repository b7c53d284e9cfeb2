#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "t3d/error.hpp"
#include "t3d/voxel/grid.hpp"

namespace t3d::model {

inline constexpr double kProbabilityEpsilon = 1e-7;
inline constexpr double kLogVarLimit = 10.0;

/// Weights of the four terms of the joint objective.
struct LossWeights {
  double alpha1 = 50.0;   ///< shape reconstruction through the shape encoder
  double alpha2 = 0.1;    ///< KL of the shape posterior
  double alpha3 = 50.0;   ///< shape reconstruction from the observation latent
  double alpha4 = 1e-4;   ///< projected-mask agreement
  bool operator==(const LossWeights&) const = default;
};

struct LossComponents {
  double rec_shape = 0.0;
  double kl = 0.0;
  double rec_observation = 0.0;
  double mask = 0.0;
  bool operator==(const LossComponents&) const = default;
};

double combined_loss(const LossComponents& terms, const LossWeights& weights);

struct LatentCode {
  std::vector<double> z;
};

struct GaussianPosterior {
  std::vector<double> mu;
  std::vector<double> log_var;  ///< stored clamped to [-10, 10]
};

/// Builds a posterior from raw encoder outputs, clamping the log-variance.
GaussianPosterior make_posterior(std::vector<double> mu, std::vector<double> raw_log_var);

/// z = mu + exp(log_var / 2) * noise
LatentCode reparameterize(const GaussianPosterior& posterior, std::span<const double> noise);

/// -1/2 sum(1 + log_var - mu^2 - exp(log_var)) for one posterior.
double kl_loss(const GaussianPosterior& posterior);
/// Batch mean of the per-posterior KL.
double kl_loss(std::span<const GaussianPosterior> batch);

/// Mean binary cross entropy over voxels with predictions clamped to [eps, 1 - eps].
double bce_loss(const voxel::VoxelGrid& target, const voxel::VoxelGrid& prediction);
/// Binary cross entropy summed over pixels, same clamping.
double mask_loss(const voxel::Mask2D& target, const voxel::Mask2D& prediction);

template <typename T>
T clamp_probability(T p) {
  return std::clamp(p, static_cast<T>(kProbabilityEpsilon), static_cast<T>(1.0 - kProbabilityEpsilon));
}

/// Unnormalised clamped cross entropy sum, accumulated in double.
template <typename T>
double bce_sum(std::span<const T> target, std::span<const T> prediction) {
  if (target.size() != prediction.size()) throw DimensionMismatch("cross entropy operands differ in size");
  double sum = 0.0;
  for (std::size_t i = 0; i < target.size(); ++i) {
    const double p = std::clamp(static_cast<double>(prediction[i]), kProbabilityEpsilon, 1.0 - kProbabilityEpsilon);
    const double t = target[i];
    sum -= t * std::log(p) + (1.0 - t) * std::log(1.0 - p);
  }
  return sum;
}

/// d(bce_sum)/d(prediction) evaluated at the clamped prediction, scaled by `scale`.
template <typename T>
void bce_sum_gradient(std::span<const T> target, std::span<const T> prediction, double scale, std::span<T> grad) {
  for (std::size_t i = 0; i < target.size(); ++i) {
    const double p = std::clamp(static_cast<double>(prediction[i]), kProbabilityEpsilon, 1.0 - kProbabilityEpsilon);
    const double t = target[i];
    grad[i] = static_cast<T>(scale * (-(t / p) + (1.0 - t) / (1.0 - p)));
  }
}

}  // namespace t3d::model
