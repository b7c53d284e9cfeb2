#include "t3d/model/losses.hpp"

#include <string>

namespace t3d::model {

double combined_loss(const LossComponents& terms, const LossWeights& w) {
  if (w.alpha1 < 0 || w.alpha2 < 0 || w.alpha3 < 0 || w.alpha4 < 0) throw InvalidArgument("loss weights must be nonnegative");
  return w.alpha1 * terms.rec_shape + w.alpha2 * terms.kl + w.alpha3 * terms.rec_observation + w.alpha4 * terms.mask;
}

GaussianPosterior make_posterior(std::vector<double> mu, std::vector<double> raw_log_var) {
  if (mu.size() != raw_log_var.size()) throw DimensionMismatch("posterior mean and log-variance differ in size");
  for (auto& lv : raw_log_var) lv = std::clamp(lv, -kLogVarLimit, kLogVarLimit);
  return {std::move(mu), std::move(raw_log_var)};
}

LatentCode reparameterize(const GaussianPosterior& post, std::span<const double> noise) {
  if (noise.size() != post.mu.size() || post.log_var.size() != post.mu.size()) {
    throw DimensionMismatch("noise dimension does not match the posterior");
  }
  LatentCode code;
  code.z.resize(post.mu.size());
  for (std::size_t d = 0; d < post.mu.size(); ++d) code.z[d] = post.mu[d] + std::exp(post.log_var[d] / 2.0) * noise[d];
  return code;
}

double kl_loss(const GaussianPosterior& post) {
  if (post.log_var.size() != post.mu.size()) throw DimensionMismatch("posterior mean and log-variance differ in size");
  double sum = 0.0;
  for (std::size_t d = 0; d < post.mu.size(); ++d) {
    const double lv = post.log_var[d];
    sum += 1.0 + lv - post.mu[d] * post.mu[d] - std::exp(lv);
  }
  return -0.5 * sum;
}

double kl_loss(std::span<const GaussianPosterior> batch) {
  if (batch.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& p : batch) sum += kl_loss(p);
  return sum / static_cast<double>(batch.size());
}

double bce_loss(const voxel::VoxelGrid& target, const voxel::VoxelGrid& prediction) {
  if (target.dim() != prediction.dim()) {
    throw DimensionMismatch("bce_loss: grids of size " + std::to_string(target.dim()) + " and " +
                            std::to_string(prediction.dim()));
  }
  return bce_sum(target.values(), prediction.values()) / static_cast<double>(target.size());
}

double mask_loss(const voxel::Mask2D& target, const voxel::Mask2D& prediction) {
  if (target.width() != prediction.width() || target.height() != prediction.height()) {
    throw DimensionMismatch("mask_loss: masks differ in size");
  }
  return bce_sum(target.values(), prediction.values());
}

}  // namespace t3d::model
