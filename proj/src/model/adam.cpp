#include "t3d/model/adam.hpp"

#include <cmath>

namespace t3d::model {

void Adam::step(const std::vector<ParamView<float>>& params) {
  ++steps_;
  const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(steps_));
  const float b1 = static_cast<float>(config_.beta1);
  const float b2 = static_cast<float>(config_.beta2);
  const float step_size = static_cast<float>(config_.learning_rate / c1);
  const float inv_sqrt_c2 = static_cast<float>(1.0 / std::sqrt(c2));
  const float eps = static_cast<float>(config_.epsilon);
  for (const auto& p : params) {
    if (!p.trainable()) continue;
    auto& mom = moments_[p.name];
    if (mom.m.size() != p.value.size()) {
      mom.m.assign(p.value.size(), 0.0f);
      mom.v.assign(p.value.size(), 0.0f);
    }
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const float g = p.grad[i];
      mom.m[i] = b1 * mom.m[i] + (1.0f - b1) * g;
      mom.v[i] = b2 * mom.v[i] + (1.0f - b2) * g * g;
      p.value[i] -= step_size * mom.m[i] / (std::sqrt(mom.v[i]) * inv_sqrt_c2 + eps);
    }
  }
}

void Adam::restore(std::int64_t steps, std::map<std::string, Moments> moments) {
  steps_ = steps;
  moments_ = std::move(moments);
}

}  // namespace t3d::model
