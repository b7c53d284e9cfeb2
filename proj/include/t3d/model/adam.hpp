#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "t3d/model/network.hpp"

namespace t3d::model {

struct AdamConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Adam over named parameters. Moment buffers are keyed by parameter name so they can be checkpointed.
class Adam {
 public:
  struct Moments {
    std::vector<float> m;
    std::vector<float> v;
  };

  explicit Adam(AdamConfig config = {}) : config_(config) {}

  const AdamConfig& config() const { return config_; }
  std::int64_t steps() const { return steps_; }

  /// One update of every trainable parameter from its accumulated gradient.
  void step(const std::vector<ParamView<float>>& params);

  const std::map<std::string, Moments>& moments() const { return moments_; }
  void restore(std::int64_t steps, std::map<std::string, Moments> moments);

 private:
  AdamConfig config_;
  std::int64_t steps_ = 0;
  std::map<std::string, Moments> moments_;
};

}  // namespace t3d::model
