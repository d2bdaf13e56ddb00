#pragma once

#include <cstdint>
#include <vector>

#include "srl/autodiff.hpp"

namespace srl::opt {

struct AdamConfig {
  double learning_rate = 0.005;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Adam with bias correction. Holds first/second-moment buffers shaped like
/// the parameter set it was built for; step() applies one update and resets
/// the gradients to zero.
class Adam {
 public:
  Adam(const ad::ParameterSet& params, AdamConfig config);

  void step(ad::ParameterSet& params);

  std::int64_t step_count() const { return t_; }
  const AdamConfig& config() const { return config_; }

 private:
  AdamConfig config_;
  std::vector<ad::Buffer> m_;
  std::vector<ad::Buffer> v_;
  std::int64_t t_ = 0;
};

/// target <- sigma * online + (1 - sigma) * target, elementwise.
/// Throws ShapeError when the parameter manifests disagree.
void polyak_update(ad::ParameterSet& target, const ad::ParameterSet& online, double sigma);

}  // namespace srl::opt
