#pragma once

#include "dimqa/policy.hpp"

namespace dimqa {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Adam with bias correction. A coordinate whose gradient is exactly zero
// on every step (e.g. frozen condition columns) is never moved.
class AdamOptimizer {
 public:
  AdamOptimizer(const PolicyConfig& config, AdamConfig adam)
      : adam_(adam),
        m_(PolicyGradient::zeros(config)),
        v_(PolicyGradient::zeros(config)) {}

  void step(PolicyParameters& params, const PolicyGradient& grad);

  int steps_taken() const { return t_; }

 private:
  AdamConfig adam_;
  PolicyGradient m_;
  PolicyGradient v_;
  int t_ = 0;
};

}  // namespace dimqa
