#include "dimqa/optim.hpp"

#include <cmath>

namespace dimqa {

namespace {

template <typename Block>
void update_block(Block& theta, Block& m, Block& v, const Block& g,
                  const AdamConfig& cfg, double bias1, double bias2) {
  m.array() = cfg.beta1 * m.array() + (1.0 - cfg.beta1) * g.array();
  v.array() = cfg.beta2 * v.array() + (1.0 - cfg.beta2) * g.array().square();
  theta.array() -= cfg.learning_rate * (m.array() / bias1) /
                   ((v.array() / bias2).sqrt() + cfg.epsilon);
}

}  // namespace

void AdamOptimizer::step(PolicyParameters& params, const PolicyGradient& grad) {
  ++t_;
  const double bias1 = 1.0 - std::pow(adam_.beta1, t_);
  const double bias2 = 1.0 - std::pow(adam_.beta2, t_);
  update_block(params.w1, m_.w1, v_.w1, grad.w1, adam_, bias1, bias2);
  update_block(params.b1, m_.b1, v_.b1, grad.b1, adam_, bias1, bias2);
  update_block(params.w2, m_.w2, v_.w2, grad.w2, adam_, bias1, bias2);
  update_block(params.b2, m_.b2, v_.b2, grad.b2, adam_, bias1, bias2);
}

}  // namespace dimqa
