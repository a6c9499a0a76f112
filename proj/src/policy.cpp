#include "dimqa/policy.hpp"

#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>

#include "dimqa/errors.hpp"

namespace dimqa {

namespace {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

constexpr double kGreedyTemperature = 1e-6;

// Number of scored decoding steps: tokens after BOS up to and including
// the first EOS (or the end of the sequence).
std::size_t scored_length(const TokenSequence& seq) {
  if (seq.empty() || seq[0] != TokenVocabulary::kBos) {
    throw InvariantViolation("sequence must begin with BOS");
  }
  for (std::size_t i = 1; i < seq.size(); ++i) {
    if (seq[i] == TokenVocabulary::kEos) return i;
  }
  return seq.size() - 1;
}

void check_condition(const PolicyParameters& params,
                     const Eigen::VectorXd& condition) {
  if (condition.size() != params.config.condition_dim) {
    throw ShapeMismatch("condition has " + std::to_string(condition.size()) +
                        " entries, expected " +
                        std::to_string(params.config.condition_dim));
  }
}

}  // namespace

void PolicyConfig::validate() const {
  if (vocab_size <= 0 || condition_dim <= 0 || hidden_dim <= 0 ||
      max_len <= 0 || position_dim <= 0) {
    throw std::invalid_argument("policy dimensions must be positive");
  }
  if (max_len > (1 << position_dim)) {
    throw std::invalid_argument("position encoding cannot index max_len");
  }
}

PolicyParameters PolicyParameters::zeros(const PolicyConfig& config) {
  config.validate();
  PolicyParameters p;
  p.config = config;
  p.w1 = Eigen::MatrixXd::Zero(config.hidden_dim, config.input_dim());
  p.b1 = Eigen::VectorXd::Zero(config.hidden_dim);
  p.w2 = Eigen::MatrixXd::Zero(config.vocab_size, config.hidden_dim);
  p.b2 = Eigen::VectorXd::Zero(config.vocab_size);
  return p;
}

std::int64_t PolicyParameters::parameter_count() const {
  return w1.size() + b1.size() + w2.size() + b2.size();
}

PolicyGradient PolicyGradient::zeros(const PolicyConfig& config) {
  PolicyGradient g;
  g.w1 = Eigen::MatrixXd::Zero(config.hidden_dim, config.input_dim());
  g.b1 = Eigen::VectorXd::Zero(config.hidden_dim);
  g.w2 = Eigen::MatrixXd::Zero(config.vocab_size, config.hidden_dim);
  g.b2 = Eigen::VectorXd::Zero(config.vocab_size);
  return g;
}

PolicyGradient& PolicyGradient::operator+=(const PolicyGradient& other) {
  w1 += other.w1;
  b1 += other.b1;
  w2 += other.w2;
  b2 += other.b2;
  return *this;
}

PolicyGradient& PolicyGradient::operator*=(double scale) {
  w1 *= scale;
  b1 *= scale;
  w2 *= scale;
  b2 *= scale;
  return *this;
}

double PolicyGradient::squared_norm() const {
  return w1.squaredNorm() + b1.squaredNorm() + w2.squaredNorm() +
         b2.squaredNorm();
}

PolicyParameters init_params(const PolicyConfig& config, std::uint64_t seed,
                             double scale) {
  if (scale < 0.0) throw std::invalid_argument("scale must be nonnegative");
  PolicyParameters p = PolicyParameters::zeros(config);
  Rng rng = Rng(seed).fork(0x70617261);  // parameter stream
  const auto fill = [&](Eigen::Ref<Eigen::MatrixXd> m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) {
        m(r, c) = rng.uniform(-scale, scale);
      }
    }
  };
  fill(p.w1);
  fill(p.b1);
  fill(p.w2);
  fill(p.b2);
  return p;
}

ConditionContext make_condition_context(const PolicyParameters& params,
                                        const Eigen::VectorXd& condition) {
  check_condition(params, condition);
  ConditionContext ctx;
  ctx.affine = params.w1.leftCols(params.config.condition_dim) * condition +
               params.b1;
  return ctx;
}

Eigen::VectorXd step_hidden(const PolicyParameters& params,
                            const ConditionContext& ctx, int prev_token,
                            int position) {
  const auto& cfg = params.config;
  if (prev_token < 0 || prev_token >= cfg.vocab_size) {
    throw UnknownTokenId("previous token id " + std::to_string(prev_token));
  }
  if (position < 0 || position >= cfg.max_len) {
    throw std::out_of_range("position " + std::to_string(position));
  }
  Eigen::VectorXd pre = ctx.affine + params.w1.col(cfg.condition_dim +
                                                   prev_token);
  for (int bit = 0; bit < cfg.position_dim; ++bit) {
    if ((position >> bit) & 1) {
      pre += params.w1.col(cfg.condition_dim + cfg.vocab_size + bit);
    }
  }
  return pre.array().tanh();
}

Eigen::VectorXd softmax(const Eigen::VectorXd& logits) {
  const double shift = logits.maxCoeff();
  Eigen::VectorXd p = (logits.array() - shift).exp();
  return p / p.sum();
}

Eigen::VectorXd forward_step(const PolicyParameters& params,
                             const Eigen::VectorXd& condition, int prev_token,
                             int position) {
  const ConditionContext ctx = make_condition_context(params, condition);
  const Eigen::VectorXd h = step_hidden(params, ctx, prev_token, position);
  return softmax(params.w2 * h + params.b2);
}

double sequence_logprob(const PolicyParameters& params,
                        const Eigen::VectorXd& condition,
                        const TokenSequence& seq) {
  const ConditionContext ctx = make_condition_context(params, condition);
  const std::size_t last = scored_length(seq);
  double total = 0.0;
  for (std::size_t i = 1; i <= last; ++i) {
    const Eigen::VectorXd h =
        step_hidden(params, ctx, seq[i - 1], static_cast<int>(i - 1));
    const Eigen::VectorXd logits = params.w2 * h + params.b2;
    const double shift = logits.maxCoeff();
    const double lse =
        shift + std::log((logits.array() - shift).exp().sum());
    total += logits[seq[i]] - lse;
  }
  return total;
}

Rollout sample_sequence(const PolicyParameters& params,
                        const Eigen::VectorXd& condition, double temperature,
                        Rng& rng) {
  if (temperature < 0.0) {
    throw std::invalid_argument("temperature must be nonnegative");
  }
  const ConditionContext ctx = make_condition_context(params, condition);
  const int max_len = params.config.max_len;

  Rollout rollout;
  rollout.tokens.push_back(TokenVocabulary::kBos);
  while (static_cast<int>(rollout.tokens.size()) < max_len) {
    const int position = static_cast<int>(rollout.tokens.size()) - 1;
    const Eigen::VectorXd h =
        step_hidden(params, ctx, rollout.tokens.back(), position);
    const Eigen::VectorXd logits = params.w2 * h + params.b2;
    const Eigen::VectorXd probs = softmax(logits);

    int token = 0;
    const bool at_cap = static_cast<int>(rollout.tokens.size()) == max_len - 1;
    if (at_cap) {
      token = TokenVocabulary::kEos;
      rollout.forced_eos = true;
    } else if (temperature < kGreedyTemperature) {
      logits.maxCoeff(&token);
    } else {
      const Eigen::VectorXd draw_probs =
          temperature == 1.0 ? probs
                             : Eigen::VectorXd(softmax(logits / temperature));
      double u = rng.uniform();
      token = static_cast<int>(draw_probs.size()) - 1;
      double acc = 0.0;
      for (int j = 0; j < draw_probs.size(); ++j) {
        acc += draw_probs[j];
        if (u < acc) {
          token = j;
          break;
        }
      }
    }
    rollout.tokens.push_back(token);
    rollout.step_logprobs.push_back(std::log(probs[token]));
    rollout.sequence_logprob += rollout.step_logprobs.back();
    if (token == TokenVocabulary::kEos) break;
  }
  return rollout;
}

void backprop_step(const PolicyParameters& params,
                   const Eigen::VectorXd& condition, int prev_token,
                   int position, const Eigen::VectorXd& hidden,
                   const Eigen::VectorXd& dlogits, PolicyGradient& grad) {
  const auto& cfg = params.config;
  grad.b2 += dlogits;
  grad.w2.noalias() += dlogits * hidden.transpose();
  const Eigen::VectorXd dhidden = params.w2.transpose() * dlogits;
  const Eigen::VectorXd dpre =
      dhidden.array() * (1.0 - hidden.array().square());
  grad.b1 += dpre;
  grad.w1.leftCols(cfg.condition_dim).noalias() +=
      dpre * condition.transpose();
  grad.w1.col(cfg.condition_dim + prev_token) += dpre;
  for (int bit = 0; bit < cfg.position_dim; ++bit) {
    if ((position >> bit) & 1) {
      grad.w1.col(cfg.condition_dim + cfg.vocab_size + bit) += dpre;
    }
  }
}

double accumulate_logprob_grad(const PolicyParameters& params,
                               const Eigen::VectorXd& condition,
                               const TokenSequence& seq, double coeff,
                               PolicyGradient& grad) {
  const ConditionContext ctx = make_condition_context(params, condition);
  const std::size_t last = scored_length(seq);
  double total = 0.0;
  for (std::size_t i = 1; i <= last; ++i) {
    const int prev = seq[i - 1];
    const int position = static_cast<int>(i - 1);
    const Eigen::VectorXd h = step_hidden(params, ctx, prev, position);
    const Eigen::VectorXd probs = softmax(params.w2 * h + params.b2);
    total += std::log(probs[seq[i]]);
    // d(logprob)/d(logits) = one_hot(target) - probs
    Eigen::VectorXd dlogits = -coeff * probs;
    dlogits[seq[i]] += coeff;
    backprop_step(params, condition, prev, position, h, dlogits, grad);
  }
  return total;
}

PolicyGradient logprob_grad(const PolicyParameters& params,
                            const Eigen::VectorXd& condition,
                            const TokenSequence& seq) {
  PolicyGradient grad = PolicyGradient::zeros(params.config);
  accumulate_logprob_grad(params, condition, seq, 1.0, grad);
  return grad;
}

void zero_condition_columns(PolicyGradient& grad, const PolicyConfig& config) {
  grad.w1.leftCols(config.condition_dim).setZero();
}

namespace {

std::vector<double> flatten_row_major(const Eigen::MatrixXd& m) {
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(m.size()));
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) out.push_back(m(r, c));
  }
  return out;
}

Eigen::MatrixXd unflatten_row_major(const std::vector<double>& v,
                                    Eigen::Index rows, Eigen::Index cols,
                                    const std::string& name) {
  if (static_cast<Eigen::Index>(v.size()) != rows * cols) {
    throw ShapeMismatch(name + " has " + std::to_string(v.size()) +
                        " entries, expected " + std::to_string(rows * cols));
  }
  Eigen::MatrixXd m(rows, cols);
  std::size_t k = 0;
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = v[k++];
  }
  return m;
}

}  // namespace

void save_params(const std::string& path, const PolicyParameters& params,
                 const std::string& tag) {
  ordered_json j;
  j["format_version"] = 1;
  ordered_json cfg;
  cfg["vocab_size"] = params.config.vocab_size;
  cfg["condition_dim"] = params.config.condition_dim;
  cfg["hidden_dim"] = params.config.hidden_dim;
  cfg["max_len"] = params.config.max_len;
  cfg["position_dim"] = params.config.position_dim;
  j["config"] = cfg;
  j["tag"] = tag;
  ordered_json arrays;
  arrays["W1"] = flatten_row_major(params.w1);
  arrays["b1"] = std::vector<double>(params.b1.data(),
                                     params.b1.data() + params.b1.size());
  arrays["W2"] = flatten_row_major(params.w2);
  arrays["b2"] = std::vector<double>(params.b2.data(),
                                     params.b2.data() + params.b2.size());
  j["arrays"] = arrays;
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out << j.dump() << '\n';
  if (!out) throw IoError("write failed for " + path);
}

Checkpoint load_params(const std::string& path, const PolicyConfig& expected) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path + " for reading");
  json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw CheckpointError(path + ": " + e.what());
  }
  try {
    const int version = j.at("format_version").get<int>();
    if (version != 1) {
      throw VersionMismatch("checkpoint format version " +
                            std::to_string(version) + ", expected 1");
    }
    PolicyConfig cfg;
    const auto& jc = j.at("config");
    cfg.vocab_size = jc.at("vocab_size").get<int>();
    cfg.condition_dim = jc.at("condition_dim").get<int>();
    cfg.hidden_dim = jc.at("hidden_dim").get<int>();
    cfg.max_len = jc.at("max_len").get<int>();
    cfg.position_dim = jc.at("position_dim").get<int>();
    if (!(cfg == expected)) {
      throw ShapeMismatch("checkpoint config does not match the runtime "
                          "policy shape");
    }
    Checkpoint ckpt;
    ckpt.tag = j.at("tag").get<std::string>();
    ckpt.params = PolicyParameters::zeros(cfg);
    const auto& arrays = j.at("arrays");
    ckpt.params.w1 =
        unflatten_row_major(arrays.at("W1").get<std::vector<double>>(),
                            cfg.hidden_dim, cfg.input_dim(), "W1");
    const auto b1 = arrays.at("b1").get<std::vector<double>>();
    if (static_cast<int>(b1.size()) != cfg.hidden_dim) {
      throw ShapeMismatch("b1 size mismatch");
    }
    ckpt.params.b1 = Eigen::Map<const Eigen::VectorXd>(
        b1.data(), static_cast<Eigen::Index>(b1.size()));
    ckpt.params.w2 =
        unflatten_row_major(arrays.at("W2").get<std::vector<double>>(),
                            cfg.vocab_size, cfg.hidden_dim, "W2");
    const auto b2 = arrays.at("b2").get<std::vector<double>>();
    if (static_cast<int>(b2.size()) != cfg.vocab_size) {
      throw ShapeMismatch("b2 size mismatch");
    }
    ckpt.params.b2 = Eigen::Map<const Eigen::VectorXd>(
        b2.data(), static_cast<Eigen::Index>(b2.size()));
    return ckpt;
  } catch (const CheckpointError&) {
    throw;
  } catch (const std::exception& e) {
    throw CheckpointError(path + ": " + e.what());
  }
}

}  // namespace dimqa
