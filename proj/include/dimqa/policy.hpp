#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "dimqa/grammar.hpp"
#include "dimqa/rng.hpp"

namespace dimqa {

struct CheckpointError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct VersionMismatch : CheckpointError {
  using CheckpointError::CheckpointError;
};
struct ShapeMismatch : CheckpointError {
  using CheckpointError::CheckpointError;
};

// First-order conditional autoregressive model over the token vocabulary:
//   x = [condition ; one-hot(prev token) ; binary(position)]
//   h = tanh(W1 x + b1),  p = softmax(W2 h + b2)
// Small enough that every step distribution is exact and gradients are
// analytic.
struct PolicyConfig {
  int vocab_size = TokenVocabulary::kSize;
  int condition_dim = 24;
  int hidden_dim = 64;
  int max_len = static_cast<int>(kMaxSequenceLength);
  int position_dim = 8;

  int input_dim() const { return condition_dim + vocab_size + position_dim; }
  void validate() const;
  bool operator==(const PolicyConfig&) const = default;
};

struct PolicyParameters {
  PolicyConfig config;
  Eigen::MatrixXd w1;  // hidden x input
  Eigen::VectorXd b1;  // hidden
  Eigen::MatrixXd w2;  // vocab x hidden
  Eigen::VectorXd b2;  // vocab

  static PolicyParameters zeros(const PolicyConfig& config);
  std::int64_t parameter_count() const;
};

// Gradient (or any parameter-shaped accumulator).
struct PolicyGradient {
  Eigen::MatrixXd w1;
  Eigen::VectorXd b1;
  Eigen::MatrixXd w2;
  Eigen::VectorXd b2;

  static PolicyGradient zeros(const PolicyConfig& config);
  PolicyGradient& operator+=(const PolicyGradient& other);
  PolicyGradient& operator*=(double scale);
  double squared_norm() const;
};

// Entries i.i.d. uniform in [-scale, scale] from a deterministic stream.
PolicyParameters init_params(const PolicyConfig& config, std::uint64_t seed,
                             double scale);

// Per-sequence cache of the condition's contribution to the hidden
// pre-activation; the term is position-independent.
struct ConditionContext {
  Eigen::VectorXd affine;  // w1[:, condition] * condition + b1
};

ConditionContext make_condition_context(const PolicyParameters& params,
                                        const Eigen::VectorXd& condition);

// Hidden activation for one decoding step.
Eigen::VectorXd step_hidden(const PolicyParameters& params,
                            const ConditionContext& ctx, int prev_token,
                            int position);

Eigen::VectorXd softmax(const Eigen::VectorXd& logits);

// Full next-token distribution; sums to 1 within 1e-9 with full support.
Eigen::VectorXd forward_step(const PolicyParameters& params,
                             const Eigen::VectorXd& condition, int prev_token,
                             int position);

struct Rollout {
  TokenSequence tokens;                // BOS ... EOS
  std::vector<double> step_logprobs;   // one per generated token
  double sequence_logprob = 0.0;
  bool forced_eos = false;
};

// Teacher-forced log-probability of the tokens after BOS (EOS included,
// anything after the first EOS ignored).
double sequence_logprob(const PolicyParameters& params,
                        const Eigen::VectorXd& condition,
                        const TokenSequence& seq);

// Ancestral sampling with logits/temperature; the recorded logprobs are
// always the temperature-1 training measure. Temperatures below 1e-6
// decode greedily.
Rollout sample_sequence(const PolicyParameters& params,
                        const Eigen::VectorXd& condition, double temperature,
                        Rng& rng);

// Exact gradient of sequence_logprob with respect to the parameters.
PolicyGradient logprob_grad(const PolicyParameters& params,
                            const Eigen::VectorXd& condition,
                            const TokenSequence& seq);

// Accumulates grad += coeff * d(sequence_logprob)/d(params) and returns
// the logprob; shared workhorse for the training losses.
double accumulate_logprob_grad(const PolicyParameters& params,
                               const Eigen::VectorXd& condition,
                               const TokenSequence& seq, double coeff,
                               PolicyGradient& grad);

// Backpropagates one step's d(loss)/d(logits) into the accumulator.
void backprop_step(const PolicyParameters& params,
                   const Eigen::VectorXd& condition, int prev_token,
                   int position, const Eigen::VectorXd& hidden,
                   const Eigen::VectorXd& dlogits, PolicyGradient& grad);

// Zeroes the gradient entries of the condition columns of W1; applying
// this before every optimizer step keeps those weights bit-identical.
void zero_condition_columns(PolicyGradient& grad, const PolicyConfig& config);

struct Checkpoint {
  PolicyParameters params;
  std::string tag;
};

void save_params(const std::string& path, const PolicyParameters& params,
                 const std::string& tag);
Checkpoint load_params(const std::string& path,
                       const PolicyConfig& expected = PolicyConfig{});

}  // namespace dimqa
