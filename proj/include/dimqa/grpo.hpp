#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "dimqa/judge.hpp"
#include "dimqa/policy.hpp"
#include "dimqa/rewards.hpp"
#include "dimqa/synthdata.hpp"

namespace dimqa {

struct GroupTooSmall : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct GrpoConfig {
  int group_size = 4;
  int batch_size = 4;
  int iterations = 200;
  double learning_rate = 5e-6;
  double kl_coefficient = 0.04;
  double temperature = 1.0;
  double std_epsilon = 1e-8;
  RewardMode reward_mode = RewardMode::acc_sem;
  std::uint64_t seed = 0;

  void validate() const;
};

GrpoConfig grpo_preset_paper();
GrpoConfig grpo_preset_toy();

// Group-standardized advantages: (r - mean) / population stddev. Groups
// with stddev below epsilon get all-zero advantages.
std::vector<double> normalize_advantages(const std::vector<double>& rewards,
                                         double epsilon);

// Sum over the decoding positions of seq of the exact per-position
// KL(p_ref || p_theta) over the whole vocabulary.
double sequence_kl(const PolicyParameters& params,
                   const PolicyParameters& ref_params,
                   const Eigen::VectorXd& condition, const TokenSequence& seq);

struct GroupRollout {
  Eigen::VectorXd condition;
  int record_id = 0;
  std::vector<Rollout> rollouts;
  std::vector<RewardBreakdown> breakdowns;
  std::vector<double> advantages;
};

struct GrpoLossTerms {
  double loss = 0.0;
  double policy_term = 0.0;
  double kl_term = 0.0;   // kl_coefficient times the mean sequence KL
  double mean_kl = 0.0;
  PolicyGradient grad;
};

// -E[advantage * log p_theta(y)] + lambda * E[KL(p_ref || p_theta)], with
// advantages treated as constants and the KL differentiated in theta only.
GrpoLossTerms grpo_loss_and_grad(const PolicyParameters& params,
                                 const PolicyParameters& ref_params,
                                 const std::vector<GroupRollout>& groups,
                                 double kl_coefficient);

using RewardFn =
    std::function<RewardBreakdown(const std::string&, const AssessmentRecord&)>;

RewardFn make_reward_fn(RewardMode mode, JudgeConfig judge = JudgeConfig{});

struct GrpoLogRow {
  int iteration = 0;
  double mean_reward = 0.0;
  double mean_abs_advantage = 0.0;
  double mean_kl = 0.0;
  double loss = 0.0;
};

struct GrpoResult {
  PolicyParameters params;
  std::vector<GrpoLogRow> log;
};

// On-policy loop: sample a group per record, score, standardize, step.
// Rollout randomness is keyed by (seed, iteration, record slot, member).
GrpoResult train_grpo(const PolicyParameters& params,
                      const std::vector<AssessmentRecord>& train,
                      const RewardFn& reward_fn, const GrpoConfig& cfg);

// CSV: iteration,mean_reward,mean_abs_advantage,mean_kl,loss
void write_grpo_log(const std::string& path,
                    const std::vector<GrpoLogRow>& rows);

}  // namespace dimqa
