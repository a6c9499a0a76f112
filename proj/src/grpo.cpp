#include "dimqa/grpo.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "dimqa/errors.hpp"
#include "dimqa/optim.hpp"
#include "dimqa/util.hpp"

namespace dimqa {

void GrpoConfig::validate() const {
  if (group_size < 2) throw GroupTooSmall("group size must be at least 2");
  if (batch_size <= 0 || iterations < 0 || learning_rate <= 0.0) {
    throw std::invalid_argument("batch size and learning rate must be "
                                "positive");
  }
  if (kl_coefficient < 0.0 || temperature <= 0.0 || std_epsilon <= 0.0) {
    throw std::invalid_argument("invalid regularization settings");
  }
}

GrpoConfig grpo_preset_paper() {
  GrpoConfig cfg;
  cfg.learning_rate = 5e-6;
  return cfg;
}

GrpoConfig grpo_preset_toy() {
  GrpoConfig cfg;
  // Desk-scale settings. The larger group sharpens the within-group
  // baseline enough that score precision survives the update noise.
  cfg.learning_rate = 1.5e-4;
  cfg.group_size = 12;
  return cfg;
}

std::vector<double> normalize_advantages(const std::vector<double>& rewards,
                                         double epsilon) {
  if (rewards.size() < 2) {
    throw GroupTooSmall("advantage normalization needs a group of >= 2");
  }
  const double n = static_cast<double>(rewards.size());
  double mean = 0.0;
  for (const double r : rewards) mean += r;
  mean /= n;
  double var = 0.0;
  for (const double r : rewards) var += (r - mean) * (r - mean);
  var /= n;  // population variance
  const double stddev = std::sqrt(var);
  std::vector<double> advantages(rewards.size(), 0.0);
  if (stddev < epsilon) return advantages;
  for (std::size_t i = 0; i < rewards.size(); ++i) {
    advantages[i] = (rewards[i] - mean) / stddev;
  }
  return advantages;
}

namespace {

// Positions of seq that are scored: predict seq[i] from seq[i-1] for
// i = 1..last, where last is the first EOS (or the final token).
std::size_t scored_end(const TokenSequence& seq) {
  if (seq.empty() || seq[0] != TokenVocabulary::kBos) {
    throw InvariantViolation("sequence must begin with BOS");
  }
  for (std::size_t i = 1; i < seq.size(); ++i) {
    if (seq[i] == TokenVocabulary::kEos) return i;
  }
  return seq.size() - 1;
}

double position_kl(const Eigen::VectorXd& ref_probs,
                   const Eigen::VectorXd& probs) {
  return (ref_probs.array() * (ref_probs.array().log() - probs.array().log()))
      .sum();
}

}  // namespace

double sequence_kl(const PolicyParameters& params,
                   const PolicyParameters& ref_params,
                   const Eigen::VectorXd& condition, const TokenSequence& seq) {
  const ConditionContext ctx = make_condition_context(params, condition);
  const ConditionContext ref_ctx =
      make_condition_context(ref_params, condition);
  const std::size_t last = scored_end(seq);
  double total = 0.0;
  for (std::size_t i = 1; i <= last; ++i) {
    const int prev = seq[i - 1];
    const int position = static_cast<int>(i - 1);
    const Eigen::VectorXd h = step_hidden(params, ctx, prev, position);
    const Eigen::VectorXd probs = softmax(params.w2 * h + params.b2);
    const Eigen::VectorXd ref_h =
        step_hidden(ref_params, ref_ctx, prev, position);
    const Eigen::VectorXd ref_probs =
        softmax(ref_params.w2 * ref_h + ref_params.b2);
    total += position_kl(ref_probs, probs);
  }
  return total;
}

GrpoLossTerms grpo_loss_and_grad(const PolicyParameters& params,
                                 const PolicyParameters& ref_params,
                                 const std::vector<GroupRollout>& groups,
                                 double kl_coefficient) {
  GrpoLossTerms terms;
  terms.grad = PolicyGradient::zeros(params.config);

  std::size_t n_rollouts = 0;
  for (const auto& g : groups) n_rollouts += g.rollouts.size();
  if (n_rollouts == 0) return terms;
  const double inv_n = 1.0 / static_cast<double>(n_rollouts);

  for (const auto& group : groups) {
    const ConditionContext ctx =
        make_condition_context(params, group.condition);
    const ConditionContext ref_ctx =
        make_condition_context(ref_params, group.condition);
    for (std::size_t m = 0; m < group.rollouts.size(); ++m) {
      const auto& seq = group.rollouts[m].tokens;
      const double advantage = group.advantages[m];
      const std::size_t last = scored_end(seq);
      for (std::size_t i = 1; i <= last; ++i) {
        const int prev = seq[i - 1];
        const int position = static_cast<int>(i - 1);
        const Eigen::VectorXd h = step_hidden(params, ctx, prev, position);
        const Eigen::VectorXd probs = softmax(params.w2 * h + params.b2);
        terms.policy_term -= advantage * inv_n * std::log(probs[seq[i]]);

        const Eigen::VectorXd ref_h =
            step_hidden(ref_params, ref_ctx, prev, position);
        const Eigen::VectorXd ref_probs =
            softmax(ref_params.w2 * ref_h + ref_params.b2);
        terms.mean_kl += inv_n * position_kl(ref_probs, probs);

        Eigen::VectorXd dlogits = Eigen::VectorXd::Zero(probs.size());
        bool nonzero = false;
        if (advantage != 0.0) {
          // d(-adv/N * log p[y]) / dlogits = adv/N * (p - one_hot(y))
          dlogits = advantage * inv_n * probs;
          dlogits[seq[i]] -= advantage * inv_n;
          nonzero = true;
        }
        if (kl_coefficient > 0.0) {
          // d(KL(ref || theta)) / dlogits = p - p_ref
          dlogits += kl_coefficient * inv_n * (probs - ref_probs);
          nonzero = true;
        }
        if (nonzero) {
          backprop_step(params, group.condition, prev, position, h, dlogits,
                        terms.grad);
        }
      }
    }
  }
  terms.kl_term = kl_coefficient * terms.mean_kl;
  terms.loss = terms.policy_term + terms.kl_term;
  return terms;
}

RewardFn make_reward_fn(RewardMode mode, JudgeConfig judge) {
  switch (mode) {
    case RewardMode::acc_sem:
      return [](const std::string& text, const AssessmentRecord& ref) {
        return total_reward_acc_sem(text, ref);
      };
    case RewardMode::unified:
      return [](const std::string& text, const AssessmentRecord& ref) {
        return unified_reward(text, ref);
      };
    case RewardMode::judge:
      return [judge = std::move(judge)](const std::string& text,
                                        const AssessmentRecord& ref) {
        return judge_reward(text, ref, judge);
      };
  }
  throw std::invalid_argument("unknown reward mode");
}

GrpoResult train_grpo(const PolicyParameters& params,
                      const std::vector<AssessmentRecord>& train,
                      const RewardFn& reward_fn, const GrpoConfig& cfg) {
  cfg.validate();
  if (train.empty()) throw std::invalid_argument("empty training set");

  GrpoResult result;
  result.params = params;
  if (cfg.iterations == 0) return result;

  const PolicyParameters ref_params = params;  // frozen reference
  PolicyParameters current = params;
  AdamOptimizer optimizer(params.config, AdamConfig{cfg.learning_rate});
  const Rng root(cfg.seed);

  for (int iter = 1; iter <= cfg.iterations; ++iter) {
    Rng batch_rng = root.fork(0x62617463, static_cast<std::uint64_t>(iter));
    std::vector<GroupRollout> groups;
    groups.reserve(cfg.batch_size);
    double reward_sum = 0.0;
    double abs_adv_sum = 0.0;
    int rollout_count = 0;

    for (int slot = 0; slot < cfg.batch_size; ++slot) {
      const auto& record = train[static_cast<std::size_t>(
          batch_rng.uniform_int(0, static_cast<std::int64_t>(train.size()) - 1))];
      GroupRollout group;
      group.condition = record.features;
      group.record_id = record.id;
      std::vector<double> rewards;
      rewards.reserve(cfg.group_size);
      for (int member = 0; member < cfg.group_size; ++member) {
        Rng stream = root.fork(static_cast<std::uint64_t>(iter),
                               static_cast<std::uint64_t>(slot),
                               static_cast<std::uint64_t>(member));
        Rollout rollout =
            sample_sequence(current, group.condition, cfg.temperature, stream);
        const std::string text = detokenize(rollout.tokens);
        RewardBreakdown breakdown = reward_fn(text, record);
        rewards.push_back(breakdown.total);
        reward_sum += breakdown.total;
        ++rollout_count;
        group.rollouts.push_back(std::move(rollout));
        group.breakdowns.push_back(std::move(breakdown));
      }
      group.advantages = normalize_advantages(rewards, cfg.std_epsilon);
      for (const double a : group.advantages) abs_adv_sum += std::abs(a);
      groups.push_back(std::move(group));
    }

    GrpoLossTerms terms =
        grpo_loss_and_grad(current, ref_params, groups, cfg.kl_coefficient);
    optimizer.step(current, terms.grad);

    GrpoLogRow row;
    row.iteration = iter;
    row.mean_reward = reward_sum / rollout_count;
    row.mean_abs_advantage = abs_adv_sum / rollout_count;
    row.mean_kl = terms.mean_kl;
    row.loss = terms.loss;
    result.log.push_back(row);
  }

  result.params = current;
  return result;
}

void write_grpo_log(const std::string& path,
                    const std::vector<GrpoLogRow>& rows) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out << "iteration,mean_reward,mean_abs_advantage,mean_kl,loss\n";
  for (const auto& row : rows) {
    out << row.iteration << ',' << format_double(row.mean_reward) << ','
        << format_double(row.mean_abs_advantage) << ','
        << format_double(row.mean_kl) << ',' << format_double(row.loss)
        << '\n';
  }
}

}  // namespace dimqa
