#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "dimqa/grpo.hpp"
#include "test_util.hpp"

using namespace dimqa;
using namespace dimqa::testing;

namespace {

const PolicyConfig kConfig;

std::vector<GroupRollout> sample_groups(const PolicyParameters& params,
                                        const std::vector<AssessmentRecord>&
                                            records,
                                        int group_size, std::uint64_t seed) {
  std::vector<GroupRollout> groups;
  const Rng root(seed);
  int slot = 0;
  for (const auto& record : records) {
    GroupRollout group;
    group.condition = record.features;
    group.record_id = record.id;
    std::vector<double> rewards;
    for (int g = 0; g < group_size; ++g) {
      Rng stream = root.fork(static_cast<std::uint64_t>(slot),
                             static_cast<std::uint64_t>(g));
      auto rollout = sample_sequence(params, group.condition, 1.0, stream);
      const auto breakdown =
          total_reward_acc_sem(detokenize(rollout.tokens), record);
      rewards.push_back(breakdown.total);
      group.rollouts.push_back(std::move(rollout));
      group.breakdowns.push_back(breakdown);
    }
    group.advantages = normalize_advantages(rewards, 1e-8);
    groups.push_back(std::move(group));
    ++slot;
  }
  return groups;
}

}  // namespace

TEST_CASE("advantage normalization") {
  SUBCASE("all-equal rewards give exact zeros") {
    const auto adv = normalize_advantages({1.0, 1.0, 1.0, 1.0}, 1e-8);
    for (const double a : adv) CHECK(a == 0.0);
  }

  SUBCASE("hand-computed case") {
    const auto adv = normalize_advantages({2.0, 0.0, 1.0, 1.0}, 1e-8);
    CHECK(adv[0] == doctest::Approx(std::sqrt(2.0)).epsilon(1e-9));
    CHECK(adv[1] == doctest::Approx(-std::sqrt(2.0)).epsilon(1e-9));
    CHECK(adv[2] == doctest::Approx(0.0));
    CHECK(adv[3] == doctest::Approx(0.0));
  }

  SUBCASE("mean zero, population sigma one") {
    Rng rng(3);
    for (int trial = 0; trial < 1000; ++trial) {
      const int g = static_cast<int>(rng.uniform_int(2, 8));
      std::vector<double> rewards;
      for (int i = 0; i < g; ++i) rewards.push_back(rng.uniform(0.0, 9.0));
      const auto adv = normalize_advantages(rewards, 1e-8);
      double mean = 0.0, var = 0.0;
      for (const double a : adv) mean += a;
      mean /= g;
      for (const double a : adv) var += (a - mean) * (a - mean);
      var /= g;
      CHECK(std::abs(mean) <= 1e-9);
      const bool degenerate =
          std::all_of(adv.begin(), adv.end(),
                      [](double a) { return a == 0.0; });
      if (!degenerate) {
        CHECK(std::abs(std::sqrt(var) - 1.0) <= 1e-6);
      }
    }
  }

  SUBCASE("groups below two are rejected") {
    CHECK_THROWS_AS(normalize_advantages({1.0}, 1e-8), GroupTooSmall);
  }
}

TEST_CASE("sequence KL") {
  Rng rng(7);

  SUBCASE("zero against itself") {
    const auto params = init_params(kConfig, 11, 0.3);
    for (int i = 0; i < 20; ++i) {
      const auto cond = random_condition(rng);
      const auto seq = random_token_sequence(rng);
      CHECK(std::abs(sequence_kl(params, params, cond, seq)) <= 1e-12);
    }
  }

  SUBCASE("nonnegative on random pairs") {
    for (int i = 0; i < 200; ++i) {
      const auto a = init_params(kConfig, 2 * i, 0.4);
      const auto b = init_params(kConfig, 2 * i + 1, 0.4);
      const auto cond = random_condition(rng);
      const auto seq = random_token_sequence(rng);
      CHECK(sequence_kl(a, b, cond, seq) >= -1e-12);
    }
  }

  SUBCASE("matches the direct-summation oracle") {
    for (int i = 0; i < 20; ++i) {
      const auto a = init_params(kConfig, 100 + i, 0.4);
      const auto b = init_params(kConfig, 200 + i, 0.4);
      const auto cond = random_condition(rng);
      const auto seq = random_token_sequence(rng);
      const double expected = sequence_kl_oracle(a, b, cond, seq);
      CHECK(std::abs(sequence_kl(a, b, cond, seq) - expected) < 1e-10);
    }
  }

  SUBCASE("uniform reference against a concentrated policy") {
    const auto ref = init_params(kConfig, 1, 0.0);
    auto peaked = init_params(kConfig, 1, 0.0);
    peaked.b2[7] = 3.0;
    Eigen::VectorXd cond = Eigen::VectorXd::Zero(kConfig.condition_dim);
    const TokenSequence seq{TokenVocabulary::kBos, TokenVocabulary::kEos};
    const auto p = forward_step(peaked, cond, TokenVocabulary::kBos, 0);
    double expected = 0.0;
    for (int j = 0; j < 128; ++j) {
      expected += (1.0 / 128.0) * (std::log(1.0 / 128.0) - std::log(p[j]));
    }
    CHECK(sequence_kl(peaked, ref, cond, seq) ==
          doctest::Approx(expected).epsilon(1e-12));
  }
}

TEST_CASE("grpo loss and gradient") {
  const auto split = generate_dataset(30, 5, 0.1);
  std::vector<AssessmentRecord> records(split.train.begin(),
                                        split.train.begin() + 3);

  SUBCASE("zero advantages at the reference give zero loss and gradient") {
    const auto params = init_params(kConfig, 3, 0.2);
    auto groups = sample_groups(params, records, 4, 17);
    for (auto& g : groups) {
      std::fill(g.advantages.begin(), g.advantages.end(), 0.0);
    }
    const auto terms = grpo_loss_and_grad(params, params, groups, 0.04);
    CHECK(std::abs(terms.loss) <= 1e-12);
    CHECK(std::sqrt(terms.grad.squared_norm()) <= 1e-12);
  }

  SUBCASE("lambda zero matches finite differences") {
    const auto params = init_params(kConfig, 9, 0.2);
    const auto ref = init_params(kConfig, 10, 0.2);
    const auto groups = sample_groups(params, records, 4, 23);
    const auto terms = grpo_loss_and_grad(params, ref, groups, 0.0);
    const auto fn = [&](const PolicyParameters& p) {
      return grpo_loss_and_grad(p, ref, groups, 0.0).loss;
    };
    Rng rng(29);
    for (int trial = 0; trial < 50; ++trial) {
      const std::int64_t index =
          rng.uniform_int(0, params.parameter_count() - 1);
      const double numeric = finite_difference(params, index, 1e-5, fn);
      const double analytic = grad_coordinate(terms.grad, index);
      const double denom =
          std::max({std::abs(numeric), std::abs(analytic), 1e-7});
      CHECK(std::abs(numeric - analytic) / denom < 1e-4);
    }
  }

  SUBCASE("full loss matches finite differences") {
    const auto params = init_params(kConfig, 13, 0.2);
    const auto ref = init_params(kConfig, 14, 0.2);
    const auto groups = sample_groups(params, records, 4, 31);
    const double lambda = 0.5;
    const auto terms = grpo_loss_and_grad(params, ref, groups, lambda);
    const auto fn = [&](const PolicyParameters& p) {
      return grpo_loss_and_grad(p, ref, groups, lambda).loss;
    };
    Rng rng(37);
    for (int trial = 0; trial < 50; ++trial) {
      const std::int64_t index =
          rng.uniform_int(0, params.parameter_count() - 1);
      const double numeric = finite_difference(params, index, 1e-5, fn);
      const double analytic = grad_coordinate(terms.grad, index);
      const double denom =
          std::max({std::abs(numeric), std::abs(analytic), 1e-7});
      CHECK(std::abs(numeric - analytic) / denom < 1e-4);
    }
  }

  SUBCASE("large lambda near the reference is KL-dominated") {
    const auto ref = init_params(kConfig, 41, 0.2);
    PolicyParameters near = ref;
    Rng rng(43);
    for (std::int64_t i = 0; i < near.parameter_count(); ++i) {
      param_coordinate(near, i) += rng.normal(0.0, 0.05);
    }
    const auto groups = sample_groups(near, records, 4, 47);
    const auto policy_only = grpo_loss_and_grad(near, ref, groups, 0.0);
    auto kl_part = grpo_loss_and_grad(near, ref, groups, 10.0);
    kl_part.grad += [&] {
      auto neg = policy_only.grad;
      neg *= -1.0;
      return neg;
    }();
    const double kl_norm = std::sqrt(kl_part.grad.squared_norm());
    const double policy_norm = std::sqrt(policy_only.grad.squared_norm());
    CHECK(kl_norm > 10.0 * policy_norm);
  }
}

TEST_CASE("grpo training loop") {
  const auto split = generate_dataset(60, 2, 0.1);
  const auto params = init_params(kConfig, 1, 0.05);
  const auto reward_fn = make_reward_fn(RewardMode::acc_sem);

  SUBCASE("zero iterations is a no-op") {
    GrpoConfig cfg = grpo_preset_toy();
    cfg.iterations = 0;
    const auto result = train_grpo(params, split.train, reward_fn, cfg);
    CHECK(result.params.w1 == params.w1);
    CHECK(result.log.empty());
  }

  SUBCASE("deterministic across reruns") {
    GrpoConfig cfg = grpo_preset_toy();
    cfg.iterations = 5;
    cfg.seed = 7;
    const auto a = train_grpo(params, split.train, reward_fn, cfg);
    const auto b = train_grpo(params, split.train, reward_fn, cfg);
    CHECK(a.params.w1 == b.params.w1);
    CHECK(a.params.b2 == b.params.b2);
    REQUIRE(a.log.size() == b.log.size());
    for (std::size_t i = 0; i < a.log.size(); ++i) {
      CHECK(a.log[i].mean_reward == b.log[i].mean_reward);
      CHECK(a.log[i].mean_kl == b.log[i].mean_kl);
      CHECK(a.log[i].loss == b.log[i].loss);
    }
  }

  SUBCASE("constant rewards with lambda zero leave parameters untouched") {
    GrpoConfig cfg = grpo_preset_toy();
    cfg.iterations = 4;
    cfg.kl_coefficient = 0.0;
    const auto constant_fn = [](const std::string&,
                                const AssessmentRecord&) {
      RewardBreakdown b;
      b.total = 1.0;
      return b;
    };
    const auto result = train_grpo(params, split.train, constant_fn, cfg);
    CHECK(result.params.w1 == params.w1);
    CHECK(result.params.b1 == params.b1);
    CHECK(result.params.w2 == params.w2);
    CHECK(result.params.b2 == params.b2);
    for (const auto& row : result.log) {
      CHECK(row.mean_abs_advantage == 0.0);
    }
  }

  SUBCASE("advantage identities hold for every logged group") {
    GrpoConfig cfg = grpo_preset_toy();
    cfg.iterations = 3;
    const auto result = train_grpo(params, split.train, reward_fn, cfg);
    CHECK(result.log.size() == 3);
    for (const auto& row : result.log) {
      CHECK(row.mean_kl >= -1e-12);
      CHECK(row.mean_reward >= 0.0);
      CHECK(row.mean_reward <= 9.0);
    }
  }
}

TEST_CASE("grpo log serialization") {
  const std::vector<GrpoLogRow> rows{{1, 4.5, 0.8, 0.01, -0.2}};
  const auto path =
      (std::filesystem::temp_directory_path() / "dimqa_grpo_log.csv")
          .string();
  write_grpo_log(path, rows);
  std::ifstream in(path);
  std::string header, line;
  std::getline(in, header);
  std::getline(in, line);
  CHECK(header == "iteration,mean_reward,mean_abs_advantage,mean_kl,loss");
  CHECK(line == "1,4.5,0.8,0.01,-0.2");
}
