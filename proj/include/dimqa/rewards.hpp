#pragma once

#include <Eigen/Dense>
#include <array>
#include <functional>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "dimqa/grammar.hpp"
#include "dimqa/synthdata.hpp"

namespace dimqa {

inline constexpr int kEmbeddingDim = 256;

enum class RewardMode {
  acc_sem,
  judge,
  unified,
};

std::string_view reward_mode_name(RewardMode mode);
std::optional<RewardMode> parse_reward_mode(std::string_view name);

// Per-component reward decomposition. score/artifact arrays are indexed
// by dimension and kind; judge_rewards carries labeled components for the
// judge and unified modes.
struct RewardBreakdown {
  std::array<double, kNumDimensions> score_rewards{};
  std::array<double, kNumArtifactKinds> artifact_rewards{};
  std::map<std::string, double> judge_rewards;
  double total = 0.0;
};

// Hashed character-trigram embedding: lowercased text, whitespace runs
// collapsed, trigrams bucketed by FNV-1a 64 mod 256, L2-normalized.
// Texts shorter than one trigram embed to the zero vector.
Eigen::VectorXd embed_text(std::string_view text);

// (cosine + 1) / 2; a zero embedding on either side counts as cosine 0.
double semantic_reward(std::string_view a, std::string_view b);

double interval_iou(const ArtifactSpan& a, const ArtifactSpan& b);

// Greedy one-to-one matching per artifact kind by descending interval
// overlap. Zero-overlap pairs never match. Ties prefer the earlier
// reference start, then the earlier predicted start.
std::vector<std::pair<int, int>> match_artifacts(
    const std::vector<ArtifactSpan>& pred, const std::vector<ArtifactSpan>& ref);

// Exact-match indicator per dimension; unparsed dimensions score 0.
std::array<double, kNumDimensions> accuracy_reward(const PartialScores& pred,
                                                   const DimensionScores& ref);

// Per-kind aggregation over reference artifacts: matched pairs contribute
// pair_value, unmatched references contribute 0, and a kind with no
// reference artifacts scores 1 exactly when the prediction has none.
std::array<double, kNumArtifactKinds> artifact_kind_rewards(
    const std::vector<ArtifactSpan>& pred, const std::vector<ArtifactSpan>& ref,
    const std::function<double(const ArtifactSpan&, const ArtifactSpan&)>&
        pair_value);

// Dimension-wise verifiable reward: per-dimension score indicators plus a
// per-kind description-similarity component. Total in [0, 9].
RewardBreakdown total_reward_acc_sem(std::string_view pred_text,
                                     const AssessmentRecord& ref);

// Response-level baseline with accuracy/relevance/detail/helpfulness
// components. Total in [0, 4].
RewardBreakdown unified_reward(std::string_view pred_text,
                               const AssessmentRecord& ref);

}  // namespace dimqa
