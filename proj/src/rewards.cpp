#include "dimqa/rewards.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>

namespace dimqa {

std::string_view reward_mode_name(RewardMode mode) {
  switch (mode) {
    case RewardMode::acc_sem:
      return "acc_sem";
    case RewardMode::judge:
      return "judge";
    case RewardMode::unified:
      return "unified";
  }
  return "acc_sem";
}

std::optional<RewardMode> parse_reward_mode(std::string_view name) {
  if (name == "acc_sem") return RewardMode::acc_sem;
  if (name == "judge") return RewardMode::judge;
  if (name == "unified") return RewardMode::unified;
  return std::nullopt;
}

namespace {

std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string normalize_for_embedding(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  bool pending_space = false;
  for (const char c : text) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!out.empty()) pending_space = true;
      continue;
    }
    if (pending_space) {
      out += ' ';
      pending_space = false;
    }
    out += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  }
  return out;
}

}  // namespace

Eigen::VectorXd embed_text(std::string_view text) {
  Eigen::VectorXd v = Eigen::VectorXd::Zero(kEmbeddingDim);
  const std::string s = normalize_for_embedding(text);
  if (s.size() < 3) return v;
  for (std::size_t i = 0; i + 3 <= s.size(); ++i) {
    const auto bucket = fnv1a64(std::string_view(s).substr(i, 3)) %
                        static_cast<std::uint64_t>(kEmbeddingDim);
    v[static_cast<Eigen::Index>(bucket)] += 1.0;
  }
  const double norm = v.norm();
  if (norm > 0.0) v /= norm;
  return v;
}

double semantic_reward(std::string_view a, std::string_view b) {
  const Eigen::VectorXd ea = embed_text(a);
  const Eigen::VectorXd eb = embed_text(b);
  // Embeddings are unit-length or zero, so the dot product is the cosine.
  const double cosine = ea.dot(eb);
  return (cosine + 1.0) / 2.0;
}

double interval_iou(const ArtifactSpan& a, const ArtifactSpan& b) {
  const double inter = std::max(
      0.0, std::min(a.end_s, b.end_s) - std::max(a.start_s, b.start_s));
  const double uni = std::max(a.end_s, b.end_s) - std::min(a.start_s, b.start_s);
  return uni > 0.0 ? inter / uni : 0.0;
}

std::vector<std::pair<int, int>> match_artifacts(
    const std::vector<ArtifactSpan>& pred,
    const std::vector<ArtifactSpan>& ref) {
  struct Candidate {
    double iou;
    int pred_index;
    int ref_index;
  };
  std::vector<Candidate> candidates;
  for (int p = 0; p < static_cast<int>(pred.size()); ++p) {
    for (int r = 0; r < static_cast<int>(ref.size()); ++r) {
      if (pred[p].kind != ref[r].kind) continue;
      const double iou = interval_iou(pred[p], ref[r]);
      if (iou > 0.0) candidates.push_back({iou, p, r});
    }
  }
  std::sort(candidates.begin(), candidates.end(),
            [&](const Candidate& a, const Candidate& b) {
              if (a.iou != b.iou) return a.iou > b.iou;
              if (ref[a.ref_index].start_s != ref[b.ref_index].start_s) {
                return ref[a.ref_index].start_s < ref[b.ref_index].start_s;
              }
              if (pred[a.pred_index].start_s != pred[b.pred_index].start_s) {
                return pred[a.pred_index].start_s < pred[b.pred_index].start_s;
              }
              if (a.ref_index != b.ref_index) return a.ref_index < b.ref_index;
              return a.pred_index < b.pred_index;
            });
  std::vector<bool> pred_used(pred.size(), false);
  std::vector<bool> ref_used(ref.size(), false);
  std::vector<std::pair<int, int>> matches;
  for (const auto& c : candidates) {
    if (pred_used[c.pred_index] || ref_used[c.ref_index]) continue;
    pred_used[c.pred_index] = true;
    ref_used[c.ref_index] = true;
    matches.emplace_back(c.pred_index, c.ref_index);
  }
  return matches;
}

std::array<double, kNumDimensions> accuracy_reward(
    const PartialScores& pred, const DimensionScores& ref) {
  std::array<double, kNumDimensions> out{};
  for (const auto d : all_dimensions()) {
    const auto v = pred.get(d);
    out[static_cast<int>(d)] = (v && *v == ref[d]) ? 1.0 : 0.0;
  }
  return out;
}

std::array<double, kNumArtifactKinds> artifact_kind_rewards(
    const std::vector<ArtifactSpan>& pred, const std::vector<ArtifactSpan>& ref,
    const std::function<double(const ArtifactSpan&, const ArtifactSpan&)>&
        pair_value) {
  const auto matches = match_artifacts(pred, ref);
  std::array<double, kNumArtifactKinds> out{};
  for (const auto kind : all_artifact_kinds()) {
    const int k = static_cast<int>(kind);
    double sum = 0.0;
    int ref_count = 0;
    for (int r = 0; r < static_cast<int>(ref.size()); ++r) {
      if (ref[r].kind != kind) continue;
      ++ref_count;
      for (const auto& [p, rr] : matches) {
        if (rr == r) {
          sum += pair_value(pred[p], ref[r]);
          break;
        }
      }
    }
    if (ref_count > 0) {
      out[k] = sum / ref_count;
    } else {
      const bool pred_empty =
          std::none_of(pred.begin(), pred.end(),
                       [&](const ArtifactSpan& s) { return s.kind == kind; });
      out[k] = pred_empty ? 1.0 : 0.0;
    }
  }
  return out;
}

RewardBreakdown total_reward_acc_sem(std::string_view pred_text,
                                     const AssessmentRecord& ref) {
  const ParsedAssessment parsed = parse_assessment(pred_text);
  RewardBreakdown out;
  out.score_rewards = accuracy_reward(parsed.scores, ref.scores);
  out.artifact_rewards = artifact_kind_rewards(
      parsed.artifacts, ref.artifacts,
      [](const ArtifactSpan& p, const ArtifactSpan& r) {
        return semantic_reward(p.description, r.description);
      });
  out.total = 0.0;
  for (const double v : out.score_rewards) out.total += v;
  for (const double v : out.artifact_rewards) out.total += v;
  return out;
}

RewardBreakdown unified_reward(std::string_view pred_text,
                               const AssessmentRecord& ref) {
  const ParsedAssessment parsed = parse_assessment(pred_text);
  RewardBreakdown out;

  const auto overall = parsed.scores.get(QualityDimension::overall);
  const double accuracy =
      (overall && *overall == ref.scores[QualityDimension::overall]) ? 1.0
                                                                     : 0.0;
  const double relevance = semantic_reward(pred_text, ref.long_form);
  const double pred_tokens = static_cast<double>(lex_text(pred_text).size());
  const double ref_tokens =
      static_cast<double>(lex_text(ref.long_form).size());
  const double detail =
      ref_tokens > 0.0 ? std::min(1.0, pred_tokens / ref_tokens) : 0.0;
  const double helpfulness = parsed.ok() ? 1.0 : 0.0;

  out.judge_rewards = {{"accuracy", accuracy},
                       {"relevance", relevance},
                       {"detail", detail},
                       {"helpfulness", helpfulness}};
  out.total = accuracy + relevance + detail + helpfulness;
  return out;
}

}  // namespace dimqa
