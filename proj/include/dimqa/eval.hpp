#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dimqa/policy.hpp"
#include "dimqa/rewards.hpp"
#include "dimqa/synthdata.hpp"

namespace dimqa {

struct LengthMismatch : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};
struct EmptyTestSet : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Pearson correlation; nullopt when either side has zero variance.
std::optional<double> pcc(const std::vector<double>& xs,
                          const std::vector<double>& ys);

struct PrecisionRecallF1 {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

// Per-recording binary presence of `kind`: a record counts as a true
// positive when both sides contain at least one artifact of the kind.
PrecisionRecallF1 detection_f1(
    const std::vector<std::vector<ArtifactSpan>>& preds,
    const std::vector<std::vector<ArtifactSpan>>& refs, ArtifactKind kind);

// Word-level longest-common-subsequence F-measure (beta = 1); 0 when
// either text has no words.
double rouge_l(std::string_view pred_text, std::string_view ref_text);

struct MetricsReport {
  std::array<std::optional<double>, kNumDimensions> pcc;
  std::optional<double> avg_pcc;  // mean over the defined entries
  std::array<double, kNumArtifactKinds> f1{};
  // mean over reference artifacts; an unmatched reference counts as zero
  std::array<double, kNumArtifactKinds> iou{};
  std::array<double, kNumArtifactKinds> sim{};  // over matched pairs
  double rouge_l = 0.0;
  int n_records = 0;
  int n_parse_failures = 0;
};

enum class Decoding { greedy, sampled };

// Scores already-generated texts against their records; the policy-driven
// evaluation and the test oracles share this path.
MetricsReport evaluate_texts(const std::vector<AssessmentRecord>& records,
                             const std::vector<std::string>& texts);

MetricsReport evaluate_checkpoint(const PolicyParameters& params,
                                  const std::vector<AssessmentRecord>& test,
                                  Decoding decoding = Decoding::greedy,
                                  std::uint64_t seed = 0);

void write_report(const std::string& path_base, const MetricsReport& report);
MetricsReport read_report(const std::string& json_path);

struct ReportComparison {
  struct Row {
    std::string metric;
    std::optional<double> a;
    std::optional<double> b;
    std::optional<double> delta;  // b - a
  };
  std::vector<Row> rows;
  int a_better = 0;
  int b_better = 0;
  int ties = 0;

  std::string summary() const;
};

ReportComparison compare_reports(const MetricsReport& a,
                                 const MetricsReport& b);

}  // namespace dimqa
