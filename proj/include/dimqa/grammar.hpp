#pragma once

#include <array>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace dimqa {

inline constexpr int kNumDimensions = 6;
inline constexpr int kNumArtifactKinds = 3;
inline constexpr int kMinScore = 1;
inline constexpr int kMaxScore = 5;
inline constexpr double kRecordingSeconds = 10.0;
inline constexpr double kTimeResolution = 0.5;
inline constexpr int kNumTimeBuckets = 21;  // 0.0, 0.5, ..., 10.0
inline constexpr int kMaxAssessmentArtifacts = 4;
inline constexpr std::size_t kMaxSequenceLength = 64;

struct GrammarError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct SequenceTooLong : GrammarError {
  using GrammarError::GrammarError;
};
struct UnknownTokenId : GrammarError {
  using GrammarError::GrammarError;
};
struct TimeOutOfRange : GrammarError {
  using GrammarError::GrammarError;
};
struct InvariantViolation : GrammarError {
  using GrammarError::GrammarError;
};

// The six scored perceptual dimensions. `overall` is the opinion-score
// aggregate derived from the other five.
enum class QualityDimension {
  naturalness = 0,
  noise = 1,
  distortion = 2,
  effort = 3,
  continuity = 4,
  overall = 5,
};

enum class ArtifactKind {
  noise = 0,
  distortion = 1,
  pause = 2,
};

const std::array<QualityDimension, kNumDimensions>& all_dimensions();
const std::array<ArtifactKind, kNumArtifactKinds>& all_artifact_kinds();

std::string_view dimension_name(QualityDimension d);
std::string_view artifact_kind_name(ArtifactKind k);
std::optional<QualityDimension> parse_dimension(std::string_view name);
std::optional<ArtifactKind> parse_artifact_kind(std::string_view name);

// Complete map dimension -> opinion score in [1, 5].
struct DimensionScores {
  std::array<int, kNumDimensions> values{1, 1, 1, 1, 1, 1};

  int operator[](QualityDimension d) const {
    return values[static_cast<int>(d)];
  }
  int& operator[](QualityDimension d) { return values[static_cast<int>(d)]; }
  bool in_range() const;
  bool operator==(const DimensionScores&) const = default;
};

// Scores recovered from a possibly malformed text; absent entries stay unset.
struct PartialScores {
  std::array<int, kNumDimensions> values{};
  std::array<bool, kNumDimensions> present{};

  std::optional<int> get(QualityDimension d) const {
    const int i = static_cast<int>(d);
    return present[i] ? std::optional<int>(values[i]) : std::nullopt;
  }
  void set(QualityDimension d, int v) {
    values[static_cast<int>(d)] = v;
    present[static_cast<int>(d)] = true;
  }
  bool complete() const;
  DimensionScores to_scores() const;  // requires complete()
  bool operator==(const PartialScores&) const = default;
};

struct ArtifactSpan {
  ArtifactKind kind = ArtifactKind::noise;
  double start_s = 0.0;
  double end_s = 0.0;
  std::string description;

  bool operator==(const ArtifactSpan&) const = default;
};

struct StructuredAssessment {
  DimensionScores scores;
  std::vector<ArtifactSpan> artifacts;  // sorted by start time
  std::string summary;

  bool operator==(const StructuredAssessment&) const = default;
};

// Half-second grid position on the 10 s recording, index in [0, 20].
struct TimeBucket {
  int index = 0;

  double seconds() const { return index * kTimeResolution; }
  std::string text() const;  // one-decimal fixed point, e.g. "1.5"
  bool operator==(const TimeBucket&) const = default;
};

TimeBucket quantize_time(double seconds);  // nearest grid point, ties up
double dequantize_time(TimeBucket bucket);

// Fixed 128-slot vocabulary shared by the text format and the policy.
// Construction is deterministic; every slot is assigned.
class TokenVocabulary {
 public:
  static constexpr int kSize = 128;
  static constexpr int kPad = 0;
  static constexpr int kBos = 1;
  static constexpr int kEos = 2;
  static constexpr int kUnk = 3;

  TokenVocabulary();

  int size() const { return kSize; }
  std::optional<int> id(std::string_view text) const;
  const std::string& text(int id) const;  // throws UnknownTokenId
  bool contains(int id) const { return id >= 0 && id < kSize; }

  int newline_id() const { return newline_id_; }
  int bucket_id(TimeBucket b) const { return first_bucket_id_ + b.index; }
  std::optional<TimeBucket> bucket_of(int id) const;

 private:
  std::vector<std::string> texts_;
  std::unordered_map<std::string, int> ids_;
  int newline_id_ = 0;
  int first_bucket_id_ = 0;
};

TokenVocabulary build_vocabulary();
const TokenVocabulary& vocabulary();  // shared read-only instance

using TokenSequence = std::vector<int>;

// Lexes text into vocabulary ids without BOS/EOS framing or a length cap.
// Unknown lexemes become UNK; decimal literals snap to time buckets.
std::vector<int> lex_text(std::string_view text);

TokenSequence tokenize(std::string_view text);  // throws SequenceTooLong
std::string detokenize(const TokenSequence& seq);  // throws UnknownTokenId

struct ParseIssue {
  int line = 0;  // 1-based; 0 for document-level issues
  std::string content;
  std::string message;
};

// Total parse result: whatever could be recovered plus the issue log.
// Reward computation consumes partial results directly.
struct ParsedAssessment {
  PartialScores scores;
  std::vector<ArtifactSpan> artifacts;
  std::optional<std::string> summary;
  bool saw_scores_line = false;
  bool saw_artifacts_header = false;
  std::vector<ParseIssue> errors;
  std::vector<ParseIssue> warnings;

  bool ok() const;
  // Strict conversion; throws InvariantViolation unless ok() and the
  // artifact count is within bounds. Artifacts come out sorted.
  StructuredAssessment assessment() const;
};

ParsedAssessment parse_assessment(std::string_view text);

// Canonical rendering; parse_assessment(serialize_assessment(a)) == a.
std::string serialize_assessment(const StructuredAssessment& a);

// Deterministic sort used by the canonical form: by start, then kind,
// then end, then description.
void normalize_artifact_order(std::vector<ArtifactSpan>& spans);

// Descriptor phrases available per artifact kind.
const std::vector<std::string>& descriptor_phrases(ArtifactKind kind);

std::string render_summary(const DimensionScores& scores,
                           const std::vector<ArtifactSpan>& artifacts);

struct ReferenceTexts {
  std::string calibration;  // scores line only
  std::string full;         // canonical serialization with templated summary
};

ReferenceTexts render_reference_texts(const DimensionScores& scores,
                                      const std::vector<ArtifactSpan>& artifacts);

}  // namespace dimqa
