#include "dimqa/grammar.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace dimqa {

namespace {

const std::array<QualityDimension, kNumDimensions> kDimensions = {
    QualityDimension::naturalness, QualityDimension::noise,
    QualityDimension::distortion,  QualityDimension::effort,
    QualityDimension::continuity,  QualityDimension::overall,
};

const std::array<ArtifactKind, kNumArtifactKinds> kArtifactKinds = {
    ArtifactKind::noise,
    ArtifactKind::distortion,
    ArtifactKind::pause,
};

constexpr std::array<std::string_view, kNumDimensions> kDimensionNames = {
    "naturalness", "noise", "distortion", "effort", "continuity", "overall",
};

constexpr std::array<std::string_view, kNumArtifactKinds> kKindNames = {
    "noise",
    "distortion",
    "pause",
};

const std::vector<std::string> kNoisePhrases = {
    "hissing background static",
    "humming electrical buzz",
    "crowd babble chatter",
    "wind rumble roar",
};
const std::vector<std::string> kDistortionPhrases = {
    "harsh clipping peaks",
    "metallic robotic timbre",
    "muffled dull lowpass",
    "choppy dropout glitches",
};
const std::vector<std::string> kPausePhrases = {
    "long unnatural pause",
    "abrupt silent gap",
};

// 48-word descriptor/summary lexicon: the descriptor-phrase words, the
// summary-template words, and a handful of free description words.
const std::vector<std::string> kLexiconWords = {
    // noise descriptors
    "hissing", "background", "static", "humming", "electrical", "buzz",
    "crowd", "babble", "chatter", "wind", "rumble", "roar",
    // distortion descriptors
    "harsh", "clipping", "peaks", "metallic", "robotic", "timbre",
    "muffled", "dull", "lowpass", "choppy", "dropout", "glitches",
    // pause descriptors
    "long", "unnatural", "pause", "abrupt", "silent", "gap",
    // summary template
    "speech", "is", "with", "poor", "rough", "acceptable", "good",
    "natural", "and", "clean", "no", "artifacts",
    // free description words
    "clear", "mostly", "slight", "minor", "quality", "audible",
};

constexpr std::array<std::string_view, kMaxScore> kQualityWords = {
    "poor", "rough", "acceptable", "good", "natural and clean",
};

std::string format_time(double seconds) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%.1f", seconds);
  return buf;
}

bool is_decimal_literal(std::string_view s) {
  const auto dot = s.find('.');
  if (dot == std::string_view::npos || dot == 0 || dot + 1 == s.size()) {
    return false;
  }
  const auto digits = [](std::string_view part) {
    return !part.empty() &&
           std::all_of(part.begin(), part.end(),
                       [](unsigned char c) { return std::isdigit(c); });
  };
  return digits(s.substr(0, dot)) && digits(s.substr(dot + 1));
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) {
    s.remove_prefix(1);
  }
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) {
    s.remove_suffix(1);
  }
  return s;
}

std::vector<std::string_view> split_words(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) {
      ++i;
    }
    std::size_t j = i;
    while (j < s.size() && !std::isspace(static_cast<unsigned char>(s[j]))) {
      ++j;
    }
    if (j > i) out.push_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

}  // namespace

const std::array<QualityDimension, kNumDimensions>& all_dimensions() {
  return kDimensions;
}

const std::array<ArtifactKind, kNumArtifactKinds>& all_artifact_kinds() {
  return kArtifactKinds;
}

std::string_view dimension_name(QualityDimension d) {
  return kDimensionNames[static_cast<int>(d)];
}

std::string_view artifact_kind_name(ArtifactKind k) {
  return kKindNames[static_cast<int>(k)];
}

std::optional<QualityDimension> parse_dimension(std::string_view name) {
  for (int i = 0; i < kNumDimensions; ++i) {
    if (kDimensionNames[i] == name) return kDimensions[i];
  }
  return std::nullopt;
}

std::optional<ArtifactKind> parse_artifact_kind(std::string_view name) {
  for (int i = 0; i < kNumArtifactKinds; ++i) {
    if (kKindNames[i] == name) return kArtifactKinds[i];
  }
  return std::nullopt;
}

bool DimensionScores::in_range() const {
  return std::all_of(values.begin(), values.end(), [](int v) {
    return v >= kMinScore && v <= kMaxScore;
  });
}

bool PartialScores::complete() const {
  return std::all_of(present.begin(), present.end(), [](bool p) { return p; });
}

DimensionScores PartialScores::to_scores() const {
  if (!complete()) {
    throw InvariantViolation("partial scores are incomplete");
  }
  DimensionScores s;
  s.values = values;
  return s;
}

std::string TimeBucket::text() const { return format_time(seconds()); }

TimeBucket quantize_time(double seconds) {
  if (!(seconds >= 0.0 && seconds <= kRecordingSeconds)) {
    throw TimeOutOfRange("time " + std::to_string(seconds) +
                         " outside [0, 10] s");
  }
  // Half-up on the half-second grid.
  int index = static_cast<int>(std::floor(seconds / kTimeResolution + 0.5));
  index = std::clamp(index, 0, kNumTimeBuckets - 1);
  return TimeBucket{index};
}

double dequantize_time(TimeBucket bucket) {
  if (bucket.index < 0 || bucket.index >= kNumTimeBuckets) {
    throw TimeOutOfRange("bucket index " + std::to_string(bucket.index));
  }
  return bucket.seconds();
}

TokenVocabulary::TokenVocabulary() {
  texts_ = {"<pad>", "<bos>", "<eos>", "<unk>"};
  texts_.emplace_back("<nl>");
  newline_id_ = 4;
  for (const char* t : {"scores:", "artifacts:", "summary:", "-", "@", ":",
                        "=", ".."}) {
    texts_.emplace_back(t);
  }
  for (auto name : kDimensionNames) texts_.emplace_back(name);
  for (int v = kMinScore; v <= kMaxScore; ++v) {
    texts_.push_back(std::to_string(v));
  }
  texts_.emplace_back("pause");
  first_bucket_id_ = static_cast<int>(texts_.size());
  for (int i = 0; i < kNumTimeBuckets; ++i) {
    texts_.push_back(TimeBucket{i}.text());
  }
  for (const auto& w : kLexiconWords) {
    if (std::find(texts_.begin(), texts_.end(), w) == texts_.end()) {
      texts_.push_back(w);
    }
  }
  while (texts_.size() < static_cast<std::size_t>(kSize)) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "<unused%02zu>", texts_.size());
    texts_.emplace_back(buf);
  }
  if (texts_.size() != static_cast<std::size_t>(kSize)) {
    throw InvariantViolation("vocabulary layout does not fill 128 slots");
  }
  for (int i = 0; i < kSize; ++i) ids_.emplace(texts_[i], i);
}

std::optional<int> TokenVocabulary::id(std::string_view text) const {
  const auto it = ids_.find(std::string(text));
  if (it == ids_.end()) return std::nullopt;
  return it->second;
}

const std::string& TokenVocabulary::text(int id) const {
  if (!contains(id)) {
    throw UnknownTokenId("token id " + std::to_string(id) +
                         " outside [0, 128)");
  }
  return texts_[id];
}

std::optional<TimeBucket> TokenVocabulary::bucket_of(int id) const {
  if (id >= first_bucket_id_ && id < first_bucket_id_ + kNumTimeBuckets) {
    return TimeBucket{id - first_bucket_id_};
  }
  return std::nullopt;
}

TokenVocabulary build_vocabulary() { return TokenVocabulary(); }

const TokenVocabulary& vocabulary() {
  static const TokenVocabulary instance;
  return instance;
}

namespace {

// Resolves one fragment free of ".." and "=": direct lookup, then the
// time grid for decimal literals, then UNK.
void lex_atom(std::string_view atom, std::vector<int>& out) {
  const auto& vocab = vocabulary();
  if (auto id = vocab.id(atom)) {
    out.push_back(*id);
    return;
  }
  if (is_decimal_literal(atom)) {
    const double v = std::stod(std::string(atom));
    if (v >= 0.0 && v <= kRecordingSeconds) {
      out.push_back(vocab.bucket_id(quantize_time(v)));
      return;
    }
  }
  out.push_back(TokenVocabulary::kUnk);
}

void lex_fragment(std::string_view frag, std::vector<int>& out) {
  if (frag.empty()) return;
  const auto& vocab = vocabulary();
  if (auto id = vocab.id(frag)) {
    out.push_back(*id);
    return;
  }
  const auto eq = frag.find('=');
  if (eq != std::string_view::npos) {
    const int eq_id = *vocab.id("=");
    lex_fragment(frag.substr(0, eq), out);
    out.push_back(eq_id);
    lex_fragment(frag.substr(eq + 1), out);
    return;
  }
  lex_atom(frag, out);
}

void lex_word(std::string_view word, std::vector<int>& out) {
  const auto& vocab = vocabulary();
  if (auto id = vocab.id(word)) {
    out.push_back(*id);
    return;
  }
  const auto dots = word.find("..");
  if (dots != std::string_view::npos) {
    const int dots_id = *vocab.id("..");
    lex_word(word.substr(0, dots), out);
    out.push_back(dots_id);
    lex_word(word.substr(dots + 2), out);
    return;
  }
  lex_fragment(word, out);
}

}  // namespace

std::vector<int> lex_text(std::string_view text) {
  std::vector<int> out;
  const int nl = vocabulary().newline_id();
  std::size_t start = 0;
  for (std::size_t i = 0; i <= text.size(); ++i) {
    const bool at_end = i == text.size();
    const char c = at_end ? ' ' : text[i];
    if (at_end || std::isspace(static_cast<unsigned char>(c))) {
      if (i > start) lex_word(text.substr(start, i - start), out);
      if (!at_end && c == '\n') out.push_back(nl);
      start = i + 1;
    }
  }
  return out;
}

TokenSequence tokenize(std::string_view text) {
  TokenSequence seq;
  seq.push_back(TokenVocabulary::kBos);
  auto body = lex_text(text);
  seq.insert(seq.end(), body.begin(), body.end());
  seq.push_back(TokenVocabulary::kEos);
  if (seq.size() > kMaxSequenceLength) {
    throw SequenceTooLong("sequence of " + std::to_string(seq.size()) +
                          " tokens exceeds the cap of " +
                          std::to_string(kMaxSequenceLength));
  }
  return seq;
}

std::string detokenize(const TokenSequence& seq) {
  const auto& vocab = vocabulary();
  std::string out;
  bool suppress_space = false;
  for (const int id : seq) {
    const std::string& t = vocab.text(id);  // validates the id
    if (id == TokenVocabulary::kPad || id == TokenVocabulary::kBos ||
        id == TokenVocabulary::kEos) {
      continue;
    }
    if (id == vocab.newline_id()) {
      out += '\n';
      suppress_space = true;
      continue;
    }
    const bool tight = t == "=" || t == "..";
    if (!out.empty() && out.back() != '\n' && !suppress_space && !tight) {
      out += ' ';
    }
    out += t;
    suppress_space = tight;
  }
  return out;
}

namespace {

void parse_scores_line(std::string_view rest, int line_no,
                       std::string_view line, ParsedAssessment& out) {
  for (const auto entry : split_words(rest)) {
    const auto eq = entry.find('=');
    if (eq == std::string_view::npos) {
      out.errors.push_back({line_no, std::string(line),
                            "malformed score entry '" + std::string(entry) +
                                "'"});
      continue;
    }
    const auto name = entry.substr(0, eq);
    const auto value = entry.substr(eq + 1);
    const auto dim = parse_dimension(name);
    if (!dim) {
      out.errors.push_back({line_no, std::string(line),
                            "unknown dimension '" + std::string(name) + "'"});
      continue;
    }
    int v = -1;
    if (value.size() == 1 && value[0] >= '0' && value[0] <= '9') {
      v = value[0] - '0';
    }
    if (v < kMinScore || v > kMaxScore) {
      out.errors.push_back({line_no, std::string(line),
                            "score out of range for '" + std::string(name) +
                                "': '" + std::string(value) + "'"});
      continue;
    }
    if (out.scores.get(*dim)) {
      out.warnings.push_back({line_no, std::string(line),
                              "duplicate dimension '" + std::string(name) +
                                  "', last value wins"});
    }
    out.scores.set(*dim, v);
  }
}

void parse_artifact_line(std::string_view rest, int line_no,
                         std::string_view line, ParsedAssessment& out) {
  const auto fail = [&](const std::string& msg) {
    out.errors.push_back({line_no, std::string(line), msg});
  };
  const auto colon = rest.find(" : ");
  if (colon == std::string_view::npos) {
    fail("artifact line missing ' : ' before the description");
    return;
  }
  const auto head = trim(rest.substr(0, colon));
  const auto description = trim(rest.substr(colon + 3));
  if (description.empty()) {
    fail("empty artifact description");
    return;
  }
  const auto at = head.find(" @ ");
  if (at == std::string_view::npos) {
    fail("artifact line missing ' @ ' between kind and interval");
    return;
  }
  const auto kind_text = trim(head.substr(0, at));
  const auto kind = parse_artifact_kind(kind_text);
  if (!kind) {
    fail("unknown artifact kind '" + std::string(kind_text) + "'");
    return;
  }
  const auto interval = trim(head.substr(at + 3));
  const auto dots = interval.find("..");
  if (dots == std::string_view::npos) {
    fail("artifact interval missing '..'");
    return;
  }
  const auto parse_seconds = [](std::string_view s) -> std::optional<double> {
    try {
      std::size_t used = 0;
      const std::string str{trim(s)};
      const double v = std::stod(str, &used);
      if (used != str.size() || !std::isfinite(v)) return std::nullopt;
      return v;
    } catch (const std::exception&) {
      return std::nullopt;
    }
  };
  const auto start = parse_seconds(interval.substr(0, dots));
  const auto end = parse_seconds(interval.substr(dots + 2));
  if (!start || !end) {
    fail("unparseable artifact interval '" + std::string(interval) + "'");
    return;
  }
  if (*start < 0.0 || *end > kRecordingSeconds || *start >= *end) {
    fail("artifact interval [" + format_time(*start) + ", " +
         format_time(*end) + "] outside 0 <= start < end <= 10");
    return;
  }
  const TimeBucket qs = quantize_time(*start);
  const TimeBucket qe = quantize_time(*end);
  if (qs.index >= qe.index) {
    fail("artifact interval collapses on the half-second grid");
    return;
  }
  out.artifacts.push_back(ArtifactSpan{*kind, qs.seconds(), qe.seconds(),
                                       std::string(description)});
}

}  // namespace

bool ParsedAssessment::ok() const {
  return errors.empty() && saw_scores_line && saw_artifacts_header &&
         scores.complete() && summary.has_value();
}

StructuredAssessment ParsedAssessment::assessment() const {
  if (!ok()) {
    throw InvariantViolation("parse did not produce a complete assessment");
  }
  if (artifacts.size() > static_cast<std::size_t>(kMaxAssessmentArtifacts)) {
    throw InvariantViolation("more than 4 artifact spans");
  }
  StructuredAssessment a;
  a.scores = scores.to_scores();
  a.artifacts = artifacts;
  normalize_artifact_order(a.artifacts);
  a.summary = *summary;
  return a;
}

ParsedAssessment parse_assessment(std::string_view text) {
  ParsedAssessment out;
  int line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    const auto raw =
        text.substr(pos, nl == std::string_view::npos ? text.size() - pos
                                                      : nl - pos);
    ++line_no;
    const auto line = trim(raw);
    if (!line.empty()) {
      if (line.substr(0, 7) == "scores:") {
        if (out.saw_scores_line) {
          out.warnings.push_back(
              {line_no, std::string(line), "duplicate scores line"});
        }
        out.saw_scores_line = true;
        parse_scores_line(line.substr(7), line_no, line, out);
      } else if (line == "artifacts:") {
        if (out.saw_artifacts_header) {
          out.warnings.push_back(
              {line_no, std::string(line), "duplicate artifacts header"});
        }
        out.saw_artifacts_header = true;
      } else if (line.substr(0, 2) == "- ") {
        parse_artifact_line(line.substr(2), line_no, line, out);
      } else if (line.substr(0, 8) == "summary:") {
        if (out.summary) {
          out.warnings.push_back(
              {line_no, std::string(line), "duplicate summary, last wins"});
        }
        const auto body = trim(line.substr(8));
        if (body.empty()) {
          out.errors.push_back(
              {line_no, std::string(line), "empty summary"});
        } else {
          out.summary = std::string(body);
        }
      } else {
        out.errors.push_back(
            {line_no, std::string(line), "unrecognized line"});
      }
    }
    if (nl == std::string_view::npos) break;
    pos = nl + 1;
  }
  if (!out.saw_scores_line) {
    out.errors.push_back({0, "", "missing scores line"});
  } else if (!out.scores.complete()) {
    std::string missing;
    for (const auto d : all_dimensions()) {
      if (!out.scores.get(d)) {
        if (!missing.empty()) missing += ", ";
        missing += dimension_name(d);
      }
    }
    out.errors.push_back({0, "", "missing dimensions: " + missing});
  }
  if (!out.saw_artifacts_header) {
    out.errors.push_back({0, "", "missing artifacts section"});
  }
  if (!out.summary) {
    out.errors.push_back({0, "", "missing summary"});
  }
  return out;
}

void normalize_artifact_order(std::vector<ArtifactSpan>& spans) {
  std::sort(spans.begin(), spans.end(),
            [](const ArtifactSpan& a, const ArtifactSpan& b) {
              if (a.start_s != b.start_s) return a.start_s < b.start_s;
              if (a.kind != b.kind) return a.kind < b.kind;
              if (a.end_s != b.end_s) return a.end_s < b.end_s;
              return a.description < b.description;
            });
}

namespace {

bool on_grid(double seconds) {
  const double scaled = seconds / kTimeResolution;
  return std::abs(scaled - std::round(scaled)) < 1e-9;
}

void check_assessment(const StructuredAssessment& a) {
  if (!a.scores.in_range()) {
    throw InvariantViolation("dimension score outside [1, 5]");
  }
  if (a.artifacts.size() > static_cast<std::size_t>(kMaxAssessmentArtifacts)) {
    throw InvariantViolation("more than 4 artifact spans");
  }
  for (const auto& s : a.artifacts) {
    if (!(s.start_s >= 0.0 && s.start_s < s.end_s &&
          s.end_s <= kRecordingSeconds)) {
      throw InvariantViolation("artifact interval out of order or range");
    }
    if (!on_grid(s.start_s) || !on_grid(s.end_s)) {
      throw InvariantViolation("artifact interval off the half-second grid");
    }
    if (s.description.empty() ||
        s.description.find('\n') != std::string::npos) {
      throw InvariantViolation("artifact description empty or multi-line");
    }
  }
  if (a.summary.empty() || a.summary.find('\n') != std::string::npos) {
    throw InvariantViolation("summary empty or multi-line");
  }
}

}  // namespace

std::string serialize_assessment(const StructuredAssessment& a) {
  check_assessment(a);
  std::vector<ArtifactSpan> spans = a.artifacts;
  normalize_artifact_order(spans);

  std::ostringstream out;
  out << "scores:";
  for (const auto d : all_dimensions()) {
    out << ' ' << dimension_name(d) << '=' << a.scores[d];
  }
  out << "\nartifacts:";
  for (const auto& s : spans) {
    out << "\n- " << artifact_kind_name(s.kind) << " @ "
        << format_time(s.start_s) << ".." << format_time(s.end_s) << " : "
        << s.description;
  }
  out << "\nsummary: " << a.summary;
  return out.str();
}

const std::vector<std::string>& descriptor_phrases(ArtifactKind kind) {
  switch (kind) {
    case ArtifactKind::noise:
      return kNoisePhrases;
    case ArtifactKind::distortion:
      return kDistortionPhrases;
    case ArtifactKind::pause:
      return kPausePhrases;
  }
  throw InvariantViolation("unknown artifact kind");
}

std::string render_summary(const DimensionScores& scores,
                           const std::vector<ArtifactSpan>& artifacts) {
  std::string out = "speech is ";
  out += kQualityWords[scores[QualityDimension::overall] - 1];
  out += " with ";
  std::string clause;
  for (const auto kind : all_artifact_kinds()) {
    const bool present =
        std::any_of(artifacts.begin(), artifacts.end(),
                    [&](const ArtifactSpan& s) { return s.kind == kind; });
    if (present) {
      if (!clause.empty()) clause += " and ";
      clause += artifact_kind_name(kind);
    }
  }
  out += clause.empty() ? "no artifacts" : clause + " artifacts";
  return out;
}

ReferenceTexts render_reference_texts(
    const DimensionScores& scores,
    const std::vector<ArtifactSpan>& artifacts) {
  StructuredAssessment a;
  a.scores = scores;
  a.artifacts = artifacts;
  normalize_artifact_order(a.artifacts);
  a.summary = render_summary(scores, a.artifacts);

  ReferenceTexts texts;
  texts.full = serialize_assessment(a);
  const auto nl = texts.full.find('\n');
  texts.calibration = texts.full.substr(0, nl);
  return texts;
}

}  // namespace dimqa
