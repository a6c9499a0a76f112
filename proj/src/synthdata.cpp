#include "dimqa/synthdata.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>

#include "dimqa/rng.hpp"

namespace dimqa {

namespace {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

int overall_from_base(const DimensionScores& scores) {
  double sum = 0.0;
  for (const auto d : all_dimensions()) {
    if (d == QualityDimension::overall) continue;
    sum += scores[d];
  }
  const int rounded = static_cast<int>(std::lround(sum / 5.0));
  return std::clamp(rounded, kMinScore, kMaxScore);
}

// Dimension whose low score can spawn an artifact of the matching kind,
// in inclusion priority order.
constexpr std::array<std::pair<QualityDimension, ArtifactKind>, 3>
    kArtifactSources = {{
        {QualityDimension::noise, ArtifactKind::noise},
        {QualityDimension::distortion, ArtifactKind::distortion},
        {QualityDimension::continuity, ArtifactKind::pause},
    }};

struct ArtifactDraw {
  ArtifactSpan span;
  int subtype = 0;
};

AssessmentRecord make_record(int id, std::uint64_t seed, double noise_level) {
  Rng rng = Rng(seed).fork(static_cast<std::uint64_t>(id));

  AssessmentRecord record;
  record.id = id;
  for (const auto d : all_dimensions()) {
    if (d == QualityDimension::overall) continue;
    record.scores[d] = static_cast<int>(rng.uniform_int(kMinScore, kMaxScore));
  }
  record.scores[QualityDimension::overall] = overall_from_base(record.scores);

  std::vector<ArtifactDraw> draws;
  for (const auto& [dim, kind] : kArtifactSources) {
    const double presence = rng.uniform();
    if (draws.size() >= static_cast<std::size_t>(kMaxRecordArtifacts)) continue;
    const double p = (kMaxScore - record.scores[dim]) / 4.0;
    if (presence < p) {
      const auto& phrases = descriptor_phrases(kind);
      ArtifactDraw draw;
      draw.subtype = static_cast<int>(
          rng.uniform_int(0, static_cast<std::int64_t>(phrases.size()) - 1));
      const double start = kTimeResolution * rng.uniform_int(0, 16);
      const double length = kTimeResolution * rng.uniform_int(1, 4);
      draw.span = ArtifactSpan{kind, start, start + length,
                               phrases[draw.subtype]};
      draws.push_back(std::move(draw));
    }
  }
  std::stable_sort(draws.begin(), draws.end(),
                   [](const ArtifactDraw& a, const ArtifactDraw& b) {
                     return a.span.start_s < b.span.start_s;
                   });

  record.features = Eigen::VectorXd::Zero(kFeatureDim);
  for (int i = 0; i < kNumDimensions; ++i) {
    record.features[i] = record.scores.values[i] / 5.0;
  }
  for (std::size_t slot = 0; slot < draws.size(); ++slot) {
    const int base = kNumDimensions + 9 * static_cast<int>(slot);
    const auto& draw = draws[slot];
    record.features[base + static_cast<int>(draw.span.kind)] = 1.0;
    record.features[base + 3 + draw.subtype] = 1.0;
    record.features[base + 7] = draw.span.start_s / kRecordingSeconds;
    record.features[base + 8] = draw.span.end_s / kRecordingSeconds;
  }
  for (int i = 0; i < kFeatureDim; ++i) {
    record.features[i] += rng.normal(0.0, noise_level);
  }

  record.artifacts.reserve(draws.size());
  for (auto& draw : draws) record.artifacts.push_back(std::move(draw.span));
  record.long_form =
      render_reference_texts(record.scores, record.artifacts).full;
  validate_record(record);
  return record;
}

ordered_json record_to_json(const AssessmentRecord& r) {
  ordered_json j;
  j["id"] = r.id;
  j["features"] = std::vector<double>(r.features.data(),
                                      r.features.data() + r.features.size());
  ordered_json scores;
  for (const auto d : all_dimensions()) {
    scores[std::string(dimension_name(d))] = r.scores[d];
  }
  j["scores"] = scores;
  ordered_json artifacts = ordered_json::array();
  for (const auto& s : r.artifacts) {
    ordered_json a;
    a["kind"] = std::string(artifact_kind_name(s.kind));
    a["start"] = s.start_s;
    a["end"] = s.end_s;
    a["description"] = s.description;
    artifacts.push_back(a);
  }
  j["artifacts"] = artifacts;
  j["long_form"] = r.long_form;
  return j;
}

AssessmentRecord record_from_json(const json& j, int line_no) {
  const auto context = [&](const std::string& what) {
    const std::string id =
        j.contains("id") && j["id"].is_number_integer()
            ? std::to_string(j["id"].get<int>())
            : "?";
    return SchemaError("record " + id + " (line " + std::to_string(line_no) +
                       "): " + what);
  };
  AssessmentRecord r;
  try {
    r.id = j.at("id").get<int>();
    const auto features = j.at("features").get<std::vector<double>>();
    if (features.size() != kFeatureDim) {
      throw context("expected 24 features, got " +
                    std::to_string(features.size()));
    }
    r.features = Eigen::Map<const Eigen::VectorXd>(
        features.data(), static_cast<Eigen::Index>(features.size()));
    for (const auto d : all_dimensions()) {
      const int v = j.at("scores").at(std::string(dimension_name(d))).get<int>();
      if (v < kMinScore || v > kMaxScore) {
        throw context("score out of range for '" +
                      std::string(dimension_name(d)) + "': " +
                      std::to_string(v));
      }
      r.scores[d] = v;
    }
    for (const auto& a : j.at("artifacts")) {
      const auto kind = parse_artifact_kind(a.at("kind").get<std::string>());
      if (!kind) throw context("unknown artifact kind");
      r.artifacts.push_back(ArtifactSpan{*kind, a.at("start").get<double>(),
                                         a.at("end").get<double>(),
                                         a.at("description").get<std::string>()});
    }
    r.long_form = j.at("long_form").get<std::string>();
  } catch (const SchemaError&) {
    throw;
  } catch (const std::exception& e) {
    throw context(e.what());
  }
  try {
    validate_record(r);
  } catch (const InvariantViolation& e) {
    throw context(e.what());
  }
  return r;
}

void write_jsonl(const std::filesystem::path& path,
                 const std::vector<AssessmentRecord>& records) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  for (const auto& r : records) {
    out << record_to_json(r).dump() << '\n';
  }
  if (!out) throw IoError("write failed for " + path.string());
}

std::vector<AssessmentRecord> read_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string() + " for reading");
  std::vector<AssessmentRecord> records;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const std::exception& e) {
      throw SchemaError(path.string() + " line " + std::to_string(line_no) +
                        ": " + e.what());
    }
    records.push_back(record_from_json(j, line_no));
  }
  if (records.empty()) {
    throw SchemaError(path.string() + ": no records");
  }
  return records;
}

}  // namespace

void validate_record(const AssessmentRecord& record) {
  if (record.features.size() != kFeatureDim ||
      !record.features.allFinite()) {
    throw InvariantViolation("features must be 24 finite values");
  }
  if (!record.scores.in_range()) {
    throw InvariantViolation("score outside [1, 5]");
  }
  if (record.scores[QualityDimension::overall] !=
      overall_from_base(record.scores)) {
    throw InvariantViolation("overall score is not the rounded mean");
  }
  if (record.artifacts.size() > static_cast<std::size_t>(kMaxRecordArtifacts)) {
    throw InvariantViolation("more than 2 artifacts on a record");
  }
  double prev_start = -1.0;
  for (const auto& s : record.artifacts) {
    if (s.start_s < prev_start) {
      throw InvariantViolation("artifacts not sorted by start time");
    }
    prev_start = s.start_s;
    if (!(s.start_s >= 0.0 && s.start_s < s.end_s &&
          s.end_s <= kRecordingSeconds)) {
      throw InvariantViolation("artifact interval out of range");
    }
    if (s.description.empty()) {
      throw InvariantViolation("empty artifact description");
    }
  }
  if (record.long_form.empty()) {
    throw InvariantViolation("empty long-form text");
  }
}

DatasetSplit generate_dataset(int n, std::uint64_t seed, double noise_level) {
  if (n < 20) {
    throw std::invalid_argument("dataset size must be at least 20");
  }
  if (noise_level < 0.0) {
    throw std::invalid_argument("noise level must be nonnegative");
  }
  DatasetSplit split;
  split.seed = seed;
  split.noise_level = noise_level;
  const int train_count = static_cast<int>(std::lround(kTrainFraction * n));
  split.train.reserve(train_count);
  split.test.reserve(n - train_count);
  for (int id = 0; id < n; ++id) {
    auto record = make_record(id, seed, noise_level);
    (id < train_count ? split.train : split.test).push_back(std::move(record));
  }
  return split;
}

void write_dataset(const std::string& dir, const DatasetSplit& split) {
  const std::filesystem::path base(dir);
  std::error_code ec;
  std::filesystem::create_directories(base, ec);
  if (ec) throw IoError("cannot create " + dir + ": " + ec.message());
  write_jsonl(base / "train.jsonl", split.train);
  write_jsonl(base / "test.jsonl", split.test);
  ordered_json meta;
  meta["n"] = split.size();
  meta["seed"] = split.seed;
  meta["noise_level"] = split.noise_level;
  std::ofstream out(base / "meta.json");
  if (!out) throw IoError("cannot open meta.json for writing");
  out << meta.dump(2) << '\n';
}

DatasetSplit read_dataset(const std::string& dir) {
  const std::filesystem::path base(dir);
  DatasetSplit split;
  split.train = read_jsonl(base / "train.jsonl");
  split.test = read_jsonl(base / "test.jsonl");
  std::ifstream in(base / "meta.json");
  if (!in) throw IoError("cannot open " + (base / "meta.json").string());
  json meta;
  try {
    in >> meta;
    split.seed = meta.at("seed").get<std::uint64_t>();
    split.noise_level = meta.at("noise_level").get<double>();
  } catch (const std::exception& e) {
    throw SchemaError(std::string("meta.json: ") + e.what());
  }
  return split;
}

}  // namespace dimqa
