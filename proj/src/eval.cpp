#include "dimqa/eval.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "dimqa/errors.hpp"
#include "dimqa/util.hpp"

namespace dimqa {

namespace {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

std::vector<std::string> split_into_words(std::string_view text) {
  std::vector<std::string> words;
  std::string current;
  for (const char c : text) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!current.empty()) {
        words.push_back(std::move(current));
        current.clear();
      }
    } else {
      current += c;
    }
  }
  if (!current.empty()) words.push_back(std::move(current));
  return words;
}

}  // namespace

std::optional<double> pcc(const std::vector<double>& xs,
                          const std::vector<double>& ys) {
  if (xs.size() != ys.size()) {
    throw LengthMismatch("pcc inputs differ in length");
  }
  if (xs.size() < 2) {
    throw LengthMismatch("pcc needs at least 2 samples");
  }
  const double n = static_cast<double>(xs.size());
  double mean_x = 0.0, mean_y = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mean_x += xs[i];
    mean_y += ys[i];
  }
  mean_x /= n;
  mean_y /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double dx = xs[i] - mean_x;
    const double dy = ys[i] - mean_y;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) return std::nullopt;
  return sxy / std::sqrt(sxx * syy);
}

PrecisionRecallF1 detection_f1(
    const std::vector<std::vector<ArtifactSpan>>& preds,
    const std::vector<std::vector<ArtifactSpan>>& refs, ArtifactKind kind) {
  if (preds.size() != refs.size()) {
    throw LengthMismatch("detection_f1 inputs differ in length");
  }
  const auto has_kind = [&](const std::vector<ArtifactSpan>& spans) {
    return std::any_of(spans.begin(), spans.end(),
                       [&](const ArtifactSpan& s) { return s.kind == kind; });
  };
  int tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const bool p = has_kind(preds[i]);
    const bool r = has_kind(refs[i]);
    if (p && r) ++tp;
    if (p && !r) ++fp;
    if (!p && r) ++fn;
  }
  PrecisionRecallF1 out;
  out.precision = tp + fp > 0 ? static_cast<double>(tp) / (tp + fp) : 0.0;
  out.recall = tp + fn > 0 ? static_cast<double>(tp) / (tp + fn) : 0.0;
  out.f1 = out.precision + out.recall > 0.0
               ? 2.0 * out.precision * out.recall /
                     (out.precision + out.recall)
               : 0.0;
  return out;
}

double rouge_l(std::string_view pred_text, std::string_view ref_text) {
  const auto pred = split_into_words(pred_text);
  const auto ref = split_into_words(ref_text);
  if (pred.empty() || ref.empty()) return 0.0;
  // LCS length by dynamic programming over two rows.
  std::vector<int> prev(ref.size() + 1, 0), curr(ref.size() + 1, 0);
  for (std::size_t i = 1; i <= pred.size(); ++i) {
    for (std::size_t j = 1; j <= ref.size(); ++j) {
      curr[j] = pred[i - 1] == ref[j - 1]
                    ? prev[j - 1] + 1
                    : std::max(prev[j], curr[j - 1]);
    }
    std::swap(prev, curr);
  }
  const double lcs = prev[ref.size()];
  if (lcs == 0.0) return 0.0;
  const double precision = lcs / static_cast<double>(pred.size());
  const double recall = lcs / static_cast<double>(ref.size());
  return 2.0 * precision * recall / (precision + recall);
}

MetricsReport evaluate_texts(const std::vector<AssessmentRecord>& records,
                             const std::vector<std::string>& texts) {
  if (records.empty()) throw EmptyTestSet("no records to evaluate");
  if (records.size() != texts.size()) {
    throw LengthMismatch("one generated text per record required");
  }

  std::array<std::vector<double>, kNumDimensions> pred_scores;
  std::array<std::vector<double>, kNumDimensions> ref_scores;
  std::vector<std::vector<ArtifactSpan>> pred_artifacts(records.size());
  std::vector<std::vector<ArtifactSpan>> ref_artifacts(records.size());
  std::array<double, kNumArtifactKinds> iou_sums{};
  std::array<double, kNumArtifactKinds> sim_sums{};
  std::array<int, kNumArtifactKinds> ref_counts{};
  std::array<int, kNumArtifactKinds> pair_counts{};
  double rouge_sum = 0.0;
  int parse_failures = 0;

  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& record = records[i];
    const ParsedAssessment parsed = parse_assessment(texts[i]);
    if (!parsed.ok()) ++parse_failures;

    for (const auto d : all_dimensions()) {
      if (const auto v = parsed.scores.get(d)) {
        pred_scores[static_cast<int>(d)].push_back(*v);
        ref_scores[static_cast<int>(d)].push_back(record.scores[d]);
      }
    }

    pred_artifacts[i] = parsed.artifacts;
    ref_artifacts[i] = record.artifacts;
    for (const auto& r : record.artifacts) {
      ++ref_counts[static_cast<int>(r.kind)];
    }
    // localization is averaged over reference artifacts: a missed
    // reference counts as zero overlap, description similarity only over
    // the pairs that exist
    const auto matches = match_artifacts(parsed.artifacts, record.artifacts);
    for (const auto& [p, r] : matches) {
      const int k = static_cast<int>(record.artifacts[r].kind);
      iou_sums[k] += interval_iou(parsed.artifacts[p], record.artifacts[r]);
      sim_sums[k] += semantic_reward(parsed.artifacts[p].description,
                                     record.artifacts[r].description);
      ++pair_counts[k];
    }

    // Long-form agreement is scored on the summary sections.
    const std::string pred_summary = parsed.summary.value_or("");
    const std::string ref_summary =
        render_summary(record.scores, record.artifacts);
    rouge_sum += rouge_l(pred_summary, ref_summary);
  }

  MetricsReport report;
  report.n_records = static_cast<int>(records.size());
  report.n_parse_failures = parse_failures;
  double pcc_sum = 0.0;
  int pcc_count = 0;
  for (int d = 0; d < kNumDimensions; ++d) {
    if (pred_scores[d].size() >= 2) {
      report.pcc[d] = pcc(pred_scores[d], ref_scores[d]);
    } else {
      report.pcc[d] = std::nullopt;
    }
    if (report.pcc[d]) {
      pcc_sum += *report.pcc[d];
      ++pcc_count;
    }
  }
  report.avg_pcc = pcc_count > 0 ? std::optional<double>(pcc_sum / pcc_count)
                                 : std::nullopt;
  for (const auto kind : all_artifact_kinds()) {
    const int k = static_cast<int>(kind);
    report.f1[k] = detection_f1(pred_artifacts, ref_artifacts, kind).f1;
    report.iou[k] = ref_counts[k] > 0 ? iou_sums[k] / ref_counts[k] : 0.0;
    report.sim[k] = pair_counts[k] > 0 ? sim_sums[k] / pair_counts[k] : 0.0;
  }
  report.rouge_l = rouge_sum / static_cast<double>(records.size());
  return report;
}

MetricsReport evaluate_checkpoint(const PolicyParameters& params,
                                  const std::vector<AssessmentRecord>& test,
                                  Decoding decoding, std::uint64_t seed) {
  if (test.empty()) throw EmptyTestSet("empty test set");
  const Rng root(seed);
  std::vector<std::string> texts;
  texts.reserve(test.size());
  for (const auto& record : test) {
    Rng stream = root.fork(0x6576616c, static_cast<std::uint64_t>(record.id));
    const double temperature = decoding == Decoding::greedy ? 0.0 : 1.0;
    const Rollout rollout =
        sample_sequence(params, record.features, temperature, stream);
    texts.push_back(detokenize(rollout.tokens));
  }
  return evaluate_texts(test, texts);
}

namespace {

json to_json_value(const std::optional<double>& v) {
  if (v) return *v;
  return nullptr;
}

std::optional<double> from_json_value(const json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<double>();
}

}  // namespace

void write_report(const std::string& path_base, const MetricsReport& report) {
  ordered_json j;
  ordered_json pcc_obj;
  for (const auto d : all_dimensions()) {
    pcc_obj[std::string(dimension_name(d))] =
        to_json_value(report.pcc[static_cast<int>(d)]);
  }
  pcc_obj["avg"] = to_json_value(report.avg_pcc);
  j["pcc"] = pcc_obj;
  const auto kind_obj = [&](const std::array<double, kNumArtifactKinds>& a) {
    ordered_json obj;
    for (const auto k : all_artifact_kinds()) {
      obj[std::string(artifact_kind_name(k))] = a[static_cast<int>(k)];
    }
    return obj;
  };
  j["f1"] = kind_obj(report.f1);
  j["iou"] = kind_obj(report.iou);
  j["sim"] = kind_obj(report.sim);
  j["rouge_l"] = report.rouge_l;
  j["n_records"] = report.n_records;
  j["n_parse_failures"] = report.n_parse_failures;

  std::ofstream out(path_base + ".json");
  if (!out) throw IoError("cannot open " + path_base + ".json for writing");
  out << j.dump(2) << '\n';

  std::ofstream csv(path_base + ".csv");
  if (!csv) throw IoError("cannot open " + path_base + ".csv for writing");
  std::ostringstream header, row;
  const auto add = [&](const std::string& name,
                       const std::optional<double>& value) {
    if (header.tellp() > 0) {
      header << ',';
      row << ',';
    }
    header << name;
    if (value) {
      row << format_double(*value);
    } else {
      row << "nan";
    }
  };
  for (const auto d : all_dimensions()) {
    add("pcc_" + std::string(dimension_name(d)),
        report.pcc[static_cast<int>(d)]);
  }
  add("pcc_avg", report.avg_pcc);
  for (const auto k : all_artifact_kinds()) {
    const std::string kind{artifact_kind_name(k)};
    add(kind + "_f1", report.f1[static_cast<int>(k)]);
    add(kind + "_sim", report.sim[static_cast<int>(k)]);
    add(kind + "_iou", report.iou[static_cast<int>(k)]);
  }
  add("rouge_l", report.rouge_l);
  add("n_records", static_cast<double>(report.n_records));
  add("n_parse_failures", static_cast<double>(report.n_parse_failures));
  csv << header.str() << '\n' << row.str() << '\n';
}

MetricsReport read_report(const std::string& json_path) {
  std::ifstream in(json_path);
  if (!in) throw IoError("cannot open " + json_path);
  json j;
  in >> j;
  MetricsReport report;
  for (const auto d : all_dimensions()) {
    report.pcc[static_cast<int>(d)] =
        from_json_value(j.at("pcc").at(std::string(dimension_name(d))));
  }
  report.avg_pcc = from_json_value(j.at("pcc").at("avg"));
  for (const auto k : all_artifact_kinds()) {
    const std::string kind{artifact_kind_name(k)};
    report.f1[static_cast<int>(k)] = j.at("f1").at(kind).get<double>();
    report.iou[static_cast<int>(k)] = j.at("iou").at(kind).get<double>();
    report.sim[static_cast<int>(k)] = j.at("sim").at(kind).get<double>();
  }
  report.rouge_l = j.at("rouge_l").get<double>();
  report.n_records = j.at("n_records").get<int>();
  report.n_parse_failures = j.at("n_parse_failures").get<int>();
  return report;
}

std::string ReportComparison::summary() const {
  std::ostringstream out;
  for (const auto& row : rows) {
    out << row.metric << ": ";
    const auto fmt = [&](const std::optional<double>& v) {
      if (v) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.4f", *v);
        out << buf;
      } else {
        out << "undefined";
      }
    };
    fmt(row.a);
    out << " -> ";
    fmt(row.b);
    if (row.delta) {
      char buf[32];
      std::snprintf(buf, sizeof(buf), "%+.4f", *row.delta);
      out << " (" << buf << ")";
    }
    out << '\n';
  }
  out << "better in a: " << a_better << ", better in b: " << b_better
      << ", ties: " << ties << '\n';
  return out.str();
}

ReportComparison compare_reports(const MetricsReport& a,
                                 const MetricsReport& b) {
  ReportComparison cmp;
  const auto add = [&](const std::string& metric,
                       const std::optional<double>& va,
                       const std::optional<double>& vb) {
    ReportComparison::Row row;
    row.metric = metric;
    row.a = va;
    row.b = vb;
    if (va && vb) {
      row.delta = *vb - *va;
      if (*row.delta > 0.0) {
        ++cmp.b_better;
      } else if (*row.delta < 0.0) {
        ++cmp.a_better;
      } else {
        ++cmp.ties;
      }
    }
    cmp.rows.push_back(std::move(row));
  };
  for (const auto d : all_dimensions()) {
    add("pcc_" + std::string(dimension_name(d)),
        a.pcc[static_cast<int>(d)], b.pcc[static_cast<int>(d)]);
  }
  add("pcc_avg", a.avg_pcc, b.avg_pcc);
  for (const auto k : all_artifact_kinds()) {
    const std::string kind{artifact_kind_name(k)};
    add(kind + "_f1", a.f1[static_cast<int>(k)], b.f1[static_cast<int>(k)]);
    add(kind + "_iou", a.iou[static_cast<int>(k)], b.iou[static_cast<int>(k)]);
    add(kind + "_sim", a.sim[static_cast<int>(k)], b.sim[static_cast<int>(k)]);
  }
  add("rouge_l", a.rouge_l, b.rouge_l);
  return cmp;
}

}  // namespace dimqa
