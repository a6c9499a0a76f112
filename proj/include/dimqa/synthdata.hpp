#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "dimqa/errors.hpp"
#include "dimqa/grammar.hpp"

namespace dimqa {

inline constexpr int kFeatureDim = 24;
inline constexpr int kMaxRecordArtifacts = 2;
inline constexpr double kTrainFraction = 0.85;

struct SchemaError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// One synthetic "recording": the condition vector the policy sees, the
// ground-truth scores and artifacts, and the canonical reference text.
struct AssessmentRecord {
  int id = 0;
  Eigen::VectorXd features;  // kFeatureDim entries
  DimensionScores scores;
  std::vector<ArtifactSpan> artifacts;  // at most 2, sorted by start
  std::string long_form;
};

struct DatasetSplit {
  std::vector<AssessmentRecord> train;
  std::vector<AssessmentRecord> test;
  std::uint64_t seed = 0;
  double noise_level = 0.0;

  std::size_t size() const { return train.size() + test.size(); }
};

// Deterministic generator; record randomness is keyed by (seed, id) so
// records are independent of generation order.
DatasetSplit generate_dataset(int n, std::uint64_t seed, double noise_level);

// Throws InvariantViolation when a record breaks its schema.
void validate_record(const AssessmentRecord& record);

// Directory layout: train.jsonl, test.jsonl, meta.json.
void write_dataset(const std::string& dir, const DatasetSplit& split);
DatasetSplit read_dataset(const std::string& dir);

}  // namespace dimqa
