#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "dimqa/policy.hpp"
#include "dimqa/synthdata.hpp"

namespace dimqa {

struct SftExample {
  Eigen::VectorXd condition;
  TokenSequence target;
};

using SftBatch = std::vector<SftExample>;

enum class TargetKind {
  calibration,  // scores line only
  full,         // whole canonical assessment
};

struct SftConfig {
  int iterations = 10000;
  int batch_size = 8;
  double learning_rate = 1.5e-5;
  int early_stopping_patience = 5;  // validation checks without improvement
  int validation_every = 200;
  bool freeze_condition_columns = false;
  // One sequential pass over the fit set; iterations is derived from the
  // set size and batch_size, and validation-based early stopping is off.
  bool epoch_mode = false;
  std::uint64_t seed = 0;

  void validate() const;
};

SftConfig sft_preset_paper();
SftConfig sft_preset_toy();

struct SftLogRow {
  int iteration = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
};

// Mean negative sequence log-likelihood over the batch and its exact
// gradient.
std::pair<double, PolicyGradient> sft_loss_and_grad(
    const PolicyParameters& params, const SftBatch& batch);

double sft_loss(const PolicyParameters& params, const SftBatch& batch);

SftExample make_sft_example(const AssessmentRecord& record, TargetKind kind);

struct SftResult {
  PolicyParameters params;  // best validation checkpoint
  std::vector<SftLogRow> log;
};

SftResult train_sft(const PolicyParameters& params,
                    const std::vector<AssessmentRecord>& train,
                    TargetKind target_kind, const SftConfig& cfg);

// CSV: iteration,train_loss,val_loss
void write_training_log(const std::string& path,
                        const std::vector<SftLogRow>& rows);

}  // namespace dimqa
