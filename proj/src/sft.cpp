#include "dimqa/sft.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

#include "dimqa/errors.hpp"
#include "dimqa/optim.hpp"
#include "dimqa/util.hpp"

namespace dimqa {

void SftConfig::validate() const {
  if (iterations < 0) throw std::invalid_argument("iterations must be >= 0");
  if (batch_size <= 0 || validation_every <= 0 || learning_rate <= 0.0) {
    throw std::invalid_argument("batch size, validation cadence and learning "
                                "rate must be positive");
  }
  if (early_stopping_patience < 1) {
    throw std::invalid_argument("patience must be at least 1");
  }
}

SftConfig sft_preset_paper() {
  SftConfig cfg;
  cfg.iterations = 10000;
  cfg.batch_size = 8;
  cfg.learning_rate = 1.5e-5;
  return cfg;
}

SftConfig sft_preset_toy() {
  SftConfig cfg;
  cfg.iterations = 4000;
  cfg.batch_size = 8;
  cfg.learning_rate = 3e-3;
  return cfg;
}

SftExample make_sft_example(const AssessmentRecord& record, TargetKind kind) {
  const auto texts = render_reference_texts(record.scores, record.artifacts);
  SftExample ex;
  ex.condition = record.features;
  ex.target = tokenize(kind == TargetKind::calibration ? texts.calibration
                                                       : texts.full);
  return ex;
}

std::pair<double, PolicyGradient> sft_loss_and_grad(
    const PolicyParameters& params, const SftBatch& batch) {
  if (batch.empty()) throw std::invalid_argument("empty batch");
  PolicyGradient grad = PolicyGradient::zeros(params.config);
  const double coeff = -1.0 / static_cast<double>(batch.size());
  double total = 0.0;
  for (const auto& ex : batch) {
    total += accumulate_logprob_grad(params, ex.condition, ex.target, coeff,
                                     grad);
  }
  return {-total / static_cast<double>(batch.size()), std::move(grad)};
}

double sft_loss(const PolicyParameters& params, const SftBatch& batch) {
  if (batch.empty()) throw std::invalid_argument("empty batch");
  double total = 0.0;
  for (const auto& ex : batch) {
    total += sequence_logprob(params, ex.condition, ex.target);
  }
  return -total / static_cast<double>(batch.size());
}

SftResult train_sft(const PolicyParameters& params,
                    const std::vector<AssessmentRecord>& train,
                    TargetKind target_kind, const SftConfig& cfg) {
  cfg.validate();
  if (train.size() < 2) {
    throw std::invalid_argument("training set needs at least 2 records");
  }

  // The deterministic 10% tail is held out before any fitting; epoch mode
  // still reserves it but never consults it.
  const std::size_t val_count = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::lround(0.1 * train.size())));
  const std::size_t fit_count = train.size() - val_count;

  SftBatch fit_set;
  fit_set.reserve(fit_count);
  for (std::size_t i = 0; i < fit_count; ++i) {
    fit_set.push_back(make_sft_example(train[i], target_kind));
  }
  SftBatch val_set;
  val_set.reserve(val_count);
  for (std::size_t i = fit_count; i < train.size(); ++i) {
    val_set.push_back(make_sft_example(train[i], target_kind));
  }

  const int iterations =
      cfg.epoch_mode
          ? static_cast<int>((fit_set.size() + cfg.batch_size - 1) /
                             cfg.batch_size)
          : cfg.iterations;

  SftResult result;
  result.params = params;
  if (iterations == 0) return result;

  PolicyParameters current = params;
  AdamOptimizer optimizer(params.config, AdamConfig{cfg.learning_rate});
  Rng batch_rng = Rng(cfg.seed).fork(0x73667462);  // batch stream

  PolicyParameters best = current;
  double best_val = std::numeric_limits<double>::infinity();
  bool have_check = false;
  int stale_checks = 0;
  double train_loss_sum = 0.0;
  int train_loss_count = 0;

  SftBatch batch;
  for (int iter = 1; iter <= iterations; ++iter) {
    batch.clear();
    if (cfg.epoch_mode) {
      const std::size_t begin =
          static_cast<std::size_t>(iter - 1) * cfg.batch_size;
      const std::size_t end =
          std::min(begin + cfg.batch_size, fit_set.size());
      for (std::size_t i = begin; i < end; ++i) batch.push_back(fit_set[i]);
    } else {
      Rng iter_rng = batch_rng.fork(static_cast<std::uint64_t>(iter));
      for (int b = 0; b < cfg.batch_size; ++b) {
        batch.push_back(fit_set[static_cast<std::size_t>(iter_rng.uniform_int(
            0, static_cast<std::int64_t>(fit_set.size()) - 1))]);
      }
    }

    auto [loss, grad] = sft_loss_and_grad(current, batch);
    if (cfg.freeze_condition_columns) {
      zero_condition_columns(grad, current.config);
    }
    optimizer.step(current, grad);
    train_loss_sum += loss;
    ++train_loss_count;

    // A single epoch runs to completion; mid-pass validation would revert
    // to a half-trained snapshot.
    if (!cfg.epoch_mode && iter % cfg.validation_every == 0) {
      const double val_loss = sft_loss(current, val_set);
      result.log.push_back(
          {iter, train_loss_sum / train_loss_count, val_loss});
      train_loss_sum = 0.0;
      train_loss_count = 0;
      if (val_loss < best_val) {
        best_val = val_loss;
        best = current;
        stale_checks = 0;
      } else {
        ++stale_checks;
      }
      have_check = true;
      if (stale_checks >= cfg.early_stopping_patience) break;
    }
  }

  result.params = have_check ? best : current;
  return result;
}

void write_training_log(const std::string& path,
                        const std::vector<SftLogRow>& rows) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out << "iteration,train_loss,val_loss\n";
  for (const auto& row : rows) {
    out << row.iteration << ',' << format_double(row.train_loss) << ','
        << format_double(row.val_loss) << '\n';
  }
}

}  // namespace dimqa
