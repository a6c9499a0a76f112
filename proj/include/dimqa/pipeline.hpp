#pragma once

#include <map>
#include <string>

#include "dimqa/eval.hpp"
#include "dimqa/grpo.hpp"
#include "dimqa/sft.hpp"

namespace dimqa {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Everything one end-to-end run needs. Presets: "toy" (desk-scale rates)
// and "paper" (the published hyperparameters, impractically slow here).
struct RunConfig {
  int n = 2000;
  std::uint64_t seed = 1;
  double noise_level = 0.15;
  std::string preset = "toy";
  RewardMode reward_mode = RewardMode::acc_sem;
  bool skip_calibration = false;
  bool skip_grpo = false;
  bool freeze_condition_columns = false;
  double init_scale = 0.05;
  SftConfig calibration;
  SftConfig warmup;
  GrpoConfig grpo;
  JudgeConfig judge;
  std::string output_dir = "out";
};

RunConfig make_run_config(const std::string& preset);

// Flat key=value file; '#' starts a comment. Unknown keys are errors.
RunConfig load_run_config(const std::string& path);
void apply_config_entry(RunConfig& cfg, const std::string& key,
                        const std::string& value);
void write_run_config(const std::string& path, const RunConfig& cfg);

// Fixed layout under the output directory.
struct OutputPaths {
  std::string data_dir;
  std::string checkpoints_dir;
  std::string logs_dir;
  std::string reports_dir;
};
OutputPaths make_output_paths(const std::string& output_dir);

// Individual stages; each reads and writes the files of the layout above.
void stage_gen_data(const RunConfig& cfg);
void stage_calibrate(const RunConfig& cfg);
void stage_warmup(const RunConfig& cfg);
void stage_grpo(const RunConfig& cfg);
MetricsReport stage_eval(const RunConfig& cfg,
                         const std::string& checkpoint_path,
                         const std::string& report_name,
                         Decoding decoding = Decoding::greedy);

struct PipelineOutcome {
  std::map<std::string, MetricsReport> reports;  // by report name
  std::string comparison_path;
};

// gen-data -> calibrate -> warmup -> grpo -> eval, honoring the skip
// flags, plus a final comparison between the first and last checkpoint.
PipelineOutcome run_pipeline(const RunConfig& cfg);

}  // namespace dimqa
