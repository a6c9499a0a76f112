#include "dimqa/pipeline.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "dimqa/errors.hpp"

namespace dimqa {

namespace fs = std::filesystem;

RunConfig make_run_config(const std::string& preset) {
  RunConfig cfg;
  cfg.preset = preset;
  if (preset == "toy") {
    cfg.calibration = sft_preset_toy();
    cfg.warmup = sft_preset_toy();
    // Small warm-up batches squeeze more optimizer steps out of the one
    // allotted pass, which is what teaches the artifact/summary sections.
    cfg.warmup.batch_size = 2;
    cfg.grpo = grpo_preset_toy();
  } else if (preset == "paper") {
    cfg.calibration = sft_preset_paper();
    cfg.warmup = sft_preset_paper();
    cfg.grpo = grpo_preset_paper();
  } else {
    throw ConfigError("unknown preset '" + preset + "'");
  }
  cfg.warmup.epoch_mode = true;
  return cfg;
}

namespace {

bool parse_bool(const std::string& value) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  throw ConfigError("expected a boolean, got '" + value + "'");
}

}  // namespace

void apply_config_entry(RunConfig& cfg, const std::string& key,
                        const std::string& value) {
  try {
    if (key == "preset") {
      const auto output_dir = cfg.output_dir;
      cfg = make_run_config(value);
      cfg.output_dir = output_dir;
    } else if (key == "n") {
      cfg.n = std::stoi(value);
    } else if (key == "seed") {
      cfg.seed = std::stoull(value);
      cfg.calibration.seed = cfg.seed;
      cfg.warmup.seed = cfg.seed;
      cfg.grpo.seed = cfg.seed;
    } else if (key == "noise_level") {
      cfg.noise_level = std::stod(value);
    } else if (key == "reward_mode") {
      const auto mode = parse_reward_mode(value);
      if (!mode) throw ConfigError("unknown reward mode '" + value + "'");
      cfg.reward_mode = *mode;
      cfg.grpo.reward_mode = *mode;
    } else if (key == "skip_calibration") {
      cfg.skip_calibration = parse_bool(value);
    } else if (key == "skip_grpo") {
      cfg.skip_grpo = parse_bool(value);
    } else if (key == "freeze_condition_columns") {
      cfg.freeze_condition_columns = parse_bool(value);
      cfg.calibration.freeze_condition_columns = cfg.freeze_condition_columns;
    } else if (key == "init_scale") {
      cfg.init_scale = std::stod(value);
    } else if (key == "output_dir") {
      cfg.output_dir = value;
    } else if (key == "sft_iterations") {
      cfg.calibration.iterations = std::stoi(value);
    } else if (key == "sft_batch_size") {
      cfg.calibration.batch_size = std::stoi(value);
    } else if (key == "sft_learning_rate") {
      cfg.calibration.learning_rate = std::stod(value);
    } else if (key == "warmup_batch_size") {
      cfg.warmup.batch_size = std::stoi(value);
    } else if (key == "warmup_learning_rate") {
      cfg.warmup.learning_rate = std::stod(value);
    } else if (key == "sft_patience") {
      cfg.calibration.early_stopping_patience = std::stoi(value);
    } else if (key == "sft_validation_every") {
      cfg.calibration.validation_every = std::stoi(value);
    } else if (key == "grpo_iterations") {
      cfg.grpo.iterations = std::stoi(value);
    } else if (key == "grpo_group_size") {
      cfg.grpo.group_size = std::stoi(value);
    } else if (key == "grpo_batch_size") {
      cfg.grpo.batch_size = std::stoi(value);
    } else if (key == "grpo_learning_rate") {
      cfg.grpo.learning_rate = std::stod(value);
    } else if (key == "grpo_kl_coefficient") {
      cfg.grpo.kl_coefficient = std::stod(value);
    } else if (key == "grpo_temperature") {
      cfg.grpo.temperature = std::stod(value);
    } else if (key == "judge_mode") {
      if (value == "mock") {
        cfg.judge.mode = JudgeConfig::Mode::mock;
      } else if (value == "http") {
        cfg.judge.mode = JudgeConfig::Mode::http;
      } else {
        throw ConfigError("unknown judge mode '" + value + "'");
      }
    } else if (key == "judge_endpoint") {
      cfg.judge.endpoint_url = value;
    } else if (key == "judge_retries") {
      cfg.judge.retries = std::stoi(value);
    } else if (key == "judge_fallback_to_mock") {
      cfg.judge.fallback_to_mock = parse_bool(value);
    } else if (key == "judge_prompt_template") {
      cfg.judge.prompt_template = load_prompt_template(value);
    } else {
      throw ConfigError("unknown config key '" + key + "'");
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError("bad value for '" + key + "': " + e.what());
  }
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path);
  RunConfig cfg = make_run_config("toy");
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      if (line.find_first_not_of(" \t\r") != std::string::npos) {
        throw ConfigError(path + " line " + std::to_string(line_no) +
                          ": expected key=value");
      }
      continue;
    }
    const auto strip = [](std::string s) {
      s.erase(0, s.find_first_not_of(" \t\r"));
      s.erase(s.find_last_not_of(" \t\r") + 1);
      return s;
    };
    apply_config_entry(cfg, strip(line.substr(0, eq)),
                       strip(line.substr(eq + 1)));
  }
  return cfg;
}

void write_run_config(const std::string& path, const RunConfig& cfg) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out << "preset = " << cfg.preset << '\n'
      << "n = " << cfg.n << '\n'
      << "seed = " << cfg.seed << '\n'
      << "noise_level = " << cfg.noise_level << '\n'
      << "reward_mode = " << reward_mode_name(cfg.reward_mode) << '\n'
      << "skip_calibration = " << (cfg.skip_calibration ? "true" : "false")
      << '\n'
      << "skip_grpo = " << (cfg.skip_grpo ? "true" : "false") << '\n'
      << "freeze_condition_columns = "
      << (cfg.freeze_condition_columns ? "true" : "false") << '\n'
      << "init_scale = " << cfg.init_scale << '\n'
      << "sft_iterations = " << cfg.calibration.iterations << '\n'
      << "sft_batch_size = " << cfg.calibration.batch_size << '\n'
      << "sft_learning_rate = " << cfg.calibration.learning_rate << '\n'
      << "sft_patience = " << cfg.calibration.early_stopping_patience << '\n'
      << "sft_validation_every = " << cfg.calibration.validation_every << '\n'
      << "warmup_batch_size = " << cfg.warmup.batch_size << '\n'
      << "warmup_learning_rate = " << cfg.warmup.learning_rate << '\n'
      << "grpo_iterations = " << cfg.grpo.iterations << '\n'
      << "grpo_group_size = " << cfg.grpo.group_size << '\n'
      << "grpo_batch_size = " << cfg.grpo.batch_size << '\n'
      << "grpo_learning_rate = " << cfg.grpo.learning_rate << '\n'
      << "grpo_kl_coefficient = " << cfg.grpo.kl_coefficient << '\n'
      << "grpo_temperature = " << cfg.grpo.temperature << '\n';
}

OutputPaths make_output_paths(const std::string& output_dir) {
  OutputPaths paths;
  paths.data_dir = (fs::path(output_dir) / "data").string();
  paths.checkpoints_dir = (fs::path(output_dir) / "checkpoints").string();
  paths.logs_dir = (fs::path(output_dir) / "logs").string();
  paths.reports_dir = (fs::path(output_dir) / "reports").string();
  for (const auto& d : {paths.data_dir, paths.checkpoints_dir, paths.logs_dir,
                        paths.reports_dir}) {
    std::error_code ec;
    fs::create_directories(d, ec);
    if (ec) throw IoError("cannot create " + d + ": " + ec.message());
  }
  return paths;
}

namespace {

std::string checkpoint_path(const OutputPaths& paths, const std::string& tag) {
  return (fs::path(paths.checkpoints_dir) / (tag + ".ckpt")).string();
}

SftConfig seeded(SftConfig cfg, std::uint64_t seed) {
  cfg.seed = seed;
  return cfg;
}

}  // namespace

void stage_gen_data(const RunConfig& cfg) {
  const auto paths = make_output_paths(cfg.output_dir);
  const auto split = generate_dataset(cfg.n, cfg.seed, cfg.noise_level);
  write_dataset(paths.data_dir, split);
}

void stage_calibrate(const RunConfig& cfg) {
  const auto paths = make_output_paths(cfg.output_dir);
  const auto split = read_dataset(paths.data_dir);
  PolicyParameters params =
      init_params(PolicyConfig{}, cfg.seed, cfg.init_scale);
  SftConfig sft_cfg = seeded(cfg.calibration, cfg.seed);
  sft_cfg.freeze_condition_columns = cfg.freeze_condition_columns;
  const auto result =
      train_sft(params, split.train, TargetKind::calibration, sft_cfg);
  save_params(checkpoint_path(paths, "calibration"), result.params,
              "calibration");
  if (!result.log.empty()) {
    write_training_log(
        (fs::path(paths.logs_dir) / "calibration.csv").string(), result.log);
  }
}

void stage_warmup(const RunConfig& cfg) {
  const auto paths = make_output_paths(cfg.output_dir);
  const auto split = read_dataset(paths.data_dir);
  PolicyParameters params =
      cfg.skip_calibration
          ? init_params(PolicyConfig{}, cfg.seed, cfg.init_scale)
          : load_params(checkpoint_path(paths, "calibration")).params;
  SftConfig warmup_cfg = seeded(cfg.warmup, cfg.seed);
  warmup_cfg.epoch_mode = true;
  const auto result =
      train_sft(params, split.train, TargetKind::full, warmup_cfg);
  save_params(checkpoint_path(paths, "warmup"), result.params, "warmup");
}

void stage_grpo(const RunConfig& cfg) {
  const auto paths = make_output_paths(cfg.output_dir);
  const auto split = read_dataset(paths.data_dir);
  const auto warmup = load_params(checkpoint_path(paths, "warmup"));
  GrpoConfig grpo_cfg = cfg.grpo;
  grpo_cfg.seed = cfg.seed;
  grpo_cfg.reward_mode = cfg.reward_mode;
  const auto reward_fn = make_reward_fn(cfg.reward_mode, cfg.judge);
  const auto result =
      train_grpo(warmup.params, split.train, reward_fn, grpo_cfg);
  save_params(checkpoint_path(paths, "grpo"), result.params, "grpo");
  write_grpo_log((fs::path(paths.logs_dir) / "grpo.csv").string(), result.log);
}

MetricsReport stage_eval(const RunConfig& cfg,
                         const std::string& checkpoint_path_in,
                         const std::string& report_name, Decoding decoding) {
  const auto paths = make_output_paths(cfg.output_dir);
  const auto split = read_dataset(paths.data_dir);
  const auto ckpt = load_params(checkpoint_path_in);
  const auto report =
      evaluate_checkpoint(ckpt.params, split.test, decoding, cfg.seed);
  write_report((fs::path(paths.reports_dir) / report_name).string(), report);
  return report;
}

PipelineOutcome run_pipeline(const RunConfig& cfg) {
  const auto paths = make_output_paths(cfg.output_dir);
  PipelineOutcome outcome;
  write_run_config((fs::path(cfg.output_dir) / "config.txt").string(), cfg);

  stage_gen_data(cfg);
  std::string first_report;
  if (!cfg.skip_calibration) {
    stage_calibrate(cfg);
    outcome.reports["calibration"] = stage_eval(
        cfg, checkpoint_path(paths, "calibration"), "calibration");
    first_report = "calibration";
  }
  stage_warmup(cfg);
  if (!cfg.skip_grpo) {
    stage_grpo(cfg);
    outcome.reports["grpo"] =
        stage_eval(cfg, checkpoint_path(paths, "grpo"), "grpo");
    if (first_report.empty()) {
      outcome.reports["warmup"] =
          stage_eval(cfg, checkpoint_path(paths, "warmup"), "warmup");
      first_report = "warmup";
    }
  } else if (first_report.empty()) {
    outcome.reports["warmup"] =
        stage_eval(cfg, checkpoint_path(paths, "warmup"), "warmup");
    first_report = "warmup";
  }

  const std::string last_report = cfg.skip_grpo ? first_report : "grpo";
  if (!first_report.empty() && first_report != last_report) {
    const auto cmp = compare_reports(outcome.reports.at(first_report),
                                     outcome.reports.at(last_report));
    outcome.comparison_path =
        (fs::path(paths.reports_dir) / "comparison.txt").string();
    std::ofstream out(outcome.comparison_path);
    if (!out) throw IoError("cannot write comparison");
    out << "comparing " << first_report << " (a) to " << last_report
        << " (b)\n"
        << cmp.summary();
  }
  return outcome;
}

}  // namespace dimqa
