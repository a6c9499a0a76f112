#include <CLI11.hpp>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "dimqa/pipeline.hpp"

namespace {

namespace fs = std::filesystem;
using namespace dimqa;

// Options shared by the stage commands; values arrive as strings and are
// funneled through the config-file entry parser so flags and file keys
// behave identically.
struct CommonOpts {
  std::string config_path;
  std::vector<std::pair<std::string, std::string>> overrides;

  void add_option(CLI::App* cmd, const std::string& flag,
                  const std::string& key, const std::string& help) {
    cmd->add_option_function<std::string>(
        flag,
        [this, key](const std::string& value) {
          overrides.emplace_back(key, value);
        },
        help);
  }

  void attach(CLI::App* cmd) {
    cmd->add_option("--config", config_path,
                    "flat key=value config file; flags override its values");
    add_option(cmd, "--out", "output_dir", "output directory");
    add_option(cmd, "--preset", "preset", "toy or paper");
    add_option(cmd, "--n", "n", "dataset size");
    add_option(cmd, "--seed", "seed", "run seed");
    add_option(cmd, "--noise-level", "noise_level", "feature noise stddev");
    add_option(cmd, "--reward", "reward_mode", "acc_sem, judge or unified");
    add_option(cmd, "--sft-iterations", "sft_iterations",
               "calibration iteration cap");
    add_option(cmd, "--sft-lr", "sft_learning_rate", "supervised step size");
    add_option(cmd, "--sft-validation-every", "sft_validation_every",
               "iterations between validation checks");
    add_option(cmd, "--grpo-iterations", "grpo_iterations",
               "reinforcement iterations");
    add_option(cmd, "--grpo-lr", "grpo_learning_rate",
               "reinforcement step size");
    add_option(cmd, "--kl", "grpo_kl_coefficient", "KL penalty weight");
    add_option(cmd, "--group-size", "grpo_group_size", "rollouts per input");
    add_option(cmd, "--freeze-encoder", "freeze_condition_columns",
               "freeze the condition columns during calibration");
    add_option(cmd, "--skip-calibration", "skip_calibration",
               "start from random parameters");
    add_option(cmd, "--skip-grpo", "skip_grpo",
               "stop after the supervised stages");
    add_option(cmd, "--judge-endpoint", "judge_endpoint",
               "judge HTTP endpoint (enables nothing by itself)");
    add_option(cmd, "--judge-mode", "judge_mode", "mock or http");
  }

  RunConfig build() const {
    RunConfig cfg = config_path.empty() ? make_run_config("toy")
                                        : load_run_config(config_path);
    // A preset flag must win before the remaining flags refine it.
    for (const auto& [key, value] : overrides) {
      if (key == "preset") apply_config_entry(cfg, key, value);
    }
    for (const auto& [key, value] : overrides) {
      if (key != "preset") apply_config_entry(cfg, key, value);
    }
    if (const char* url = std::getenv("DIMQA_JUDGE_URL")) {
      cfg.judge.endpoint_url = url;
    }
    cfg.calibration.seed = cfg.seed;
    cfg.warmup.seed = cfg.seed;
    cfg.grpo.seed = cfg.seed;
    cfg.grpo.reward_mode = cfg.reward_mode;
    cfg.calibration.freeze_condition_columns = cfg.freeze_condition_columns;
    return cfg;
  }
};

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

nlohmann::ordered_json parsed_to_json(const ParsedAssessment& parsed) {
  nlohmann::ordered_json j;
  nlohmann::ordered_json scores;
  for (const auto d : all_dimensions()) {
    if (const auto v = parsed.scores.get(d)) {
      scores[std::string(dimension_name(d))] = *v;
    }
  }
  j["scores"] = scores;
  nlohmann::ordered_json artifacts = nlohmann::ordered_json::array();
  for (const auto& s : parsed.artifacts) {
    artifacts.push_back({{"kind", std::string(artifact_kind_name(s.kind))},
                         {"start", s.start_s},
                         {"end", s.end_s},
                         {"description", s.description}});
  }
  j["artifacts"] = artifacts;
  if (parsed.summary) j["summary"] = *parsed.summary;
  j["ok"] = parsed.ok();
  auto issues = nlohmann::ordered_json::array();
  for (const auto& e : parsed.errors) {
    issues.push_back({{"line", e.line}, {"message", e.message}});
  }
  j["errors"] = issues;
  auto warns = nlohmann::ordered_json::array();
  for (const auto& w : parsed.warnings) {
    warns.push_back({{"line", w.line}, {"message", w.message}});
  }
  j["warnings"] = warns;
  return j;
}

const AssessmentRecord& find_record(const DatasetSplit& split, int id) {
  for (const auto& r : split.train) {
    if (r.id == id) return r;
  }
  for (const auto& r : split.test) {
    if (r.id == id) return r;
  }
  throw std::invalid_argument("no record with id " + std::to_string(id));
}

void print_breakdown(const RewardBreakdown& breakdown) {
  std::cout << "total: " << breakdown.total << '\n';
  for (const auto d : all_dimensions()) {
    std::cout << "  score/" << dimension_name(d) << ": "
              << breakdown.score_rewards[static_cast<int>(d)] << '\n';
  }
  for (const auto k : all_artifact_kinds()) {
    std::cout << "  artifact/" << artifact_kind_name(k) << ": "
              << breakdown.artifact_rewards[static_cast<int>(k)] << '\n';
  }
  for (const auto& [label, value] : breakdown.judge_rewards) {
    std::cout << "  label/" << label << ": " << value << '\n';
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"two-stage quality assessment trainer"};
  app.require_subcommand(1);

  CommonOpts gen_opts, calibrate_opts, warmup_opts, grpo_opts, eval_opts,
      pipeline_opts, reward_opts;

  auto* gen = app.add_subcommand("gen-data", "generate the synthetic dataset");
  gen_opts.attach(gen);

  auto* calibrate =
      app.add_subcommand("calibrate", "supervised score calibration");
  calibrate_opts.attach(calibrate);

  auto* warmup =
      app.add_subcommand("warmup", "one supervised epoch on full targets");
  warmup_opts.attach(warmup);

  auto* grpo = app.add_subcommand("grpo", "group-relative policy optimization");
  grpo_opts.attach(grpo);

  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
  eval_opts.attach(eval_cmd);
  std::string eval_checkpoint, eval_name = "eval", eval_decoding = "greedy";
  eval_cmd->add_option("--checkpoint", eval_checkpoint, "checkpoint path")
      ->required();
  eval_cmd->add_option("--name", eval_name, "report name");
  eval_cmd->add_option("--decoding", eval_decoding, "greedy or sampled");

  auto* parse_cmd =
      app.add_subcommand("parse", "parse an assessment text and print it");
  std::string parse_file, parse_text;
  parse_cmd->add_option("--file", parse_file, "text file to parse");
  parse_cmd->add_option("--text", parse_text, "literal text to parse");

  auto* reward_cmd =
      app.add_subcommand("reward", "score a prediction against a record");
  reward_opts.attach(reward_cmd);
  std::string reward_pred;
  int reward_record = 0;
  std::string reward_mode_str = "acc_sem";
  reward_cmd->add_option("--pred", reward_pred, "prediction text file")
      ->required();
  reward_cmd->add_option("--record", reward_record, "record id")->required();
  reward_cmd->add_option("--mode", reward_mode_str,
                         "acc_sem, judge or unified");

  auto* pipeline_cmd =
      app.add_subcommand("pipeline", "run every stage end to end");
  pipeline_opts.attach(pipeline_cmd);
  bool with_ablations = false;
  pipeline_cmd->add_flag("--with-ablations", with_ablations,
                         "also run the reasoning-only ablation");

  auto* compare_cmd = app.add_subcommand("compare", "diff two report files");
  std::string compare_a, compare_b;
  compare_cmd->add_option("--a", compare_a, "baseline report json")
      ->required();
  compare_cmd->add_option("--b", compare_b, "candidate report json")
      ->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      stage_gen_data(gen_opts.build());
    } else if (calibrate->parsed()) {
      stage_calibrate(calibrate_opts.build());
    } else if (warmup->parsed()) {
      stage_warmup(warmup_opts.build());
    } else if (grpo->parsed()) {
      stage_grpo(grpo_opts.build());
    } else if (eval_cmd->parsed()) {
      const auto cfg = eval_opts.build();
      const auto decoding =
          eval_decoding == "sampled" ? Decoding::sampled : Decoding::greedy;
      const auto report = stage_eval(cfg, eval_checkpoint, eval_name, decoding);
      std::cout << "report written to "
                << (fs::path(cfg.output_dir) / "reports" / eval_name).string()
                << ".{json,csv}\n";
      if (report.avg_pcc) {
        std::cout << "avg_pcc: " << *report.avg_pcc << '\n';
      }
    } else if (parse_cmd->parsed()) {
      if (parse_file.empty() == parse_text.empty()) {
        std::cerr << "parse: provide exactly one of --file or --text\n";
        return 2;
      }
      const std::string text =
          parse_file.empty() ? parse_text : read_file(parse_file);
      const auto parsed = parse_assessment(text);
      std::cout << parsed_to_json(parsed).dump(2) << '\n';
      return parsed.ok() ? 0 : 1;
    } else if (reward_cmd->parsed()) {
      const auto cfg = reward_opts.build();
      const auto mode = parse_reward_mode(reward_mode_str);
      if (!mode) {
        std::cerr << "unknown reward mode '" << reward_mode_str << "'\n";
        return 2;
      }
      const auto paths = make_output_paths(cfg.output_dir);
      const auto split = read_dataset(paths.data_dir);
      const auto& record = find_record(split, reward_record);
      const auto fn = make_reward_fn(*mode, cfg.judge);
      print_breakdown(fn(read_file(reward_pred), record));
    } else if (pipeline_cmd->parsed()) {
      const auto cfg = pipeline_opts.build();
      const auto outcome = run_pipeline(cfg);
      for (const auto& [name, report] : outcome.reports) {
        std::cout << name << ": avg_pcc="
                  << (report.avg_pcc ? std::to_string(*report.avg_pcc)
                                     : std::string("undefined"))
                  << " rouge_l=" << report.rouge_l << '\n';
      }
      if (with_ablations) {
        RunConfig ablation = cfg;
        ablation.skip_calibration = true;
        ablation.output_dir =
            (fs::path(cfg.output_dir) / "ablation_reasoning_only").string();
        const auto ablation_outcome = run_pipeline(ablation);
        for (const auto& [name, report] : ablation_outcome.reports) {
          std::cout << "reasoning-only/" << name << ": avg_pcc="
                    << (report.avg_pcc ? std::to_string(*report.avg_pcc)
                                       : std::string("undefined"))
                    << " rouge_l=" << report.rouge_l << '\n';
        }
      }
      if (!outcome.comparison_path.empty()) {
        std::cout << read_file(outcome.comparison_path);
      }
    } else if (compare_cmd->parsed()) {
      const auto a = read_report(compare_a);
      const auto b = read_report(compare_b);
      std::cout << compare_reports(a, b).summary();
    }
  } catch (const std::exception& e) {
    std::cerr << app.get_subcommands().front()->get_name() << ": " << e.what()
              << '\n';
    return 1;
  }
  return 0;
}
