#include "dimqa/judge.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <condition_variable>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "dimqa/errors.hpp"

namespace dimqa {

namespace {

const char* const kDefaultTemplate =
    "You are scoring one generated speech quality assessment against the "
    "reference annotations.\n"
    "Generated assessment:\n{assessment}\n\n"
    "Reference scores:\n{reference_scores}\n\n"
    "Reference artifacts:\n{reference_artifacts}\n\n"
    "Rate each label on [0, 1] for how well the generated assessment "
    "matches the reference, one line per label in the form "
    "'<label>: <score>', covering exactly these labels: naturalness, "
    "noise, distortion, effort, continuity, overall, noise_artifacts, "
    "distortion_artifacts, pause_artifacts.\n";

std::string replace_all(std::string text, std::string_view needle,
                        std::string_view value) {
  std::size_t pos = 0;
  while ((pos = text.find(needle, pos)) != std::string::npos) {
    text.replace(pos, needle.size(), value);
    pos += value.size();
  }
  return text;
}

// Caps concurrent outbound judge requests.
class InFlightLimiter {
 public:
  void acquire(int capacity) {
    std::unique_lock lock(mutex_);
    cv_.wait(lock, [&] { return in_flight_ < capacity; });
    ++in_flight_;
  }
  void release() {
    {
      std::lock_guard lock(mutex_);
      --in_flight_;
    }
    cv_.notify_one();
  }

 private:
  std::mutex mutex_;
  std::condition_variable cv_;
  int in_flight_ = 0;
};

InFlightLimiter& limiter() {
  static InFlightLimiter instance;
  return instance;
}

// Splits "scheme://host:port/path" into the client base and request path.
std::pair<std::string, std::string> split_endpoint(const std::string& url) {
  const auto scheme = url.find("://");
  const auto slash =
      url.find('/', scheme == std::string::npos ? 0 : scheme + 3);
  if (slash == std::string::npos) return {url, "/"};
  return {url.substr(0, slash), url.substr(slash)};
}

RewardBreakdown http_judge_reward(std::string_view pred_text,
                                  const AssessmentRecord& ref,
                                  const JudgeConfig& cfg) {
  const std::string& tmpl = cfg.prompt_template.empty()
                                ? default_prompt_template()
                                : cfg.prompt_template;
  const std::string prompt = render_judge_prompt(tmpl, pred_text, ref);
  nlohmann::json body;
  body["prompt"] = prompt;
  const std::string payload = body.dump();
  const auto [base_url, path] = split_endpoint(cfg.endpoint_url);

  std::string last_error;
  bool malformed = false;
  for (int attempt = 0; attempt <= cfg.retries; ++attempt) {
    if (attempt > 0) {
      const double delay = cfg.backoff_base_s * std::pow(2.0, attempt - 1);
      std::this_thread::sleep_for(std::chrono::duration<double>(delay));
    }
    limiter().acquire(cfg.max_in_flight);
    httplib::Client client(base_url);
    client.set_connection_timeout(std::chrono::duration<double>(cfg.timeout_s));
    client.set_read_timeout(std::chrono::duration<double>(cfg.timeout_s));
    auto res = client.Post(path, payload, "application/json");
    limiter().release();
    if (!res) {
      last_error = "transport error: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status != 200) {
      last_error = "http status " + std::to_string(res->status);
      continue;
    }
    try {
      const auto response = nlohmann::json::parse(res->body);
      const auto scores =
          parse_judge_response(response.at("text").get<std::string>());
      RewardBreakdown out;
      out.judge_rewards = scores;
      for (const auto& [label, value] : scores) out.total += value;
      for (int d = 0; d < kNumDimensions; ++d) {
        out.score_rewards[d] =
            scores.at(std::string(dimension_name(all_dimensions()[d])));
      }
      for (int k = 0; k < kNumArtifactKinds; ++k) {
        out.artifact_rewards[k] = scores.at(
            std::string(artifact_kind_name(all_artifact_kinds()[k])) +
            "_artifacts");
      }
      return out;
    } catch (const std::exception& e) {
      last_error = std::string("malformed judge response: ") + e.what();
      malformed = true;
      continue;
    }
  }
  if (cfg.fallback_to_mock) {
    std::cerr << "warning: judge endpoint failed (" << last_error
              << "), falling back to the mock judge\n";
    return mock_judge_reward(pred_text, ref);
  }
  if (malformed) throw JudgeResponseMalformed(last_error);
  throw JudgeUnavailable(last_error);
}

}  // namespace

const std::vector<std::string>& judge_labels() {
  static const std::vector<std::string> labels = [] {
    std::vector<std::string> out;
    for (const auto d : all_dimensions()) {
      out.emplace_back(dimension_name(d));
    }
    for (const auto k : all_artifact_kinds()) {
      out.emplace_back(std::string(artifact_kind_name(k)) + "_artifacts");
    }
    return out;
  }();
  return labels;
}

void JudgeConfig::validate() const {
  if (mode == Mode::http && endpoint_url.empty()) {
    throw std::invalid_argument("http judge mode requires an endpoint url");
  }
  if (timeout_s <= 0.0 || retries < 0 || backoff_base_s < 0.0 ||
      max_in_flight < 1) {
    throw std::invalid_argument("invalid judge client settings");
  }
}

const std::string& default_prompt_template() {
  static const std::string tmpl = kDefaultTemplate;
  return tmpl;
}

std::string load_prompt_template(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open prompt template " + path);
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

std::string render_judge_prompt(std::string_view prompt_template,
                                std::string_view pred_text,
                                const AssessmentRecord& ref) {
  std::ostringstream scores;
  for (const auto d : all_dimensions()) {
    scores << dimension_name(d) << "=" << ref.scores[d] << " ";
  }
  std::ostringstream artifacts;
  if (ref.artifacts.empty()) {
    artifacts << "none";
  } else {
    for (const auto& s : ref.artifacts) {
      artifacts << artifact_kind_name(s.kind) << " @ " << s.start_s << ".."
                << s.end_s << " : " << s.description << "\n";
    }
  }
  std::string out{prompt_template};
  out = replace_all(std::move(out), "{assessment}", pred_text);
  out = replace_all(std::move(out), "{reference_scores}", scores.str());
  out = replace_all(std::move(out), "{reference_artifacts}", artifacts.str());
  return out;
}

RewardBreakdown mock_judge_reward(std::string_view pred_text,
                                  const AssessmentRecord& ref) {
  const ParsedAssessment parsed = parse_assessment(pred_text);
  RewardBreakdown out;
  for (const auto d : all_dimensions()) {
    const auto v = parsed.scores.get(d);
    const double reward =
        v ? 1.0 - std::abs(*v - ref.scores[d]) / 4.0 : 0.0;
    out.score_rewards[static_cast<int>(d)] = reward;
  }
  out.artifact_rewards = artifact_kind_rewards(
      parsed.artifacts, ref.artifacts,
      [](const ArtifactSpan& p, const ArtifactSpan& r) {
        return interval_iou(p, r) * semantic_reward(p.description,
                                                    r.description);
      });
  for (const auto d : all_dimensions()) {
    out.judge_rewards[std::string(dimension_name(d))] =
        out.score_rewards[static_cast<int>(d)];
  }
  for (const auto k : all_artifact_kinds()) {
    out.judge_rewards[std::string(artifact_kind_name(k)) + "_artifacts"] =
        out.artifact_rewards[static_cast<int>(k)];
  }
  for (const auto& [label, value] : out.judge_rewards) out.total += value;
  return out;
}

std::map<std::string, double> parse_judge_response(std::string_view text) {
  std::map<std::string, double> scores;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    const auto line = text.substr(
        pos, nl == std::string_view::npos ? text.size() - pos : nl - pos);
    const auto colon = line.find(':');
    if (colon != std::string_view::npos) {
      std::string label{line.substr(0, colon)};
      label.erase(0, label.find_first_not_of(" \t"));
      label.erase(label.find_last_not_of(" \t") + 1);
      try {
        const double value = std::stod(std::string(line.substr(colon + 1)));
        scores[label] = std::clamp(value, 0.0, 1.0);
      } catch (const std::exception&) {
        // non-numeric line; ignored
      }
    }
    if (nl == std::string_view::npos) break;
    pos = nl + 1;
  }
  for (const auto& label : judge_labels()) {
    if (!scores.contains(label)) {
      throw JudgeResponseMalformed("judge response missing label '" + label +
                                   "'");
    }
  }
  // Drop labels outside the contract so totals stay bounded.
  std::map<std::string, double> out;
  for (const auto& label : judge_labels()) out[label] = scores[label];
  return out;
}

RewardBreakdown judge_reward(std::string_view pred_text,
                             const AssessmentRecord& ref,
                             const JudgeConfig& cfg) {
  cfg.validate();
  if (cfg.mode == JudgeConfig::Mode::mock) {
    return mock_judge_reward(pred_text, ref);
  }
  return http_judge_reward(pred_text, ref, cfg);
}

}  // namespace dimqa
