#pragma once

#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "dimqa/rewards.hpp"
#include "dimqa/synthdata.hpp"

namespace dimqa {

struct JudgeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct JudgeUnavailable : JudgeError {
  using JudgeError::JudgeError;
};
struct JudgeResponseMalformed : JudgeError {
  using JudgeError::JudgeError;
};

// One label per scored dimension plus one per artifact kind.
const std::vector<std::string>& judge_labels();

struct JudgeConfig {
  enum class Mode { mock, http };

  Mode mode = Mode::mock;
  std::string endpoint_url;     // required in http mode
  std::string prompt_template;  // empty selects the built-in template
  double timeout_s = 5.0;
  int retries = 3;
  bool fallback_to_mock = true;
  double backoff_base_s = 0.5;  // doubled per retry
  int max_in_flight = 4;

  void validate() const;
};

const std::string& default_prompt_template();
std::string load_prompt_template(const std::string& path);

// Fills {assessment}, {reference_scores} and {reference_artifacts}.
std::string render_judge_prompt(std::string_view prompt_template,
                                std::string_view pred_text,
                                const AssessmentRecord& ref);

// Deterministic stand-in for an external judge. Scored dimensions earn
// 1 - |pred - ref| / 4 (0 if unparsed); artifact kinds earn the mean over
// reference artifacts of IoU x description similarity. Total in [0, 9].
RewardBreakdown mock_judge_reward(std::string_view pred_text,
                                  const AssessmentRecord& ref);

// Parses "<label>: <score>" lines, one per judge label, clipped to [0, 1].
std::map<std::string, double> parse_judge_response(std::string_view text);

RewardBreakdown judge_reward(std::string_view pred_text,
                             const AssessmentRecord& ref,
                             const JudgeConfig& cfg);

}  // namespace dimqa
