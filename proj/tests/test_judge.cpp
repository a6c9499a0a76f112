#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <atomic>
#include <cmath>
#include <thread>

#include "dimqa/judge.hpp"
#include "test_util.hpp"

// httplib must come after Eigen: it drags in <resolv.h>, whose `res`
// macro mangles Eigen's internals.
#include <httplib.h>
#include <nlohmann/json.hpp>

using namespace dimqa;
using namespace dimqa::testing;

namespace {

AssessmentRecord make_record(Rng& rng, int id = 0) {
  auto a = random_assessment(rng);
  while (a.artifacts.size() > 2) a.artifacts.pop_back();
  AssessmentRecord r;
  r.id = id;
  r.features = Eigen::VectorXd::Zero(kFeatureDim);
  r.scores = a.scores;
  r.artifacts = a.artifacts;
  r.long_form = render_reference_texts(r.scores, r.artifacts).full;
  return r;
}

// Minimal in-process judge endpoint.
class TestServer {
 public:
  explicit TestServer(httplib::Server::Handler handler) {
    server_.Post("/judge", std::move(handler));
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~TestServer() {
    server_.stop();
    thread_.join();
  }
  std::string url() const {
    return "http://127.0.0.1:" + std::to_string(port_) + "/judge";
  }

 private:
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
};

}  // namespace

TEST_CASE("mock judge") {
  Rng rng(3);

  SUBCASE("perfect prediction scores 9") {
    for (int i = 0; i < 100; ++i) {
      const auto record = make_record(rng, i);
      const auto breakdown = mock_judge_reward(record.long_form, record);
      CHECK(breakdown.total == doctest::Approx(9.0).epsilon(1e-9));
    }
  }

  SUBCASE("score reward decays linearly with the error") {
    const auto record = make_record(rng);
    auto scores = record.scores;
    // push naturalness to the opposite end of the scale
    const int ref = scores[QualityDimension::naturalness];
    scores[QualityDimension::naturalness] = ref <= 2 ? 5 : 1;
    const int gap = std::abs(scores[QualityDimension::naturalness] - ref);
    StructuredAssessment pred{scores, record.artifacts,
                              render_summary(scores, record.artifacts)};
    const auto breakdown =
        mock_judge_reward(serialize_assessment(pred), record);
    CHECK(breakdown.score_rewards[0] ==
          doctest::Approx(1.0 - gap / 4.0).epsilon(1e-12));
    if (gap == 4) CHECK(breakdown.score_rewards[0] == 0.0);
  }

  SUBCASE("matched pair earns iou times similarity") {
    StructuredAssessment a;
    a.scores.values = {4, 2, 4, 4, 4, 4};
    a.artifacts = {ArtifactSpan{ArtifactKind::noise, 1.0, 3.0,
                                "hissing background static"}};
    a.summary = render_summary(a.scores, a.artifacts);
    AssessmentRecord record;
    record.id = 0;
    record.features = Eigen::VectorXd::Zero(kFeatureDim);
    record.scores = a.scores;
    record.artifacts = a.artifacts;
    record.long_form = render_reference_texts(a.scores, a.artifacts).full;

    StructuredAssessment pred = a;
    pred.artifacts[0].start_s = 2.0;
    pred.artifacts[0].end_s = 4.0;  // iou 1/3, identical description
    const auto breakdown =
        mock_judge_reward(serialize_assessment(pred), record);
    CHECK(breakdown.artifact_rewards[0] ==
          doctest::Approx(1.0 / 3.0).epsilon(1e-9));
  }

  SUBCASE("monotone in the score gap") {
    const auto record = make_record(rng);
    const int ref = record.scores[QualityDimension::overall];
    double prev = 2.0;
    for (int gap = 0; gap <= 4; ++gap) {
      const int v = ref + gap <= 5 ? ref + gap : ref - gap;
      if (v < 1 || v > 5) continue;
      auto scores = record.scores;
      scores[QualityDimension::overall] = v;
      StructuredAssessment pred{scores, record.artifacts,
                                render_summary(scores, record.artifacts)};
      const auto b = mock_judge_reward(serialize_assessment(pred), record);
      const double reward = b.score_rewards[5];
      CHECK(reward <= prev + 1e-12);
      prev = reward;
    }
  }

  SUBCASE("labels mirror the component arrays") {
    const auto record = make_record(rng);
    const auto b = mock_judge_reward(record.long_form, record);
    CHECK(b.judge_rewards.size() == 9);
    CHECK(b.judge_rewards.at("naturalness") == b.score_rewards[0]);
    CHECK(b.judge_rewards.at("noise_artifacts") == b.artifact_rewards[0]);
  }
}

TEST_CASE("judge response parsing") {
  SUBCASE("well-formed response") {
    std::string text;
    for (const auto& label : judge_labels()) text += label + ": 0.75\n";
    const auto scores = parse_judge_response(text);
    CHECK(scores.size() == 9);
    for (const auto& [label, value] : scores) CHECK(value == 0.75);
  }

  SUBCASE("values clipped to [0, 1]") {
    std::string text;
    for (const auto& label : judge_labels()) text += label + ": 7.5\n";
    const auto scores = parse_judge_response(text);
    for (const auto& [label, value] : scores) CHECK(value == 1.0);
  }

  SUBCASE("missing label is malformed") {
    CHECK_THROWS_AS(parse_judge_response("naturalness: 0.5\n"),
                    JudgeResponseMalformed);
  }
}

TEST_CASE("prompt rendering") {
  Rng rng(5);
  const auto record = make_record(rng);
  const std::string prompt = render_judge_prompt(
      default_prompt_template(), "generated text here", record);
  CHECK(prompt.find("generated text here") != std::string::npos);
  CHECK(prompt.find("naturalness=" +
                    std::to_string(record.scores[
                        QualityDimension::naturalness])) != std::string::npos);
  for (const auto& label : judge_labels()) {
    CHECK(prompt.find(label) != std::string::npos);
  }
}

TEST_CASE("http judge client") {
  Rng rng(7);
  const auto record = make_record(rng);

  SUBCASE("scores arrive from the endpoint") {
    std::atomic<int> hits{0};
    TestServer server([&](const httplib::Request& req,
                          httplib::Response& res) {
      ++hits;
      const auto body = nlohmann::json::parse(req.body);
      CHECK(body.contains("prompt"));
      std::string text;
      double v = 0.1;
      for (const auto& label : judge_labels()) {
        text += label + ": " + std::to_string(v) + "\n";
        v += 0.1;
      }
      res.set_content(nlohmann::json{{"text", text}}.dump(),
                      "application/json");
    });
    JudgeConfig cfg;
    cfg.mode = JudgeConfig::Mode::http;
    cfg.endpoint_url = server.url();
    cfg.retries = 0;
    const auto breakdown = judge_reward("anything", record, cfg);
    CHECK(hits == 1);
    CHECK(breakdown.judge_rewards.size() == 9);
    CHECK(breakdown.total > 0.0);
    CHECK(breakdown.total <= 9.0);
  }

  SUBCASE("retries then falls back to mock") {
    JudgeConfig cfg;
    cfg.mode = JudgeConfig::Mode::http;
    cfg.endpoint_url = "http://127.0.0.1:1";  // nothing listens here
    cfg.retries = 1;
    cfg.backoff_base_s = 0.01;
    cfg.timeout_s = 0.2;
    cfg.fallback_to_mock = true;
    const auto breakdown = judge_reward(record.long_form, record, cfg);
    CHECK(breakdown.total == doctest::Approx(9.0).epsilon(1e-9));
  }

  SUBCASE("unavailable endpoint raises when fallback is off") {
    JudgeConfig cfg;
    cfg.mode = JudgeConfig::Mode::http;
    cfg.endpoint_url = "http://127.0.0.1:1";
    cfg.retries = 0;
    cfg.backoff_base_s = 0.01;
    cfg.timeout_s = 0.2;
    cfg.fallback_to_mock = false;
    CHECK_THROWS_AS(judge_reward("x", record, cfg), JudgeUnavailable);
  }

  SUBCASE("malformed response raises when fallback is off") {
    TestServer server([](const httplib::Request&, httplib::Response& res) {
      res.set_content(nlohmann::json{{"text", "not label lines"}}.dump(),
                      "application/json");
    });
    JudgeConfig cfg;
    cfg.mode = JudgeConfig::Mode::http;
    cfg.endpoint_url = server.url();
    cfg.retries = 0;
    cfg.backoff_base_s = 0.01;
    cfg.fallback_to_mock = false;
    CHECK_THROWS_AS(judge_reward("x", record, cfg), JudgeResponseMalformed);
  }

  SUBCASE("transient failure recovers within the retry budget") {
    std::atomic<int> calls{0};
    TestServer server([&](const httplib::Request&, httplib::Response& res) {
      if (++calls == 1) {
        res.status = 500;
        return;
      }
      std::string text;
      for (const auto& label : judge_labels()) text += label + ": 0.5\n";
      res.set_content(nlohmann::json{{"text", text}}.dump(),
                      "application/json");
    });
    JudgeConfig cfg;
    cfg.mode = JudgeConfig::Mode::http;
    cfg.endpoint_url = server.url();
    cfg.retries = 2;
    cfg.backoff_base_s = 0.01;
    cfg.fallback_to_mock = false;
    const auto breakdown = judge_reward("x", record, cfg);
    CHECK(calls == 2);
    CHECK(breakdown.total == doctest::Approx(4.5));
  }

  SUBCASE("http mode without an endpoint is rejected") {
    JudgeConfig cfg;
    cfg.mode = JudgeConfig::Mode::http;
    CHECK_THROWS_AS(judge_reward("x", record, cfg), std::invalid_argument);
  }
}
