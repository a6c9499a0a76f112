#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <set>

#include "dimqa/grammar.hpp"
#include "dimqa/rng.hpp"
#include "test_util.hpp"

using namespace dimqa;

TEST_CASE("vocabulary layout") {
  const auto vocab = build_vocabulary();
  CHECK(vocab.size() == 128);
  CHECK(vocab.id("<pad>") == 0);
  CHECK(vocab.id("<bos>") == 1);
  CHECK(vocab.id("<eos>") == 2);
  CHECK(vocab.id("<unk>") == 3);

  SUBCASE("bijective over all slots") {
    std::set<std::string> texts;
    for (int i = 0; i < vocab.size(); ++i) {
      const auto& t = vocab.text(i);
      CHECK(texts.insert(t).second);
      CHECK(vocab.id(t) == i);
    }
  }

  SUBCASE("deterministic construction") {
    const auto again = build_vocabulary();
    for (int i = 0; i < vocab.size(); ++i) {
      CHECK(vocab.text(i) == again.text(i));
    }
  }

  SUBCASE("named lookups roundtrip") {
    const auto id = vocab.id("naturalness");
    REQUIRE(id.has_value());
    CHECK(vocab.text(*id) == "naturalness");
    CHECK(vocab.id("speed") == std::nullopt);
  }

  SUBCASE("covers dimensions, digits, kinds, buckets and lexicon") {
    for (const auto d : all_dimensions()) {
      CHECK(vocab.id(std::string(dimension_name(d))).has_value());
    }
    for (int v = 1; v <= 5; ++v) {
      CHECK(vocab.id(std::to_string(v)).has_value());
    }
    for (const auto k : all_artifact_kinds()) {
      CHECK(vocab.id(std::string(artifact_kind_name(k))).has_value());
    }
    for (int b = 0; b < kNumTimeBuckets; ++b) {
      CHECK(vocab.id(TimeBucket{b}.text()).has_value());
    }
    for (const auto kind : all_artifact_kinds()) {
      for (const auto& phrase : descriptor_phrases(kind)) {
        // every word of every phrase lexes without UNK
        for (const auto id : lex_text(phrase)) {
          CHECK(id != TokenVocabulary::kUnk);
        }
      }
    }
  }
}

TEST_CASE("time quantization") {
  CHECK(quantize_time(0.0).index == 0);
  CHECK(quantize_time(10.0).index == 20);
  CHECK(quantize_time(1.26).index == 3);
  CHECK(dequantize_time(TimeBucket{3}) == doctest::Approx(1.5));
  CHECK(quantize_time(1.25).index == 3);  // ties round up
  CHECK_THROWS_AS(quantize_time(-0.1), TimeOutOfRange);
  CHECK_THROWS_AS(quantize_time(10.5), TimeOutOfRange);
  CHECK_THROWS_AS(dequantize_time(TimeBucket{21}), TimeOutOfRange);

  Rng rng(7);
  for (int i = 0; i < 2000; ++i) {
    const double t = rng.uniform(0.0, 10.0);
    CHECK(std::abs(dequantize_time(quantize_time(t)) - t) <= 0.25 + 1e-12);
  }
}

TEST_CASE("tokenize basics") {
  const std::string scores_line =
      "scores: naturalness=4 noise=3 distortion=5 effort=4 continuity=4 "
      "overall=4";
  const auto seq = tokenize(scores_line);
  CHECK(seq.front() == TokenVocabulary::kBos);
  CHECK(seq.back() == TokenVocabulary::kEos);
  for (const int id : seq) CHECK(id != TokenVocabulary::kUnk);
  CHECK(seq.size() == 21);  // BOS + "scores:" + 6x(name,=,digit) + EOS

  CHECK(tokenize("zzzz") ==
        TokenSequence{TokenVocabulary::kBos, TokenVocabulary::kUnk,
                      TokenVocabulary::kEos});

  CHECK(detokenize(tokenize(scores_line)) == scores_line);

  SUBCASE("overlong sequences are rejected") {
    std::string text;
    for (int i = 0; i < 70; ++i) text += "noise ";
    CHECK_THROWS_AS(tokenize(text), SequenceTooLong);
  }

  SUBCASE("detokenize validates ids") {
    CHECK_THROWS_AS(detokenize(TokenSequence{1, 600, 2}), UnknownTokenId);
    CHECK_THROWS_AS(detokenize(TokenSequence{1, -4, 2}), UnknownTokenId);
  }

  SUBCASE("pad/bos/eos stripped") {
    const auto& vocab = vocabulary();
    TokenSequence seq2{TokenVocabulary::kBos, *vocab.id("noise"),
                       TokenVocabulary::kEos, TokenVocabulary::kPad,
                       TokenVocabulary::kPad};
    CHECK(detokenize(seq2) == "noise");
  }

  SUBCASE("decimal literals snap to the grid") {
    const auto& vocab = vocabulary();
    const auto ids = lex_text("1.26");
    REQUIRE(ids.size() == 1);
    CHECK(vocab.bucket_of(ids[0]) == TimeBucket{3});
  }
}

TEST_CASE("tokenizer roundtrip properties") {
  Rng rng(11);
  SUBCASE("canonical serializations roundtrip through tokens") {
    for (int i = 0; i < 300; ++i) {
      StructuredAssessment a = dimqa::testing::random_assessment(rng);
      // keep within the sequence cap: canonical records carry <= 2 spans
      while (a.artifacts.size() > 2) a.artifacts.pop_back();
      a.summary = render_summary(a.scores, a.artifacts);
      const std::string text = serialize_assessment(a);
      CHECK(detokenize(tokenize(text)) == text);
    }
  }
  SUBCASE("token sequences survive text rendering") {
    for (int i = 0; i < 500; ++i) {
      TokenSequence seq{TokenVocabulary::kBos};
      const int len = static_cast<int>(rng.uniform_int(1, 40));
      for (int j = 0; j < len; ++j) {
        seq.push_back(
            static_cast<int>(rng.uniform_int(4, TokenVocabulary::kSize - 1)));
      }
      seq.push_back(TokenVocabulary::kEos);
      CHECK(tokenize(detokenize(seq)) == seq);
    }
  }
  SUBCASE("space-joined lexeme text roundtrips") {
    const auto& vocab = vocabulary();
    for (int i = 0; i < 200; ++i) {
      std::string text;
      const int len = static_cast<int>(rng.uniform_int(1, 30));
      for (int j = 0; j < len; ++j) {
        // plain word-like lexemes join with single spaces
        const int id = static_cast<int>(rng.uniform_int(13, 23));
        if (!text.empty()) text += ' ';
        text += vocab.text(id);
      }
      CHECK(detokenize(tokenize(text)) == text);
    }
  }
}

TEST_CASE("parse examples") {
  SUBCASE("well-formed assessment") {
    const std::string text =
        "scores: naturalness=4 noise=3 distortion=5 effort=4 continuity=4 "
        "overall=4\nartifacts:\n- noise @ 1.5..3.0 : hissing background "
        "static\nsummary: speech is mostly clear with slight background noise";
    const auto parsed = parse_assessment(text);
    CHECK(parsed.ok());
    CHECK(parsed.scores.get(QualityDimension::naturalness) == 4);
    CHECK(parsed.scores.get(QualityDimension::noise) == 3);
    CHECK(parsed.scores.get(QualityDimension::distortion) == 5);
    CHECK(parsed.scores.get(QualityDimension::overall) == 4);
    REQUIRE(parsed.artifacts.size() == 1);
    CHECK(parsed.artifacts[0].kind == ArtifactKind::noise);
    CHECK(parsed.artifacts[0].start_s == doctest::Approx(1.5));
    CHECK(parsed.artifacts[0].end_s == doctest::Approx(3.0));
    CHECK(parsed.artifacts[0].description == "hissing background static");
    CHECK(parsed.summary ==
          "speech is mostly clear with slight background noise");
  }

  SUBCASE("out-of-range score keeps other dimensions") {
    const auto parsed = parse_assessment(
        "scores: naturalness=4 noise=9 distortion=5 effort=4 continuity=4 "
        "overall=4\nartifacts:\nsummary: fine");
    CHECK(!parsed.ok());
    CHECK(parsed.scores.get(QualityDimension::naturalness) == 4);
    CHECK(parsed.scores.get(QualityDimension::noise) == std::nullopt);
    REQUIRE(!parsed.errors.empty());
    CHECK(parsed.errors.front().message.find("noise") != std::string::npos);
    CHECK(parsed.errors.front().line == 1);
  }

  SUBCASE("empty artifact list") {
    const auto parsed = parse_assessment(
        "scores: naturalness=4 noise=3 distortion=5 effort=4 continuity=4 "
        "overall=4\nartifacts:\nsummary: clean speech");
    CHECK(parsed.ok());
    CHECK(parsed.artifacts.empty());
  }

  SUBCASE("duplicate dimension warns, last wins") {
    const auto parsed = parse_assessment(
        "scores: naturalness=4 naturalness=2 noise=3 distortion=5 effort=4 "
        "continuity=4 overall=4\nartifacts:\nsummary: ok");
    CHECK(parsed.scores.get(QualityDimension::naturalness) == 2);
    CHECK(!parsed.warnings.empty());
    CHECK(parsed.ok());  // warnings do not invalidate
  }

  SUBCASE("missing sections reported") {
    const auto parsed = parse_assessment("hello world");
    CHECK(!parsed.ok());
    CHECK(parsed.errors.size() >= 3);
  }
}

TEST_CASE("serialize") {
  SUBCASE("no artifacts gives three lines") {
    StructuredAssessment a;
    a.scores.values = {5, 5, 5, 5, 5, 5};
    a.summary = render_summary(a.scores, a.artifacts);
    const auto text = serialize_assessment(a);
    CHECK(std::count(text.begin(), text.end(), '\n') == 2);
    CHECK(text ==
          "scores: naturalness=5 noise=5 distortion=5 effort=5 continuity=5 "
          "overall=5\nartifacts:\nsummary: speech is natural and clean with "
          "no artifacts");
  }

  SUBCASE("artifacts emitted sorted by start") {
    StructuredAssessment a;
    a.scores.values = {3, 3, 3, 3, 3, 3};
    a.artifacts = {
        ArtifactSpan{ArtifactKind::pause, 4.0, 5.0, "abrupt silent gap"},
        ArtifactSpan{ArtifactKind::noise, 1.0, 2.0,
                     "hissing background static"},
    };
    a.summary = "speech is acceptable with noise and pause artifacts";
    const auto text = serialize_assessment(a);
    CHECK(text.find("- noise") < text.find("- pause"));
  }

  SUBCASE("invariant violations raise") {
    StructuredAssessment a;
    a.scores.values = {6, 5, 5, 5, 5, 5};
    a.summary = "x";
    CHECK_THROWS_AS(serialize_assessment(a), InvariantViolation);

    StructuredAssessment b;
    b.scores.values = {5, 5, 5, 5, 5, 5};
    b.summary = "x";
    b.artifacts = {ArtifactSpan{ArtifactKind::noise, 3.0, 2.0, "d"}};
    CHECK_THROWS_AS(serialize_assessment(b), InvariantViolation);
  }

  SUBCASE("roundtrip on random valid assessments") {
    Rng rng(23);
    for (int i = 0; i < 1000; ++i) {
      const auto a = dimqa::testing::random_assessment(rng);
      const auto parsed = parse_assessment(serialize_assessment(a));
      REQUIRE(parsed.ok());
      CHECK(parsed.assessment() == a);
    }
  }
}

TEST_CASE("parser totality on fuzzed input") {
  Rng rng(31);
  const std::string alphabet =
      "abcdefghijklmnopqrstuvwxyz0123456789 .:=@-\n\t\r\x01\xff";
  for (int i = 0; i < 10000; ++i) {
    std::string text;
    const int len = static_cast<int>(rng.uniform_int(0, 200));
    for (int j = 0; j < len; ++j) {
      text += alphabet[static_cast<std::size_t>(
          rng.uniform_int(0, static_cast<std::int64_t>(alphabet.size()) - 1))];
    }
    const auto parsed = parse_assessment(text);  // must not crash
    if (text.empty()) CHECK(!parsed.ok());
  }
}

TEST_CASE("reference text rendering") {
  DimensionScores perfect;
  perfect.values = {5, 5, 5, 5, 5, 5};

  SUBCASE("perfect record summary") {
    const auto texts = render_reference_texts(perfect, {});
    CHECK(texts.calibration ==
          "scores: naturalness=5 noise=5 distortion=5 effort=5 continuity=5 "
          "overall=5");
    CHECK(texts.full.find("summary: speech is natural and clean with no "
                          "artifacts") != std::string::npos);
  }

  SUBCASE("deterministic") {
    DimensionScores s;
    s.values = {2, 3, 4, 1, 5, 3};
    const std::vector<ArtifactSpan> spans = {
        ArtifactSpan{ArtifactKind::distortion, 2.0, 3.5,
                     "harsh clipping peaks"}};
    CHECK(render_reference_texts(s, spans).full ==
          render_reference_texts(s, spans).full);
  }

  SUBCASE("pause artifact reaches the summary") {
    DimensionScores s;
    s.values = {3, 3, 3, 3, 1, 3};
    const std::vector<ArtifactSpan> spans = {
        ArtifactSpan{ArtifactKind::pause, 6.0, 7.0, "long unnatural pause"}};
    const auto texts = render_reference_texts(s, spans);
    CHECK(texts.full.find("pause") != std::string::npos);
  }

  SUBCASE("full text parses back and stays within the token cap") {
    Rng rng(41);
    for (int i = 0; i < 200; ++i) {
      DimensionScores s;
      for (const auto d : all_dimensions()) {
        s[d] = static_cast<int>(rng.uniform_int(1, 5));
      }
      std::vector<ArtifactSpan> spans;
      const int n = static_cast<int>(rng.uniform_int(0, 2));
      for (int j = 0; j < n; ++j) {
        const auto kind = all_artifact_kinds()[static_cast<std::size_t>(
            rng.uniform_int(0, 2))];
        const int start = static_cast<int>(rng.uniform_int(0, 16));
        spans.push_back(ArtifactSpan{
            kind, start * 0.5,
            start * 0.5 + 0.5 * rng.uniform_int(1, 4),
            dimqa::testing::random_description(rng, kind)});
      }
      normalize_artifact_order(spans);
      const auto texts = render_reference_texts(s, spans);
      CHECK(parse_assessment(texts.full).ok());
      CHECK(tokenize(texts.full).size() <= kMaxSequenceLength);
      CHECK(tokenize(texts.calibration).size() <= kMaxSequenceLength);
    }
  }
}
