#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "aide/codec.hpp"
#include "aide/evaluators.hpp"
#include "aide/model.hpp"
#include "support.hpp"

using namespace aide;
using aide::test::make_trace;

namespace {

Trace valid_trace() {
  Trace t = make_trace("t1", 1000, 900);
  t.project_id = "demo";
  Span s;
  s.span_id = "s1";
  s.kind = SpanKind::llm_call;
  s.name = "llm";
  s.start_time = 1000;
  s.end_time = 1900;
  s.token_usage = TokenUsage{10, 20};
  t.spans.push_back(s);
  return t;
}

std::string field_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const ValidationError& e) {
    return e.field();
  }
  return "<none>";
}

}  // namespace

TEST(Ids, AlphabetAndLength) {
  EXPECT_TRUE(is_valid_id("demo"));
  EXPECT_TRUE(is_valid_id("a.b-c_D9"));
  EXPECT_FALSE(is_valid_id(""));
  EXPECT_FALSE(is_valid_id("has space"));
  EXPECT_FALSE(is_valid_id("slash/"));
  EXPECT_TRUE(is_valid_id(std::string(128, 'x')));
  EXPECT_FALSE(is_valid_id(std::string(129, 'x')));
}

TEST(Ids, GeneratedIdsAreValidAndDistinct) {
  std::set<std::string> seen;
  for (int i = 0; i < 1000; ++i) {
    auto id = generate_id();
    EXPECT_EQ(id.size(), 32u);
    EXPECT_TRUE(is_valid_id(id));
    seen.insert(id);
  }
  EXPECT_EQ(seen.size(), 1000u);
}

TEST(Fnv, KnownVectors) {
  // Independent values from tests/oracles/experiment_sim.py.
  EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(fnv1a64("a"), 0xaf63dc4c8601ec8cULL);
}

TEST(Utf8, Validation) {
  EXPECT_TRUE(is_valid_utf8("plain"));
  EXPECT_TRUE(is_valid_utf8("caf\xc3\xa9"));
  EXPECT_FALSE(is_valid_utf8("\xc3"));
  EXPECT_FALSE(is_valid_utf8("\xff"));
  EXPECT_FALSE(is_valid_utf8("\xed\xa0\x80"));  // surrogate
  EXPECT_EQ(utf8_length("caf\xc3\xa9"), 4u);
}

TEST(ValidateTrace, MinimalTraceHasLatency900) {
  auto t = validate_trace(valid_trace());
  EXPECT_EQ(t.latency_ms(), 900);
}

TEST(ValidateTrace, ZeroSpansEqualTimesIsLegal) {
  auto t = make_trace("t0", 5000, 0);
  t.project_id = "demo";
  EXPECT_EQ(validate_trace(t).latency_ms(), 0);
}

TEST(ValidateTrace, ReportsFirstViolatedField) {
  auto bad_end = valid_trace();
  bad_end.end_time = bad_end.start_time - 1;
  EXPECT_EQ(field_of([&] { validate_trace(bad_end); }), "end_time");

  auto dangling = valid_trace();
  dangling.spans[0].parent_span = "missing";
  EXPECT_EQ(field_of([&] { validate_trace(dangling); }), "spans[0].parent_span");

  auto score = valid_trace();
  score.scores["x"] = 1.5;
  EXPECT_EQ(field_of([&] { validate_trace(score); }), "scores.x");

  auto big = valid_trace();
  big.spans[0].input = std::string(kMaxPayloadBytes + 1, 'a');
  EXPECT_EQ(field_of([&] { validate_trace(big); }), "spans[0].input");

  auto fb = valid_trace();
  fb.feedback = 2;
  EXPECT_EQ(field_of([&] { validate_trace(fb); }), "feedback");

  auto tokens = valid_trace();
  tokens.token_usage.prompt_tokens = -1;
  EXPECT_NE(field_of([&] { validate_trace(tokens); }).find("token_usage"), std::string::npos);
}

TEST(ValidateTrace, SpanCycleRejected) {
  auto t = valid_trace();
  Span b = t.spans[0];
  b.span_id = "s2";
  b.parent_span = "s1";
  t.spans[0].parent_span = "s2";
  t.spans.push_back(b);
  EXPECT_THROW(validate_trace(t), ValidationError);
}

TEST(ValidateTrace, SpanClockSkewTolerated) {
  auto t = valid_trace();
  t.spans[0].start_time = 0;
  t.spans[0].end_time = 99999;
  EXPECT_NO_THROW(validate_trace(t));
}

TEST(NumericField, Paths) {
  auto t = valid_trace();
  t.scores["relevance"] = 0.5;
  t.feedback = -1;
  t.prompt_ref = PromptRef{"qa", 3};
  EXPECT_EQ(*numeric_field(t, "latency_ms"), 900);
  EXPECT_EQ(*numeric_field(t, "scores.relevance"), 0.5);
  EXPECT_FALSE(numeric_field(t, "scores.missing"));
  EXPECT_EQ(*numeric_field(t, "feedback"), -1);
  EXPECT_EQ(*numeric_field(t, "prompt_ref.version"), 3);
  EXPECT_EQ(*numeric_field(t, "token_usage.completion_tokens"), 20);
  EXPECT_TRUE(is_numeric_path("scores.any"));
  EXPECT_FALSE(is_numeric_path("name"));
}

TEST(RunningStats, WelfordBaseAndHandArithmetic) {
  RunningStats s;
  s.add(0.8);
  EXPECT_EQ(s.n, 1);
  EXPECT_DOUBLE_EQ(s.mean, 0.8);
  EXPECT_EQ(s.m2, 0.0);
  RunningStats t;
  t.add(0.5);
  t.add(0.7);
  EXPECT_NEAR(t.mean, 0.6, 1e-15);
  EXPECT_NEAR(t.sample_variance(), 0.02, 1e-15);
}

TEST(RunningStats, EqualInputsGiveExactMeanAndZeroSpread) {
  RunningStats s;
  for (int i = 0; i < 10; ++i) s.add(0.9);
  EXPECT_EQ(s.mean, 0.9);
  EXPECT_EQ(s.m2, 0.0);
}

TEST(RunningStats, MatchesTwoPassOracle) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> xs(1000);
  RunningStats s;
  for (auto& x : xs) {
    x = u(rng);
    s.add(x);
  }
  double sum = 0;
  for (double x : xs) sum += x;
  const double mean = sum / xs.size();
  double ss = 0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  const double var = ss / (xs.size() - 1);
  EXPECT_LE(std::abs(s.mean - mean) / mean, 1e-12);
  EXPECT_LE(std::abs(s.sample_variance() - var) / var, 1e-12);
}

// ---- codec

TEST(Codec, CanonicalSortsKeysWithoutWhitespace) {
  Json j = Json::parse(R"({"b":1,"a":[1.5,{"d":true,"c":null}]})");
  EXPECT_EQ(canonical(j), R"({"a":[1.5,{"c":null,"d":true}],"b":1})");
}

TEST(Codec, ShortestRoundTripFloats) {
  EXPECT_EQ(canonical(Json(0.1)), "0.1");
  EXPECT_EQ(canonical(Json(0.7)), "0.7");
  EXPECT_EQ(canonical(Json(1.0 / 3.0)), "0.3333333333333333");
  EXPECT_EQ(canonical(Json(std::int64_t{1700000000000})), "1700000000000");
}

TEST(Codec, TraceRoundTripByteExact) {
  auto t = valid_trace();
  t.scores["relevance"] = 0.85;
  t.feedback = 1;
  t.tags = {"ci-run:17", "b"};
  t.prompt_ref = PromptRef{"qa-system", 2};
  t.spans[0].parent_span.reset();
  t.spans[0].error = "boom";
  const auto wire = canonical(to_json(t));
  const auto back = trace_from_json(Json::parse(wire));
  EXPECT_EQ(back, t);
  EXPECT_EQ(canonical(to_json(back)), wire);
}

TEST(Codec, RandomTracesRoundTrip) {
  std::mt19937 rng(11);
  for (int i = 0; i < 200; ++i) {
    Trace t = make_trace("r" + std::to_string(i), rng() % 100000, rng() % 5000);
    t.project_id = "p";
    if (rng() % 2) t.scores["m" + std::to_string(rng() % 3)] = (rng() % 1001) / 1000.0;
    if (rng() % 2) t.feedback = static_cast<int>(rng() % 3) - 1;
    if (rng() % 2) t.tags.insert("tag" + std::to_string(rng() % 5));
    if (rng() % 2) t.prompt_ref = PromptRef{"p" + std::to_string(rng() % 3), 1 + rng() % 4};
    t.output = std::string(rng() % 50, 'x') + "\xc3\xa9\n\"";
    const auto wire = canonical(to_json(t));
    EXPECT_EQ(canonical(to_json(trace_from_json(Json::parse(wire)))), wire);
  }
}

TEST(Codec, PromptAndBindingRoundTrip) {
  PromptVersion p{"qa", 2, "Answer {q}\n", {{"author", "x"}}, 123, "ci", "ci-opt-run-17"};
  const auto wire = canonical(to_json(p));
  EXPECT_EQ(canonical(to_json(prompt_version_from_json(Json::parse(wire)))), wire);
  ActiveBinding b{"demo", "qa", 2, std::string("agent-1"), std::nullopt};
  const auto bw = canonical(to_json(b));
  EXPECT_EQ(canonical(to_json(binding_from_json(Json::parse(bw)))), bw);
}

TEST(Codec, FilterQueryRoundTrip) {
  Json q = Json::parse(R"({"project_id":"demo","predicates":[{"field":"scores.hallucination","op":"ge","value":0.6},
    {"field":"tags","op":"contains","value":"x"}],"time_range":{"from":0,"to":10},
    "order_by":{"field":"start_time","dir":"asc"},"limit":5})");
  auto fq = filter_query_from_json(q);
  EXPECT_EQ(fq.limit, 5);
  EXPECT_EQ(fq.predicates.size(), 2u);
  EXPECT_EQ(canonical(to_json(filter_query_from_json(to_json(fq)))), canonical(to_json(fq)));
}

TEST(Codec, DecoderNamesOffendingField) {
  EXPECT_EQ(field_of([] { trace_from_json(Json::parse(R"({"start_time":"x","end_time":1})")); }), "start_time");
  EXPECT_EQ(field_of([] { trace_from_json(Json::parse(R"({"start_time":1,"end_time":1,"bogus":1})")); }), "bogus");
  EXPECT_EQ(field_of([] { trace_from_json(Json::parse(R"({"start_time":1,"end_time":1,"feedback":3})")); }),
            "feedback");
}

// ---- evaluators

namespace {

EvaluatorSpec spec_from(const char* text) { return evaluator_from_json(Json::parse(text)); }

Trace with_output(const std::string& out) {
  auto t = make_trace("e", 0, 10);
  t.output = out;
  return t;
}

}  // namespace

TEST(Evaluators, RegexAbsentOnCleanOutput) {
  auto s = spec_from(R"({"name":"profanity","kind":"regex_absent","params":{"pattern":"\\bdamn\\b"}})");
  EXPECT_EQ(evaluate(s, with_output("a perfectly clean answer")), 1.0);
  EXPECT_EQ(evaluate(s, with_output("well damn it")), 0.0);
}

TEST(Evaluators, RegexMatchCitation) {
  auto s = spec_from(R"({"name":"citation","kind":"regex_match","params":{"pattern":"\\[source: [^\\]]+\\]"}})");
  EXPECT_EQ(evaluate(s, with_output("no citation here")), 0.0);
  EXPECT_EQ(evaluate(s, with_output("fact [source: handbook]")), 1.0);
}

TEST(Evaluators, KeywordCoverageFraction) {
  auto s = spec_from(R"({"name":"cov","kind":"keyword_coverage","params":{"keywords":["refund","policy"]}})");
  EXPECT_EQ(evaluate(s, with_output("Your REFUND is on its way")), 0.5);
  auto inv = spec_from(R"({"name":"hall","kind":"keyword_coverage","params":{"keywords":["a","b","c","d"],"invert":true}})");
  EXPECT_EQ(evaluate(inv, with_output("a")), 0.75);
}

TEST(Evaluators, LengthFalloffMatchesReferenceScript) {
  // Values printed by tests/oracles/length_falloff.py for [100, 200].
  const std::vector<std::pair<int, double>> fixture = {
      {150, 1.0}, {300, 0.5}, {250, 0.75}, {399, 0.0050000000000000044}, {400, 0.0},
      {500, 0.0}, {99, 0.98},  {75, 0.5},   {50, 0.0},                    {0, 0.0}};
  for (auto [n, expected] : fixture) EXPECT_EQ(length_range_score(n, 100, 200), expected) << n;
  auto s = spec_from(R"({"name":"len","kind":"length_range","params":{"min":100,"max":200}})");
  EXPECT_EQ(evaluate(s, with_output(std::string(150, 'x'))), 1.0);
  EXPECT_EQ(evaluate(s, with_output(std::string(300, 'x'))), 0.5);
  // Code points, not bytes.
  std::string accents;
  for (int i = 0; i < 150; ++i) accents += "\xc3\xa9";
  EXPECT_EQ(evaluate(s, with_output(accents)), 1.0);
}

TEST(Evaluators, NumericRange) {
  auto s = spec_from(R"({"name":"fast","kind":"numeric_range","params":{"field":"latency_ms","min":0,"max":500}})");
  EXPECT_EQ(evaluate(s, make_trace("a", 0, 400)), 1.0);
  EXPECT_EQ(evaluate(s, make_trace("a", 0, 900)), 0.0);
}

TEST(Evaluators, InvalidSpecsRejected) {
  EXPECT_THROW(validate_spec(spec_from(R"({"name":"x","kind":"regex_match","params":{"pattern":"("}})")),
               ValidationError);
  EXPECT_THROW(validate_spec(spec_from(R"({"name":"x","kind":"length_range","params":{"min":5,"max":1}})")),
               ValidationError);
  EXPECT_THROW(validate_spec(spec_from(R"({"name":"x","kind":"keyword_coverage","params":{"keywords":[]}})")),
               ValidationError);
  auto a = spec_from(R"({"name":"x","kind":"regex_match","params":{"pattern":"a"}})");
  EXPECT_THROW(validate_specs({a, a}), ValidationError);
}

TEST(Evaluators, RunAllEmptyAndPartialFailure) {
  EXPECT_TRUE(run_all({}, with_output("x")).scores.empty());
  auto ok = spec_from(R"({"name":"ok","kind":"regex_match","params":{"pattern":"x"}})");
  auto bad = spec_from(R"({"name":"bad","kind":"numeric_range","params":{"field":"scores.missing","min":0,"max":1}})");
  auto out = run_all({ok, bad}, with_output("x"));
  EXPECT_EQ(out.scores.size(), 1u);
  EXPECT_EQ(out.scores.at("ok"), 1.0);
  EXPECT_EQ(out.errors.count("bad"), 1u);
  EXPECT_EQ(EvalOutcome::error_tag("bad"), "evaluator_error:bad");
}

TEST(Evaluators, DisabledSpecsSkipped) {
  auto off = spec_from(R"({"name":"off","kind":"regex_match","enabled":false,"params":{"pattern":"x"}})");
  EXPECT_TRUE(run_all({off}, with_output("x")).scores.empty());
}

TEST(EvaluatorProperties, RangeAndDeterminismOnRandomOutputs) {
  const std::vector<EvaluatorSpec> specs = {
      spec_from(R"({"name":"a","kind":"regex_match","params":{"pattern":"[aeiou]{2}"}})"),
      spec_from(R"({"name":"b","kind":"regex_absent","params":{"pattern":"zz","ignore_case":true}})"),
      spec_from(R"({"name":"c","kind":"length_range","params":{"min":10,"max":40}})"),
      spec_from(R"({"name":"d","kind":"keyword_coverage","params":{"keywords":["ab","cd","ef"]}})"),
      spec_from(R"({"name":"e","kind":"numeric_range","params":{"field":"latency_ms","min":100,"max":200}})"),
  };
  EvaluatorSet set(specs);
  std::mt19937 rng(3);
  for (int i = 0; i < 500; ++i) {
    std::string out(rng() % 120, ' ');
    for (auto& c : out) c = static_cast<char>('a' + rng() % 26);
    auto t = make_trace("p", 0, rng() % 400);
    t.output = out;
    auto first = set.run_all(t);
    auto second = set.run_all(t);
    ASSERT_EQ(first.scores.size(), specs.size());
    for (const auto& [name, v] : first.scores) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
      EXPECT_EQ(std::bit_cast<std::uint64_t>(v), std::bit_cast<std::uint64_t>(second.scores.at(name)));
    }
  }
}
