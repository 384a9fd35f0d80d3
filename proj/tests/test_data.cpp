#include <gtest/gtest.h>

#include <random>
#include <thread>

#include "aide/service.hpp"
#include "fold_oracle.hpp"
#include "support.hpp"

using namespace aide;
using namespace aide::test;

namespace {

ErrorKind kind_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  return ErrorKind::Internal;
}

Predicate pred(const std::string& field, FilterOp op, Json value = nullptr) { return {field, op, std::move(value)}; }

EvaluatorSpec spec(const char* text) { return evaluator_from_json(Json::parse(text)); }

std::vector<std::string> ids(const SearchPage& page) {
  std::vector<std::string> out;
  for (const auto& t : page.traces) out.push_back(t->trace_id);
  return out;
}

}  // namespace

// ---- ingest

TEST(Ingest, MinimalTraceCommitted) {
  Service s(ServiceConfig{});
  Trace t = make_trace("t1", 1000, 900);
  Span sp;
  sp.span_id = "s";
  sp.kind = SpanKind::llm_call;
  sp.start_time = 1000;
  sp.end_time = 1900;
  sp.token_usage = TokenUsage{10, 20};
  t.spans.push_back(sp);
  auto r = s.ingest().log_trace("demo", t);
  EXPECT_EQ(r.trace_id, "t1");
  EXPECT_FALSE(r.duplicate);
  EXPECT_EQ(s.traces().get("demo", "t1")->trace->latency_ms(), 900);
}

TEST(Ingest, GeneratesIdWhenAbsent) {
  Service s(ServiceConfig{});
  auto t = make_trace("", 0);
  auto r = s.ingest().log_trace("demo", t);
  EXPECT_EQ(r.trace_id.size(), 32u);
}

TEST(Ingest, IdenticalResubmitIsIdempotentConflictIsError) {
  Service s(ServiceConfig{});
  auto t = make_trace("t1", 1000);
  auto first = s.ingest().log_trace("demo", t);
  auto again = s.ingest().log_trace("demo", t);
  EXPECT_TRUE(again.duplicate);
  EXPECT_EQ(again.seq, first.seq);
  EXPECT_EQ(s.queries().count("demo"), 1);
  t.output = "different";
  EXPECT_EQ(kind_of([&] { s.ingest().log_trace("demo", t); }), ErrorKind::DuplicateTraceId);
}

TEST(Ingest, ResubmitIsIdempotentEvenWithEvaluators) {
  ServiceConfig c;
  c.evaluators["*"] = {spec(R"({"name":"citation","kind":"regex_match","params":{"pattern":"source"}})")};
  Service s(c);
  auto t = make_trace("t1", 1000);
  s.ingest().log_trace("demo", t);
  EXPECT_TRUE(s.ingest().log_trace("demo", t).duplicate);
}

TEST(Ingest, MissingCitationScoresZero) {
  ServiceConfig c;
  c.evaluators["*"] = {spec(R"({"name":"citation","kind":"regex_match","params":{"pattern":"\\[source: [^]]+\\]"}})")};
  Service s(c);
  s.ingest().log_trace("demo", make_trace("t1", 0));
  EXPECT_EQ(s.traces().get("demo", "t1")->trace->scores.at("citation"), 0.0);
}

TEST(Ingest, EvaluatorErrorBecomesTagAndNeverBlocks) {
  ServiceConfig c;
  c.evaluators["*"] = {spec(R"({"name":"ok","kind":"regex_match","params":{"pattern":"answer"}})"),
                       spec(R"({"name":"needs","kind":"numeric_range","params":{"field":"scores.absent","min":0,"max":1}})")};
  Service s(c);
  s.ingest().log_trace("demo", make_trace("t1", 0));
  const auto& t = *s.traces().get("demo", "t1")->trace;
  EXPECT_EQ(t.scores.at("ok"), 1.0);
  EXPECT_FALSE(t.scores.contains("needs"));
  EXPECT_TRUE(t.tags.contains("evaluator_error:needs"));
}

TEST(Ingest, ProjectOverrideReplacesDefaults) {
  ServiceConfig c;
  c.evaluators["*"] = {spec(R"({"name":"a","kind":"regex_match","params":{"pattern":"x"}})")};
  Service s(c);
  s.evaluators().put("demo", {spec(R"({"name":"b","kind":"regex_match","params":{"pattern":"answer"}})")}, 0);
  s.ingest().log_trace("demo", make_trace("t1", 0));
  s.ingest().log_trace("other", make_trace("t1", 0));
  EXPECT_EQ(s.traces().get("demo", "t1")->trace->scores.count("b"), 1u);
  EXPECT_EQ(s.traces().get("demo", "t1")->trace->scores.count("a"), 0u);
  EXPECT_EQ(s.traces().get("other", "t1")->trace->scores.count("a"), 1u);
}

TEST(Ingest, BatchPartialFailureAtIndex) {
  Service s(ServiceConfig{});
  std::vector<Json> items = {to_json(make_trace("a", 1)), Json{{"start_time", 5}, {"end_time", 1}},
                             to_json(make_trace("c", 3))};
  items[0].erase("project_id");
  items[2].erase("project_id");
  auto res = s.ingest().log_batch("demo", items);
  ASSERT_EQ(res.size(), 3u);
  EXPECT_TRUE(res[0].ok);
  EXPECT_TRUE(res[1].error);
  EXPECT_EQ(res[1].error->first, ErrorKind::ValidationError);
  EXPECT_EQ(*res[1].field, "end_time");
  EXPECT_TRUE(res[2].ok);
  EXPECT_LT(res[0].ok->seq, res[2].ok->seq);
  EXPECT_EQ(s.queries().count("demo"), 2);
}

TEST(Ingest, EmptyBatchAndLimits) {
  Service s(ServiceConfig{});
  EXPECT_TRUE(s.ingest().log_batch("demo", {}).empty());
  std::vector<Json> items;
  for (int i = 0; i < 500; ++i) items.push_back(Json{{"trace_id", "b" + std::to_string(i)}, {"start_time", i}, {"end_time", i}});
  auto res = s.ingest().log_batch("demo", items);
  EXPECT_EQ(res.size(), 500u);
  EXPECT_EQ(s.queries().count("demo"), 500);
  items.push_back(items.front());
  EXPECT_EQ(kind_of([&] { s.ingest().log_batch("demo", items); }), ErrorKind::BatchTooLarge);
}

TEST(Ingest, DeferredBatchEvaluationStillScores) {
  ServiceConfig c;
  c.ingest.defer_batch_evaluation = true;
  c.evaluators["*"] = {spec(R"({"name":"ok","kind":"regex_match","params":{"pattern":"answer"}})")};
  Service s(c);
  auto item = to_json(make_trace("a", 1));
  item.erase("project_id");
  s.ingest().log_batch("demo", {item});
  EXPECT_EQ(s.traces().get("demo", "a")->trace->scores.at("ok"), 1.0);
}

TEST(Ingest, ScoresAppendOnly) {
  Service s(ServiceConfig{});
  s.ingest().log_trace("demo", with_score(make_trace("t1", 0), "relevance", 0.5));
  auto t = s.ingest().append_score("demo", "t1", "helpful", 0.9);
  EXPECT_EQ(t->scores.at("helpful"), 0.9);
  EXPECT_EQ(t->scores.at("relevance"), 0.5);
  EXPECT_EQ(kind_of([&] { s.ingest().append_score("demo", "t1", "relevance", 0.1); }), ErrorKind::ValidationError);
  EXPECT_EQ(kind_of([&] { s.ingest().append_score("demo", "t1", "x", 1.1); }), ErrorKind::ScoreOutOfRange);
  EXPECT_EQ(kind_of([&] { s.ingest().append_score("demo", "nope", "x", 0.1); }), ErrorKind::UnknownTrace);
}

TEST(Ingest, ProjectMismatchRejected) {
  Service s(ServiceConfig{});
  auto t = make_trace("t1", 0);
  t.project_id = "elsewhere";
  EXPECT_EQ(kind_of([&] { s.ingest().log_trace("demo", t); }), ErrorKind::ValidationError);
}

TEST(Ingest, UnknownProjectWhenAutoCreateOff) {
  ServiceConfig c;
  c.auto_create_projects = false;
  c.projects = {"demo"};
  Service s(c);
  EXPECT_EQ(s.queries().count("demo"), 0);
  EXPECT_EQ(kind_of([&] { s.queries().count("ghost"); }), ErrorKind::UnknownProject);
  EXPECT_EQ(kind_of([&] { s.ingest().log_trace("ghost", make_trace("a", 0)); }), ErrorKind::UnknownProject);
}

TEST(Ingest, RecoveryRebuildsIndexes) {
  TempDir dir;
  ServiceConfig c;
  c.store.data_dir = dir.path();
  {
    Service s(c);
    for (int i = 0; i < 20; ++i) s.ingest().log_trace("demo", with_score(make_trace("t" + std::to_string(i), i * 10), "m", i / 20.0));
    s.ingest().append_score("demo", "t3", "late", 0.25);
  }
  Service s(c);
  EXPECT_EQ(s.queries().count("demo"), 20);
  EXPECT_EQ(s.traces().get("demo", "t3")->trace->scores.at("late"), 0.25);
  EXPECT_EQ(s.traces().by_score("demo", "late").size(), 1u);
}

TEST(Ingest, IndexResultsReachableByFullScan) {
  Service s(ServiceConfig{});
  std::mt19937 rng(2);
  for (int i = 0; i < 200; ++i) {
    auto t = make_trace("t" + std::to_string(i), rng() % 1000);
    if (rng() % 2) t.prompt_ref = PromptRef{"p" + std::to_string(rng() % 3), 1};
    if (rng() % 2) t.scores["m" + std::to_string(rng() % 3)] = 0.5;
    s.ingest().log_trace("demo", t);
  }
  std::set<std::string> scanned;
  for (const auto& st : s.traces().scan("demo")) scanned.insert(st.trace->trace_id);
  for (const auto& name : {"p0", "p1", "p2"}) {
    for (const auto& st : s.traces().by_prompt("demo", name)) {
      EXPECT_TRUE(scanned.contains(st.trace->trace_id));
      EXPECT_EQ(st.trace->prompt_ref->prompt_name, name);
    }
  }
  for (const auto& m : {"m0", "m1", "m2"}) {
    for (const auto& st : s.traces().by_score("demo", m)) EXPECT_TRUE(scanned.contains(st.trace->trace_id));
  }
}

// ---- query


TEST(Query, HallucinationSearchMatchesFilterOracle) {
  Service s(ServiceConfig{});
  FoldOracle oracle;
  const double scores[] = {0.2, 0.9, 0.6, 0.5, 0.65, 0.1, 0.8, 0.59, 0.7, 0.95};
  for (int i = 0; i < 10; ++i) {
    auto t = with_score(make_trace("h" + std::to_string(i), 1000 * (i % 7)), "hallucination", scores[i]);
    auto r = s.ingest().log_trace("demo", t);
    oracle.add(*s.traces().get("demo", r.trace_id)->trace, r.seq);
  }
  FilterQuery q;
  q.project_id = "demo";
  q.predicates = {pred("scores.hallucination", FilterOp::ge, 0.6)};
  q.limit = 5;
  auto expected = oracle.search([](const Trace& t) { return t.scores.contains("hallucination") && t.scores.at("hallucination") >= 0.6; },
                                std::nullopt, 5);
  EXPECT_EQ(ids(s.queries().search(q)), expected);
  EXPECT_EQ(expected.size(), 5u);
}

TEST(Query, EmptyProject) {
  Service s(ServiceConfig{});
  FilterQuery q;
  q.project_id = "empty";
  EXPECT_TRUE(s.queries().search(q).traces.empty());
  EXPECT_EQ(s.queries().count("empty"), 0);
  EXPECT_EQ(s.queries().latest("empty"), nullptr);
}

TEST(Query, UnhappyUsersInLastHour) {
  Service s(ServiceConfig{});
  const TimestampMs now = 10 * 3600000;
  auto fb = [](Trace t, int f) {
    t.feedback = f;
    return t;
  };
  s.ingest().log_trace("demo", fb(make_trace("old", now - 2 * 3600000), -1));
  s.ingest().log_trace("demo", fb(make_trace("a", now - 1800000), -1));
  s.ingest().log_trace("demo", fb(make_trace("b", now - 60000), 1));
  s.ingest().log_trace("demo", make_trace("c", now - 30000));
  s.ingest().log_trace("demo", fb(make_trace("d", now - 1000), -1));
  FilterQuery q;
  q.project_id = "demo";
  q.predicates = {pred("feedback", FilterOp::eq, -1)};
  q.time_range = TimeRange{now - 3600000, now};
  EXPECT_EQ(ids(s.queries().search(q)), (std::vector<std::string>{"d", "a"}));
}

TEST(Query, CountWithRanges) {
  Service s(ServiceConfig{});
  for (int i = 0; i < 10; ++i) s.ingest().log_trace("demo", make_trace("t" + std::to_string(i), i * 100));
  EXPECT_EQ(s.queries().count("demo"), 10);
  EXPECT_EQ(s.queries().count("demo", TimeRange{200, 500}), 3);
  EXPECT_EQ(s.queries().count("demo", TimeRange{5000, 6000}), 0);
  EXPECT_EQ(kind_of([&] { s.queries().count("demo", TimeRange{5, 1}); }), ErrorKind::InvalidRange);
}

TEST(Query, LatestTieGoesToLaterCommit) {
  Service s(ServiceConfig{});
  s.ingest().log_trace("demo", make_trace("first", 500));
  s.ingest().log_trace("demo", make_trace("second", 500));
  s.ingest().log_trace("demo", make_trace("older", 100));
  EXPECT_EQ(s.queries().latest("demo")->trace_id, "second");
}

TEST(Query, PredicateGrammar) {
  Service s(ServiceConfig{});
  auto t = with_tag(make_trace("x", 0), "beta");
  t.name = "checkout-flow";
  t.prompt_ref = PromptRef{"qa", 2};
  Span sp;
  sp.span_id = "s";
  sp.error = "timeout";
  t.spans.push_back(sp);
  s.ingest().log_trace("demo", t);
  s.ingest().log_trace("demo", make_trace("y", 1));
  auto run = [&](std::vector<Predicate> p) {
    FilterQuery q;
    q.project_id = "demo";
    q.predicates = std::move(p);
    return ids(s.queries().search(q));
  };
  using V = std::vector<std::string>;
  EXPECT_EQ(run({pred("tags", FilterOp::contains, "beta")}), V{"x"});
  EXPECT_EQ(run({pred("name", FilterOp::contains, "checkout")}), V{"x"});
  EXPECT_EQ(run({pred("prompt_ref.name", FilterOp::eq, "qa"), pred("prompt_ref.version", FilterOp::ge, 2)}), V{"x"});
  EXPECT_EQ(run({pred("error_present", FilterOp::eq, true)}), V{"x"});
  EXPECT_EQ(run({pred("error_present", FilterOp::eq, false)}), V{"y"});
  EXPECT_EQ(run({pred("feedback", FilterOp::exists)}), V{});
  EXPECT_EQ(run({pred("latency_ms", FilterOp::eq, 100), pred("token_usage.prompt_tokens", FilterOp::lt, 11)}), (V{"y", "x"}));
  EXPECT_EQ(kind_of([&] { run({pred("nonsense", FilterOp::eq, 1)}); }), ErrorKind::UnknownField);
  EXPECT_EQ(kind_of([&] { run({pred("latency_ms", FilterOp::contains, 1)}); }), ErrorKind::ValidationError);
  EXPECT_EQ(kind_of([&] { run({pred("tags", FilterOp::eq, "x")}); }), ErrorKind::ValidationError);
}

TEST(Query, LimitBoundsAndOrderFields) {
  Service s(ServiceConfig{});
  s.ingest().log_trace("demo", make_trace("a", 0, 300));
  s.ingest().log_trace("demo", make_trace("b", 1, 100));
  s.ingest().log_trace("demo", make_trace("c", 2, 200));
  FilterQuery q;
  q.project_id = "demo";
  q.order_by = OrderBy{"latency_ms", SortDir::asc};
  EXPECT_EQ(ids(s.queries().search(q)), (std::vector<std::string>{"b", "c", "a"}));
  q.limit = 0;
  EXPECT_EQ(kind_of([&] { s.queries().search(q); }), ErrorKind::InvalidRange);
  q.limit = 1001;
  EXPECT_EQ(kind_of([&] { s.queries().search(q); }), ErrorKind::InvalidRange);
  q.limit = 10;
  q.order_by.field = "tags";
  EXPECT_EQ(kind_of([&] { s.queries().search(q); }), ErrorKind::UnknownField);
}

TEST(Query, AggregateSingletonAndEmptyBuckets) {
  Service s(ServiceConfig{});
  s.ingest().log_trace("demo", make_trace("a", 500, 900));
  auto r = s.queries().aggregate("demo", TimeRange{0, 3000}, 1000);
  ASSERT_EQ(r.buckets.size(), 3u);
  EXPECT_EQ(*r.buckets[0].latency_p50, 900);
  EXPECT_EQ(*r.buckets[0].latency_p95, 900);
  EXPECT_EQ(r.buckets[1].trace_count, 0);
  EXPECT_FALSE(r.buckets[1].latency_mean);
  EXPECT_FALSE(r.buckets[1].mean_prompt_tokens);
  const auto j = to_json(r.buckets[1]);
  EXPECT_FALSE(j.contains("latency_mean"));
  EXPECT_EQ(kind_of([&] { s.queries().aggregate("demo", TimeRange{0, 3000}, 999); }), ErrorKind::InvalidRange);
  EXPECT_EQ(kind_of([&] { s.queries().aggregate("demo", TimeRange{0, 10001000}, 1000); }), ErrorKind::WindowTooWide);
  EXPECT_NO_THROW(s.queries().aggregate("demo", TimeRange{0, 10000000}, 1000));
}

TEST(Query, AggregateMeanOfHallucinationFixture) {
  Service s(ServiceConfig{});
  const double h[] = {0.6, 0.7, 0.7, 0.8, 0.7};
  for (int i = 0; i < 5; ++i) s.ingest().log_trace("demo", with_score(make_trace("h" + std::to_string(i), i * 10), "hallucination", h[i]));
  auto r = s.queries().aggregate("demo", TimeRange{0, 60000}, 60000);
  EXPECT_EQ(r.buckets[0].score_means.at("hallucination"), 0.7);
}

TEST(Query, NearestRank) {
  std::vector<std::int64_t> v{10, 20, 30, 40, 50, 60, 70, 80, 90, 100};
  EXPECT_EQ(nearest_rank(v, 50), 50);
  EXPECT_EQ(nearest_rank(v, 95), 100);
  EXPECT_EQ(nearest_rank({7}, 95), 7);
  EXPECT_EQ(nearest_rank({1, 2, 3}, 50), 2);
}

namespace {

Trace random_trace(std::mt19937& rng, int i) {
  auto t = make_trace("r" + std::to_string(i), static_cast<TimestampMs>(rng() % 100000), rng() % 3000);
  t.token_usage = {static_cast<std::int64_t>(rng() % 500), static_cast<std::int64_t>(rng() % 800)};
  if (rng() % 3) t.scores["hallucination"] = (rng() % 1001) / 1000.0;
  if (rng() % 2) t.scores["relevance"] = (rng() % 1001) / 1000.0;
  if (rng() % 2) t.feedback = static_cast<int>(rng() % 3) - 1;
  if (rng() % 4 == 0) t.tags.insert("beta");
  return t;
}

}  // namespace

TEST(QueryProperties, RandomFixturesMatchFoldOracle) {
  for (int round = 0; round < 5; ++round) {
    Service s(ServiceConfig{});
    FoldOracle oracle;
    std::mt19937 rng(100 + round);
    const int n = 200 + static_cast<int>(rng() % 300);
    for (int i = 0; i < n; ++i) {
      auto r = s.ingest().log_trace("demo", random_trace(rng, i));
      oracle.add(*s.traces().get("demo", r.trace_id)->trace, r.seq);
    }
    const TimeRange range{static_cast<TimestampMs>(rng() % 30000), 60000 + static_cast<TimestampMs>(rng() % 40000)};
    EXPECT_EQ(s.queries().count("demo"), oracle.count());
    EXPECT_EQ(s.queries().count("demo", range), oracle.count(range));
    const double th = (rng() % 100) / 100.0;
    FilterQuery q;
    q.project_id = "demo";
    q.predicates = {pred("scores.hallucination", FilterOp::ge, th), pred("feedback", FilterOp::le, 0)};
    q.time_range = range;
    q.limit = 1000;
    auto p = [th](const Trace& t) {
      return t.scores.contains("hallucination") && t.scores.at("hallucination") >= th && t.feedback && *t.feedback <= 0;
    };
    EXPECT_EQ(ids(s.queries().search(q)), oracle.search(p, range, 1000));
    EXPECT_EQ(s.queries().latest("demo", q.predicates)->trace_id, *oracle.latest(p));
    auto report = s.queries().aggregate("demo", TimeRange{0, 100000}, 7000);
    auto expected = oracle.aggregate(TimeRange{0, 100000}, 7000);
    ASSERT_EQ(report.buckets.size(), expected.size());
    for (std::size_t i = 0; i < expected.size(); ++i) EXPECT_EQ(report.buckets[i], expected[i]) << "bucket " << i;
  }
}

TEST(QueryProperties, PaginationIsCompleteWithoutDuplicates) {
  Service s(ServiceConfig{});
  std::mt19937 rng(9);
  for (int i = 0; i < 237; ++i) s.ingest().log_trace("demo", random_trace(rng, i));
  for (auto order : {OrderBy{"start_time", SortDir::desc}, OrderBy{"scores.relevance", SortDir::asc},
                     OrderBy{"name", SortDir::asc}, OrderBy{"latency_ms", SortDir::desc}}) {
    FilterQuery q;
    q.project_id = "demo";
    q.order_by = order;
    q.limit = 1000;
    auto all = ids(s.queries().search(q));
    q.limit = 17;
    std::vector<std::string> paged;
    for (int pages = 0; pages < 100; ++pages) {
      auto page = s.queries().search(q);
      auto got = ids(page);
      paged.insert(paged.end(), got.begin(), got.end());
      if (!page.next_cursor) break;
      q.cursor = page.next_cursor;
    }
    EXPECT_EQ(paged, all) << order.field;
    EXPECT_EQ(std::set<std::string>(paged.begin(), paged.end()).size(), paged.size());
  }
}

TEST(QueryProperties, AddingTracesNeverRemovesClosedRangeResults) {
  Service s(ServiceConfig{});
  std::mt19937 rng(4);
  FilterQuery q;
  q.project_id = "demo";
  q.predicates = {pred("scores.relevance", FilterOp::gt, 0.3)};
  q.time_range = TimeRange{10000, 70000};
  q.limit = 1000;
  std::set<std::string> previous;
  for (int i = 0; i < 300; ++i) {
    s.ingest().log_trace("demo", random_trace(rng, i));
    if (i % 25 != 0) continue;
    auto now = ids(s.queries().search(q));
    std::set<std::string> current(now.begin(), now.end());
    EXPECT_TRUE(std::includes(current.begin(), current.end(), previous.begin(), previous.end()));
    previous = current;
  }
}

TEST(QueryProperties, AckImpliesQueryableUnderConcurrency) {
  Service s(ServiceConfig{});
  std::vector<std::thread> writers;
  std::atomic<int> failures{0};
  for (int w = 0; w < 4; ++w) {
    writers.emplace_back([&, w] {
      for (int i = 0; i < 50; ++i) {
        const auto id = "w" + std::to_string(w) + "-" + std::to_string(i);
        s.ingest().log_trace("demo", with_tag(make_trace(id, i), "w" + std::to_string(w)));
        FilterQuery q;
        q.project_id = "demo";
        q.predicates = {pred("tags", FilterOp::contains, "w" + std::to_string(w))};
        q.limit = 1000;
        auto got = ids(s.queries().search(q));
        if (std::find(got.begin(), got.end(), id) == got.end()) ++failures;
      }
    });
  }
  for (auto& t : writers) t.join();
  EXPECT_EQ(failures.load(), 0);
  EXPECT_EQ(s.queries().count("demo"), 200);
}

// ---- prompts

TEST(Prompts, SaveGetVersions) {
  Service s(ServiceConfig{});
  EXPECT_TRUE(s.prompts().list().empty());
  for (int i = 1; i <= 3; ++i) {
    auto v = s.prompts().save({"qa-system", "template v" + std::to_string(i), {}, std::nullopt, std::nullopt, "dev"});
    EXPECT_EQ(v.version, i);
  }
  EXPECT_EQ(s.prompts().get("qa-system").version, 3);
  EXPECT_EQ(s.prompts().get("qa-system", 2).template_text, "template v2");
  EXPECT_EQ(kind_of([&] { s.prompts().get("nope"); }), ErrorKind::UnknownPrompt);
  EXPECT_EQ(kind_of([&] { s.prompts().get("qa-system", 9); }), ErrorKind::UnknownVersion);
  EXPECT_EQ(kind_of([&] { s.prompts().save({"qa-system", "", {}, {}, {}, ""}); }), ErrorKind::EmptyTemplate);
}

TEST(Prompts, CasConflict) {
  Service s(ServiceConfig{});
  for (int i = 0; i < 3; ++i) s.prompts().save({"p", "t", {}, {}, {}, ""});
  EXPECT_EQ(s.prompts().save({"p", "t4", {}, 3, {}, ""}).version, 4);
  EXPECT_EQ(kind_of([&] { s.prompts().save({"p", "t4b", {}, 3, {}, ""}); }), ErrorKind::VersionConflict);
}

TEST(Prompts, CommitTagListable) {
  Service s(ServiceConfig{});
  s.prompts().save({"qa", "a", {}, {}, {}, ""});
  s.prompts().save({"qa", "b", {}, {}, std::string("ci-opt-run-17"), "ci"});
  s.prompts().save({"other", "c", {}, {}, {}, ""});
  auto tagged = s.prompts().list(std::nullopt, std::string("ci-opt-run-17"));
  ASSERT_EQ(tagged.size(), 1u);
  EXPECT_EQ(tagged[0].prompt_name, "qa");
  EXPECT_EQ(tagged[0].commit_tags.at(2), "ci-opt-run-17");
}

TEST(Prompts, ListSortedWithBindingOnlyForBound) {
  Service s(ServiceConfig{});
  s.prompts().save({"zeta", "a", {}, {}, {}, ""});
  s.prompts().save({"alpha", "a", {}, {}, {}, ""});
  s.prompts().activate("demo", "zeta", 1);
  auto list = s.prompts().list(std::string("demo"));
  ASSERT_EQ(list.size(), 2u);
  EXPECT_EQ(list[0].prompt_name, "alpha");
  EXPECT_FALSE(list[0].active_version);
  EXPECT_EQ(*list[1].active_version, 1);
}

TEST(Prompts, ActivateRollbackStack) {
  Service s(ServiceConfig{});
  for (int i = 0; i < 4; ++i) s.prompts().save({"qa", "t" + std::to_string(i), {}, {}, {}, ""});
  EXPECT_EQ(kind_of([&] { s.prompts().rollback("demo", "qa"); }), ErrorKind::NoHistory);
  s.prompts().activate("demo", "qa", 1);
  s.prompts().activate("demo", "qa", 2);
  EXPECT_EQ(s.prompts().rollback("demo", "qa").active_version, 1);
  // Rollback is to the previous binding, not version - 1.
  s.prompts().activate("demo", "qa", 4);
  EXPECT_EQ(s.prompts().rollback("demo", "qa").active_version, 1);
  EXPECT_EQ(kind_of([&] { s.prompts().rollback("demo", "qa"); }), ErrorKind::NoHistory);
  EXPECT_EQ(kind_of([&] { s.prompts().activate("demo", "qa", 9); }), ErrorKind::UnknownVersion);
}

TEST(Prompts, BindingChangesVisibleInScanOrder) {
  Service s(ServiceConfig{});
  s.prompts().save({"qa", "a", {}, {}, {}, ""});
  s.prompts().save({"qa", "b", {}, {}, {}, ""});
  s.prompts().activate("demo", "qa", 1);
  s.prompts().activate("demo", "qa", 2);
  s.prompts().rollback("demo", "qa");
  auto recs = s.store().records_after(0, std::string("demo"));
  std::vector<std::string> ops;
  SeqNo last = 0;
  for (const auto& r : recs) {
    if (r.kind != RecordKind::binding_change) continue;
    EXPECT_GT(r.seq, last);
    last = r.seq;
    ops.push_back((*r.payload)["op"].get<std::string>() + std::to_string((*r.payload)["version"].get<int>()));
  }
  EXPECT_EQ(ops, (std::vector<std::string>{"activate1", "activate2", "rollback1"}));
}

TEST(Prompts, RollbackOfActivateIsIdentityProperty) {
  Service s(ServiceConfig{});
  for (int i = 0; i < 6; ++i) s.prompts().save({"qa", "t" + std::to_string(i), {}, {}, {}, ""});
  std::mt19937 rng(8);
  s.prompts().activate("demo", "qa", 1);
  for (int i = 0; i < 100; ++i) {
    const auto before = s.prompts().binding("demo", "qa");
    s.prompts().activate("demo", "qa", 1 + rng() % 6);
    EXPECT_EQ(s.prompts().rollback("demo", "qa"), *before);
    if (rng() % 2) s.prompts().activate("demo", "qa", 1 + rng() % 6);
  }
}

TEST(Prompts, TemplatesByteIdenticalAndSurviveRecovery) {
  TempDir dir;
  ServiceConfig c;
  c.store.data_dir = dir.path();
  const std::string tricky = "Line\r\n\ttab \"quoted\" \\ back \xe2\x9c\x93 {{var}} \x01";
  {
    Service s(c);
    s.prompts().save({"qa", tricky, {{"k", "v"}}, {}, {}, ""});
    s.prompts().activate("demo", "qa", 1);
  }
  Service s(c);
  EXPECT_EQ(s.prompts().get("qa").template_text, tricky);
  EXPECT_EQ(s.prompts().binding("demo", "qa")->active_version, 1);
}

TEST(Prompts, ConcurrentCasSaversGiveContiguousVersions) {
  Service s(ServiceConfig{});
  std::atomic<int> ok{0};
  std::vector<std::thread> threads;
  for (int w = 0; w < 8; ++w) {
    threads.emplace_back([&, w] {
      for (int a = 0; a < 10; ++a) {
        std::optional<std::int64_t> latest;
        try {
          latest = s.prompts().get("qa").version;
        } catch (const Error&) {
          latest = 0;
        }
        try {
          s.prompts().save({"qa", "w" + std::to_string(w) + "a" + std::to_string(a), {}, latest, {}, ""});
          ++ok;
        } catch (const Error& e) {
          EXPECT_EQ(e.kind(), ErrorKind::VersionConflict);
        }
      }
    });
  }
  for (auto& t : threads) t.join();
  auto versions = s.prompts().versions("qa");
  ASSERT_EQ(static_cast<int>(versions.size()), ok.load());
  for (std::size_t i = 0; i < versions.size(); ++i) EXPECT_EQ(versions[i].version, static_cast<std::int64_t>(i + 1));
}
