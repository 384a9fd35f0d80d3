#include "aide/codec.hpp"

#include <algorithm>

namespace aide {

std::string canonical(const Json& value) {
  return value.dump(-1, ' ', false, Json::error_handler_t::strict);
}

std::string_view to_string(SpanKind kind) {
  switch (kind) {
    case SpanKind::llm_call: return "llm_call";
    case SpanKind::tool_call: return "tool_call";
    case SpanKind::evaluation: return "evaluation";
    case SpanKind::other: return "other";
  }
  return "other";
}

SpanKind span_kind_from_string(std::string_view name) {
  if (name == "llm_call") return SpanKind::llm_call;
  if (name == "tool_call") return SpanKind::tool_call;
  if (name == "evaluation") return SpanKind::evaluation;
  if (name == "other") return SpanKind::other;
  throw ValidationError("kind", "unknown span kind '" + std::string(name) + "'");
}

std::string_view to_string(FilterOp op) {
  switch (op) {
    case FilterOp::eq: return "eq";
    case FilterOp::neq: return "neq";
    case FilterOp::lt: return "lt";
    case FilterOp::le: return "le";
    case FilterOp::gt: return "gt";
    case FilterOp::ge: return "ge";
    case FilterOp::contains: return "contains";
    case FilterOp::exists: return "exists";
  }
  return "exists";
}

FilterOp filter_op_from_string(std::string_view name) {
  static const std::pair<std::string_view, FilterOp> kOps[] = {
      {"eq", FilterOp::eq}, {"neq", FilterOp::neq}, {"lt", FilterOp::lt},
      {"le", FilterOp::le}, {"gt", FilterOp::gt},   {"ge", FilterOp::ge},
      {"contains", FilterOp::contains}, {"exists", FilterOp::exists}};
  for (const auto& [text, op] : kOps) {
    if (text == name) return op;
  }
  throw ValidationError("op", "unknown operator '" + std::string(name) + "'");
}

namespace wire {

namespace {
std::string path(const std::string& prefix, const char* key) {
  return prefix.empty() ? std::string(key) : prefix + "." + key;
}
}  // namespace

void expect_object(const Json& value, const std::string& field) {
  if (!value.is_object()) throw ValidationError(field.empty() ? "$" : field, "expected an object");
}

const Json& require(const Json& obj, const char* key, const std::string& prefix) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) throw ValidationError(path(prefix, key), "required");
  return *it;
}

std::string get_string(const Json& obj, const char* key, const std::string& prefix) {
  const auto& v = require(obj, key, prefix);
  if (!v.is_string()) throw ValidationError(path(prefix, key), "expected a string");
  return v.get<std::string>();
}

std::optional<std::string> opt_string(const Json& obj, const char* key, const std::string& prefix) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return std::nullopt;
  if (!it->is_string()) throw ValidationError(path(prefix, key), "expected a string");
  return it->get<std::string>();
}

std::int64_t get_int(const Json& obj, const char* key, const std::string& prefix) {
  const auto& v = require(obj, key, prefix);
  if (v.is_number_unsigned()) {
    const auto u = v.get<std::uint64_t>();
    if (u > static_cast<std::uint64_t>(INT64_MAX)) {
      throw ValidationError(path(prefix, key), "integer out of range");
    }
    return static_cast<std::int64_t>(u);
  }
  if (!v.is_number_integer()) throw ValidationError(path(prefix, key), "expected an integer");
  return v.get<std::int64_t>();
}

std::optional<std::int64_t> opt_int(const Json& obj, const char* key, const std::string& prefix) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return std::nullopt;
  return get_int(obj, key, prefix);
}

double get_number(const Json& obj, const char* key, const std::string& prefix) {
  const auto& v = require(obj, key, prefix);
  if (!v.is_number()) throw ValidationError(path(prefix, key), "expected a number");
  return v.get<double>();
}

std::optional<double> opt_number(const Json& obj, const char* key, const std::string& prefix) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return std::nullopt;
  return get_number(obj, key, prefix);
}

std::optional<bool> opt_bool(const Json& obj, const char* key, const std::string& prefix) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return std::nullopt;
  if (!it->is_boolean()) throw ValidationError(path(prefix, key), "expected a boolean");
  return it->get<bool>();
}

void reject_unknown(const Json& obj, std::initializer_list<std::string_view> allowed,
                    const std::string& prefix) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (std::find(allowed.begin(), allowed.end(), it.key()) == allowed.end()) {
      throw ValidationError(path(prefix, it.key().c_str()), "unknown field");
    }
  }
}

}  // namespace wire

using namespace wire;

Json to_json(const TokenUsage& usage) {
  return Json{{"prompt_tokens", usage.prompt_tokens},
              {"completion_tokens", usage.completion_tokens}};
}

Json to_json(const Span& span) {
  Json j{{"span_id", span.span_id},
         {"kind", to_string(span.kind)},
         {"name", span.name},
         {"input", span.input},
         {"output", span.output},
         {"start_time", span.start_time},
         {"end_time", span.end_time}};
  if (span.parent_span) j["parent_span"] = *span.parent_span;
  if (span.token_usage) j["token_usage"] = to_json(*span.token_usage);
  if (span.error) j["error"] = *span.error;
  return j;
}

Json to_json(const Trace& trace) {
  Json spans = Json::array();
  for (const auto& s : trace.spans) spans.push_back(to_json(s));
  Json scores = Json::object();
  for (const auto& [k, v] : trace.scores) scores[k] = v;
  Json j{{"trace_id", trace.trace_id},
         {"project_id", trace.project_id},
         {"name", trace.name},
         {"start_time", trace.start_time},
         {"end_time", trace.end_time},
         {"latency_ms", trace.latency_ms()},
         {"spans", std::move(spans)},
         {"input", trace.input},
         {"output", trace.output},
         {"token_usage", to_json(trace.token_usage)},
         {"scores", std::move(scores)},
         {"tags", Json(trace.tags)}};
  if (trace.prompt_ref) {
    j["prompt_ref"] = Json{{"prompt_name", trace.prompt_ref->prompt_name},
                           {"version", trace.prompt_ref->version}};
  }
  if (trace.feedback) j["feedback"] = *trace.feedback;
  return j;
}

namespace {

TokenUsage usage_from_json(const Json& j, const std::string& prefix) {
  expect_object(j, prefix);
  reject_unknown(j, {"prompt_tokens", "completion_tokens"}, prefix);
  TokenUsage u;
  u.prompt_tokens = opt_int(j, "prompt_tokens", prefix).value_or(0);
  u.completion_tokens = opt_int(j, "completion_tokens", prefix).value_or(0);
  return u;
}

}  // namespace

Span span_from_json(const Json& j, const std::string& prefix) {
  expect_object(j, prefix);
  reject_unknown(j, {"span_id", "parent_span", "kind", "name", "input", "output", "start_time",
                     "end_time", "token_usage", "error"},
                 prefix);
  Span s;
  s.span_id = get_string(j, "span_id", prefix);
  s.parent_span = opt_string(j, "parent_span", prefix);
  if (auto kind = opt_string(j, "kind", prefix)) {
    try {
      s.kind = span_kind_from_string(*kind);
    } catch (const ValidationError& e) {
      throw ValidationError(prefix + ".kind", e.reason());
    }
  }
  s.name = opt_string(j, "name", prefix).value_or("");
  s.input = opt_string(j, "input", prefix).value_or("");
  s.output = opt_string(j, "output", prefix).value_or("");
  s.start_time = get_int(j, "start_time", prefix);
  s.end_time = get_int(j, "end_time", prefix);
  if (auto it = j.find("token_usage"); it != j.end() && !it->is_null()) {
    s.token_usage = usage_from_json(*it, prefix + ".token_usage");
  }
  s.error = opt_string(j, "error", prefix);
  return s;
}

Trace trace_from_json(const Json& j) {
  expect_object(j, "");
  reject_unknown(j, {"trace_id", "project_id", "name", "start_time", "end_time", "latency_ms",
                     "spans", "prompt_ref", "input", "output", "token_usage", "scores",
                     "feedback", "tags"},
                 "");
  Trace t;
  t.trace_id = opt_string(j, "trace_id", "").value_or("");
  t.project_id = opt_string(j, "project_id", "").value_or("");
  t.name = opt_string(j, "name", "").value_or("");
  t.start_time = get_int(j, "start_time", "");
  t.end_time = get_int(j, "end_time", "");
  if (auto it = j.find("spans"); it != j.end() && !it->is_null()) {
    if (!it->is_array()) throw ValidationError("spans", "expected an array");
    for (std::size_t i = 0; i < it->size(); ++i) {
      t.spans.push_back(span_from_json((*it)[i], "spans[" + std::to_string(i) + "]"));
    }
  }
  if (auto it = j.find("prompt_ref"); it != j.end() && !it->is_null()) {
    expect_object(*it, "prompt_ref");
    reject_unknown(*it, {"prompt_name", "version"}, "prompt_ref");
    t.prompt_ref = PromptRef{get_string(*it, "prompt_name", "prompt_ref"),
                             get_int(*it, "version", "prompt_ref")};
  }
  t.input = opt_string(j, "input", "").value_or("");
  t.output = opt_string(j, "output", "").value_or("");
  if (auto it = j.find("token_usage"); it != j.end() && !it->is_null()) {
    t.token_usage = usage_from_json(*it, "token_usage");
  }
  if (auto it = j.find("scores"); it != j.end() && !it->is_null()) {
    expect_object(*it, "scores");
    for (auto s = it->begin(); s != it->end(); ++s) {
      if (!s->is_number()) throw ValidationError("scores." + s.key(), "expected a number");
      t.scores[s.key()] = s->get<double>();
    }
  }
  if (auto fb = opt_int(j, "feedback", "")) {
    if (*fb < -1 || *fb > 1) throw ValidationError("feedback", "must be -1, 0 or +1");
    t.feedback = static_cast<int>(*fb);
  }
  if (auto it = j.find("tags"); it != j.end() && !it->is_null()) {
    if (!it->is_array()) throw ValidationError("tags", "expected an array of strings");
    for (const auto& tag : *it) {
      if (!tag.is_string()) throw ValidationError("tags", "expected an array of strings");
      t.tags.insert(tag.get<std::string>());
    }
  }
  return t;
}

Json to_json(const PromptVersion& p) {
  Json j{{"prompt_name", p.prompt_name},
         {"version", p.version},
         {"template", p.template_text},
         {"metadata", Json(p.metadata)},
         {"created_at", p.created_at},
         {"created_by", p.created_by}};
  if (p.commit_tag) j["commit_tag"] = *p.commit_tag;
  return j;
}

PromptVersion prompt_version_from_json(const Json& j) {
  expect_object(j, "");
  reject_unknown(j, {"prompt_name", "version", "template", "metadata", "created_at",
                     "created_by", "commit_tag"},
                 "");
  PromptVersion p;
  p.prompt_name = get_string(j, "prompt_name", "");
  p.version = get_int(j, "version", "");
  p.template_text = get_string(j, "template", "");
  if (auto it = j.find("metadata"); it != j.end() && !it->is_null()) {
    expect_object(*it, "metadata");
    for (auto m = it->begin(); m != it->end(); ++m) {
      if (!m->is_string()) throw ValidationError("metadata." + m.key(), "expected a string");
      p.metadata[m.key()] = m->get<std::string>();
    }
  }
  p.created_at = opt_int(j, "created_at", "").value_or(0);
  p.created_by = opt_string(j, "created_by", "").value_or("");
  p.commit_tag = opt_string(j, "commit_tag", "");
  return p;
}

Json to_json(const ActiveBinding& b) {
  Json j{{"project_id", b.project_id},
         {"prompt_name", b.prompt_name},
         {"active_version", b.active_version}};
  if (b.agent) j["agent"] = *b.agent;
  if (b.experiment_id) j["experiment_id"] = *b.experiment_id;
  return j;
}

ActiveBinding binding_from_json(const Json& j) {
  expect_object(j, "");
  ActiveBinding b;
  b.project_id = get_string(j, "project_id", "");
  b.prompt_name = get_string(j, "prompt_name", "");
  b.active_version = get_int(j, "active_version", "");
  b.agent = opt_string(j, "agent", "");
  b.experiment_id = opt_string(j, "experiment_id", "");
  return b;
}

Json to_json(const Predicate& p) {
  Json j{{"field", p.field}, {"op", to_string(p.op)}};
  if (p.op != FilterOp::exists) j["value"] = p.value;
  return j;
}

Predicate predicate_from_json(const Json& j, const std::string& prefix) {
  expect_object(j, prefix);
  reject_unknown(j, {"field", "op", "value"}, prefix);
  Predicate p;
  p.field = get_string(j, "field", prefix);
  try {
    p.op = filter_op_from_string(get_string(j, "op", prefix));
  } catch (const ValidationError& e) {
    throw ValidationError(prefix + ".op", e.reason());
  }
  if (p.op != FilterOp::exists) p.value = require(j, "value", prefix);
  return p;
}

std::vector<Predicate> predicates_from_json(const Json& j, const std::string& field) {
  std::vector<Predicate> out;
  if (j.is_null()) return out;
  if (!j.is_array()) throw ValidationError(field, "expected an array");
  for (std::size_t i = 0; i < j.size(); ++i) {
    out.push_back(predicate_from_json(j[i], field + "[" + std::to_string(i) + "]"));
  }
  return out;
}

Json to_json(const FilterQuery& q) {
  Json preds = Json::array();
  for (const auto& p : q.predicates) preds.push_back(to_json(p));
  Json j{{"project_id", q.project_id},
         {"predicates", std::move(preds)},
         {"order_by", Json{{"field", q.order_by.field},
                           {"dir", q.order_by.dir == SortDir::asc ? "asc" : "desc"}}},
         {"limit", q.limit}};
  if (q.time_range) j["time_range"] = Json{{"from", q.time_range->from}, {"to", q.time_range->to}};
  if (q.cursor) j["cursor"] = *q.cursor;
  return j;
}

FilterQuery filter_query_from_json(const Json& j) {
  expect_object(j, "");
  reject_unknown(j, {"project_id", "predicates", "time_range", "order_by", "limit", "cursor"}, "");
  FilterQuery q;
  q.project_id = opt_string(j, "project_id", "").value_or("");
  if (auto it = j.find("predicates"); it != j.end()) q.predicates = predicates_from_json(*it, "predicates");
  if (auto it = j.find("time_range"); it != j.end() && !it->is_null()) {
    expect_object(*it, "time_range");
    reject_unknown(*it, {"from", "to"}, "time_range");
    q.time_range = TimeRange{get_int(*it, "from", "time_range"), get_int(*it, "to", "time_range")};
  }
  if (auto it = j.find("order_by"); it != j.end() && !it->is_null()) {
    expect_object(*it, "order_by");
    reject_unknown(*it, {"field", "dir"}, "order_by");
    q.order_by.field = opt_string(*it, "field", "order_by").value_or("start_time");
    const auto dir = opt_string(*it, "dir", "order_by").value_or("desc");
    if (dir == "asc") {
      q.order_by.dir = SortDir::asc;
    } else if (dir == "desc") {
      q.order_by.dir = SortDir::desc;
    } else {
      throw ValidationError("order_by.dir", "expected 'asc' or 'desc'");
    }
  }
  if (auto limit = opt_int(j, "limit", "")) {
    if (*limit < 1 || *limit > kMaxLimit) {
      throw Error(ErrorKind::InvalidRange, "limit must be in 1..1000");
    }
    q.limit = static_cast<int>(*limit);
  }
  q.cursor = opt_string(j, "cursor", "");
  return q;
}

Json to_json(const BucketStats& b) {
  Json scores = Json::object();
  for (const auto& [k, v] : b.score_means) scores[k] = v;
  Json j{{"from", b.from},
         {"to", b.to},
         {"trace_count", b.trace_count},
         {"sum_prompt_tokens", b.sum_prompt_tokens},
         {"sum_completion_tokens", b.sum_completion_tokens},
         {"score_means", std::move(scores)},
         {"feedback", Json{{"negative", b.feedback.negative},
                           {"neutral", b.feedback.neutral},
                           {"positive", b.feedback.positive},
                           {"none", b.feedback.none}}}};
  if (b.mean_prompt_tokens) j["mean_prompt_tokens"] = *b.mean_prompt_tokens;
  if (b.mean_completion_tokens) j["mean_completion_tokens"] = *b.mean_completion_tokens;
  if (b.latency_mean) j["latency_mean"] = *b.latency_mean;
  if (b.latency_p50) j["latency_p50"] = *b.latency_p50;
  if (b.latency_p95) j["latency_p95"] = *b.latency_p95;
  return j;
}

Json to_json(const AggregateReport& r) {
  Json buckets = Json::array();
  for (const auto& b : r.buckets) buckets.push_back(to_json(b));
  return Json{{"project_id", r.project_id},
              {"from", r.window.from},
              {"to", r.window.to},
              {"bucket_width_ms", r.bucket_width_ms},
              {"buckets", std::move(buckets)}};
}

}  // namespace aide
