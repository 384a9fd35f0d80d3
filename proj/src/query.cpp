#include "aide/query.hpp"

#include <algorithm>
#include <cmath>

#include "aide/codec.hpp"

namespace aide {

namespace {

bool is_string_field(std::string_view f) { return f == "name" || f == "prompt_ref.name"; }

std::optional<std::string> string_field(const Trace& t, std::string_view f) {
  if (f == "name") return t.name;
  if (f == "prompt_ref.name") {
    if (!t.prompt_ref) return std::nullopt;
    return t.prompt_ref->prompt_name;
  }
  return std::nullopt;
}

template <typename T>
bool compare(FilterOp op, const T& lhs, const T& rhs) {
  switch (op) {
    case FilterOp::eq: return lhs == rhs;
    case FilterOp::neq: return lhs != rhs;
    case FilterOp::lt: return lhs < rhs;
    case FilterOp::le: return lhs <= rhs;
    case FilterOp::gt: return lhs > rhs;
    case FilterOp::ge: return lhs >= rhs;
    default: return false;
  }
}

std::string predicate_path(std::size_t i) { return "predicates[" + std::to_string(i) + "]"; }

}  // namespace

CompiledFilter CompiledFilter::compile(const std::vector<Predicate>& predicates) {
  CompiledFilter out;
  out.predicates_ = predicates;
  for (std::size_t i = 0; i < predicates.size(); ++i) {
    const auto& p = predicates[i];
    Term term{p.field, FieldType::number, p.op, 0, {}, false};
    if (is_string_field(p.field)) {
      term.type = FieldType::string;
    } else if (p.field == "tags") {
      term.type = FieldType::string_set;
    } else if (p.field == "error_present") {
      term.type = FieldType::boolean;
    } else if (is_numeric_path(p.field)) {
      term.type = FieldType::number;
    } else {
      throw Error(ErrorKind::UnknownField, "unknown field path '" + p.field + "'");
    }
    const auto where = predicate_path(i);
    if (p.op != FilterOp::exists) {
      switch (term.type) {
        case FieldType::string:
          if (!p.value.is_string()) throw ValidationError(where + ".value", "expected a string");
          term.text = p.value.get<std::string>();
          break;
        case FieldType::string_set:
          if (p.op != FilterOp::contains) {
            throw ValidationError(where + ".op", "tags support only 'contains' and 'exists'");
          }
          if (!p.value.is_string()) throw ValidationError(where + ".value", "expected a string");
          term.text = p.value.get<std::string>();
          break;
        case FieldType::boolean:
          if (p.op != FilterOp::eq && p.op != FilterOp::neq) {
            throw ValidationError(where + ".op", "error_present supports eq, neq and exists");
          }
          if (!p.value.is_boolean()) throw ValidationError(where + ".value", "expected a boolean");
          term.flag = p.value.get<bool>();
          break;
        case FieldType::number:
          if (p.op == FilterOp::contains) {
            throw ValidationError(where + ".op", "'contains' is not defined for numeric fields");
          }
          if (!p.value.is_number() || !std::isfinite(p.value.get<double>())) {
            throw ValidationError(where + ".value", "expected a finite number");
          }
          term.number = p.value.get<double>();
          break;
      }
    }
    out.terms_.push_back(std::move(term));
  }
  return out;
}

bool CompiledFilter::test(const Term& term, const Trace& trace) {
  switch (term.type) {
    case FieldType::string: {
      const auto value = string_field(trace, term.field);
      if (!value) return false;
      if (term.op == FilterOp::exists) return true;
      if (term.op == FilterOp::contains) return value->find(term.text) != std::string::npos;
      return compare(term.op, *value, term.text);
    }
    case FieldType::string_set:
      if (term.op == FilterOp::exists) return !trace.tags.empty();
      return trace.tags.contains(term.text);
    case FieldType::boolean:
      if (term.op == FilterOp::exists) return true;
      return compare(term.op, trace.error_present(), term.flag);
    case FieldType::number: {
      const auto value = numeric_field(trace, term.field);
      if (!value) return false;
      if (term.op == FilterOp::exists) return true;
      return compare(term.op, *value, term.number);
    }
  }
  return false;
}

bool CompiledFilter::matches(const Trace& trace) const {
  return std::all_of(terms_.begin(), terms_.end(), [&](const Term& t) { return test(t, trace); });
}

void validate_order_field(const std::string& field) {
  if (field == "start_time" || field == "end_time" || field == "name" || is_numeric_path(field)) {
    return;
  }
  throw Error(ErrorKind::UnknownField, "cannot order by '" + field + "'");
}

namespace {

struct SortKey {
  bool missing = false;
  bool textual = false;
  double number = 0;
  std::string text;
  SeqNo seq = 0;
};

SortKey sort_key(const StoredTrace& s, const std::string& field) {
  SortKey k;
  k.seq = s.seq;
  const auto& t = *s.trace;
  if (field == "start_time") {
    k.number = static_cast<double>(t.start_time);
  } else if (field == "end_time") {
    k.number = static_cast<double>(t.end_time);
  } else if (field == "name") {
    k.textual = true;
    k.text = t.name;
  } else if (auto v = numeric_field(t, field)) {
    k.number = *v;
  } else {
    k.missing = true;
  }
  return k;
}

// True when `a` is emitted before `b`. Missing keys always sort last.
bool before(const SortKey& a, const SortKey& b, SortDir dir) {
  if (a.missing != b.missing) return !a.missing;
  if (!a.missing) {
    int c = 0;
    if (a.textual) {
      c = a.text < b.text ? -1 : (b.text < a.text ? 1 : 0);
    } else {
      c = a.number < b.number ? -1 : (b.number < a.number ? 1 : 0);
    }
    if (c != 0) return dir == SortDir::asc ? c < 0 : c > 0;
  }
  return dir == SortDir::asc ? a.seq < b.seq : a.seq > b.seq;
}

std::string hex_encode(std::string_view bytes) {
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(bytes.size() * 2);
  for (unsigned char c : bytes) {
    out += kHex[c >> 4];
    out += kHex[c & 0xF];
  }
  return out;
}

std::optional<std::string> hex_decode(std::string_view hex) {
  if (hex.size() % 2 != 0) return std::nullopt;
  auto nibble = [](char c) -> int {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    return -1;
  };
  std::string out;
  for (std::size_t i = 0; i < hex.size(); i += 2) {
    const int hi = nibble(hex[i]), lo = nibble(hex[i + 1]);
    if (hi < 0 || lo < 0) return std::nullopt;
    out += static_cast<char>(hi * 16 + lo);
  }
  return out;
}

std::string encode_cursor(const SortKey& k, const OrderBy& order) {
  Json j{{"f", order.field}, {"d", order.dir == SortDir::asc ? "asc" : "desc"},
         {"m", k.missing}, {"s", k.seq}};
  if (!k.missing) j["v"] = k.textual ? Json(k.text) : Json(k.number);
  return hex_encode(canonical(j));
}

SortKey decode_cursor(const std::string& cursor, const OrderBy& order) {
  auto bad = [] { return ValidationError("cursor", "malformed or foreign cursor"); };
  const auto raw = hex_decode(cursor);
  if (!raw) throw bad();
  Json j;
  try {
    j = Json::parse(*raw);
  } catch (const Json::exception&) {
    throw bad();
  }
  if (!j.is_object() || j.value("f", "") != order.field ||
      j.value("d", "") != (order.dir == SortDir::asc ? "asc" : "desc") ||
      !j.contains("m") || !j["m"].is_boolean() || !j.contains("s") || !j["s"].is_number_unsigned()) {
    throw bad();
  }
  SortKey k;
  k.missing = j["m"].get<bool>();
  k.seq = j["s"].get<SeqNo>();
  if (!k.missing) {
    if (!j.contains("v")) throw bad();
    if (j["v"].is_string()) {
      k.textual = true;
      k.text = j["v"].get<std::string>();
    } else if (j["v"].is_number()) {
      k.number = j["v"].get<double>();
    } else {
      throw bad();
    }
  }
  return k;
}

void check_range(const std::optional<TimeRange>& range) {
  if (range && range->to < range->from) {
    throw Error(ErrorKind::InvalidRange, "time range must satisfy from <= to");
  }
}

}  // namespace

std::vector<StoredTrace> QueryEngine::candidates(const std::string& project, const CompiledFilter& filter,
                                                 std::optional<TimeRange> range) const {
  // Index paths narrow the candidate set; the filter is always re-applied.
  std::optional<std::vector<StoredTrace>> narrowed;
  for (const auto& p : filter.predicates()) {
    if (p.field.starts_with("scores.")) {
      narrowed = repo_.by_score(project, p.field.substr(7));
      break;
    }
    if (p.field == "prompt_ref.name" && p.op == FilterOp::eq) {
      narrowed = repo_.by_prompt(project, p.value.get<std::string>());
      break;
    }
  }
  if (!narrowed) return repo_.scan(project, range);
  if (range) {
    std::erase_if(*narrowed, [&](const StoredTrace& s) { return !range->contains(s.trace->start_time); });
  }
  return std::move(*narrowed);
}

std::vector<StoredTrace> QueryEngine::matching(const std::string& project, const CompiledFilter& filter,
                                               std::optional<TimeRange> range) const {
  auto items = candidates(project, filter, range);
  std::erase_if(items, [&](const StoredTrace& s) { return !filter.matches(*s.trace); });
  std::sort(items.begin(), items.end(), [](const StoredTrace& a, const StoredTrace& b) {
    return a.trace->start_time != b.trace->start_time ? a.trace->start_time < b.trace->start_time
                                                      : a.seq < b.seq;
  });
  return items;
}

SearchPage QueryEngine::search(const FilterQuery& query) const {
  projects_.require(query.project_id);
  if (query.limit < 1 || query.limit > kMaxLimit) {
    throw Error(ErrorKind::InvalidRange, "limit must be in 1..1000");
  }
  check_range(query.time_range);
  const auto filter = CompiledFilter::compile(query.predicates);
  validate_order_field(query.order_by.field);
  std::optional<SortKey> after;
  if (query.cursor) after = decode_cursor(*query.cursor, query.order_by);

  struct Keyed {
    SortKey key;
    std::shared_ptr<const Trace> trace;
  };
  std::vector<Keyed> keyed;
  for (auto& s : matching(query.project_id, filter, query.time_range)) {
    auto key = sort_key(s, query.order_by.field);
    if (after && !before(*after, key, query.order_by.dir)) continue;
    keyed.push_back({std::move(key), std::move(s.trace)});
  }
  std::sort(keyed.begin(), keyed.end(), [&](const Keyed& a, const Keyed& b) {
    return before(a.key, b.key, query.order_by.dir);
  });

  SearchPage page;
  const auto take = std::min<std::size_t>(keyed.size(), static_cast<std::size_t>(query.limit));
  for (std::size_t i = 0; i < take; ++i) page.traces.push_back(keyed[i].trace);
  if (keyed.size() > take && take > 0) page.next_cursor = encode_cursor(keyed[take - 1].key, query.order_by);
  return page;
}

std::int64_t QueryEngine::count(const std::string& project, std::optional<TimeRange> range) const {
  projects_.require(project);
  check_range(range);
  return repo_.count(project, range);
}

std::shared_ptr<const Trace> QueryEngine::latest(const std::string& project,
                                                 const std::vector<Predicate>& predicates) const {
  projects_.require(project);
  const auto filter = CompiledFilter::compile(predicates);
  auto items = matching(project, filter, std::nullopt);
  if (items.empty()) return nullptr;
  return items.back().trace;
}

std::int64_t nearest_rank(const std::vector<std::int64_t>& sorted, int percent) {
  const auto n = static_cast<std::int64_t>(sorted.size());
  std::int64_t rank = (percent * n + 99) / 100;
  rank = std::clamp<std::int64_t>(rank, 1, n);
  return sorted[static_cast<std::size_t>(rank - 1)];
}

AggregateReport QueryEngine::aggregate(const std::string& project, TimeRange window,
                                       std::int64_t bucket_width_ms) const {
  projects_.require(project);
  if (bucket_width_ms < kMinBucketWidthMs) {
    throw Error(ErrorKind::InvalidRange, "bucket width must be at least 1000 ms");
  }
  if (window.to <= window.from) throw Error(ErrorKind::InvalidRange, "window must satisfy from < to");
  const auto span = window.to - window.from;
  const auto n_buckets = span / bucket_width_ms + (span % bucket_width_ms != 0 ? 1 : 0);
  if (n_buckets > kMaxBuckets) {
    throw Error(ErrorKind::WindowTooWide,
                "window needs " + std::to_string(n_buckets) + " buckets; the limit is 10000");
  }

  auto traces = repo_.scan(project, window);
  // Fold order depends only on stored content, never on arrival order.
  std::sort(traces.begin(), traces.end(), [](const StoredTrace& a, const StoredTrace& b) {
    return a.trace->start_time != b.trace->start_time ? a.trace->start_time < b.trace->start_time
                                                      : a.trace->trace_id < b.trace->trace_id;
  });

  AggregateReport report;
  report.project_id = project;
  report.window = window;
  report.bucket_width_ms = bucket_width_ms;
  report.buckets.resize(static_cast<std::size_t>(n_buckets));

  struct Acc {
    std::int64_t latency_sum = 0;
    std::vector<std::int64_t> latencies;
    std::map<std::string, std::pair<double, std::int64_t>> scores;
  };
  std::vector<Acc> acc(report.buckets.size());
  for (std::size_t i = 0; i < report.buckets.size(); ++i) {
    auto& b = report.buckets[i];
    b.from = window.from + static_cast<std::int64_t>(i) * bucket_width_ms;
    b.to = std::min(b.from + bucket_width_ms, window.to);
  }
  for (const auto& s : traces) {
    const auto& t = *s.trace;
    const auto idx = static_cast<std::size_t>((t.start_time - window.from) / bucket_width_ms);
    auto& b = report.buckets[idx];
    auto& a = acc[idx];
    ++b.trace_count;
    b.sum_prompt_tokens += t.token_usage.prompt_tokens;
    b.sum_completion_tokens += t.token_usage.completion_tokens;
    a.latency_sum += t.latency_ms();
    a.latencies.push_back(t.latency_ms());
    for (const auto& [metric, value] : t.scores) {
      auto& [sum, n] = a.scores[metric];
      sum += value;
      ++n;
    }
    if (!t.feedback) {
      ++b.feedback.none;
    } else if (*t.feedback < 0) {
      ++b.feedback.negative;
    } else if (*t.feedback > 0) {
      ++b.feedback.positive;
    } else {
      ++b.feedback.neutral;
    }
  }
  for (std::size_t i = 0; i < report.buckets.size(); ++i) {
    auto& b = report.buckets[i];
    auto& a = acc[i];
    if (b.trace_count == 0) continue;
    const auto n = static_cast<double>(b.trace_count);
    b.mean_prompt_tokens = static_cast<double>(b.sum_prompt_tokens) / n;
    b.mean_completion_tokens = static_cast<double>(b.sum_completion_tokens) / n;
    b.latency_mean = static_cast<double>(a.latency_sum) / n;
    std::sort(a.latencies.begin(), a.latencies.end());
    b.latency_p50 = nearest_rank(a.latencies, 50);
    b.latency_p95 = nearest_rank(a.latencies, 95);
    for (const auto& [metric, sn] : a.scores) {
      b.score_means[metric] = sn.first / static_cast<double>(sn.second);
    }
  }
  return report;
}

}  // namespace aide
