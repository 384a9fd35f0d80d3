#pragma once

// Domain types shared by every module. Values only; no I/O.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "aide/error.hpp"
#include "json.hpp"

namespace aide {

using Json = nlohmann::json;
using TimestampMs = std::int64_t;
using SeqNo = std::uint64_t;

// Milliseconds since the Unix epoch; injectable for tests and replay.
using Clock = std::function<TimestampMs()>;
Clock system_clock();

inline constexpr std::size_t kMaxPayloadBytes = 1u << 20;
inline constexpr std::size_t kMaxIdLength = 128;

// 1..128 chars of [A-Za-z0-9._-].
bool is_valid_id(std::string_view id);
bool is_valid_utf8(std::string_view text);
std::size_t utf8_length(std::string_view text);

// 64-bit FNV-1a over the given bytes.
std::uint64_t fnv1a64(std::string_view bytes);
std::string hex64(std::uint64_t value);

// 128-bit random identifier rendered as 32 lowercase hex chars.
std::string generate_id();

struct TokenUsage {
  std::int64_t prompt_tokens = 0;
  std::int64_t completion_tokens = 0;

  bool operator==(const TokenUsage&) const = default;
};

enum class SpanKind { llm_call, tool_call, evaluation, other };

struct Span {
  std::string span_id;
  std::optional<std::string> parent_span;
  SpanKind kind = SpanKind::other;
  std::string name;
  std::string input;
  std::string output;
  TimestampMs start_time = 0;
  TimestampMs end_time = 0;
  std::optional<TokenUsage> token_usage;
  std::optional<std::string> error;

  bool operator==(const Span&) const = default;
};

struct PromptRef {
  std::string prompt_name;
  std::int64_t version = 1;

  bool operator==(const PromptRef&) const = default;
};

struct Trace {
  std::string trace_id;
  std::string project_id;
  std::string name;
  TimestampMs start_time = 0;
  TimestampMs end_time = 0;
  std::vector<Span> spans;
  std::optional<PromptRef> prompt_ref;
  std::string input;
  std::string output;
  TokenUsage token_usage;
  std::map<std::string, double> scores;
  std::optional<int> feedback;
  std::set<std::string> tags;

  std::int64_t latency_ms() const { return end_time - start_time; }
  bool error_present() const;

  bool operator==(const Trace&) const = default;
};

// Numeric trace fields addressable by path: latency_ms, feedback,
// prompt_ref.version, token_usage.prompt_tokens,
// token_usage.completion_tokens, scores.<metric>. Absent values are nullopt.
bool is_numeric_path(std::string_view path);
std::optional<double> numeric_field(const Trace& trace, std::string_view path);

// Checks every Trace invariant and returns the record unchanged when it
// holds; throws ValidationError naming the first violated field otherwise.
Trace validate_trace(Trace candidate);

struct PromptVersion {
  std::string prompt_name;
  std::int64_t version = 0;
  std::string template_text;
  std::map<std::string, std::string> metadata;
  TimestampMs created_at = 0;
  std::string created_by;
  std::optional<std::string> commit_tag;

  bool operator==(const PromptVersion&) const = default;
};

struct ActiveBinding {
  std::string project_id;
  std::string prompt_name;
  std::int64_t active_version = 0;
  std::optional<std::string> agent;
  std::optional<std::string> experiment_id;

  bool operator==(const ActiveBinding&) const = default;
};

// Running mean and sum of squared deviations (Welford). The mean of equal
// inputs is exact and their M2 is exactly zero.
struct RunningStats {
  std::int64_t n = 0;
  double mean = 0.0;
  double m2 = 0.0;

  void add(double x) {
    ++n;
    const double delta = x - mean;
    mean += delta / static_cast<double>(n);
    m2 += delta * (x - mean);
  }
  // n - 1 denominator; 0 for fewer than two samples.
  double sample_variance() const { return n < 2 ? 0.0 : m2 / static_cast<double>(n - 1); }
};

enum class FilterOp { eq, neq, lt, le, gt, ge, contains, exists };

struct Predicate {
  std::string field;
  FilterOp op = FilterOp::exists;
  Json value;
};

// Half-open [from, to).
struct TimeRange {
  TimestampMs from = 0;
  TimestampMs to = 0;

  bool contains(TimestampMs t) const { return t >= from && t < to; }
};

enum class SortDir { asc, desc };

struct OrderBy {
  std::string field = "start_time";
  SortDir dir = SortDir::desc;
};

inline constexpr int kDefaultLimit = 50;
inline constexpr int kMaxLimit = 1000;

struct FilterQuery {
  std::string project_id;
  std::vector<Predicate> predicates;
  std::optional<TimeRange> time_range;
  OrderBy order_by;
  int limit = kDefaultLimit;
  std::optional<std::string> cursor;
};

struct FeedbackCounts {
  std::int64_t negative = 0;
  std::int64_t neutral = 0;
  std::int64_t positive = 0;
  std::int64_t none = 0;

  bool operator==(const FeedbackCounts&) const = default;
};

// Statistics over one [from, to) bucket. Means are absent for an empty
// bucket, never zero.
struct BucketStats {
  TimestampMs from = 0;
  TimestampMs to = 0;
  std::int64_t trace_count = 0;
  std::int64_t sum_prompt_tokens = 0;
  std::int64_t sum_completion_tokens = 0;
  std::optional<double> mean_prompt_tokens;
  std::optional<double> mean_completion_tokens;
  std::optional<double> latency_mean;
  std::optional<std::int64_t> latency_p50;
  std::optional<std::int64_t> latency_p95;
  std::map<std::string, double> score_means;
  FeedbackCounts feedback;

  bool operator==(const BucketStats&) const = default;
};

struct AggregateReport {
  std::string project_id;
  TimeRange window;
  std::int64_t bucket_width_ms = 0;
  std::vector<BucketStats> buckets;
};

}  // namespace aide
