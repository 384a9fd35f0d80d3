#pragma once

// Structured trace queries: filtered search with keyset pagination, counts,
// latest-trace lookup and time-bucketed aggregate metrics.
//
// Predicate fields: name, tags, feedback, prompt_ref.name, prompt_ref.version,
// scores.<metric>, token_usage.prompt_tokens, token_usage.completion_tokens,
// latency_ms, error_present. A predicate over a field the trace does not
// carry (no feedback, no such score, ...) is false; `exists` tests presence.

#include <memory>
#include <optional>
#include <vector>

#include "aide/ingest.hpp"
#include "aide/model.hpp"

namespace aide {

// A validated conjunction of predicates.
class CompiledFilter {
 public:
  CompiledFilter() = default;
  // Throws UnknownField for an unknown path, ValidationError for an operator
  // or value the field does not support.
  static CompiledFilter compile(const std::vector<Predicate>& predicates);

  bool matches(const Trace& trace) const;
  const std::vector<Predicate>& predicates() const { return predicates_; }
  bool empty() const { return predicates_.empty(); }

 private:
  enum class FieldType { string, string_set, number, boolean };
  struct Term {
    std::string field;
    FieldType type;
    FilterOp op;
    double number = 0;
    std::string text;
    bool flag = false;
  };

  std::vector<Predicate> predicates_;
  std::vector<Term> terms_;

  static bool test(const Term& term, const Trace& trace);
};

// Sort key accessor; throws UnknownField for a field that cannot be ordered.
void validate_order_field(const std::string& field);

struct SearchPage {
  std::vector<std::shared_ptr<const Trace>> traces;
  std::optional<std::string> next_cursor;
};

class QueryEngine {
 public:
  QueryEngine(const TraceRepository& repo, const ProjectDirectory& projects)
      : repo_(repo), projects_(projects) {}

  SearchPage search(const FilterQuery& query) const;
  std::int64_t count(const std::string& project, std::optional<TimeRange> range = std::nullopt) const;
  // Newest committed trace by start_time satisfying the predicates; ties go
  // to the later commit.
  std::shared_ptr<const Trace> latest(const std::string& project,
                                      const std::vector<Predicate>& predicates = {}) const;
  AggregateReport aggregate(const std::string& project, TimeRange window,
                            std::int64_t bucket_width_ms) const;

  // Every stored trace matching the filter within the range, (start_time,
  // seq) ascending. Shared with the monitor and gate modules.
  std::vector<StoredTrace> matching(const std::string& project, const CompiledFilter& filter,
                                    std::optional<TimeRange> range) const;

  static constexpr std::int64_t kMinBucketWidthMs = 1000;
  static constexpr std::int64_t kMaxBuckets = 10000;

 private:
  std::vector<StoredTrace> candidates(const std::string& project, const CompiledFilter& filter,
                                      std::optional<TimeRange> range) const;

  const TraceRepository& repo_;
  const ProjectDirectory& projects_;
};

// Nearest-rank percentile over an ascending list: element ceil(p/100 * n).
std::int64_t nearest_rank(const std::vector<std::int64_t>& sorted, int percent);

}  // namespace aide
