#pragma once

// Trace ingestion: validation, synchronous evaluation, duplicate detection,
// durable commit and the in-memory trace indexes the query engine reads.
//
// Every state change is a log record; the repositories update themselves in
// apply(), which the service calls from the store's commit listener and
// during recovery replay. Writers serialize their check-then-append on a
// per-project write mutex.

#include <map>
#include <memory>
#include <mutex>
#include <set>
#include <shared_mutex>
#include <unordered_map>
#include <variant>

#include "aide/evaluators.hpp"
#include "aide/model.hpp"
#include "aide/storage.hpp"

namespace aide {

// Which projects exist. With auto-creation on, every well-formed id names a
// (possibly empty) project.
class ProjectDirectory {
 public:
  explicit ProjectDirectory(bool auto_create = true) : auto_create_(auto_create) {}

  bool auto_create() const { return auto_create_; }
  void declare(const std::string& project);
  bool declared(const std::string& project) const;

  // For reads: throws UnknownProject (or ValidationError for a bad id).
  void require(const std::string& project) const;
  // For writes: like require(), then declares the project.
  void admit(const std::string& project);

 private:
  bool auto_create_;
  mutable std::shared_mutex mu_;
  std::set<std::string> known_;
};

struct StoredTrace {
  std::shared_ptr<const Trace> trace;
  SeqNo seq = 0;
  std::string submitted_hash;
};

class TraceRepository {
 public:
  void apply(const LogRecord& record);

  std::optional<StoredTrace> get(const std::string& project, const std::string& trace_id) const;
  // Ordered by (start_time, seq) ascending.
  std::vector<StoredTrace> scan(const std::string& project,
                                std::optional<TimeRange> range = std::nullopt) const;
  std::vector<StoredTrace> by_prompt(const std::string& project, const std::string& prompt_name) const;
  std::vector<StoredTrace> by_score(const std::string& project, const std::string& metric) const;
  std::int64_t count(const std::string& project, std::optional<TimeRange> range = std::nullopt) const;

  // Serializes check-then-append for one project.
  std::mutex& write_mutex(const std::string& project);

 private:
  struct ProjectTraces {
    std::mutex write_mu;
    std::unordered_map<std::string, StoredTrace> by_id;
    std::map<std::pair<TimestampMs, SeqNo>, std::string> by_time;
    std::map<std::string, std::set<std::string>> by_prompt;
    std::map<std::string, std::set<std::string>> by_score;
  };

  const ProjectTraces* find(const std::string& project) const;
  ProjectTraces& ensure(const std::string& project);
  std::vector<StoredTrace> collect(const ProjectTraces& p, const std::set<std::string>& ids) const;

  mutable std::shared_mutex mu_;
  std::map<std::string, std::unique_ptr<ProjectTraces>> projects_;
};

// Evaluator specs: server-wide defaults from the config file plus per-project
// overrides persisted as config_event records.
class EvaluatorConfig {
 public:
  explicit EvaluatorConfig(Store& store) : store_(store) {}

  void set_defaults(const std::string& project_or_star, std::vector<EvaluatorSpec> specs);
  // Validates, persists and activates a project's evaluator list.
  std::vector<EvaluatorSpec> put(const std::string& project, std::vector<EvaluatorSpec> specs,
                                 TimestampMs now);
  std::shared_ptr<const EvaluatorSet> for_project(const std::string& project) const;
  void apply(const LogRecord& record);

 private:
  Store& store_;
  std::mutex write_mu_;
  mutable std::shared_mutex mu_;
  std::map<std::string, std::shared_ptr<const EvaluatorSet>> overrides_;
  std::map<std::string, std::shared_ptr<const EvaluatorSet>> defaults_;
};

struct IngestOptions {
  std::size_t max_batch = 500;
  bool defer_batch_evaluation = false;
};

struct IngestResult {
  std::string trace_id;
  SeqNo seq = 0;
  bool duplicate = false;
};

struct BatchItemResult {
  std::optional<IngestResult> ok;
  std::optional<std::pair<ErrorKind, std::string>> error;
  std::optional<std::string> field;  // for ValidationError
};

class TraceIngest {
 public:
  TraceIngest(Store& store, TraceRepository& repo, ProjectDirectory& projects,
              const EvaluatorConfig& evaluators, IngestOptions options);

  IngestResult log_trace(const std::string& project, Trace trace);
  // Items are decoded individually so one malformed entry fails alone.
  std::vector<BatchItemResult> log_batch(const std::string& project, const std::vector<Json>& items);

  // Adds a new score key to a committed trace; existing keys are immutable.
  std::shared_ptr<const Trace> append_score(const std::string& project, const std::string& trace_id,
                                            const std::string& metric, double value);

  const IngestOptions& options() const { return options_; }

 private:
  IngestResult commit(const std::string& project, Trace trace, bool evaluate);

  Store& store_;
  TraceRepository& repo_;
  ProjectDirectory& projects_;
  const EvaluatorConfig& evaluators_;
  IngestOptions options_;
};

}  // namespace aide
