#pragma once

// Rule-driven watcher over committed traces. A rule looks at the traces
// matching its filter in [now - window, now), aggregates them and fires an
// alert or a proposal when the trigger holds, at most once per cooldown.

#include <atomic>
#include <condition_variable>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <thread>
#include <vector>

#include "aide/proposals.hpp"
#include "aide/query.hpp"

namespace aide {

enum class Aggregate { count, mean_of };
enum class Comparator { gt, ge, lt, le };
enum class RuleAction { alert, propose_prompt_change, propose_experiment };

std::string_view to_string(Comparator c);
std::string_view to_string(RuleAction a);
bool compare(double value, Comparator c, double threshold);

struct Trigger {
  Aggregate aggregate = Aggregate::count;
  std::string metric;  // for mean_of
  Comparator comparator = Comparator::ge;
  double threshold = 0;
  std::int64_t min_matches = 1;
};

struct MonitorRule {
  std::string rule_id;
  std::string project_id;
  std::vector<Predicate> filter;
  std::int64_t window_ms = 3600000;
  Trigger trigger;
  RuleAction action = RuleAction::alert;
  std::int64_t cooldown_ms = 600000;
  // description_template ({rule_id}, {value}, {matches} are substituted),
  // subject, candidate_version, ...
  Json action_params = Json::object();
  bool enabled = true;
};

Json to_json(const MonitorRule& rule);
MonitorRule monitor_rule_from_json(const Json& j);
// Throws ValidationError / UnknownField.
void validate(const MonitorRule& rule);

struct Alert {
  std::string alert_id;
  std::string project_id;
  std::string rule_id;
  std::string message;
  std::vector<std::string> evidence;
  TimestampMs created_at = 0;
};

Json to_json(const Alert& alert);

struct Firing {
  std::string firing_id;  // <project>.<rule_id>-<fired_at>
  std::string rule_id;
  std::string project_id;
  TimestampMs fired_at = 0;
  double value = 0;
  std::int64_t matches = 0;
  std::vector<std::string> evidence;  // most recent first, at most 20
  RuleAction action = RuleAction::alert;
  std::optional<std::string> proposal_id;
  std::optional<std::string> alert_id;
};

Json to_json(const Firing& firing);

// Read-only trigger evaluation at `now`, ignoring cooldown.
std::optional<Firing> evaluate_rule(const MonitorRule& rule, const QueryEngine& queries, TimestampMs now);

// Offline re-run of a rule over committed data: ticks at the given times
// with cooldown applied and no prior firing.
std::vector<Firing> replay_rule(const MonitorRule& rule, const QueryEngine& queries,
                                const std::vector<TimestampMs>& ticks);

class Monitor {
 public:
  Monitor(Store& store, const QueryEngine& queries, ProposalBook& proposals, ProjectDirectory& projects,
          Clock clock);
  ~Monitor();

  // Re-registering an identical rule is a no-op.
  MonitorRule register_rule(MonitorRule rule);
  std::vector<MonitorRule> list_rules(const std::optional<std::string>& project = {}) const;

  std::optional<Firing> tick(const std::string& project, const std::string& rule_id, TimestampMs now);
  // Ticks every enabled rule; errors count against the rule.
  std::vector<Firing> tick_all(TimestampMs now);

  std::vector<Firing> firings(const std::optional<std::string>& project = {}) const;
  std::vector<Alert> alerts(const std::optional<std::string>& project = {}) const;

  void start_scheduler(std::int64_t interval_ms);
  // Finishes the tick in progress, then joins.
  void stop_scheduler();

  // Test seam: called before each evaluation; a throw counts as a rule error.
  void set_fault_hook(std::function<void(const MonitorRule&)> hook);

  void apply(const LogRecord& record);

  static constexpr std::size_t kMaxEvidence = 20;
  static constexpr int kMaxConsecutiveErrors = 3;

 private:
  using RuleKey = std::pair<std::string, std::string>;  // (project, rule)
  struct RuleState {
    MonitorRule rule;
    std::optional<TimestampMs> last_fired;
    int consecutive_errors = 0;
  };

  std::optional<Firing> tick_locked(const RuleKey& key, TimestampMs now);
  void fire(const MonitorRule& rule, Firing& firing);
  void record_error(const RuleKey& key, const std::string& what, TimestampMs now);

  Store& store_;
  const QueryEngine& queries_;
  ProposalBook& proposals_;
  ProjectDirectory& projects_;
  Clock clock_;

  std::mutex write_mu_;
  mutable std::shared_mutex mu_;
  std::map<RuleKey, RuleState> rules_;
  std::vector<Firing> firings_;
  std::vector<Alert> alerts_;
  std::function<void(const MonitorRule&)> fault_hook_;

  std::thread scheduler_;
  std::mutex sched_mu_;
  std::condition_variable sched_cv_;
  bool sched_stop_ = false;
};

}  // namespace aide
