#pragma once

// Human-reviewable change proposals raised by monitor rules and by
// experiment promotion. Resolving a proposal records the decision only; it
// never activates anything.

#include <map>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include "aide/ingest.hpp"

namespace aide {

enum class ProposalSource { monitor_rule, experiment_promotion };
enum class ProposalStatus { open, accepted, rejected };

std::string_view to_string(ProposalSource source);
std::string_view to_string(ProposalStatus status);
ProposalStatus proposal_status_from_string(std::string_view name);

struct Proposal {
  std::string proposal_id;
  ProposalSource source = ProposalSource::monitor_rule;
  std::string project_id;
  std::string subject;  // prompt or agent name
  std::string description;
  std::vector<std::string> evidence;  // trace ids, most recent first
  ProposalStatus status = ProposalStatus::open;
  TimestampMs created_at = 0;
  std::optional<std::string> rule_id;
  std::optional<std::string> experiment_id;
  Json action_params = Json::object();
  std::optional<std::string> resolution_note;
  std::optional<TimestampMs> resolved_at;
};

Json to_json(const Proposal& p);
Proposal proposal_from_json(const Json& j);

class ProposalBook {
 public:
  ProposalBook(Store& store, const TraceRepository& traces, Clock clock)
      : store_(store), traces_(traces), clock_(std::move(clock)) {}

  // Persists an open proposal. Evidence ids that do not resolve are dropped.
  Proposal create(Proposal proposal);
  // open -> accepted | rejected; anything else is IllegalTransition.
  Proposal resolve(const std::string& proposal_id, ProposalStatus status, const std::string& note);

  std::optional<Proposal> get(const std::string& proposal_id) const;
  // Ordered by (created_at, proposal_id).
  std::vector<Proposal> list(const std::optional<ProposalStatus>& status = {},
                             const std::optional<std::string>& project = {}) const;

  void apply(const LogRecord& record);

 private:
  Store& store_;
  const TraceRepository& traces_;
  Clock clock_;
  std::mutex write_mu_;
  mutable std::shared_mutex mu_;
  std::map<std::string, Proposal> proposals_;
};

}  // namespace aide
