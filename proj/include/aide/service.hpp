#pragma once

// The assembled server: one store, the module states folded from it, and the
// commit listener that keeps them (and live subscribers) current.

#include <memory>
#include <string>
#include <vector>

#include "aide/control.hpp"
#include "aide/events.hpp"
#include "aide/gate.hpp"
#include "aide/ingest.hpp"
#include "aide/monitor.hpp"
#include "aide/prompts.hpp"
#include "aide/proposals.hpp"
#include "aide/query.hpp"
#include "aide/storage.hpp"

namespace aide {

struct ServiceConfig {
  StoreOptions store;
  bool auto_create_projects = true;
  std::vector<std::string> projects;
  IngestOptions ingest;
  ControlOptions control;
  GateConfig gate_defaults;
  // "*" or a project id -> evaluator specs.
  std::map<std::string, std::vector<EvaluatorSpec>> evaluators;
  std::vector<MonitorRule> rules;
  std::int64_t scheduler_interval_ms = 0;  // 0: no background scheduler
  std::size_t subscriber_depth = 1024;
  std::string api_key;
  std::string http_addr = "127.0.0.1:7465";
};

// Overlays the config file fields onto `base`.
ServiceConfig config_from_json(const Json& j, ServiceConfig base = {});
// AIDE_CONFIG (file), then AIDE_DATA_DIR, AIDE_API_KEY, AIDE_HTTP_ADDR.
ServiceConfig config_from_env();

class Service {
 public:
  explicit Service(ServiceConfig config, Clock clock = system_clock());
  ~Service();

  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  const ServiceConfig& config() const { return config_; }
  const Clock& clock() const { return clock_; }

  Store& store() { return store_; }
  ProjectDirectory& projects() { return projects_; }
  TraceRepository& traces() { return traces_; }
  EvaluatorConfig& evaluators() { return evaluators_; }
  TraceIngest& ingest() { return ingest_; }
  QueryEngine& queries() { return queries_; }
  PromptRegistry& prompts() { return prompts_; }
  CiGate& gate() { return gate_; }
  ProposalBook& proposals() { return proposals_; }
  ControlPlane& control() { return control_; }
  Monitor& monitor() { return monitor_; }
  SubscriptionHub& hub() { return hub_; }

  // Binding with the running experiment (if any) filled in.
  std::optional<ActiveBinding> binding(const std::string& project, const std::string& prompt_name) const;

  void start_scheduler();
  void shutdown();

 private:
  void apply(const LogRecord& record);

  ServiceConfig config_;
  Clock clock_;
  Store store_;
  ProjectDirectory projects_;
  TraceRepository traces_;
  EvaluatorConfig evaluators_;
  TraceIngest ingest_;
  QueryEngine queries_;
  PromptRegistry prompts_;
  CiGate gate_;
  ProposalBook proposals_;
  ControlPlane control_;
  Monitor monitor_;
  SubscriptionHub hub_;
};

}  // namespace aide
