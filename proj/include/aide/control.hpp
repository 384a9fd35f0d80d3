#pragma once

// Request routing, A/B prompt experiments and agent pause/resume.
//
// Allocation is a pure function of (experiment_id, request_key, epsilon):
// the request goes to the candidate arm iff
//   fnv1a64(experiment_id + '\x1f' + request_key) / 2^64 < epsilon.

#include <map>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include "aide/prompts.hpp"
#include "aide/proposals.hpp"

namespace aide {

enum class ExperimentStatus { running, promoted, stopped };
enum class Arm { control, candidate };
enum class Decision { continue_, promote, stop_inferior };
enum class AgentState { active, paused };

std::string_view to_string(ExperimentStatus status);
std::string_view to_string(Arm arm);
std::string_view to_string(Decision decision);
std::string_view to_string(AgentState state);
Arm arm_from_string(std::string_view name);
AgentState agent_state_from_string(std::string_view name);

// Hash position in [0, 1) used for allocation.
double allocation_point(const std::string& experiment_id, const std::string& request_key);
Arm allocate(const std::string& experiment_id, const std::string& request_key, double epsilon);

struct ExperimentDefaults {
  double epsilon = 0.05;
  std::int64_t min_samples_per_arm = 50;
  double promotion_delta = 0.05;
};

struct ExperimentParams {
  std::optional<std::string> experiment_id;  // generated when absent
  std::string prompt_name;
  std::optional<std::int64_t> control_version;  // defaults to the active binding
  std::int64_t candidate_version = 0;
  std::optional<double> epsilon;
  std::string objective_metric;
  std::optional<std::int64_t> min_samples_per_arm;
  std::optional<double> promotion_delta;
};

ExperimentParams experiment_params_from_json(const Json& j);

struct ExperimentState {
  std::string experiment_id;
  std::string project_id;
  std::string prompt_name;
  std::int64_t control_version = 0;
  std::int64_t candidate_version = 0;
  double epsilon = 0.05;
  std::string objective_metric;
  std::int64_t min_samples_per_arm = 50;
  double promotion_delta = 0.05;
  ExperimentStatus status = ExperimentStatus::running;
  RunningStats control;
  RunningStats candidate;
  TimestampMs started_at = 0;
  std::optional<TimestampMs> ended_at;
  std::optional<std::string> proposal_id;
  std::vector<std::string> candidate_evidence;  // trace ids, most recent first, at most 20
};

Json to_json(const ExperimentState& state);

struct AgentGate {
  std::string project_id;
  std::string agent_name;
  AgentState state = AgentState::active;
  std::string reason;
  TimestampMs changed_at = 0;
};

Json to_json(const AgentGate& gate);

struct Route {
  std::int64_t version = 0;
  Arm arm = Arm::control;
  std::optional<std::string> experiment_id;
};

Json to_json(const Route& route);

struct EvaluationResult {
  Decision decision = Decision::continue_;
  ExperimentState state;
  std::optional<std::string> proposal_id;
};

Json to_json(const EvaluationResult& result);

struct ControlOptions {
  bool auto_promote = false;
  ExperimentDefaults defaults;
};

class ControlPlane {
 public:
  ControlPlane(Store& store, PromptRegistry& prompts, ProposalBook& proposals,
               const TraceRepository& traces, ProjectDirectory& projects, Clock clock,
               ControlOptions options = {});

  Route route_request(const std::string& project, const std::string& prompt_name,
                      const std::string& request_key) const;

  ExperimentState start_experiment(const std::string& project, const ExperimentParams& params);
  ExperimentState stop_experiment(const std::string& experiment_id);
  // trace_id, when given, must name a committed trace of the experiment's
  // project and becomes evidence for a promotion proposal.
  RunningStats record_outcome(const std::string& experiment_id, Arm arm, double score,
                              const std::optional<std::string>& trace_id = {});
  EvaluationResult evaluate_experiment(const std::string& experiment_id);

  AgentGate set_agent_state(const std::string& project, const std::string& agent_name,
                            AgentState state, const std::string& reason);
  std::optional<AgentGate> agent(const std::string& project, const std::string& agent_name) const;

  ExperimentState experiment(const std::string& experiment_id) const;
  std::vector<ExperimentState> experiments(const std::string& project) const;
  std::optional<std::string> running_experiment(const std::string& project,
                                                const std::string& prompt_name) const;

  void apply(const LogRecord& record);

  static constexpr std::size_t kMaxEvidence = 20;

 private:
  Store& store_;
  PromptRegistry& prompts_;
  ProposalBook& proposals_;
  const TraceRepository& traces_;
  ProjectDirectory& projects_;
  Clock clock_;
  ControlOptions options_;

  std::mutex write_mu_;
  mutable std::shared_mutex mu_;
  std::map<std::string, ExperimentState> experiments_;
  std::map<std::pair<std::string, std::string>, std::string> running_;  // (project, prompt) -> id
  std::map<std::pair<std::string, std::string>, AgentGate> agents_;
};

}  // namespace aide
