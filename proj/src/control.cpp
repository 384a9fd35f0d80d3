#include "aide/control.hpp"

#include <cmath>

#include "aide/codec.hpp"

namespace aide {

std::string_view to_string(ExperimentStatus status) {
  switch (status) {
    case ExperimentStatus::running: return "running";
    case ExperimentStatus::promoted: return "promoted";
    case ExperimentStatus::stopped: return "stopped";
  }
  return "running";
}

std::string_view to_string(Arm arm) { return arm == Arm::control ? "control" : "candidate"; }

std::string_view to_string(Decision decision) {
  switch (decision) {
    case Decision::continue_: return "continue";
    case Decision::promote: return "promote";
    case Decision::stop_inferior: return "stop_inferior";
  }
  return "continue";
}

std::string_view to_string(AgentState state) { return state == AgentState::active ? "active" : "paused"; }

Arm arm_from_string(std::string_view name) {
  if (name == "control") return Arm::control;
  if (name == "candidate") return Arm::candidate;
  throw ValidationError("arm", "expected control or candidate");
}

AgentState agent_state_from_string(std::string_view name) {
  if (name == "active") return AgentState::active;
  if (name == "paused") return AgentState::paused;
  throw ValidationError("state", "expected active or paused");
}

double allocation_point(const std::string& experiment_id, const std::string& request_key) {
  std::string buf;
  buf.reserve(experiment_id.size() + 1 + request_key.size());
  buf += experiment_id;
  buf += '\x1f';
  buf += request_key;
  return static_cast<double>(fnv1a64(buf)) / 18446744073709551616.0;
}

Arm allocate(const std::string& experiment_id, const std::string& request_key, double epsilon) {
  return allocation_point(experiment_id, request_key) < epsilon ? Arm::candidate : Arm::control;
}

ExperimentParams experiment_params_from_json(const Json& j) {
  using namespace wire;
  expect_object(j, "");
  reject_unknown(j, {"experiment_id", "prompt_name", "control_version", "candidate_version", "epsilon",
                     "objective_metric", "min_samples_per_arm", "promotion_delta"},
                 "");
  ExperimentParams p;
  p.experiment_id = opt_string(j, "experiment_id", "");
  p.prompt_name = get_string(j, "prompt_name", "");
  p.control_version = opt_int(j, "control_version", "");
  p.candidate_version = get_int(j, "candidate_version", "");
  p.epsilon = opt_number(j, "epsilon", "");
  p.objective_metric = get_string(j, "objective_metric", "");
  p.min_samples_per_arm = opt_int(j, "min_samples_per_arm", "");
  p.promotion_delta = opt_number(j, "promotion_delta", "");
  return p;
}

namespace {

Json stats_json(const RunningStats& s) {
  return Json{{"n", s.n}, {"mean", s.mean}, {"m2", s.m2}, {"variance", s.sample_variance()}};
}

ExperimentState experiment_from_json(const Json& j) {
  ExperimentState s;
  s.experiment_id = j.at("experiment_id").get<std::string>();
  s.project_id = j.at("project_id").get<std::string>();
  s.prompt_name = j.at("prompt_name").get<std::string>();
  s.control_version = j.at("control_version").get<std::int64_t>();
  s.candidate_version = j.at("candidate_version").get<std::int64_t>();
  s.epsilon = j.at("epsilon").get<double>();
  s.objective_metric = j.at("objective_metric").get<std::string>();
  s.min_samples_per_arm = j.at("min_samples_per_arm").get<std::int64_t>();
  s.promotion_delta = j.at("promotion_delta").get<double>();
  s.started_at = j.at("started_at").get<TimestampMs>();
  return s;
}

}  // namespace

Json to_json(const ExperimentState& s) {
  Json j{{"experiment_id", s.experiment_id},
         {"project_id", s.project_id},
         {"prompt_name", s.prompt_name},
         {"control_version", s.control_version},
         {"candidate_version", s.candidate_version},
         {"epsilon", s.epsilon},
         {"objective_metric", s.objective_metric},
         {"min_samples_per_arm", s.min_samples_per_arm},
         {"promotion_delta", s.promotion_delta},
         {"status", to_string(s.status)},
         {"control", stats_json(s.control)},
         {"candidate", stats_json(s.candidate)},
         {"started_at", s.started_at}};
  if (s.ended_at) j["ended_at"] = *s.ended_at;
  if (s.proposal_id) j["proposal_id"] = *s.proposal_id;
  return j;
}

Json to_json(const AgentGate& g) {
  return Json{{"project_id", g.project_id}, {"agent_name", g.agent_name}, {"state", to_string(g.state)},
              {"reason", g.reason}, {"changed_at", g.changed_at}};
}

Json to_json(const Route& r) {
  Json j{{"version", r.version}, {"arm", to_string(r.arm)}};
  if (r.experiment_id) j["experiment_id"] = *r.experiment_id;
  return j;
}

Json to_json(const EvaluationResult& r) {
  Json j{{"decision", to_string(r.decision)}, {"experiment", to_json(r.state)}};
  if (r.proposal_id) j["proposal_id"] = *r.proposal_id;
  return j;
}

ControlPlane::ControlPlane(Store& store, PromptRegistry& prompts, ProposalBook& proposals,
                           const TraceRepository& traces, ProjectDirectory& projects, Clock clock,
                           ControlOptions options)
    : store_(store),
      prompts_(prompts),
      proposals_(proposals),
      traces_(traces),
      projects_(projects),
      clock_(std::move(clock)),
      options_(options) {}

Route ControlPlane::route_request(const std::string& project, const std::string& prompt_name,
                                  const std::string& request_key) const {
  projects_.require(project);
  auto binding = prompts_.binding(project, prompt_name);
  if (!binding) {
    throw Error(ErrorKind::UnknownBinding, "no active binding of " + prompt_name + " in " + project);
  }
  std::shared_lock lock(mu_);
  if (binding->agent) {
    auto a = agents_.find({project, *binding->agent});
    if (a != agents_.end() && a->second.state == AgentState::paused) {
      throw Error(ErrorKind::PausedAgent, "agent " + *binding->agent + " is paused");
    }
  }
  Route route{binding->active_version, Arm::control, std::nullopt};
  if (auto r = running_.find({project, prompt_name}); r != running_.end()) {
    const auto& exp = experiments_.at(r->second);
    route.experiment_id = exp.experiment_id;
    route.arm = allocate(exp.experiment_id, request_key, exp.epsilon);
    route.version = route.arm == Arm::candidate ? exp.candidate_version : exp.control_version;
  }
  return route;
}

ExperimentState ControlPlane::start_experiment(const std::string& project, const ExperimentParams& params) {
  projects_.admit(project);
  ExperimentState s;
  s.project_id = project;
  s.prompt_name = params.prompt_name;
  s.epsilon = params.epsilon.value_or(options_.defaults.epsilon);
  s.min_samples_per_arm = params.min_samples_per_arm.value_or(options_.defaults.min_samples_per_arm);
  s.promotion_delta = params.promotion_delta.value_or(options_.defaults.promotion_delta);
  s.objective_metric = params.objective_metric;
  s.candidate_version = params.candidate_version;

  if (params.experiment_id && !is_valid_id(*params.experiment_id)) {
    throw ValidationError("experiment_id", "invalid identifier");
  }
  if (!(s.epsilon > 0.0 && s.epsilon <= 0.5)) throw ValidationError("epsilon", "must be in (0, 0.5]");
  if (s.min_samples_per_arm < 1) throw ValidationError("min_samples_per_arm", "must be positive");
  if (!std::isfinite(s.promotion_delta) || s.promotion_delta < 0) {
    throw ValidationError("promotion_delta", "must be >= 0");
  }
  if (s.objective_metric.empty()) throw ValidationError("objective_metric", "required");

  prompts_.get(s.prompt_name, s.candidate_version);
  if (params.control_version) {
    s.control_version = *params.control_version;
    prompts_.get(s.prompt_name, s.control_version);
  } else {
    auto binding = prompts_.binding(project, s.prompt_name);
    if (!binding) {
      throw Error(ErrorKind::UnknownBinding, "no active binding of " + s.prompt_name + " in " + project);
    }
    s.control_version = binding->active_version;
  }
  if (s.control_version == s.candidate_version) {
    throw ValidationError("candidate_version", "must differ from control_version");
  }

  std::lock_guard lock(write_mu_);
  {
    std::shared_lock read(mu_);
    if (auto r = running_.find({project, s.prompt_name}); r != running_.end()) {
      throw Error(ErrorKind::ExperimentAlreadyRunning,
                  "experiment " + r->second + " is already running on " + s.prompt_name);
    }
    s.experiment_id = params.experiment_id.value_or(generate_id());
    if (experiments_.count(s.experiment_id)) {
      throw ValidationError("experiment_id", "experiment " + s.experiment_id + " already exists");
    }
  }
  s.started_at = clock_();
  store_.append(project, RecordKind::experiment_event,
                Json{{"type", "experiment_started"}, {"experiment", to_json(s)}, {"ts", s.started_at}});
  return experiment(s.experiment_id);
}

ExperimentState ControlPlane::stop_experiment(const std::string& experiment_id) {
  std::lock_guard lock(write_mu_);
  const auto s = experiment(experiment_id);
  if (s.status != ExperimentStatus::running) {
    throw Error(ErrorKind::ExperimentNotRunning, "experiment " + experiment_id + " is " +
                                                     std::string(to_string(s.status)));
  }
  store_.append(s.project_id, RecordKind::experiment_event,
                Json{{"type", "experiment_stopped"}, {"experiment_id", experiment_id}, {"ts", clock_()}});
  return experiment(experiment_id);
}

RunningStats ControlPlane::record_outcome(const std::string& experiment_id, Arm arm, double score,
                                          const std::optional<std::string>& trace_id) {
  if (!std::isfinite(score) || score < 0.0 || score > 1.0) {
    throw Error(ErrorKind::ScoreOutOfRange, "score must be in [0, 1]");
  }
  std::lock_guard lock(write_mu_);
  const auto s = experiment(experiment_id);
  if (s.status != ExperimentStatus::running) {
    throw Error(ErrorKind::ExperimentNotRunning, "experiment " + experiment_id + " is " +
                                                     std::string(to_string(s.status)));
  }
  if (trace_id && !traces_.get(s.project_id, *trace_id)) {
    throw Error(ErrorKind::UnknownTrace, "unknown trace " + *trace_id);
  }
  Json payload{{"type", "outcome"}, {"experiment_id", experiment_id}, {"arm", to_string(arm)},
               {"score", score}, {"ts", clock_()}};
  if (trace_id) payload["trace_id"] = *trace_id;
  store_.append(s.project_id, RecordKind::experiment_event, std::move(payload));
  const auto after = experiment(experiment_id);
  return arm == Arm::control ? after.control : after.candidate;
}

EvaluationResult ControlPlane::evaluate_experiment(const std::string& experiment_id) {
  std::lock_guard lock(write_mu_);
  const auto s = experiment(experiment_id);
  if (s.status != ExperimentStatus::running) {
    throw Error(ErrorKind::ExperimentNotRunning, "experiment " + experiment_id + " is " +
                                                     std::string(to_string(s.status)));
  }
  EvaluationResult result;
  if (s.control.n >= s.min_samples_per_arm && s.candidate.n >= s.min_samples_per_arm) {
    const double diff = s.candidate.mean - s.control.mean;
    if (diff > s.promotion_delta) {
      result.decision = Decision::promote;
    } else if (-diff > s.promotion_delta) {
      result.decision = Decision::stop_inferior;
    }
  }
  if (result.decision == Decision::continue_) {
    result.state = s;
    return result;
  }

  const auto now = clock_();
  if (result.decision == Decision::promote) {
    Proposal p;
    p.proposal_id = experiment_id + "-promotion";
    p.source = ProposalSource::experiment_promotion;
    p.project_id = s.project_id;
    p.subject = s.prompt_name;
    p.description = "Activate " + s.prompt_name + " v" + std::to_string(s.candidate_version) +
                    ": " + s.objective_metric + " mean " + std::to_string(s.candidate.mean) +
                    " (n=" + std::to_string(s.candidate.n) + ") vs v" +
                    std::to_string(s.control_version) + " " + std::to_string(s.control.mean) +
                    " (n=" + std::to_string(s.control.n) + ")";
    p.evidence = s.candidate_evidence;
    p.created_at = now;
    p.experiment_id = experiment_id;
    p.action_params = Json{{"prompt_name", s.prompt_name},
                           {"candidate_version", s.candidate_version},
                           {"control_version", s.control_version}};
    result.proposal_id = proposals_.create(std::move(p)).proposal_id;
  }
  Json payload{{"type", "decision"}, {"experiment_id", experiment_id},
               {"decision", to_string(result.decision)}, {"ts", now}};
  if (result.proposal_id) payload["proposal_id"] = *result.proposal_id;
  store_.append(s.project_id, RecordKind::experiment_event, std::move(payload));
  if (result.decision == Decision::promote && options_.auto_promote) {
    prompts_.activate(s.project_id, s.prompt_name, s.candidate_version);
  }
  result.state = experiment(experiment_id);
  return result;
}

AgentGate ControlPlane::set_agent_state(const std::string& project, const std::string& agent_name,
                                        AgentState state, const std::string& reason) {
  projects_.admit(project);
  if (!is_valid_id(agent_name)) throw ValidationError("agent_name", "invalid identifier");
  std::lock_guard lock(write_mu_);
  if (auto current = agent(project, agent_name);
      current && current->state == state && current->reason == reason) {
    return *current;
  }
  store_.append(project, RecordKind::experiment_event,
                Json{{"type", "agent_state"}, {"project_id", project}, {"agent_name", agent_name},
                     {"state", to_string(state)}, {"reason", reason}, {"ts", clock_()}});
  return *agent(project, agent_name);
}

std::optional<AgentGate> ControlPlane::agent(const std::string& project, const std::string& agent_name) const {
  std::shared_lock lock(mu_);
  auto it = agents_.find({project, agent_name});
  if (it == agents_.end()) return std::nullopt;
  return it->second;
}

ExperimentState ControlPlane::experiment(const std::string& experiment_id) const {
  std::shared_lock lock(mu_);
  auto it = experiments_.find(experiment_id);
  if (it == experiments_.end()) {
    throw Error(ErrorKind::UnknownExperiment, "unknown experiment " + experiment_id);
  }
  return it->second;
}

std::vector<ExperimentState> ControlPlane::experiments(const std::string& project) const {
  std::vector<ExperimentState> out;
  std::shared_lock lock(mu_);
  for (const auto& [id, s] : experiments_) {
    if (s.project_id == project) out.push_back(s);
  }
  return out;
}

std::optional<std::string> ControlPlane::running_experiment(const std::string& project,
                                                            const std::string& prompt_name) const {
  std::shared_lock lock(mu_);
  auto it = running_.find({project, prompt_name});
  if (it == running_.end()) return std::nullopt;
  return it->second;
}

void ControlPlane::apply(const LogRecord& record) {
  if (record.kind != RecordKind::experiment_event) return;
  const auto& p = *record.payload;
  const auto type = p.value("type", "");
  std::unique_lock lock(mu_);
  if (type == "experiment_started") {
    auto s = experiment_from_json(p.at("experiment"));
    running_[{s.project_id, s.prompt_name}] = s.experiment_id;
    experiments_[s.experiment_id] = std::move(s);
    return;
  }
  if (type == "agent_state") {
    AgentGate g;
    g.project_id = record.project;
    g.agent_name = p.at("agent_name").get<std::string>();
    g.state = agent_state_from_string(p.at("state").get<std::string>());
    g.reason = p.at("reason").get<std::string>();
    g.changed_at = p.at("ts").get<TimestampMs>();
    agents_[{g.project_id, g.agent_name}] = std::move(g);
    return;
  }
  auto it = experiments_.find(p.value("experiment_id", ""));
  if (it == experiments_.end()) return;
  auto& s = it->second;
  auto end = [&](ExperimentStatus status) {
    s.status = status;
    s.ended_at = p.at("ts").get<TimestampMs>();
    running_.erase({s.project_id, s.prompt_name});
  };
  if (type == "outcome") {
    const auto arm = arm_from_string(p.at("arm").get<std::string>());
    (arm == Arm::control ? s.control : s.candidate).add(p.at("score").get<double>());
    if (arm == Arm::candidate && p.contains("trace_id")) {
      s.candidate_evidence.insert(s.candidate_evidence.begin(), p["trace_id"].get<std::string>());
      if (s.candidate_evidence.size() > kMaxEvidence) s.candidate_evidence.pop_back();
    }
  } else if (type == "experiment_stopped") {
    end(ExperimentStatus::stopped);
  } else if (type == "decision") {
    const auto decision = p.at("decision").get<std::string>();
    if (p.contains("proposal_id")) s.proposal_id = p["proposal_id"].get<std::string>();
    end(decision == "promote" ? ExperimentStatus::promoted : ExperimentStatus::stopped);
  }
}

}  // namespace aide
