#include "aide/service.hpp"

#include <cstdlib>
#include <fstream>

#include "aide/codec.hpp"

namespace aide {

ServiceConfig config_from_json(const Json& j, ServiceConfig c) {
  using namespace wire;
  expect_object(j, "");
  reject_unknown(j, {"data_dir", "max_log_bytes", "fsync", "recovery", "snapshot_every", "auto_create_projects",
                     "projects", "max_batch", "defer_batch_evaluation", "auto_promote", "experiment_defaults",
                     "gate_defaults", "evaluators", "rules", "scheduler_interval_ms", "subscriber_depth",
                     "api_key", "http_addr"},
                 "");
  if (auto v = opt_string(j, "data_dir", "")) c.store.data_dir = *v;
  if (auto v = opt_int(j, "max_log_bytes", "")) c.store.max_bytes = static_cast<std::uint64_t>(*v);
  if (auto v = opt_bool(j, "fsync", "")) c.store.fsync = *v;
  if (auto v = opt_string(j, "recovery", "")) {
    if (*v != "truncate" && *v != "strict") throw ValidationError("recovery", "expected truncate or strict");
    c.store.recovery = *v == "strict" ? RecoveryMode::strict : RecoveryMode::truncate;
  }
  if (auto v = opt_int(j, "snapshot_every", "")) c.store.snapshot_every = static_cast<std::uint64_t>(*v);
  if (auto v = opt_bool(j, "auto_create_projects", "")) c.auto_create_projects = *v;
  if (j.contains("projects")) c.projects = j["projects"].get<std::vector<std::string>>();
  if (auto v = opt_int(j, "max_batch", "")) c.ingest.max_batch = static_cast<std::size_t>(*v);
  if (auto v = opt_bool(j, "defer_batch_evaluation", "")) c.ingest.defer_batch_evaluation = *v;
  if (auto v = opt_bool(j, "auto_promote", "")) c.control.auto_promote = *v;
  if (auto it = j.find("experiment_defaults"); it != j.end()) {
    reject_unknown(*it, {"epsilon", "min_samples_per_arm", "promotion_delta"}, "experiment_defaults.");
    auto& d = c.control.defaults;
    d.epsilon = opt_number(*it, "epsilon", "experiment_defaults.").value_or(d.epsilon);
    d.min_samples_per_arm = opt_int(*it, "min_samples_per_arm", "experiment_defaults.").value_or(d.min_samples_per_arm);
    d.promotion_delta = opt_number(*it, "promotion_delta", "experiment_defaults.").value_or(d.promotion_delta);
  }
  if (auto it = j.find("gate_defaults"); it != j.end()) c.gate_defaults = gate_config_from_json(*it, c.gate_defaults);
  if (auto it = j.find("evaluators"); it != j.end()) {
    expect_object(*it, "evaluators");
    for (auto e = it->begin(); e != it->end(); ++e) {
      std::vector<EvaluatorSpec> specs;
      for (const auto& s : *e) specs.push_back(evaluator_from_json(s));
      validate_specs(specs);
      c.evaluators[e.key()] = std::move(specs);
    }
  }
  if (auto it = j.find("rules"); it != j.end()) {
    for (const auto& r : *it) c.rules.push_back(monitor_rule_from_json(r));
  }
  if (auto v = opt_int(j, "scheduler_interval_ms", "")) c.scheduler_interval_ms = *v;
  if (auto v = opt_int(j, "subscriber_depth", "")) c.subscriber_depth = static_cast<std::size_t>(*v);
  if (auto v = opt_string(j, "api_key", "")) c.api_key = *v;
  if (auto v = opt_string(j, "http_addr", "")) c.http_addr = *v;
  return c;
}

ServiceConfig config_from_env() {
  ServiceConfig c;
  if (const char* path = std::getenv("AIDE_CONFIG"); path && *path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::ValidationError, std::string("cannot read config file ") + path);
    c = config_from_json(Json::parse(in), c);
  }
  if (const char* v = std::getenv("AIDE_DATA_DIR"); v && *v) c.store.data_dir = v;
  if (const char* v = std::getenv("AIDE_API_KEY"); v && *v) c.api_key = v;
  if (const char* v = std::getenv("AIDE_HTTP_ADDR"); v && *v) c.http_addr = v;
  return c;
}

Service::Service(ServiceConfig config, Clock clock)
    : config_(std::move(config)),
      clock_(std::move(clock)),
      store_(config_.store),
      projects_(config_.auto_create_projects),
      evaluators_(store_),
      ingest_(store_, traces_, projects_, evaluators_, config_.ingest),
      queries_(traces_, projects_),
      prompts_(store_, projects_, clock_),
      gate_(store_, queries_, projects_, clock_),
      proposals_(store_, traces_, clock_),
      control_(store_, prompts_, proposals_, traces_, projects_, clock_, config_.control),
      monitor_(store_, queries_, proposals_, projects_, clock_),
      hub_(store_, config_.subscriber_depth) {
  for (const auto& p : config_.projects) projects_.declare(p);
  for (const auto& [scope, specs] : config_.evaluators) evaluators_.set_defaults(scope, specs);
  for (const auto& r : store_.records_after(0)) apply(r);
  store_.set_commit_listener([this](const LogRecord& r) {
    apply(r);
    hub_.publish(r);
  });
  for (const auto& rule : config_.rules) monitor_.register_rule(rule);
}

Service::~Service() { shutdown(); }

void Service::apply(const LogRecord& record) {
  if (record.project != kServerScope) projects_.declare(record.project);
  switch (record.kind) {
    case RecordKind::trace:
    case RecordKind::score_append:
      traces_.apply(record);
      break;
    case RecordKind::prompt_version:
    case RecordKind::binding_change:
      prompts_.apply(record);
      break;
    case RecordKind::experiment_event:
      control_.apply(record);
      break;
    case RecordKind::gate_result:
      gate_.apply(record);
      break;
    case RecordKind::monitor_event:
      proposals_.apply(record);
      monitor_.apply(record);
      break;
    case RecordKind::config_event:
      evaluators_.apply(record);
      break;
  }
}

std::optional<ActiveBinding> Service::binding(const std::string& project, const std::string& prompt_name) const {
  auto b = prompts_.binding(project, prompt_name);
  if (b) b->experiment_id = control_.running_experiment(project, prompt_name);
  return b;
}

void Service::start_scheduler() {
  if (config_.scheduler_interval_ms > 0) monitor_.start_scheduler(config_.scheduler_interval_ms);
}

void Service::shutdown() { monitor_.stop_scheduler(); }

}  // namespace aide
