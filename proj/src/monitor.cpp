#include "aide/monitor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "aide/codec.hpp"

namespace aide {

std::string_view to_string(Comparator c) {
  switch (c) {
    case Comparator::gt: return "gt";
    case Comparator::ge: return "ge";
    case Comparator::lt: return "lt";
    case Comparator::le: return "le";
  }
  return "ge";
}

std::string_view to_string(RuleAction a) {
  switch (a) {
    case RuleAction::alert: return "alert";
    case RuleAction::propose_prompt_change: return "propose_prompt_change";
    case RuleAction::propose_experiment: return "propose_experiment";
  }
  return "alert";
}

bool compare(double value, Comparator c, double threshold) {
  switch (c) {
    case Comparator::gt: return value > threshold;
    case Comparator::ge: return value >= threshold;
    case Comparator::lt: return value < threshold;
    case Comparator::le: return value <= threshold;
  }
  return false;
}

namespace {

Comparator comparator_from_string(const std::string& s) {
  if (s == "gt") return Comparator::gt;
  if (s == "ge") return Comparator::ge;
  if (s == "lt") return Comparator::lt;
  if (s == "le") return Comparator::le;
  throw ValidationError("trigger.comparator", "expected gt, ge, lt or le");
}

RuleAction action_from_string(const std::string& s) {
  if (s == "alert") return RuleAction::alert;
  if (s == "propose_prompt_change") return RuleAction::propose_prompt_change;
  if (s == "propose_experiment") return RuleAction::propose_experiment;
  throw ValidationError("action", "expected alert, propose_prompt_change or propose_experiment");
}

std::string format_number(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

std::string render(std::string text, const Firing& f) {
  const std::pair<std::string, std::string> subs[] = {
      {"{rule_id}", f.rule_id}, {"{value}", format_number(f.value)}, {"{matches}", std::to_string(f.matches)}};
  for (const auto& [from, to] : subs) {
    for (auto pos = text.find(from); pos != std::string::npos; pos = text.find(from, pos + to.size())) {
      text.replace(pos, from.size(), to);
    }
  }
  return text;
}

}  // namespace

Json to_json(const MonitorRule& r) {
  Json filter = Json::array();
  for (const auto& p : r.filter) filter.push_back(to_json(p));
  Json trigger{{"aggregate", r.trigger.aggregate == Aggregate::count ? "count" : "mean_of"},
               {"comparator", to_string(r.trigger.comparator)},
               {"threshold", r.trigger.threshold},
               {"min_matches", r.trigger.min_matches}};
  if (r.trigger.aggregate == Aggregate::mean_of) trigger["metric"] = r.trigger.metric;
  return Json{{"rule_id", r.rule_id},       {"project_id", r.project_id},
              {"filter", filter},           {"window_ms", r.window_ms},
              {"trigger", trigger},         {"action", to_string(r.action)},
              {"cooldown_ms", r.cooldown_ms}, {"action_params", r.action_params},
              {"enabled", r.enabled}};
}

MonitorRule monitor_rule_from_json(const Json& j) {
  using namespace wire;
  expect_object(j, "");
  reject_unknown(j, {"rule_id", "project_id", "filter", "window_ms", "trigger", "action", "cooldown_ms",
                     "action_params", "enabled"},
                 "");
  MonitorRule r;
  r.rule_id = opt_string(j, "rule_id", "").value_or("");
  r.project_id = opt_string(j, "project_id", "").value_or("");
  if (j.contains("filter")) r.filter = predicates_from_json(j["filter"], "filter");
  r.window_ms = get_int(j, "window_ms", "");
  const auto& t = require(j, "trigger", "");
  expect_object(t, "trigger");
  reject_unknown(t, {"aggregate", "metric", "comparator", "threshold", "min_matches"}, "trigger.");
  const auto aggregate = get_string(t, "aggregate", "trigger.");
  if (aggregate == "count") {
    r.trigger.aggregate = Aggregate::count;
  } else if (aggregate == "mean_of") {
    r.trigger.aggregate = Aggregate::mean_of;
    r.trigger.metric = get_string(t, "metric", "trigger.");
  } else {
    throw ValidationError("trigger.aggregate", "expected count or mean_of");
  }
  r.trigger.comparator = comparator_from_string(get_string(t, "comparator", "trigger."));
  r.trigger.threshold = get_number(t, "threshold", "trigger.");
  r.trigger.min_matches = opt_int(t, "min_matches", "trigger.").value_or(1);
  r.action = action_from_string(opt_string(j, "action", "").value_or("alert"));
  r.cooldown_ms = opt_int(j, "cooldown_ms", "").value_or(600000);
  if (j.contains("action_params")) {
    expect_object(j["action_params"], "action_params");
    r.action_params = j["action_params"];
  }
  r.enabled = opt_bool(j, "enabled", "").value_or(true);
  return r;
}

void validate(const MonitorRule& r) {
  if (!is_valid_id(r.rule_id)) throw ValidationError("rule_id", "invalid identifier");
  if (!is_valid_id(r.project_id)) throw ValidationError("project_id", "invalid identifier");
  if (r.window_ms <= 0) throw ValidationError("window_ms", "must be positive");
  if (r.cooldown_ms < 0) throw ValidationError("cooldown_ms", "must be >= 0");
  if (!std::isfinite(r.trigger.threshold)) throw ValidationError("trigger.threshold", "must be finite");
  if (r.trigger.min_matches < 0) throw ValidationError("trigger.min_matches", "must be >= 0");
  if (r.trigger.aggregate == Aggregate::mean_of && r.trigger.metric.empty()) {
    throw ValidationError("trigger.metric", "required for mean_of");
  }
  CompiledFilter::compile(r.filter);
}

Json to_json(const Alert& a) {
  return Json{{"alert_id", a.alert_id}, {"project_id", a.project_id}, {"rule_id", a.rule_id},
              {"message", a.message},   {"evidence", a.evidence},     {"created_at", a.created_at}};
}

Json to_json(const Firing& f) {
  Json j{{"firing_id", f.firing_id}, {"rule_id", f.rule_id},   {"project_id", f.project_id},
         {"fired_at", f.fired_at},   {"value", f.value},       {"matches", f.matches},
         {"evidence", f.evidence},   {"action", to_string(f.action)}};
  if (f.proposal_id) j["proposal_id"] = *f.proposal_id;
  if (f.alert_id) j["alert_id"] = *f.alert_id;
  return j;
}

namespace {

Firing firing_from_json(const Json& j) {
  Firing f;
  f.firing_id = j.at("firing_id").get<std::string>();
  f.rule_id = j.at("rule_id").get<std::string>();
  f.project_id = j.at("project_id").get<std::string>();
  f.fired_at = j.at("fired_at").get<TimestampMs>();
  f.value = j.at("value").get<double>();
  f.matches = j.at("matches").get<std::int64_t>();
  f.evidence = j.at("evidence").get<std::vector<std::string>>();
  f.action = action_from_string(j.at("action").get<std::string>());
  if (j.contains("proposal_id")) f.proposal_id = j["proposal_id"].get<std::string>();
  if (j.contains("alert_id")) f.alert_id = j["alert_id"].get<std::string>();
  return f;
}

}  // namespace

std::optional<Firing> evaluate_rule(const MonitorRule& rule, const QueryEngine& queries, TimestampMs now) {
  auto predicates = rule.filter;
  if (rule.trigger.aggregate == Aggregate::mean_of) {
    predicates.push_back(Predicate{"scores." + rule.trigger.metric, FilterOp::exists, Json()});
  }
  const auto filter = CompiledFilter::compile(predicates);
  const auto matches = queries.matching(rule.project_id, filter, TimeRange{now - rule.window_ms, now});
  const auto n = static_cast<std::int64_t>(matches.size());
  if (n == 0 || n < rule.trigger.min_matches) return std::nullopt;

  double value = static_cast<double>(n);
  if (rule.trigger.aggregate == Aggregate::mean_of) {
    RunningStats st;
    for (const auto& s : matches) st.add(s.trace->scores.at(rule.trigger.metric));
    value = st.mean;
  }
  if (!compare(value, rule.trigger.comparator, rule.trigger.threshold)) return std::nullopt;

  Firing f;
  f.firing_id = rule.project_id + "." + rule.rule_id + "-" + std::to_string(now);
  f.rule_id = rule.rule_id;
  f.project_id = rule.project_id;
  f.fired_at = now;
  f.value = value;
  f.matches = n;
  f.action = rule.action;
  // matches are (start_time, seq) ascending; evidence wants newest first.
  for (auto it = matches.rbegin(); it != matches.rend() && f.evidence.size() < Monitor::kMaxEvidence; ++it) {
    f.evidence.push_back(it->trace->trace_id);
  }
  return f;
}

std::vector<Firing> replay_rule(const MonitorRule& rule, const QueryEngine& queries,
                                const std::vector<TimestampMs>& ticks) {
  std::vector<Firing> out;
  std::optional<TimestampMs> last;
  for (auto now : ticks) {
    if (last && now - *last < rule.cooldown_ms) continue;
    if (auto f = evaluate_rule(rule, queries, now)) {
      last = now;
      out.push_back(std::move(*f));
    }
  }
  return out;
}

Monitor::Monitor(Store& store, const QueryEngine& queries, ProposalBook& proposals,
                 ProjectDirectory& projects, Clock clock)
    : store_(store), queries_(queries), proposals_(proposals), projects_(projects), clock_(std::move(clock)) {}

Monitor::~Monitor() { stop_scheduler(); }

MonitorRule Monitor::register_rule(MonitorRule rule) {
  validate(rule);
  projects_.admit(rule.project_id);
  std::lock_guard lock(write_mu_);
  {
    std::shared_lock read(mu_);
    auto it = rules_.find({rule.project_id, rule.rule_id});
    if (it != rules_.end() && to_json(it->second.rule) == to_json(rule)) return it->second.rule;
  }
  store_.append(rule.project_id, RecordKind::monitor_event,
                Json{{"type", "rule"}, {"rule", to_json(rule)}, {"ts", clock_()}});
  return rule;
}

std::vector<MonitorRule> Monitor::list_rules(const std::optional<std::string>& project) const {
  std::vector<MonitorRule> out;
  std::shared_lock lock(mu_);
  for (const auto& [key, state] : rules_) {
    if (!project || key.first == *project) out.push_back(state.rule);
  }
  return out;
}

std::optional<Firing> Monitor::tick(const std::string& project, const std::string& rule_id, TimestampMs now) {
  std::lock_guard lock(write_mu_);
  {
    std::shared_lock read(mu_);
    if (!rules_.count({project, rule_id})) throw Error(ErrorKind::UnknownRule, "unknown rule " + rule_id);
  }
  return tick_locked({project, rule_id}, now);
}

std::optional<Firing> Monitor::tick_locked(const RuleKey& key, TimestampMs now) {
  RuleState state;
  {
    std::shared_lock read(mu_);
    state = rules_.at(key);
  }
  if (!state.rule.enabled) return std::nullopt;
  if (state.last_fired && now - *state.last_fired < state.rule.cooldown_ms) return std::nullopt;
  try {
    if (fault_hook_) fault_hook_(state.rule);
    auto firing = evaluate_rule(state.rule, queries_, now);
    if (firing) fire(state.rule, *firing);
    std::unique_lock write(mu_);
    rules_.at(key).consecutive_errors = 0;
    return firing;
  } catch (const std::exception& e) {
    record_error(key, e.what(), now);
    return std::nullopt;
  }
}

void Monitor::fire(const MonitorRule& rule, Firing& f) {
  const auto text = render(rule.action_params.value("description_template",
                                                    "Rule {rule_id} fired: value {value} over {matches} traces"),
                           f);
  if (rule.action == RuleAction::alert) {
    Alert a{f.firing_id, rule.project_id, rule.rule_id, text, f.evidence, f.fired_at};
    store_.append(rule.project_id, RecordKind::monitor_event,
                  Json{{"type", "alert"}, {"alert", to_json(a)}, {"ts", f.fired_at}});
    f.alert_id = a.alert_id;
  } else {
    Proposal p;
    p.proposal_id = f.firing_id;
    p.source = ProposalSource::monitor_rule;
    p.project_id = rule.project_id;
    p.subject = rule.action_params.value("subject", rule.rule_id);
    p.description = text;
    p.evidence = f.evidence;
    p.created_at = f.fired_at;
    p.rule_id = rule.rule_id;
    p.action_params = rule.action_params;
    p.action_params["action"] = to_string(rule.action);
    f.proposal_id = proposals_.create(std::move(p)).proposal_id;
  }
  store_.append(rule.project_id, RecordKind::monitor_event,
                Json{{"type", "firing"}, {"firing", to_json(f)}, {"ts", f.fired_at}});
}

void Monitor::record_error(const RuleKey& key, const std::string& what, TimestampMs now) {
  int errors = 0;
  {
    std::unique_lock write(mu_);
    errors = ++rules_.at(key).consecutive_errors;
  }
  if (errors < kMaxConsecutiveErrors) return;
  Alert a{key.first + "." + key.second + "-disabled-" + std::to_string(now), key.first, key.second,
          "Rule " + key.second + " disabled after " + std::to_string(errors) + " consecutive errors: " + what,
          {}, now};
  try {
    store_.append(key.first, RecordKind::monitor_event,
                  Json{{"type", "rule_disabled"}, {"rule_id", key.second}, {"reason", what}, {"ts", now}});
    store_.append(key.first, RecordKind::monitor_event,
                  Json{{"type", "alert"}, {"alert", to_json(a)}, {"ts", now}});
  } catch (const std::exception&) {
    // Storage is failing too; disable in memory so the rule stops retrying.
    std::unique_lock write(mu_);
    rules_.at(key).rule.enabled = false;
    alerts_.push_back(std::move(a));
  }
}

std::vector<Firing> Monitor::tick_all(TimestampMs now) {
  std::vector<RuleKey> keys;
  {
    std::shared_lock read(mu_);
    for (const auto& [key, state] : rules_) {
      if (state.rule.enabled) keys.push_back(key);
    }
  }
  std::vector<Firing> out;
  std::lock_guard lock(write_mu_);
  for (const auto& key : keys) {
    if (auto f = tick_locked(key, now)) out.push_back(std::move(*f));
  }
  return out;
}

std::vector<Firing> Monitor::firings(const std::optional<std::string>& project) const {
  std::vector<Firing> out;
  std::shared_lock lock(mu_);
  for (const auto& f : firings_) {
    if (!project || f.project_id == *project) out.push_back(f);
  }
  return out;
}

std::vector<Alert> Monitor::alerts(const std::optional<std::string>& project) const {
  std::vector<Alert> out;
  std::shared_lock lock(mu_);
  for (const auto& a : alerts_) {
    if (!project || a.project_id == *project) out.push_back(a);
  }
  return out;
}

void Monitor::start_scheduler(std::int64_t interval_ms) {
  if (interval_ms <= 0) throw ValidationError("interval_ms", "must be positive");
  stop_scheduler();
  {
    std::lock_guard lock(sched_mu_);
    sched_stop_ = false;
  }
  scheduler_ = std::thread([this, interval_ms] {
    std::unique_lock lock(sched_mu_);
    while (!sched_stop_) {
      lock.unlock();
      tick_all(clock_());
      lock.lock();
      sched_cv_.wait_for(lock, std::chrono::milliseconds(interval_ms), [this] { return sched_stop_; });
    }
  });
}

void Monitor::stop_scheduler() {
  {
    std::lock_guard lock(sched_mu_);
    sched_stop_ = true;
  }
  sched_cv_.notify_all();
  if (scheduler_.joinable()) scheduler_.join();
}

void Monitor::set_fault_hook(std::function<void(const MonitorRule&)> hook) {
  std::lock_guard lock(write_mu_);
  fault_hook_ = std::move(hook);
}

void Monitor::apply(const LogRecord& record) {
  if (record.kind != RecordKind::monitor_event) return;
  const auto& p = *record.payload;
  const auto type = p.value("type", "");
  std::unique_lock lock(mu_);
  if (type == "rule") {
    auto rule = monitor_rule_from_json(p.at("rule"));
    auto& state = rules_[{record.project, rule.rule_id}];
    state.rule = std::move(rule);
    state.consecutive_errors = 0;
  } else if (type == "firing") {
    auto f = firing_from_json(p.at("firing"));
    if (auto it = rules_.find({record.project, f.rule_id}); it != rules_.end()) {
      it->second.last_fired = f.fired_at;
    }
    firings_.push_back(std::move(f));
  } else if (type == "alert") {
    const auto& a = p.at("alert");
    alerts_.push_back(Alert{a.at("alert_id").get<std::string>(), a.at("project_id").get<std::string>(),
                            a.at("rule_id").get<std::string>(), a.at("message").get<std::string>(),
                            a.at("evidence").get<std::vector<std::string>>(),
                            a.at("created_at").get<TimestampMs>()});
  } else if (type == "rule_disabled") {
    if (auto it = rules_.find({record.project, p.at("rule_id").get<std::string>()}); it != rules_.end()) {
      it->second.rule.enabled = false;
    }
  }
}

}  // namespace aide
