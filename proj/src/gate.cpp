#include "aide/gate.hpp"

#include <algorithm>
#include <cmath>

#include "aide/codec.hpp"

namespace aide {

namespace {

std::string_view to_string(Direction d) {
  return d == Direction::higher_is_better ? "higher_is_better" : "lower_is_better";
}

Json optional_number(const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); }

}  // namespace

std::string_view to_string(GateRule rule) {
  switch (rule) {
    case GateRule::none: return "none";
    case GateRule::relative_drop: return "relative_drop";
    case GateRule::sigma_band: return "sigma_band";
    case GateRule::insufficient_data_pass: return "insufficient_data_pass";
  }
  return "none";
}

Json to_json(const GateConfig& c) {
  return Json{{"metric_name", c.metric_name},
              {"baseline_window", c.baseline_window},
              {"relative_drop_threshold", c.relative_drop_threshold},
              {"k_sigma", c.k_sigma},
              {"min_baseline_runs", c.min_baseline_runs},
              {"direction", to_string(c.direction)}};
}

GateConfig gate_config_from_json(const Json& j, const GateConfig& defaults) {
  using namespace wire;
  expect_object(j, "");
  reject_unknown(j, {"metric_name", "baseline_window", "relative_drop_threshold", "k_sigma",
                     "min_baseline_runs", "direction"},
                 "");
  GateConfig c = defaults;
  if (auto m = opt_string(j, "metric_name", "")) c.metric_name = *m;
  c.baseline_window = opt_int(j, "baseline_window", "").value_or(c.baseline_window);
  c.relative_drop_threshold = opt_number(j, "relative_drop_threshold", "").value_or(c.relative_drop_threshold);
  c.k_sigma = opt_number(j, "k_sigma", "").value_or(c.k_sigma);
  c.min_baseline_runs = opt_int(j, "min_baseline_runs", "").value_or(c.min_baseline_runs);
  if (auto d = opt_string(j, "direction", "")) {
    if (*d == "higher_is_better") {
      c.direction = Direction::higher_is_better;
    } else if (*d == "lower_is_better") {
      c.direction = Direction::lower_is_better;
    } else {
      throw ValidationError("direction", "expected higher_is_better or lower_is_better");
    }
  }
  return c;
}

void validate(const GateConfig& c) {
  if (c.metric_name.empty()) throw ValidationError("metric_name", "required");
  if (c.baseline_window < 1) throw ValidationError("baseline_window", "must be positive");
  if (c.min_baseline_runs < 1) throw ValidationError("min_baseline_runs", "must be positive");
  if (c.baseline_window < c.min_baseline_runs) {
    throw ValidationError("baseline_window", "must be >= min_baseline_runs");
  }
  if (!std::isfinite(c.relative_drop_threshold) || c.relative_drop_threshold <= 0) {
    throw ValidationError("relative_drop_threshold", "must be positive");
  }
  if (!std::isfinite(c.k_sigma) || c.k_sigma < 0) throw ValidationError("k_sigma", "must be >= 0");
}

Json to_json(const RunSummary& s) {
  Json means = Json::object();
  for (const auto& [k, v] : s.metric_means) means[k] = v;
  Json j{{"run_id", s.run_id}, {"metric_means", means}, {"trace_count", s.trace_count},
         {"created_at", s.created_at}};
  if (s.commit_tag) j["commit_tag"] = *s.commit_tag;
  return j;
}

RunSummary run_summary_from_json(const Json& j) {
  RunSummary s;
  s.run_id = j.at("run_id").get<std::string>();
  if (j.contains("commit_tag")) s.commit_tag = j["commit_tag"].get<std::string>();
  for (auto it = j.at("metric_means").begin(); it != j.at("metric_means").end(); ++it) {
    s.metric_means[it.key()] = it->get<double>();
  }
  s.trace_count = j.at("trace_count").get<std::int64_t>();
  s.created_at = j.at("created_at").get<TimestampMs>();
  return s;
}

Json to_json(const GateVerdict& v) {
  Json metrics = Json::array();
  for (const auto& m : v.metrics) {
    metrics.push_back(Json{{"metric_name", m.metric_name},
                           {"direction", to_string(m.direction)},
                           {"current_mean", optional_number(m.current_mean)},
                           {"baseline_mean", optional_number(m.baseline_mean)},
                           {"baseline_std", optional_number(m.baseline_std)},
                           {"relative_change", optional_number(m.relative_change)},
                           {"baseline_runs", m.baseline_runs},
                           {"rule_triggered", to_string(m.rule_triggered)}});
  }
  return Json{{"run_id", v.run_id},
              {"pass", v.pass},
              {"insufficient_data", v.insufficient_data},
              {"exit_code", v.exit_code()},
              {"metrics", metrics}};
}

Json to_json(const DriftReport& r) {
  return Json{{"metric_name", r.metric_name},
              {"window_a", Json{{"from", r.window_a.from}, {"to", r.window_a.to}}},
              {"window_b", Json{{"from", r.window_b.from}, {"to", r.window_b.to}}},
              {"mean_a", r.mean_a},
              {"mean_b", r.mean_b},
              {"count_a", r.count_a},
              {"count_b", r.count_b},
              {"relative_change_pct", optional_number(r.relative_change_pct)},
              {"threshold_pct", r.threshold_pct},
              {"triggered", r.triggered}};
}

RunSummary CiGate::summarize_run(const std::string& project, const std::string& run_id,
                                 const std::optional<std::string>& commit_tag) {
  projects_.require(project);
  if (run_id.empty()) throw ValidationError("run_id", "required");
  const auto filter = CompiledFilter::compile(
      {Predicate{"tags", FilterOp::contains, Json(run_tag(run_id))}});
  auto traces = queries_.matching(project, filter, std::nullopt);
  if (traces.empty()) throw Error(ErrorKind::EmptyRun, "no traces tagged " + run_tag(run_id));
  std::sort(traces.begin(), traces.end(), [](const StoredTrace& a, const StoredTrace& b) {
    return a.trace->start_time != b.trace->start_time ? a.trace->start_time < b.trace->start_time
                                                      : a.trace->trace_id < b.trace->trace_id;
  });

  RunSummary fresh;
  fresh.run_id = run_id;
  fresh.commit_tag = commit_tag;
  fresh.trace_count = static_cast<std::int64_t>(traces.size());
  std::map<std::string, RunningStats> stats;
  for (const auto& s : traces) {
    for (const auto& [metric, value] : s.trace->scores) stats[metric].add(value);
    if (!fresh.commit_tag) {
      for (const auto& tag : s.trace->tags) {
        if (tag.starts_with("commit:")) {
          fresh.commit_tag = tag.substr(7);
          break;
        }
      }
    }
  }
  for (const auto& [metric, st] : stats) fresh.metric_means[metric] = st.mean;

  std::lock_guard lock(write_mu_);
  if (auto existing = summary(project, run_id);
      existing && existing->metric_means == fresh.metric_means &&
      existing->trace_count == fresh.trace_count && existing->commit_tag == fresh.commit_tag) {
    return *existing;
  }
  fresh.created_at = clock_();
  Json payload = to_json(fresh);
  payload["type"] = "run_summary";
  payload["ts"] = fresh.created_at;
  store_.append(project, RecordKind::gate_result, std::move(payload));
  return *summary(project, run_id);
}

GateVerdict CiGate::evaluate_gate(const std::string& project, const std::string& run_id,
                                  const std::vector<GateConfig>& configs) {
  for (std::size_t i = 0; i < configs.size(); ++i) {
    try {
      validate(configs[i]);
    } catch (const ValidationError& e) {
      throw ValidationError("configs[" + std::to_string(i) + "]." + e.field(), e.reason());
    }
  }
  RunSummary current;
  try {
    current = summarize_run(project, run_id);
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::EmptyRun) throw;
    throw Error(ErrorKind::UnknownRun, "run " + run_id + " has no traces in " + project);
  }

  // Summaries recorded before this run, most recent first.
  std::vector<RunSummary> previous;
  {
    const auto all = summaries(project);
    for (const auto& s : all) {
      if (s.run_id == run_id) break;
      previous.push_back(s);
    }
    std::reverse(previous.begin(), previous.end());
  }

  GateVerdict verdict;
  verdict.run_id = run_id;
  for (const auto& config : configs) {
    MetricVerdict m;
    m.metric_name = config.metric_name;
    m.direction = config.direction;
    if (auto it = current.metric_means.find(config.metric_name); it != current.metric_means.end()) {
      m.current_mean = it->second;
    }
    RunningStats base;
    const auto window = std::min<std::size_t>(previous.size(), static_cast<std::size_t>(config.baseline_window));
    for (std::size_t i = 0; i < window; ++i) {
      auto it = previous[i].metric_means.find(config.metric_name);
      if (it != previous[i].metric_means.end()) base.add(it->second);
    }
    m.baseline_runs = base.n;
    if (base.n > 0) {
      m.baseline_mean = base.mean;
      m.baseline_std = std::sqrt(base.sample_variance());
    }
    if (!m.current_mean || base.n < config.min_baseline_runs) {
      m.rule_triggered = GateRule::insufficient_data_pass;
      verdict.insufficient_data = true;
    } else {
      const double cur = *m.current_mean, mean = *m.baseline_mean, sd = *m.baseline_std;
      bool relative = false;
      if (mean != 0.0) {
        m.relative_change = (cur - mean) / mean;
        const double worsening = config.direction == Direction::higher_is_better
                                     ? (mean - cur) / mean
                                     : (cur - mean) / mean;
        relative = worsening > config.relative_drop_threshold;
      }
      // A zero spread (one run, or identical runs) disables the band.
      const bool band = sd > 0.0 && std::abs(cur - mean) > config.k_sigma * sd;
      if (relative) {
        m.rule_triggered = GateRule::relative_drop;
      } else if (band) {
        m.rule_triggered = GateRule::sigma_band;
      }
      if (relative || band) verdict.pass = false;
    }
    verdict.metrics.push_back(std::move(m));
  }

  Json payload = to_json(verdict);
  payload["type"] = "verdict";
  payload["ts"] = clock_();
  store_.append(project, RecordKind::gate_result, std::move(payload));
  return verdict;
}

DriftReport CiGate::drift_check(const std::string& project, const std::string& metric_name,
                                TimeRange window_a, TimeRange window_b, double threshold_pct) const {
  projects_.require(project);
  if (metric_name.empty()) throw ValidationError("metric_name", "required");
  if (!std::isfinite(threshold_pct) || threshold_pct < 0) {
    throw ValidationError("threshold_pct", "must be >= 0");
  }
  for (const auto* w : {&window_a, &window_b}) {
    if (w->to < w->from) throw Error(ErrorKind::InvalidRange, "window must satisfy from <= to");
  }
  const auto filter = CompiledFilter::compile(
      {Predicate{"scores." + metric_name, FilterOp::exists, Json()}});
  auto fold = [&](TimeRange w) {
    auto traces = queries_.matching(project, filter, w);
    std::sort(traces.begin(), traces.end(), [](const StoredTrace& a, const StoredTrace& b) {
      return a.trace->start_time != b.trace->start_time ? a.trace->start_time < b.trace->start_time
                                                        : a.trace->trace_id < b.trace->trace_id;
    });
    RunningStats st;
    for (const auto& s : traces) st.add(s.trace->scores.at(metric_name));
    return st;
  };
  const auto a = fold(window_a);
  const auto b = fold(window_b);
  if (a.n == 0 || b.n == 0) {
    throw Error(ErrorKind::EmptyWindow, "no traces carrying " + metric_name + " in " +
                                            (a.n == 0 ? "window_a" : "window_b"));
  }
  DriftReport r;
  r.metric_name = metric_name;
  r.window_a = window_a;
  r.window_b = window_b;
  r.mean_a = a.mean;
  r.mean_b = b.mean;
  r.count_a = a.n;
  r.count_b = b.n;
  r.threshold_pct = threshold_pct;
  if (a.mean != 0.0) {
    r.relative_change_pct = (b.mean - a.mean) / a.mean * 100.0;
    r.triggered = std::abs(*r.relative_change_pct) > threshold_pct;
  } else {
    r.relative_change_pct = b.mean == 0.0 ? std::optional<double>(0.0) : std::nullopt;
    r.triggered = b.mean != 0.0;
  }
  return r;
}

std::optional<RunSummary> CiGate::summary(const std::string& project, const std::string& run_id) const {
  std::shared_lock lock(mu_);
  auto it = runs_.find(project);
  if (it == runs_.end()) return std::nullopt;
  for (const auto& s : it->second) {
    if (s.run_id == run_id) return s;
  }
  return std::nullopt;
}

std::vector<RunSummary> CiGate::summaries(const std::string& project) const {
  std::shared_lock lock(mu_);
  auto it = runs_.find(project);
  return it == runs_.end() ? std::vector<RunSummary>{} : it->second;
}

void CiGate::apply(const LogRecord& record) {
  if (record.kind != RecordKind::gate_result || record.payload->value("type", "") != "run_summary") {
    return;
  }
  auto s = run_summary_from_json(*record.payload);
  std::unique_lock lock(mu_);
  auto& list = runs_[record.project];
  for (auto& existing : list) {
    if (existing.run_id == s.run_id) {
      existing = std::move(s);
      return;
    }
  }
  list.push_back(std::move(s));
}

}  // namespace aide
