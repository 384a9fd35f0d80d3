#include "aide/ingest.hpp"

#include <cmath>

#include "aide/codec.hpp"

namespace aide {

void ProjectDirectory::declare(const std::string& project) {
  std::unique_lock lock(mu_);
  known_.insert(project);
}

bool ProjectDirectory::declared(const std::string& project) const {
  std::shared_lock lock(mu_);
  return known_.contains(project);
}

void ProjectDirectory::require(const std::string& project) const {
  if (!is_valid_id(project)) throw ValidationError("project_id", "invalid identifier");
  if (auto_create_ || declared(project)) return;
  throw Error(ErrorKind::UnknownProject, "unknown project " + project);
}

void ProjectDirectory::admit(const std::string& project) {
  require(project);
  declare(project);
}

// --- TraceRepository ------------------------------------------------------

const TraceRepository::ProjectTraces* TraceRepository::find(const std::string& project) const {
  auto it = projects_.find(project);
  return it == projects_.end() ? nullptr : it->second.get();
}

TraceRepository::ProjectTraces& TraceRepository::ensure(const std::string& project) {
  auto& slot = projects_[project];
  if (!slot) slot = std::make_unique<ProjectTraces>();
  return *slot;
}

std::mutex& TraceRepository::write_mutex(const std::string& project) {
  {
    std::shared_lock lock(mu_);
    if (auto* p = find(project)) return const_cast<ProjectTraces*>(p)->write_mu;
  }
  std::unique_lock lock(mu_);
  return ensure(project).write_mu;
}

void TraceRepository::apply(const LogRecord& record) {
  if (record.kind == RecordKind::trace) {
    auto trace = std::make_shared<const Trace>(trace_from_json(record.payload->at("trace")));
    std::unique_lock lock(mu_);
    auto& p = ensure(record.project);
    if (p.by_id.contains(trace->trace_id)) return;
    p.by_time.emplace(std::make_pair(trace->start_time, record.seq), trace->trace_id);
    if (trace->prompt_ref) p.by_prompt[trace->prompt_ref->prompt_name].insert(trace->trace_id);
    for (const auto& [metric, _] : trace->scores) p.by_score[metric].insert(trace->trace_id);
    p.by_id.emplace(trace->trace_id,
                    StoredTrace{trace, record.seq, record.payload->value("submitted_hash", "")});
  } else if (record.kind == RecordKind::score_append) {
    const auto& payload = *record.payload;
    const auto trace_id = payload.at("trace_id").get<std::string>();
    std::unique_lock lock(mu_);
    auto& p = ensure(record.project);
    auto it = p.by_id.find(trace_id);
    if (it == p.by_id.end()) return;
    auto updated = std::make_shared<Trace>(*it->second.trace);
    if (payload.contains("evaluator_error")) {
      updated->tags.insert(EvalOutcome::error_tag(payload["evaluator_error"].get<std::string>()));
    } else {
      const auto metric = payload.at("metric").get<std::string>();
      updated->scores.emplace(metric, payload.at("value").get<double>());
      p.by_score[metric].insert(trace_id);
    }
    it->second.trace = std::move(updated);
  }
}

std::optional<StoredTrace> TraceRepository::get(const std::string& project,
                                                const std::string& trace_id) const {
  std::shared_lock lock(mu_);
  const auto* p = find(project);
  if (!p) return std::nullopt;
  auto it = p->by_id.find(trace_id);
  if (it == p->by_id.end()) return std::nullopt;
  return it->second;
}

std::vector<StoredTrace> TraceRepository::scan(const std::string& project,
                                               std::optional<TimeRange> range) const {
  std::vector<StoredTrace> out;
  std::shared_lock lock(mu_);
  const auto* p = find(project);
  if (!p) return out;
  auto first = p->by_time.begin();
  auto last = p->by_time.end();
  if (range) {
    if (range->to <= range->from) return out;
    first = p->by_time.lower_bound({range->from, 0});
    last = p->by_time.lower_bound({range->to, 0});
  }
  for (auto it = first; it != last; ++it) out.push_back(p->by_id.at(it->second));
  return out;
}

std::vector<StoredTrace> TraceRepository::collect(const ProjectTraces& p,
                                                  const std::set<std::string>& ids) const {
  std::vector<StoredTrace> out;
  out.reserve(ids.size());
  for (const auto& id : ids) out.push_back(p.by_id.at(id));
  return out;
}

std::vector<StoredTrace> TraceRepository::by_prompt(const std::string& project,
                                                    const std::string& prompt_name) const {
  std::shared_lock lock(mu_);
  const auto* p = find(project);
  if (!p) return {};
  auto it = p->by_prompt.find(prompt_name);
  return it == p->by_prompt.end() ? std::vector<StoredTrace>{} : collect(*p, it->second);
}

std::vector<StoredTrace> TraceRepository::by_score(const std::string& project,
                                                   const std::string& metric) const {
  std::shared_lock lock(mu_);
  const auto* p = find(project);
  if (!p) return {};
  auto it = p->by_score.find(metric);
  return it == p->by_score.end() ? std::vector<StoredTrace>{} : collect(*p, it->second);
}

std::int64_t TraceRepository::count(const std::string& project, std::optional<TimeRange> range) const {
  std::shared_lock lock(mu_);
  const auto* p = find(project);
  if (!p) return 0;
  if (!range) return static_cast<std::int64_t>(p->by_id.size());
  if (range->to <= range->from) return 0;
  return static_cast<std::int64_t>(std::distance(p->by_time.lower_bound({range->from, 0}),
                                                 p->by_time.lower_bound({range->to, 0})));
}

// --- EvaluatorConfig ------------------------------------------------------

void EvaluatorConfig::set_defaults(const std::string& project_or_star, std::vector<EvaluatorSpec> specs) {
  auto set = std::make_shared<const EvaluatorSet>(std::move(specs));
  std::unique_lock lock(mu_);
  defaults_[project_or_star] = std::move(set);
}

std::vector<EvaluatorSpec> EvaluatorConfig::put(const std::string& project,
                                                std::vector<EvaluatorSpec> specs, TimestampMs now) {
  validate_specs(specs);
  Json list = Json::array();
  for (const auto& s : specs) list.push_back(to_json(s));
  std::lock_guard lock(write_mu_);
  store_.append(project, RecordKind::config_event,
                Json{{"type", "evaluators"}, {"project_id", project}, {"evaluators", list}, {"ts", now}});
  return specs;
}

std::shared_ptr<const EvaluatorSet> EvaluatorConfig::for_project(const std::string& project) const {
  static const auto kEmpty = std::make_shared<const EvaluatorSet>();
  std::shared_lock lock(mu_);
  if (auto it = overrides_.find(project); it != overrides_.end()) return it->second;
  if (auto it = defaults_.find(project); it != defaults_.end()) return it->second;
  if (auto it = defaults_.find("*"); it != defaults_.end()) return it->second;
  return kEmpty;
}

void EvaluatorConfig::apply(const LogRecord& record) {
  if (record.kind != RecordKind::config_event || record.payload->value("type", "") != "evaluators") {
    return;
  }
  std::vector<EvaluatorSpec> specs;
  for (const auto& j : record.payload->at("evaluators")) specs.push_back(evaluator_from_json(j));
  auto set = std::make_shared<const EvaluatorSet>(std::move(specs));
  std::unique_lock lock(mu_);
  overrides_[record.project] = std::move(set);
}

// --- TraceIngest ----------------------------------------------------------

TraceIngest::TraceIngest(Store& store, TraceRepository& repo, ProjectDirectory& projects,
                         const EvaluatorConfig& evaluators, IngestOptions options)
    : store_(store), repo_(repo), projects_(projects), evaluators_(evaluators), options_(options) {}

IngestResult TraceIngest::commit(const std::string& project, Trace trace, bool evaluate) {
  projects_.admit(project);
  if (!trace.project_id.empty() && trace.project_id != project) {
    throw ValidationError("project_id", "does not match the target project");
  }
  trace.project_id = project;
  if (trace.trace_id.empty()) trace.trace_id = generate_id();
  trace = validate_trace(std::move(trace));
  const auto hash = hex64(fnv1a64(canonical(to_json(trace))));

  EvalOutcome outcome;
  if (evaluate) outcome = evaluators_.for_project(project)->run_all(trace);

  std::lock_guard lock(repo_.write_mutex(project));
  if (auto existing = repo_.get(project, trace.trace_id)) {
    if (existing->submitted_hash == hash) return {trace.trace_id, existing->seq, true};
    throw Error(ErrorKind::DuplicateTraceId,
                "trace " + trace.trace_id + " already exists with different content");
  }
  for (const auto& [name, score] : outcome.scores) trace.scores[name] = score;
  for (const auto& [name, _] : outcome.errors) trace.tags.insert(EvalOutcome::error_tag(name));
  const auto seq = store_.append(project, RecordKind::trace,
                                 Json{{"trace", to_json(trace)}, {"submitted_hash", hash}});
  return {trace.trace_id, seq, false};
}

IngestResult TraceIngest::log_trace(const std::string& project, Trace trace) {
  return commit(project, std::move(trace), true);
}

std::vector<BatchItemResult> TraceIngest::log_batch(const std::string& project,
                                                    const std::vector<Json>& items) {
  if (items.size() > options_.max_batch) {
    throw Error(ErrorKind::BatchTooLarge, "batch of " + std::to_string(items.size()) +
                                              " exceeds the limit of " +
                                              std::to_string(options_.max_batch));
  }
  projects_.admit(project);
  const bool evaluate_now = !options_.defer_batch_evaluation;
  std::vector<BatchItemResult> results(items.size());
  for (std::size_t i = 0; i < items.size(); ++i) {
    try {
      results[i].ok = commit(project, trace_from_json(items[i]), evaluate_now);
    } catch (const ValidationError& e) {
      results[i].error = {e.kind(), e.what()};
      results[i].field = e.field();
    } catch (const Error& e) {
      results[i].error = {e.kind(), e.what()};
    }
  }
  if (!evaluate_now) {
    const auto evaluators = evaluators_.for_project(project);
    for (const auto& r : results) {
      if (!r.ok || r.ok->duplicate) continue;
      auto stored = repo_.get(project, r.ok->trace_id);
      if (!stored) continue;
      const auto outcome = evaluators->run_all(*stored->trace);
      std::lock_guard lock(repo_.write_mutex(project));
      for (const auto& [name, score] : outcome.scores) {
        if (stored->trace->scores.contains(name)) continue;
        store_.append(project, RecordKind::score_append,
                      Json{{"project_id", project}, {"trace_id", r.ok->trace_id},
                           {"metric", name}, {"value", score}});
      }
      for (const auto& [name, _] : outcome.errors) {
        store_.append(project, RecordKind::score_append,
                      Json{{"project_id", project}, {"trace_id", r.ok->trace_id},
                           {"evaluator_error", name}});
      }
    }
  }
  return results;
}

std::shared_ptr<const Trace> TraceIngest::append_score(const std::string& project,
                                                       const std::string& trace_id,
                                                       const std::string& metric, double value) {
  projects_.require(project);
  if (metric.empty() || !is_valid_utf8(metric)) {
    throw ValidationError("metric", "metric name must be nonempty UTF-8");
  }
  if (!std::isfinite(value) || value < 0.0 || value > 1.0) {
    throw Error(ErrorKind::ScoreOutOfRange, "score must lie in [0,1]");
  }
  std::lock_guard lock(repo_.write_mutex(project));
  auto stored = repo_.get(project, trace_id);
  if (!stored) throw Error(ErrorKind::UnknownTrace, "unknown trace " + trace_id);
  if (stored->trace->scores.contains(metric)) {
    throw ValidationError("scores." + metric, "score already recorded; scores are append-only");
  }
  store_.append(project, RecordKind::score_append,
                Json{{"project_id", project}, {"trace_id", trace_id}, {"metric", metric},
                     {"value", value}});
  return repo_.get(project, trace_id)->trace;
}

}  // namespace aide
