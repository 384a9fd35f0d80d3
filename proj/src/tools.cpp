#include "aide/tools.hpp"

#include <algorithm>

#include "aide/codec.hpp"
#include "aide/schema.hpp"

namespace aide {

Json to_json(const ToolDescriptor& t) {
  return Json{{"name", t.name},
              {"description", t.description},
              {"inputSchema", t.input_schema},
              {"outputSchema", t.output_schema},
              {"examples", Json::array({t.example})}};
}

Json error_body(const Error& e) {
  Json j{{"kind", to_string(e.kind())}, {"message", e.what()}};
  if (const auto* v = dynamic_cast<const ValidationError*>(&e)) j["field"] = v->field();
  return j;
}

namespace {

// Schema builders.
Json t_string() { return Json{{"type", "string"}, {"minLength", 1}}; }
Json t_text() { return Json{{"type", "string"}}; }
Json t_int() { return Json{{"type", "integer"}}; }
Json t_pos_int() { return Json{{"type", "integer"}, {"minimum", 1}}; }
Json t_number() { return Json{{"type", "number"}}; }
Json t_unit() { return Json{{"type", "number"}, {"minimum", 0}, {"maximum", 1}}; }
Json t_bool() { return Json{{"type", "boolean"}}; }
Json t_any_object() { return Json{{"type", "object"}}; }
Json t_array(Json items) { return Json{{"type", "array"}, {"items", std::move(items)}}; }
Json t_enum(std::initializer_list<const char*> values) {
  Json e = Json::array();
  for (const auto* v : values) e.push_back(v);
  return Json{{"type", "string"}, {"enum", e}};
}
Json t_nullable(Json schema) {
  schema["type"] = Json::array({schema["type"], "null"});
  return schema;
}

Json object(Json properties, std::vector<std::string> required, bool closed = true) {
  Json j{{"type", "object"}, {"properties", std::move(properties)}, {"required", required}};
  if (closed) j["additionalProperties"] = false;
  return j;
}

// Loose shapes for nested domain objects; the decoders check them fully.
Json t_range() { return object({{"from", t_int()}, {"to", t_int()}}, {"from", "to"}); }
Json t_predicate() {
  return object({{"field", t_string()},
                 {"op", t_enum({"eq", "neq", "lt", "le", "gt", "ge", "contains", "exists"})},
                 {"value", Json::object()}},
                {"field", "op"});
}
Json t_trace_in() { return object({}, {"start_time", "end_time"}, false); }
Json t_trace_out() {
  return object({{"trace_id", t_string()}, {"project_id", t_string()}, {"start_time", t_int()},
                 {"end_time", t_int()}, {"latency_ms", t_int()}},
                {"trace_id", "project_id", "start_time", "end_time", "latency_ms"}, false);
}
Json t_prompt_out() {
  return object({{"prompt_name", t_string()}, {"version", t_pos_int()}, {"template", t_text()},
                 {"created_at", t_int()}},
                {"prompt_name", "version", "template", "created_at"}, false);
}
Json t_binding_out() {
  return object({{"project_id", t_string()}, {"prompt_name", t_string()}, {"active_version", t_pos_int()}},
                {"project_id", "prompt_name", "active_version"}, false);
}
Json t_stats_out() {
  return object({{"n", Json{{"type", "integer"}, {"minimum", 0}}}, {"mean", t_number()}, {"m2", t_number()},
                 {"variance", t_number()}},
                {"n", "mean", "m2", "variance"});
}
Json t_experiment_out() {
  return object({{"experiment_id", t_string()}, {"status", t_enum({"running", "promoted", "stopped"})},
                 {"control", t_stats_out()}, {"candidate", t_stats_out()}},
                {"experiment_id", "project_id", "prompt_name", "status", "control", "candidate"}, false);
}
Json t_proposal_out() {
  return object({{"proposal_id", t_string()}, {"status", t_enum({"open", "accepted", "rejected"})},
                 {"evidence", t_array(t_string())}},
                {"proposal_id", "source", "project_id", "status", "evidence", "created_at"}, false);
}

std::string arg_string(const Json& a, const char* key) { return wire::get_string(a, key, ""); }
std::optional<std::string> arg_opt_string(const Json& a, const char* key) { return wire::opt_string(a, key, ""); }

TimeRange arg_range(const Json& a, const char* key) {
  const auto& r = wire::require(a, key, "");
  wire::expect_object(r, key);
  return TimeRange{wire::get_int(r, "from", key), wire::get_int(r, "to", key)};
}

Json traces_json(const std::vector<std::shared_ptr<const Trace>>& traces) {
  Json out = Json::array();
  for (const auto& t : traces) out.push_back(to_json(*t));
  return out;
}

}  // namespace

ToolRegistry::ToolRegistry(Service& service) : service_(service) {
  Service& s = service_;

  add_tool({"activate_prompt", "Bind a prompt version as active for a project.",
            object({{"project_id", t_string()}, {"prompt_name", t_string()}, {"version", t_pos_int()},
                    {"agent", t_string()}},
                   {"project_id", "prompt_name", "version"}),
            object({{"binding", t_binding_out()}}, {"binding"}),
            Json{{"project_id", "demo"}, {"prompt_name", "qa-system"}, {"version", 2}}},
           [&s](const Json& a) {
             const auto project = arg_string(a, "project_id");
             const auto name = arg_string(a, "prompt_name");
             s.prompts().activate(project, name, wire::get_int(a, "version", ""), arg_opt_string(a, "agent"));
             return Json{{"binding", to_json(*s.binding(project, name))}};
           });

  add_tool({"aggregate_metrics", "Time-bucketed trace statistics over [from, to).",
            object({{"project_id", t_string()}, {"from", t_int()}, {"to", t_int()}, {"bucket_ms", t_pos_int()}},
                   {"project_id", "from", "to", "bucket_ms"}),
            object({{"project_id", t_string()}, {"from", t_int()}, {"to", t_int()},
                    {"bucket_width_ms", t_pos_int()}, {"buckets", t_array(t_any_object())}},
                   {"project_id", "from", "to", "bucket_width_ms", "buckets"}),
            Json{{"project_id", "demo"}, {"from", 0}, {"to", 3600000}, {"bucket_ms", 60000}}},
           [&s](const Json& a) {
             return to_json(s.queries().aggregate(arg_string(a, "project_id"),
                                                  TimeRange{wire::get_int(a, "from", ""), wire::get_int(a, "to", "")},
                                                  wire::get_int(a, "bucket_ms", "")));
           });

  add_tool({"count_traces", "Number of committed traces, optionally within [from, to).",
            object({{"project_id", t_string()}, {"from", t_int()}, {"to", t_int()}}, {"project_id"}),
            object({{"count", Json{{"type", "integer"}, {"minimum", 0}}}}, {"count"}),
            Json{{"project_id", "demo"}}},
           [&s](const Json& a) {
             std::optional<TimeRange> range;
             const bool has_from = a.contains("from"), has_to = a.contains("to");
             if (has_from != has_to) throw ValidationError(has_from ? "to" : "from", "from and to go together");
             if (has_from) {
               range = TimeRange{wire::get_int(a, "from", ""), wire::get_int(a, "to", "")};
               if (range->to < range->from) throw Error(ErrorKind::InvalidRange, "to < from");
             }
             return Json{{"count", s.queries().count(arg_string(a, "project_id"), range)}};
           });

  add_tool({"drift_check", "Relative change of a metric mean between two time windows.",
            object({{"project_id", t_string()}, {"metric_name", t_string()}, {"window_a", t_range()},
                    {"window_b", t_range()}, {"threshold_pct", Json{{"type", "number"}, {"minimum", 0}}}},
                   {"project_id", "metric_name", "window_a", "window_b", "threshold_pct"}),
            object({{"relative_change_pct", t_nullable(t_number())}, {"triggered", t_bool()},
                    {"mean_a", t_number()}, {"mean_b", t_number()}},
                   {"metric_name", "mean_a", "mean_b", "count_a", "count_b", "relative_change_pct", "triggered"},
                   false),
            Json{{"project_id", "demo"}, {"metric_name", "relevance"},
                 {"window_a", Json{{"from", 0}, {"to", 3600000}}},
                 {"window_b", Json{{"from", 3600000}, {"to", 7200000}}}, {"threshold_pct", 15}}},
           [&s](const Json& a) {
             return to_json(s.gate().drift_check(arg_string(a, "project_id"), arg_string(a, "metric_name"),
                                                 arg_range(a, "window_a"), arg_range(a, "window_b"),
                                                 wire::get_number(a, "threshold_pct", "")));
           });

  add_tool({"evaluate_experiment", "Decide continue, promote or stop_inferior for a running experiment.",
            object({{"experiment_id", t_string()}}, {"experiment_id"}),
            object({{"decision", t_enum({"continue", "promote", "stop_inferior"})},
                    {"experiment", t_experiment_out()}, {"proposal_id", t_string()}},
                   {"decision", "experiment"}),
            Json{{"experiment_id", "exp-1"}}},
           [&s](const Json& a) { return to_json(s.control().evaluate_experiment(arg_string(a, "experiment_id"))); });

  add_tool({"evaluate_gate", "Compare a CI run against its baseline runs.",
            object({{"project_id", t_string()}, {"run_id", t_string()},
                    {"configs", Json{{"type", "array"}, {"minItems", 1},
                                     {"items", object({{"metric_name", t_string()},
                                                       {"baseline_window", t_pos_int()},
                                                       {"relative_drop_threshold", Json{{"type", "number"}, {"exclusiveMinimum", 0}}},
                                                       {"k_sigma", Json{{"type", "number"}, {"minimum", 0}}},
                                                       {"min_baseline_runs", t_pos_int()},
                                                       {"direction", t_enum({"higher_is_better", "lower_is_better"})}},
                                                      {"metric_name"})}}}},
                   {"project_id", "run_id", "configs"}),
            object({{"run_id", t_string()}, {"pass", t_bool()}, {"insufficient_data", t_bool()},
                    {"exit_code", Json{{"type", "integer"}, {"enum", Json::array({0, 1, 2})}}},
                    {"metrics", t_array(t_any_object())}},
                   {"run_id", "pass", "insufficient_data", "exit_code", "metrics"}),
            Json{{"project_id", "demo"}, {"run_id", "ci-17"},
                 {"configs", Json::array({Json{{"metric_name", "relevance"}}})}}},
           [&s](const Json& a) {
             std::vector<GateConfig> configs;
             const auto& list = wire::require(a, "configs", "");
             if (!list.is_array()) throw ValidationError("configs", "expected an array");
             for (const auto& c : list) configs.push_back(gate_config_from_json(c, s.config().gate_defaults));
             return to_json(s.gate().evaluate_gate(arg_string(a, "project_id"), arg_string(a, "run_id"), configs));
           });

  add_tool({"get_prompt", "Fetch a prompt version (latest when no version is given).",
            object({{"prompt_name", t_string()}, {"version", t_pos_int()}}, {"prompt_name"}),
            object({{"prompt", t_prompt_out()}}, {"prompt"}),
            Json{{"prompt_name", "qa-system"}, {"version", 2}}},
           [&s](const Json& a) {
             return Json{{"prompt", to_json(s.prompts().get(arg_string(a, "prompt_name"),
                                                            wire::opt_int(a, "version", "")))}};
           });

  add_tool({"get_trace", "Fetch one trace by id.",
            object({{"project_id", t_string()}, {"trace_id", t_string()}}, {"project_id", "trace_id"}),
            object({{"trace", t_trace_out()}}, {"trace"}),
            Json{{"project_id", "demo"}, {"trace_id", "t-1"}}},
           [&s](const Json& a) {
             const auto project = arg_string(a, "project_id");
             const auto id = arg_string(a, "trace_id");
             s.projects().require(project);
             auto stored = s.traces().get(project, id);
             if (!stored) throw Error(ErrorKind::UnknownTrace, "unknown trace " + id);
             return Json{{"trace", to_json(*stored->trace)}};
           });

  add_tool({"latest_trace", "Newest trace by start time matching the predicates.",
            object({{"project_id", t_string()}, {"predicates", t_array(t_predicate())}}, {"project_id"}),
            object({{"trace", t_nullable(t_trace_out())}}, {"trace"}),
            Json{{"project_id", "demo"},
                 {"predicates", Json::array({Json{{"field", "scores.hallucination"}, {"op", "ge"}, {"value", 0.6}}})}}},
           [&s](const Json& a) {
             const auto preds = predicates_from_json(a.value("predicates", Json::array()), "predicates");
             auto t = s.queries().latest(arg_string(a, "project_id"), preds);
             return Json{{"trace", t ? to_json(*t) : Json(nullptr)}};
           });

  add_tool({"list_prompts", "Prompt names with latest version, commit tags and, for a project, the active binding.",
            object({{"project_id", t_string()}, {"commit_tag", t_string()}}, {}),
            object({{"prompts", t_array(object({{"prompt_name", t_string()}, {"latest_version", t_pos_int()}},
                                               {"prompt_name", "latest_version", "commit_tags"}, false))}},
                   {"prompts"}),
            Json{{"project_id", "demo"}}},
           [&s](const Json& a) {
             const auto project = arg_opt_string(a, "project_id");
             if (project) s.projects().require(*project);
             Json out = Json::array();
             for (auto summary : s.prompts().list(project, arg_opt_string(a, "commit_tag"))) {
               if (project) summary.experiment_id = s.control().running_experiment(*project, summary.prompt_name);
               out.push_back(to_json(summary));
             }
             return Json{{"prompts", out}};
           });

  add_tool({"list_proposals", "Proposals, optionally filtered by status and project.",
            object({{"status", t_enum({"open", "accepted", "rejected"})}, {"project_id", t_string()}}, {}),
            object({{"proposals", t_array(t_proposal_out())}}, {"proposals"}),
            Json{{"status", "open"}}},
           [&s](const Json& a) {
             std::optional<ProposalStatus> status;
             if (auto st = arg_opt_string(a, "status")) status = proposal_status_from_string(*st);
             Json out = Json::array();
             for (const auto& p : s.proposals().list(status, arg_opt_string(a, "project_id"))) out.push_back(to_json(p));
             return Json{{"proposals", out}};
           });

  add_tool({"log_batch", "Ingest up to the batch limit of traces; each item succeeds or fails on its own.",
            object({{"project_id", t_string()}, {"traces", t_array(t_trace_in())}}, {"project_id", "traces"}),
            object({{"results", t_array(object({{"ok", t_bool()}}, {"ok"}, false))}}, {"results"}),
            Json{{"project_id", "demo"},
                 {"traces", Json::array({Json{{"trace_id", "t-2"}, {"start_time", 1000}, {"end_time", 1200}}})}}},
           [&s](const Json& a) {
             const auto& list = wire::require(a, "traces", "");
             if (!list.is_array()) throw ValidationError("traces", "expected an array");
             const std::vector<Json> items(list.begin(), list.end());
             Json out = Json::array();
             for (const auto& r : s.ingest().log_batch(arg_string(a, "project_id"), items)) {
               if (r.ok) {
                 out.push_back(Json{{"ok", true}, {"trace_id", r.ok->trace_id}, {"seq", r.ok->seq},
                                    {"duplicate", r.ok->duplicate}});
               } else {
                 Json err{{"kind", to_string(r.error->first)}, {"message", r.error->second}};
                 if (r.field) err["field"] = *r.field;
                 out.push_back(Json{{"ok", false}, {"error", err}});
               }
             }
             return Json{{"results", out}};
           });

  add_tool({"log_trace", "Validate, evaluate and durably commit one trace.",
            object({{"project_id", t_string()}, {"trace", t_trace_in()}}, {"project_id", "trace"}),
            object({{"trace_id", t_string()}, {"seq", t_pos_int()}, {"duplicate", t_bool()}},
                   {"trace_id", "seq", "duplicate"}),
            Json{{"project_id", "demo"},
                 {"trace", Json{{"trace_id", "t-1"}, {"name", "qa"}, {"start_time", 1000}, {"end_time", 1450},
                                {"input", "What is MCP?"}, {"output", "A protocol."}}}}},
           [&s](const Json& a) {
             auto r = s.ingest().log_trace(arg_string(a, "project_id"), trace_from_json(wire::require(a, "trace", "")));
             return Json{{"trace_id", r.trace_id}, {"seq", r.seq}, {"duplicate", r.duplicate}};
           });

  add_tool({"record_outcome", "Fold one scored outcome into an experiment arm.",
            object({{"experiment_id", t_string()}, {"arm", t_enum({"control", "candidate"})}, {"score", t_number()},
                    {"trace_id", t_string()}},
                   {"experiment_id", "arm", "score"}),
            object({{"experiment_id", t_string()}, {"arm", t_enum({"control", "candidate"})}, {"stats", t_stats_out()}},
                   {"experiment_id", "arm", "stats"}),
            Json{{"experiment_id", "exp-1"}, {"arm", "candidate"}, {"score", 0.8}}},
           [&s](const Json& a) {
             const auto id = arg_string(a, "experiment_id");
             const auto arm = arm_from_string(arg_string(a, "arm"));
             const auto st = s.control().record_outcome(id, arm, wire::get_number(a, "score", ""),
                                                        arg_opt_string(a, "trace_id"));
             return Json{{"experiment_id", id}, {"arm", to_string(arm)},
                         {"stats", Json{{"n", st.n}, {"mean", st.mean}, {"m2", st.m2},
                                        {"variance", st.sample_variance()}}}};
           });

  add_tool({"register_rule", "Create or replace a monitor rule.",
            object({{"project_id", t_string()}, {"rule", t_any_object()}}, {"project_id", "rule"}),
            object({{"rule", object({{"rule_id", t_string()}}, {"rule_id", "project_id", "trigger"}, false)}}, {"rule"}),
            Json{{"project_id", "demo"},
                 {"rule", Json{{"rule_id", "unhappy"}, {"window_ms", 3600000},
                               {"filter", Json::array({Json{{"field", "feedback"}, {"op", "eq"}, {"value", -1}}})},
                               {"trigger", Json{{"aggregate", "count"}, {"comparator", "ge"}, {"threshold", 5}}},
                               {"action", "alert"}}}}},
           [&s](const Json& a) {
             const auto project = arg_string(a, "project_id");
             auto rule = monitor_rule_from_json(wire::require(a, "rule", ""));
             if (!rule.project_id.empty() && rule.project_id != project) {
               throw ValidationError("rule.project_id", "does not match project_id");
             }
             rule.project_id = project;
             return Json{{"rule", to_json(s.monitor().register_rule(rule))}};
           });

  add_tool({"resolve_proposal", "Accept or reject an open proposal.",
            object({{"proposal_id", t_string()}, {"status", t_enum({"accepted", "rejected"})}, {"note", t_text()}},
                   {"proposal_id", "status"}),
            object({{"proposal", t_proposal_out()}}, {"proposal"}),
            Json{{"proposal_id", "demo.unhappy-3600000"}, {"status", "accepted"}, {"note", "looks right"}}},
           [&s](const Json& a) {
             return Json{{"proposal", to_json(s.proposals().resolve(
                                          arg_string(a, "proposal_id"),
                                          proposal_status_from_string(arg_string(a, "status")),
                                          arg_opt_string(a, "note").value_or("")))}};
           });

  add_tool({"rollback_prompt", "Restore the binding that preceded the last activation.",
            object({{"project_id", t_string()}, {"prompt_name", t_string()}}, {"project_id", "prompt_name"}),
            object({{"binding", t_binding_out()}}, {"binding"}),
            Json{{"project_id", "demo"}, {"prompt_name", "qa-system"}}},
           [&s](const Json& a) {
             const auto project = arg_string(a, "project_id");
             const auto name = arg_string(a, "prompt_name");
             s.prompts().rollback(project, name);
             return Json{{"binding", to_json(*s.binding(project, name))}};
           });

  add_tool({"route_request", "Prompt version and experiment arm for a request key.",
            object({{"project_id", t_string()}, {"prompt_name", t_string()}, {"request_key", t_text()}},
                   {"project_id", "prompt_name", "request_key"}),
            object({{"version", t_pos_int()}, {"arm", t_enum({"control", "candidate"})}, {"experiment_id", t_string()}},
                   {"version", "arm"}),
            Json{{"project_id", "demo"}, {"prompt_name", "qa-system"}, {"request_key", "user-42"}}},
           [&s](const Json& a) {
             return to_json(s.control().route_request(arg_string(a, "project_id"), arg_string(a, "prompt_name"),
                                                      arg_string(a, "request_key")));
           });

  add_tool({"save_prompt", "Store a new prompt version; expected_latest makes it compare-and-set.",
            object({{"prompt_name", t_string()}, {"template", t_text()},
                    {"metadata", Json{{"type", "object"}, {"additionalProperties", t_text()}}},
                    {"expected_latest", Json{{"type", "integer"}, {"minimum", 0}}}, {"commit_tag", t_string()},
                    {"created_by", t_text()}},
                   {"prompt_name", "template"}),
            object({{"prompt", t_prompt_out()}}, {"prompt"}),
            Json{{"prompt_name", "qa-system"}, {"template", "Answer using only: {context}"}, {"expected_latest", 1}}},
           [&s](const Json& a) {
             SaveRequest r;
             r.prompt_name = arg_string(a, "prompt_name");
             r.template_text = wire::get_string(a, "template", "");
             if (auto it = a.find("metadata"); it != a.end()) {
               wire::expect_object(*it, "metadata");
               for (auto m = it->begin(); m != it->end(); ++m) {
                 if (!m->is_string()) throw ValidationError("metadata." + m.key(), "expected a string");
                 r.metadata[m.key()] = m->get<std::string>();
               }
             }
             r.expected_latest = wire::opt_int(a, "expected_latest", "");
             r.commit_tag = arg_opt_string(a, "commit_tag");
             r.created_by = arg_opt_string(a, "created_by").value_or("");
             return Json{{"prompt", to_json(s.prompts().save(r))}};
           });

  add_tool({"search_traces", "Filtered, ordered, paginated trace search.",
            object({{"project_id", t_string()}, {"predicates", t_array(t_predicate())}, {"time_range", t_range()},
                    {"order_by", object({{"field", t_string()}, {"dir", t_enum({"asc", "desc"})}}, {})},
                    {"limit", Json{{"type", "integer"}, {"minimum", 1}, {"maximum", 1000}}}, {"cursor", t_string()}},
                   {"project_id"}),
            object({{"traces", t_array(t_trace_out())}, {"next_cursor", t_string()}}, {"traces"}),
            Json{{"project_id", "demo"}, {"limit", 10},
                 {"predicates", Json::array({Json{{"field", "tags"}, {"op", "contains"}, {"value", "ci-run:ci-17"}}})}}},
           [&s](const Json& a) {
             auto page = s.queries().search(filter_query_from_json(a));
             Json j{{"traces", traces_json(page.traces)}};
             if (page.next_cursor) j["next_cursor"] = *page.next_cursor;
             return j;
           });

  add_tool({"set_agent_state", "Pause or resume an agent; routing for its bindings follows.",
            object({{"project_id", t_string()}, {"agent_name", t_string()}, {"state", t_enum({"active", "paused"})},
                    {"reason", t_text()}},
                   {"project_id", "agent_name", "state"}),
            object({{"agent", object({{"state", t_enum({"active", "paused"})}},
                                     {"project_id", "agent_name", "state", "reason", "changed_at"}, false)}},
                   {"agent"}),
            Json{{"project_id", "demo"}, {"agent_name", "support-bot"}, {"state", "paused"},
                 {"reason", "hallucination above threshold"}}},
           [&s](const Json& a) {
             return Json{{"agent", to_json(s.control().set_agent_state(
                                       arg_string(a, "project_id"), arg_string(a, "agent_name"),
                                       agent_state_from_string(arg_string(a, "state")),
                                       arg_opt_string(a, "reason").value_or("")))}};
           });

  add_tool({"start_experiment", "Start an A/B experiment on a prompt binding.",
            object({{"project_id", t_string()}, {"experiment_id", t_string()}, {"prompt_name", t_string()},
                    {"control_version", t_pos_int()}, {"candidate_version", t_pos_int()},
                    {"epsilon", Json{{"type", "number"}, {"exclusiveMinimum", 0}, {"maximum", 0.5}}},
                    {"objective_metric", t_string()}, {"min_samples_per_arm", t_pos_int()},
                    {"promotion_delta", Json{{"type", "number"}, {"minimum", 0}}}},
                   {"project_id", "prompt_name", "candidate_version", "objective_metric"}),
            object({{"experiment", t_experiment_out()}}, {"experiment"}),
            Json{{"project_id", "demo"}, {"experiment_id", "exp-1"}, {"prompt_name", "qa-system"},
                 {"candidate_version", 3}, {"objective_metric", "relevance"}, {"epsilon", 0.05}}},
           [&s](const Json& a) {
             Json params = a;
             params.erase("project_id");
             return Json{{"experiment", to_json(s.control().start_experiment(arg_string(a, "project_id"),
                                                                             experiment_params_from_json(params)))}};
           });

  // Unadvertised operations used by REST routes and the CLI.
  add_operation("append_score", [&s](const Json& a) {
    auto t = s.ingest().append_score(arg_string(a, "project_id"), arg_string(a, "trace_id"),
                                     arg_string(a, "metric"), wire::get_number(a, "value", ""));
    return Json{{"trace", to_json(*t)}};
  });
  add_operation("get_evaluators", [&s](const Json& a) {
    const auto project = arg_string(a, "project_id");
    s.projects().require(project);
    Json out = Json::array();
    for (const auto& spec : s.evaluators().for_project(project)->specs()) out.push_back(to_json(spec));
    return Json{{"evaluators", out}};
  });
  add_operation("put_evaluators", [&s](const Json& a) {
    const auto project = arg_string(a, "project_id");
    s.projects().admit(project);
    const auto& list = wire::require(a, "evaluators", "");
    if (!list.is_array()) throw ValidationError("evaluators", "expected an array");
    std::vector<EvaluatorSpec> specs;
    for (const auto& e : list) specs.push_back(evaluator_from_json(e));
    Json out = Json::array();
    for (const auto& spec : s.evaluators().put(project, specs, s.clock()())) out.push_back(to_json(spec));
    return Json{{"evaluators", out}};
  });
  add_operation("get_experiment", [&s](const Json& a) {
    return Json{{"experiment", to_json(s.control().experiment(arg_string(a, "experiment_id")))}};
  });
  add_operation("stop_experiment", [&s](const Json& a) {
    return Json{{"experiment", to_json(s.control().stop_experiment(arg_string(a, "experiment_id")))}};
  });
  add_operation("list_experiments", [&s](const Json& a) {
    const auto project = arg_string(a, "project_id");
    s.projects().require(project);
    Json out = Json::array();
    for (const auto& e : s.control().experiments(project)) out.push_back(to_json(e));
    return Json{{"experiments", out}};
  });
  add_operation("summarize_run", [&s](const Json& a) {
    return Json{{"summary", to_json(s.gate().summarize_run(arg_string(a, "project_id"), arg_string(a, "run_id"),
                                                          arg_opt_string(a, "commit_tag")))}};
  });
  add_operation("list_rules", [&s](const Json& a) {
    const auto project = arg_string(a, "project_id");
    s.projects().require(project);
    Json out = Json::array();
    for (const auto& r : s.monitor().list_rules(project)) out.push_back(to_json(r));
    return Json{{"rules", out}};
  });
  add_operation("list_alerts", [&s](const Json& a) {
    const auto project = arg_string(a, "project_id");
    s.projects().require(project);
    Json out = Json::array();
    for (const auto& al : s.monitor().alerts(project)) out.push_back(to_json(al));
    return Json{{"alerts", out}};
  });
  add_operation("list_firings", [&s](const Json& a) {
    const auto project = arg_string(a, "project_id");
    s.projects().require(project);
    Json out = Json::array();
    for (const auto& f : s.monitor().firings(project)) out.push_back(to_json(f));
    return Json{{"firings", out}};
  });
  add_operation("get_binding", [&s](const Json& a) {
    const auto project = arg_string(a, "project_id");
    const auto name = arg_string(a, "prompt_name");
    s.projects().require(project);
    auto b = s.binding(project, name);
    if (!b) throw Error(ErrorKind::UnknownBinding, "no active binding of " + name + " in " + project);
    return Json{{"binding", to_json(*b)}};
  });

  std::sort(tools_.begin(), tools_.end(),
            [](const ToolDescriptor& x, const ToolDescriptor& y) { return x.name < y.name; });
}

void ToolRegistry::add_tool(ToolDescriptor descriptor, Handler handler) {
  handlers_[descriptor.name] = std::move(handler);
  tools_.push_back(std::move(descriptor));
}

void ToolRegistry::add_operation(const std::string& name, Handler handler) { handlers_[name] = std::move(handler); }

const ToolDescriptor* ToolRegistry::find(const std::string& name) const {
  auto it = std::lower_bound(tools_.begin(), tools_.end(), name,
                             [](const ToolDescriptor& t, const std::string& n) { return t.name < n; });
  return it != tools_.end() && it->name == name ? &*it : nullptr;
}

Json ToolRegistry::call_tool(const std::string& name, const Json& arguments) {
  const auto* tool = find(name);
  if (!tool) throw Error(ErrorKind::NotFound, "unknown tool " + name);
  if (auto err = validate_schema(tool->input_schema, arguments)) throw Error(ErrorKind::InvalidParams, *err);
  return handlers_.at(name)(arguments);
}

Json ToolRegistry::call_operation(const std::string& name, const Json& arguments) {
  auto it = handlers_.find(name);
  if (it == handlers_.end()) throw Error(ErrorKind::NotFound, "unknown operation " + name);
  if (!arguments.is_object()) throw Error(ErrorKind::InvalidParams, "arguments must be an object");
  if (const auto* tool = find(name)) {
    if (auto err = validate_schema(tool->input_schema, arguments)) throw Error(ErrorKind::InvalidParams, *err);
  }
  return it->second(arguments);
}

}  // namespace aide
