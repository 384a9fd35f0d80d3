#pragma once

// One scripted session that touches every advertised tool, and the means to
// replay it through each transport: the registry directly, JSON-RPC over
// stdio framing, JSON-RPC at POST /mcp, and the REST routes.

#include <chrono>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "aide/codec.hpp"
#include "aide/http_server.hpp"
#include "aide/jsonrpc.hpp"
#include "aide/tools.hpp"
#include "httplib.h"
#include "support.hpp"

namespace aide::test {

struct Step {
  std::string tool;
  Json args;
};

// ok: payload; !ok: the error body {"kind", "message"[, "field"]}.
struct Outcome {
  bool ok = false;
  Json body;
  bool operator==(const Outcome&) const = default;
};

inline std::string describe(const Outcome& o) { return (o.ok ? "ok " : "error ") + canonical(o.body); }

inline Json trace_json(const std::string& id, TimestampMs start, double relevance, double hallucination,
                       std::vector<std::string> tags = {}) {
  Json t{{"trace_id", id},
         {"name", "qa"},
         {"start_time", start},
         {"end_time", start + 250},
         {"input", "q " + id},
         {"output", "a " + id},
         {"scores", Json{{"relevance", relevance}, {"hallucination", hallucination}}}};
  if (!tags.empty()) t["tags"] = tags;
  return t;
}

inline std::vector<Step> transport_script() {
  std::vector<Step> s;
  auto add = [&](std::string tool, Json args) { s.push_back({std::move(tool), std::move(args)}); };
  const Json demo{{"project_id", "demo"}};
  auto with = [&](Json extra) {
    Json a = demo;
    a.update(extra);
    return a;
  };

  add("log_trace", with({{"trace", trace_json("t-1", 1000, 0.80, 0.7, {"ci-run:ci-17"})}}));
  add("log_trace", with({{"trace", trace_json("t-1", 1000, 0.80, 0.7, {"ci-run:ci-17"})}}));
  Json batch = Json::array();
  for (int i = 0; i < 4; ++i) {
    batch.push_back(trace_json("b-" + std::to_string(i), 2000 + i, 0.9, 0.1, {"ci-run:base-" + std::to_string(i)}));
  }
  batch.push_back(trace_json("late", 4000000, 0.6, 0.8));
  batch.push_back(Json{{"trace_id", "bad"}, {"start_time", 10}, {"end_time", 5}});
  add("log_batch", with({{"traces", batch}}));
  add("get_trace", with({{"trace_id", "t-1"}}));
  add("get_trace", with({{"trace_id", "ghost"}}));
  add("count_traces", demo);
  add("count_traces", with({{"from", 0}, {"to", 3000}}));
  add("search_traces",
      with({{"limit", 2}, {"predicates", Json::array({Json{{"field", "scores.relevance"}, {"op", "ge"}, {"value", 0.5}}})}}));
  add("search_traces", with({{"predicates", Json::array({Json{{"field", "nope"}, {"op", "eq"}, {"value", 1}}})}}));
  add("latest_trace",
      with({{"predicates", Json::array({Json{{"field", "scores.hallucination"}, {"op", "ge"}, {"value", 0.6}}})}}));
  add("aggregate_metrics", with({{"from", 0}, {"to", 7200000}, {"bucket_ms", 3600000}}));
  add("drift_check", with({{"metric_name", "relevance"},
                           {"window_a", Json{{"from", 0}, {"to", 3600000}}},
                           {"window_b", Json{{"from", 3600000}, {"to", 7200000}}},
                           {"threshold_pct", 15}}));
  for (int i = 0; i < 4; ++i) {
    add("evaluate_gate", with({{"run_id", "base-" + std::to_string(i)},
                               {"configs", Json::array({Json{{"metric_name", "relevance"}}})}}));
  }
  add("evaluate_gate", with({{"run_id", "ci-17"}, {"configs", Json::array({Json{{"metric_name", "relevance"}}})}}));
  add("save_prompt", Json{{"prompt_name", "qa-system"}, {"template", "v1 {context}"}});
  add("save_prompt", Json{{"prompt_name", "qa-system"}, {"template", "v2 {context}"}, {"expected_latest", 1}});
  add("save_prompt", Json{{"prompt_name", "qa-system"}, {"template", "stale"}, {"expected_latest", 1}});
  add("save_prompt",
      Json{{"prompt_name", "qa-system"}, {"template", "v3 {context}"}, {"expected_latest", 2}, {"commit_tag", "abc123"}});
  add("get_prompt", Json{{"prompt_name", "qa-system"}, {"version", 2}});
  add("get_prompt", Json{{"prompt_name", "qa-system"}});
  add("activate_prompt", with({{"prompt_name", "qa-system"}, {"version", 1}, {"agent", "support-bot"}}));
  add("list_prompts", demo);
  add("start_experiment", with({{"experiment_id", "exp-1"},
                                {"prompt_name", "qa-system"},
                                {"candidate_version", 2},
                                {"objective_metric", "relevance"},
                                {"epsilon", 0.2},
                                {"min_samples_per_arm", 2}}));
  for (int i = 0; i < 5; ++i) {
    add("route_request", with({{"prompt_name", "qa-system"}, {"request_key", "user-" + std::to_string(i)}}));
  }
  add("record_outcome", Json{{"experiment_id", "exp-1"}, {"arm", "control"}, {"score", 0.5}});
  add("record_outcome", Json{{"experiment_id", "exp-1"}, {"arm", "candidate"}, {"score", 0.9}, {"trace_id", "t-1"}});
  add("evaluate_experiment", Json{{"experiment_id", "exp-1"}});
  add("record_outcome", Json{{"experiment_id", "exp-1"}, {"arm", "control"}, {"score", 0.6}});
  add("record_outcome", Json{{"experiment_id", "exp-1"}, {"arm", "candidate"}, {"score", 1.0}});
  add("record_outcome", Json{{"experiment_id", "exp-1"}, {"arm", "candidate"}, {"score", 2.0}});
  add("evaluate_experiment", Json{{"experiment_id", "exp-1"}});
  add("list_proposals", Json{{"status", "open"}});
  add("resolve_proposal", Json{{"proposal_id", "exp-1-promotion"}, {"status", "accepted"}, {"note", "ship it"}});
  add("resolve_proposal", Json{{"proposal_id", "exp-1-promotion"}, {"status", "rejected"}, {"note", "late"}});
  add("activate_prompt", with({{"prompt_name", "qa-system"}, {"version", 3}}));
  add("rollback_prompt", with({{"prompt_name", "qa-system"}}));
  add("set_agent_state", with({{"agent_name", "support-bot"}, {"state", "paused"}, {"reason", "hallucination"}}));
  add("route_request", with({{"prompt_name", "qa-system"}, {"request_key", "user-1"}}));
  add("set_agent_state", with({{"agent_name", "support-bot"}, {"state", "active"}, {"reason", "fixed"}}));
  add("register_rule",
      with({{"rule", Json{{"rule_id", "unhappy"},
                          {"window_ms", 3600000},
                          {"filter", Json::array({Json{{"field", "feedback"}, {"op", "eq"}, {"value", -1}}})},
                          {"trigger", Json{{"aggregate", "count"}, {"comparator", "ge"}, {"threshold", 5}}},
                          {"action", "alert"}}}}));
  add("list_proposals", Json::object());
  return s;
}

inline Outcome call_direct(ToolRegistry& tools, const Step& step) {
  try {
    return {true, tools.call_tool(step.tool, step.args)};
  } catch (const Error& e) {
    return {false, error_body(e)};
  }
}

inline Json rpc_request(int id, const Step& step) {
  return Json{{"jsonrpc", "2.0"},
              {"id", id},
              {"method", "tools/call"},
              {"params", Json{{"name", step.tool}, {"arguments", step.args}}}};
}

// Also checks that the text content is the canonical structured payload.
inline Outcome outcome_from_rpc(const Json& response) {
  if (response.contains("result")) {
    const auto& r = response["result"];
    const auto payload = r.at("structuredContent");
    if (r.at("content").at(0).at("text") != canonical(payload)) return {false, Json{{"kind", "TextMismatch"}}};
    return {true, payload};
  }
  const auto& e = response.at("error");
  if (e.at("code") != -32000) return {false, Json{{"rpc_code", e.at("code")}}};
  return {false, e.at("data")};
}

inline std::vector<Outcome> run_stdio(Service& service, const std::vector<Step>& steps) {
  ToolRegistry tools(service);
  JsonRpcServer rpc(tools);
  std::stringstream in, out;
  write_frame(in, canonical(Json{{"jsonrpc", "2.0"}, {"id", 0}, {"method", "initialize"}, {"params", Json::object()}}));
  for (std::size_t i = 0; i < steps.size(); ++i) write_frame(in, canonical(rpc_request(static_cast<int>(i + 1), steps[i])));
  serve_stdio(rpc, in, out);
  std::vector<Outcome> results(steps.size());
  while (auto frame = read_frame(out)) {
    const auto j = Json::parse(*frame);
    const int id = j.at("id").get<int>();
    if (id > 0) results[id - 1] = outcome_from_rpc(j);
  }
  return results;
}

// An HTTP server on an ephemeral port, backed by its own service.
class LiveServer {
 public:
  explicit LiveServer(ServiceConfig config = {}, std::string api_key = "")
      : service_(std::move(config), clock_.clock()), http_(service_, std::move(api_key)) {
    port_ = http_.bind_any_port("127.0.0.1");
    thread_ = std::thread([this] { http_.listen_after_bind(); });
    for (int i = 0; i < 200 && !http_.running(); ++i) std::this_thread::sleep_for(std::chrono::milliseconds(5));
  }
  ~LiveServer() {
    http_.stop();
    if (thread_.joinable()) thread_.join();
  }
  LiveServer(const LiveServer&) = delete;
  LiveServer& operator=(const LiveServer&) = delete;

  Service& service() { return service_; }
  ManualClock& clock() { return clock_; }
  int port() const { return port_; }
  std::string addr() const { return "127.0.0.1:" + std::to_string(port_); }
  httplib::Client client() const {
    httplib::Client c("127.0.0.1", port_);
    c.set_read_timeout(10, 0);
    return c;
  }

 private:
  ManualClock clock_;
  Service service_;
  HttpServer http_;
  int port_ = 0;
  std::thread thread_;
};

inline std::vector<Outcome> run_http_mcp(LiveServer& server, const std::vector<Step>& steps) {
  auto c = server.client();
  std::vector<Outcome> results;
  for (std::size_t i = 0; i < steps.size(); ++i) {
    auto r = c.Post("/mcp", canonical(rpc_request(static_cast<int>(i + 1), steps[i])), "application/json");
    if (!r) {
      results.push_back({false, Json{{"kind", "Transport"}}});
      continue;
    }
    results.push_back(outcome_from_rpc(Json::parse(r->body)));
  }
  return results;
}

inline Outcome rest_call(httplib::Client& c, const Step& step) {
  const Json& a = step.args;
  const auto proj = "/v1/projects/" + a.value("project_id", std::string());
  auto without = [&](std::initializer_list<const char*> keys) {
    Json j = a;
    for (const char* k : keys) j.erase(k);
    return j;
  };
  auto str = [&](const char* k) { return a.at(k).get<std::string>(); };
  auto post = [&](const std::string& path, const Json& body) { return c.Post(path, canonical(body), "application/json"); };
  auto get = [&](const std::string& path, const httplib::Params& params) { return c.Get(path, params, httplib::Headers{}); };
  auto param = [&](httplib::Params& p, const char* key, const char* name) {
    if (a.contains(key)) p.emplace(name, a[key].is_string() ? a[key].get<std::string>() : canonical(a[key]));
  };

  httplib::Result r;
  httplib::Params p;
  const auto& t = step.tool;
  if (t == "log_trace") {
    r = post(proj + "/traces", a.at("trace"));
  } else if (t == "log_batch") {
    r = post(proj + "/traces:batch", Json{{"traces", a.at("traces")}});
  } else if (t == "get_trace") {
    r = get(proj + "/traces/" + str("trace_id"), p);
  } else if (t == "count_traces") {
    param(p, "from", "from");
    param(p, "to", "to");
    r = get(proj + "/traces/count", p);
  } else if (t == "search_traces") {
    p.emplace("filter", canonical(without({"project_id"})));
    r = get(proj + "/traces", p);
  } else if (t == "latest_trace") {
    param(p, "predicates", "predicates");
    r = get(proj + "/traces/latest", p);
  } else if (t == "aggregate_metrics") {
    param(p, "from", "from");
    param(p, "to", "to");
    param(p, "bucket_ms", "bucket");
    r = get(proj + "/metrics", p);
  } else if (t == "drift_check") {
    r = post(proj + "/drift", without({"project_id"}));
  } else if (t == "evaluate_gate") {
    r = post(proj + "/gates/" + str("run_id") + ":evaluate", Json{{"configs", a.at("configs")}});
  } else if (t == "save_prompt") {
    r = c.Put("/v1/prompts/" + str("prompt_name"), canonical(without({"prompt_name"})), "application/json");
  } else if (t == "get_prompt") {
    param(p, "version", "version");
    r = get("/v1/prompts/" + str("prompt_name"), p);
  } else if (t == "list_prompts") {
    param(p, "project_id", "project");
    param(p, "commit_tag", "commit_tag");
    r = get("/v1/prompts", p);
  } else if (t == "activate_prompt") {
    r = post(proj + "/bindings/" + str("prompt_name") + ":activate", without({"project_id", "prompt_name"}));
  } else if (t == "rollback_prompt") {
    r = post(proj + "/bindings/" + str("prompt_name") + ":rollback", Json::object());
  } else if (t == "start_experiment") {
    r = post(proj + "/experiments", without({"project_id"}));
  } else if (t == "route_request") {
    param(p, "prompt_name", "prompt");
    param(p, "request_key", "key");
    r = get(proj + "/route", p);
  } else if (t == "record_outcome") {
    r = post("/v1/experiments/" + str("experiment_id") + "/outcomes", without({"experiment_id"}));
  } else if (t == "evaluate_experiment") {
    r = post("/v1/experiments/" + str("experiment_id") + ":evaluate", Json::object());
  } else if (t == "set_agent_state") {
    r = post(proj + "/agents/" + str("agent_name") + (str("state") == "paused" ? ":pause" : ":resume"),
             without({"project_id", "agent_name", "state"}));
  } else if (t == "register_rule") {
    Json rule = a.at("rule");
    const auto id = rule.at("rule_id").get<std::string>();
    rule.erase("rule_id");
    r = c.Put(proj + "/rules/" + id, canonical(rule), "application/json");
  } else if (t == "list_proposals") {
    param(p, "status", "status");
    param(p, "project_id", "project");
    r = get("/v1/proposals", p);
  } else if (t == "resolve_proposal") {
    r = post("/v1/proposals/" + str("proposal_id") + ":resolve", without({"proposal_id"}));
  } else {
    return {false, Json{{"kind", "NoRoute"}}};
  }
  if (!r) return {false, Json{{"kind", "Transport"}}};
  const auto body = Json::parse(r->body);
  if (r->status == 200) return {true, body};
  return {false, body.at("error")};
}

inline std::vector<Outcome> run_rest(LiveServer& server, const std::vector<Step>& steps) {
  auto c = server.client();
  std::vector<Outcome> results;
  for (const auto& s : steps) results.push_back(rest_call(c, s));
  return results;
}

}  // namespace aide::test
