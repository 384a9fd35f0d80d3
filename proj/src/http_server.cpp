#include "aide/http_server.hpp"

#include <httplib.h>

#include "aide/codec.hpp"

namespace aide {

int http_status(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::ValidationError:
    case ErrorKind::UnknownField:
    case ErrorKind::InvalidRange:
    case ErrorKind::WindowTooWide:
    case ErrorKind::EmptyTemplate:
    case ErrorKind::ScoreOutOfRange:
    case ErrorKind::InvalidParams:
      return 400;
    case ErrorKind::Unauthorized:
      return 401;
    case ErrorKind::UnknownProject:
    case ErrorKind::UnknownTrace:
    case ErrorKind::UnknownPrompt:
    case ErrorKind::UnknownVersion:
    case ErrorKind::UnknownRun:
    case ErrorKind::UnknownBinding:
    case ErrorKind::UnknownExperiment:
    case ErrorKind::UnknownRule:
    case ErrorKind::UnknownProposal:
    case ErrorKind::NotFound:
      return 404;
    case ErrorKind::DuplicateTraceId:
    case ErrorKind::VersionConflict:
    case ErrorKind::NoHistory:
    case ErrorKind::ExperimentNotRunning:
    case ErrorKind::ExperimentAlreadyRunning:
    case ErrorKind::IllegalTransition:
      return 409;
    case ErrorKind::LaggingSubscriber:
      return 410;
    case ErrorKind::BatchTooLarge:
      return 413;
    case ErrorKind::EmptyRun:
    case ErrorKind::EmptyWindow:
      return 422;
    case ErrorKind::PausedAgent:
      return 423;
    case ErrorKind::StorageFull:
      return 507;
    case ErrorKind::CorruptLog:
    case ErrorKind::EvaluatorError:
    case ErrorKind::Internal:
      return 500;
  }
  return 500;
}

std::pair<std::string, int> parse_addr(const std::string& addr) {
  const auto colon = addr.rfind(':');
  if (colon == std::string::npos || colon == 0) throw ValidationError("addr", "expected host:port");
  try {
    std::size_t used = 0;
    const int port = std::stoi(addr.substr(colon + 1), &used);
    if (used != addr.size() - colon - 1 || port < 0 || port > 65535) throw std::out_of_range("port");
    return {addr.substr(0, colon), port};
  } catch (const std::exception&) {
    throw ValidationError("addr", "invalid port in " + addr);
  }
}

namespace {

using Req = httplib::Request;
using Res = httplib::Response;
using Call = std::pair<std::string, Json>;

void send_error(Res& res, const Error& e) {
  res.status = http_status(e.kind());
  res.set_content(canonical(Json{{"error", error_body(e)}}), "application/json");
}

Json body_json(const Req& req) {
  if (req.body.empty()) return Json::object();
  try {
    return Json::parse(req.body);
  } catch (const Json::parse_error&) {
    throw ValidationError("body", "invalid JSON");
  }
}

Json body_object(const Req& req) {
  auto j = body_json(req);
  if (!j.is_object()) throw ValidationError("body", "expected a JSON object");
  return j;
}

std::optional<std::string> qstr(const Req& req, const char* key) {
  if (!req.has_param(key)) return std::nullopt;
  return req.get_param_value(key);
}

std::optional<std::int64_t> qint(const Req& req, const char* key) {
  auto s = qstr(req, key);
  if (!s) return std::nullopt;
  try {
    std::size_t used = 0;
    const auto v = std::stoll(*s, &used);
    if (used != s->size()) throw std::invalid_argument(key);
    return v;
  } catch (const std::exception&) {
    throw ValidationError(key, "expected an integer");
  }
}

Json qjson(const Req& req, const char* key) {
  auto s = qstr(req, key);
  if (!s) return nullptr;
  try {
    return Json::parse(*s);
  } catch (const Json::parse_error&) {
    throw ValidationError(key, "invalid JSON");
  }
}

// Moves `key` from the path into args, rejecting a conflicting body value.
void bind_path(Json& args, const char* key, const std::string& value) {
  if (args.contains(key) && args[key] != value) throw ValidationError(key, "does not match the URL");
  args[key] = value;
}

}  // namespace

HttpServer::HttpServer(Service& service, std::string api_key)
    : service_(service),
      api_key_(std::move(api_key)),
      tools_(service),
      rpc_(tools_),
      server_(std::make_unique<httplib::Server>()) {
  routes();
}

HttpServer::~HttpServer() { stop(); }

bool HttpServer::listen(const std::string& host, int port) { return server_->listen(host, port); }
int HttpServer::bind_any_port(const std::string& host) { return server_->bind_to_any_port(host); }
bool HttpServer::listen_after_bind() { return server_->listen_after_bind(); }
bool HttpServer::running() const { return server_->is_running(); }

void HttpServer::stop() {
  stopping_ = true;
  if (server_->is_running()) server_->stop();
}

void HttpServer::routes() {
  auto& svr = *server_;

  svr.set_pre_routing_handler([this](const Req& req, Res& res) {
    if (api_key_.empty()) return httplib::Server::HandlerResponse::Unhandled;
    if (req.get_header_value("Authorization") == "Bearer " + api_key_) {
      return httplib::Server::HandlerResponse::Unhandled;
    }
    send_error(res, Error(ErrorKind::Unauthorized, "missing or invalid bearer token"));
    return httplib::Server::HandlerResponse::Handled;
  });

  auto op = [this](const std::function<Call(const Req&)>& build) {
    return [this, build](const Req& req, Res& res) {
      try {
        auto [name, args] = build(req);
        res.set_content(canonical(tools_.call_operation(name, args)), "application/json");
      } catch (const Error& e) {
        send_error(res, e);
      } catch (const Json::exception& e) {
        send_error(res, ValidationError("body", e.what()));
      } catch (const std::exception& e) {
        send_error(res, Error(ErrorKind::Internal, e.what()));
      }
    };
  };

  const std::string P = R"(/v1/projects/([A-Za-z0-9._-]+))";
  const std::string ID = R"(([A-Za-z0-9._-]+))";

  // Traces.
  svr.Post(P + "/traces", op([](const Req& r) {
    return Call{"log_trace", Json{{"project_id", r.matches[1].str()}, {"trace", body_json(r)}}};
  }));
  svr.Post(P + "/traces:batch", op([](const Req& r) {
    auto body = body_json(r);
    Json traces = body.is_array() ? body : body.value("traces", Json());
    return Call{"log_batch", Json{{"project_id", r.matches[1].str()}, {"traces", traces}}};
  }));
  svr.Get(P + "/traces", op([](const Req& r) {
    Json args = qjson(r, "filter");
    if (args.is_null()) args = Json::object();
    if (!args.is_object()) throw ValidationError("filter", "expected a JSON object");
    bind_path(args, "project_id", r.matches[1].str());
    if (auto c = qstr(r, "cursor")) args["cursor"] = *c;
    if (auto l = qint(r, "limit")) args["limit"] = *l;
    return Call{"search_traces", args};
  }));
  svr.Get(P + "/traces/count", op([](const Req& r) {
    Json args{{"project_id", r.matches[1].str()}};
    if (auto v = qint(r, "from")) args["from"] = *v;
    if (auto v = qint(r, "to")) args["to"] = *v;
    return Call{"count_traces", args};
  }));
  svr.Get(P + "/traces/latest", op([](const Req& r) {
    Json args{{"project_id", r.matches[1].str()}};
    if (auto p = qjson(r, "predicates"); !p.is_null()) args["predicates"] = p;
    return Call{"latest_trace", args};
  }));
  svr.Get(P + "/traces/" + ID, op([](const Req& r) {
    return Call{"get_trace", Json{{"project_id", r.matches[1].str()}, {"trace_id", r.matches[2].str()}}};
  }));
  svr.Post(P + "/traces/" + ID + "/scores", op([](const Req& r) {
    auto args = body_object(r);
    bind_path(args, "project_id", r.matches[1].str());
    bind_path(args, "trace_id", r.matches[2].str());
    return Call{"append_score", args};
  }));
  svr.Get(P + "/metrics", op([](const Req& r) {
    Json args{{"project_id", r.matches[1].str()}};
    if (auto v = qint(r, "from")) args["from"] = *v;
    if (auto v = qint(r, "to")) args["to"] = *v;
    if (auto v = qint(r, "bucket")) args["bucket_ms"] = *v;
    return Call{"aggregate_metrics", args};
  }));
  svr.Put(P + "/evaluators", op([](const Req& r) {
    auto body = body_json(r);
    Json list = body.is_array() ? body : body.value("evaluators", Json());
    return Call{"put_evaluators", Json{{"project_id", r.matches[1].str()}, {"evaluators", list}}};
  }));
  svr.Get(P + "/evaluators", op([](const Req& r) {
    return Call{"get_evaluators", Json{{"project_id", r.matches[1].str()}}};
  }));

  // Prompts and bindings.
  svr.Put("/v1/prompts/" + ID, op([](const Req& r) {
    auto args = body_object(r);
    bind_path(args, "prompt_name", r.matches[1].str());
    return Call{"save_prompt", args};
  }));
  svr.Get("/v1/prompts/" + ID, op([](const Req& r) {
    Json args{{"prompt_name", r.matches[1].str()}};
    if (auto v = qint(r, "version")) args["version"] = *v;
    return Call{"get_prompt", args};
  }));
  svr.Get("/v1/prompts", op([](const Req& r) {
    Json args = Json::object();
    if (auto v = qstr(r, "project")) args["project_id"] = *v;
    if (auto v = qstr(r, "commit_tag")) args["commit_tag"] = *v;
    return Call{"list_prompts", args};
  }));
  svr.Post(P + "/bindings/" + ID + ":activate", op([](const Req& r) {
    auto args = body_object(r);
    bind_path(args, "project_id", r.matches[1].str());
    bind_path(args, "prompt_name", r.matches[2].str());
    return Call{"activate_prompt", args};
  }));
  svr.Post(P + "/bindings/" + ID + ":rollback", op([](const Req& r) {
    return Call{"rollback_prompt", Json{{"project_id", r.matches[1].str()}, {"prompt_name", r.matches[2].str()}}};
  }));
  svr.Get(P + "/bindings/" + ID, op([](const Req& r) {
    return Call{"get_binding", Json{{"project_id", r.matches[1].str()}, {"prompt_name", r.matches[2].str()}}};
  }));

  // CI gate.
  svr.Post(P + "/gates/" + ID + ":evaluate", op([](const Req& r) {
    auto body = body_json(r);
    Json configs = body.is_array() ? body : body.value("configs", Json());
    return Call{"evaluate_gate", Json{{"project_id", r.matches[1].str()}, {"run_id", r.matches[2].str()}, {"configs", configs}}};
  }));
  svr.Post(P + "/runs/" + ID + ":summarize", op([](const Req& r) {
    auto args = body_object(r);
    bind_path(args, "project_id", r.matches[1].str());
    bind_path(args, "run_id", r.matches[2].str());
    return Call{"summarize_run", args};
  }));
  svr.Post(P + "/drift", op([](const Req& r) {
    auto args = body_object(r);
    bind_path(args, "project_id", r.matches[1].str());
    return Call{"drift_check", args};
  }));

  // Experiments, agents and routing.
  svr.Post(P + "/experiments", op([](const Req& r) {
    auto args = body_object(r);
    bind_path(args, "project_id", r.matches[1].str());
    return Call{"start_experiment", args};
  }));
  svr.Get(P + "/experiments", op([](const Req& r) {
    return Call{"list_experiments", Json{{"project_id", r.matches[1].str()}}};
  }));
  svr.Get("/v1/experiments/" + ID, op([](const Req& r) {
    return Call{"get_experiment", Json{{"experiment_id", r.matches[1].str()}}};
  }));
  svr.Post("/v1/experiments/" + ID + ":stop", op([](const Req& r) {
    return Call{"stop_experiment", Json{{"experiment_id", r.matches[1].str()}}};
  }));
  svr.Post("/v1/experiments/" + ID + ":evaluate", op([](const Req& r) {
    return Call{"evaluate_experiment", Json{{"experiment_id", r.matches[1].str()}}};
  }));
  svr.Post("/v1/experiments/" + ID + "/outcomes", op([](const Req& r) {
    auto args = body_object(r);
    bind_path(args, "experiment_id", r.matches[1].str());
    return Call{"record_outcome", args};
  }));
  svr.Post(P + "/agents/" + ID + ":pause", op([](const Req& r) {
    auto args = body_object(r);
    bind_path(args, "project_id", r.matches[1].str());
    bind_path(args, "agent_name", r.matches[2].str());
    args["state"] = "paused";
    return Call{"set_agent_state", args};
  }));
  svr.Post(P + "/agents/" + ID + ":resume", op([](const Req& r) {
    auto args = body_object(r);
    bind_path(args, "project_id", r.matches[1].str());
    bind_path(args, "agent_name", r.matches[2].str());
    args["state"] = "active";
    return Call{"set_agent_state", args};
  }));
  svr.Get(P + "/route", op([](const Req& r) {
    Json args{{"project_id", r.matches[1].str()}};
    if (auto v = qstr(r, "prompt")) args["prompt_name"] = *v;
    if (auto v = qstr(r, "key")) args["request_key"] = *v;
    return Call{"route_request", args};
  }));

  // Monitor rules, proposals, alerts.
  svr.Put(P + "/rules/" + ID, op([](const Req& r) {
    auto rule = body_object(r);
    bind_path(rule, "rule_id", r.matches[2].str());
    return Call{"register_rule", Json{{"project_id", r.matches[1].str()}, {"rule", rule}}};
  }));
  svr.Get(P + "/rules", op([](const Req& r) { return Call{"list_rules", Json{{"project_id", r.matches[1].str()}}}; }));
  svr.Get(P + "/alerts", op([](const Req& r) { return Call{"list_alerts", Json{{"project_id", r.matches[1].str()}}}; }));
  svr.Get(P + "/firings", op([](const Req& r) { return Call{"list_firings", Json{{"project_id", r.matches[1].str()}}}; }));
  svr.Get("/v1/proposals", op([](const Req& r) {
    Json args = Json::object();
    if (auto v = qstr(r, "status")) args["status"] = *v;
    if (auto v = qstr(r, "project")) args["project_id"] = *v;
    return Call{"list_proposals", args};
  }));
  svr.Post("/v1/proposals/" + ID + ":resolve", op([](const Req& r) {
    auto args = body_object(r);
    bind_path(args, "proposal_id", r.matches[1].str());
    return Call{"resolve_proposal", args};
  }));

  // JSON-RPC.
  svr.Post("/mcp", [this](const Req& req, Res& res) {
    auto out = rpc_.handle(req.body);
    if (out.empty()) {
      res.status = 202;
    } else {
      res.set_content(out, "application/json");
    }
  });

  // Server-sent events.
  svr.Get(P + "/stream", [this](const Req& req, Res& res) {
    std::shared_ptr<Subscription> sub;
    try {
      std::vector<Predicate> filter;
      if (auto f = qjson(req, "filter"); !f.is_null()) filter = predicates_from_json(f, "filter");
      std::optional<SeqNo> from;
      if (auto v = qint(req, "from_seq")) from = static_cast<SeqNo>(*v);
      if (auto last = req.get_header_value("Last-Event-ID"); !from && !last.empty()) {
        from = static_cast<SeqNo>(std::stoull(last));
      }
      service_.projects().require(req.matches[1].str());
      sub = service_.hub().subscribe(req.matches[1].str(), filter, from);
    } catch (const Error& e) {
      send_error(res, e);
      return;
    } catch (const std::exception& e) {
      send_error(res, ValidationError("from_seq", e.what()));
      return;
    }
    res.set_header("Cache-Control", "no-cache");
    res.set_chunked_content_provider(
        "text/event-stream",
        [this, sub, idle = 0](std::size_t, httplib::DataSink& sink) mutable {
          if (stopping_ || !sink.is_writable()) return false;
          auto e = sub->next(std::chrono::milliseconds(250));
          if (!e) {
            if (sub->finished()) {
              sink.done();
              return true;
            }
            // Comment line every ~10 s so dead peers are noticed.
            return ++idle % 40 != 0 || sink.write(":\n\n", 3);
          }
          idle = 0;
          const auto text = to_sse(*e);
          if (!sink.write(text.data(), text.size())) return false;
          if (e->terminal) sink.done();
          return true;
        },
        [this, sub](bool) { service_.hub().unsubscribe(sub); });
  });
}

}  // namespace aide
