#include "aide/cli.hpp"

#include <httplib.h>

#include <CLI11.hpp>
#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include "aide/codec.hpp"
#include "aide/http_server.hpp"
#include "aide/storage.hpp"

namespace aide {

namespace {

struct Unavailable {
  std::string message;
};

struct ServerError {
  int status;
  std::string body;
};

struct Reply {
  std::string body;
  Json json;
};

class Api {
 public:
  Api(const std::string& addr, const std::string& key) {
    auto [host, port] = parse_addr(addr);
    client_ = std::make_unique<httplib::Client>(host, port);
    client_->set_connection_timeout(5);
    client_->set_read_timeout(60);
    if (!key.empty()) headers_.emplace("Authorization", "Bearer " + key);
  }

  Reply get(const std::string& path, const httplib::Params& params = {}) {
    return check(client_->Get(path, params, headers_));
  }
  Reply post(const std::string& path, const Json& body = Json::object()) {
    return check(client_->Post(path, headers_, canonical(body), "application/json"));
  }
  Reply put(const std::string& path, const Json& body) {
    return check(client_->Put(path, headers_, canonical(body), "application/json"));
  }

 private:
  Reply check(const httplib::Result& r) {
    if (!r) throw Unavailable{httplib::to_string(r.error())};
    if (r->status >= 300) throw ServerError{r->status, r->body};
    Json j;
    try {
      j = Json::parse(r->body);
    } catch (const Json::parse_error&) {
      j = nullptr;
    }
    return Reply{r->body, std::move(j)};
  }

  std::unique_ptr<httplib::Client> client_;
  httplib::Headers headers_;
};

std::string env_or(const char* name, const std::string& fallback) {
  const char* v = std::getenv(name);
  return v && *v ? std::string(v) : fallback;
}

Json read_json_arg(const std::string& source) {
  std::string text;
  if (source == "-") {
    std::ostringstream os;
    os << std::cin.rdbuf();
    text = os.str();
  } else if (!source.empty() && (source[0] == '{' || source[0] == '[')) {
    text = source;
  } else {
    std::ifstream in(source);
    if (!in) throw CLI::ValidationError("cannot read " + source);
    std::ostringstream os;
    os << in.rdbuf();
    text = os.str();
  }
  try {
    return Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw CLI::ValidationError(std::string("invalid JSON: ") + e.what());
  }
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::string num_or_dash(const Json& v, const char* f = "%.4f") {
  return v.is_number() ? fmt(f, v.get<double>()) : "-";
}

std::string pad(std::string s, std::size_t width) {
  if (s.size() < width) s.append(width - s.size(), ' ');
  return s;
}

void print_trace_rows(std::ostream& out, const Json& traces) {
  for (const auto& t : traces) {
    out << t.value("trace_id", "") << '\t' << t.value("start_time", 0) << '\t' << t.value("latency_ms", 0)
        << '\t' << t.value("name", "") << '\n';
  }
}

void print_gate(std::ostream& out, const Json& v) {
  out << pad("metric", 16) << pad("rule", 24) << pad("current", 10) << pad("baseline", 10) << pad("std", 10)
      << "change\n";
  for (const auto& m : v.at("metrics")) {
    out << pad(m.value("metric_name", ""), 16) << pad(m.value("rule_triggered", ""), 24)
        << pad(num_or_dash(m["current_mean"]), 10) << pad(num_or_dash(m["baseline_mean"]), 10)
        << pad(num_or_dash(m["baseline_std"]), 10);
    const auto& rc = m["relative_change"];
    out << (rc.is_number() ? fmt("%+.2f%%", rc.get<double>() * 100.0) : "-") << '\n';
  }
  const int code = v.at("exit_code").get<int>();
  out << (code == 0 ? "PASS" : code == 1 ? "FAIL" : "PASS (insufficient baseline data)") << '\n';
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"aide: operator client for the aide server", "aide"};
  app.require_subcommand(1);
  std::string addr = env_or("AIDE_HTTP_ADDR", "127.0.0.1:7465");
  std::string key = env_or("AIDE_API_KEY", "");
  bool json = false;
  app.add_option("--addr", addr, "server host:port (AIDE_HTTP_ADDR)");
  app.add_option("--key", key, "API key (AIDE_API_KEY)");
  app.add_flag("--json", json, "print the server's canonical JSON body verbatim");

  // Each subcommand records what to run once parsing succeeded.
  std::function<int(Api&)> action;
  std::function<int()> offline;
  std::string project = env_or("AIDE_PROJECT", "default");
  auto add_project = [&](CLI::App* sub) { sub->add_option("--project,-p", project, "project id (AIDE_PROJECT)"); };

  auto emit = [&](const Reply& r, const std::function<void(const Json&)>& human) {
    if (json) {
      out << r.body << '\n';
    } else {
      human(r.json);
    }
    return 0;
  };
  auto pretty = [&](const Json& j) { out << j.dump(2) << '\n'; };
  auto project_path = [&]() { return "/v1/projects/" + project; };

  // traces
  auto* traces = app.add_subcommand("traces", "search and inspect traces");
  traces->require_subcommand(1);
  {
    auto* search = traces->add_subcommand("search", "filtered trace search");
    add_project(search);
    auto filter = std::make_shared<std::string>();
    auto cursor = std::make_shared<std::string>();
    auto limit = std::make_shared<int>(0);
    search->add_option("--filter", *filter, "FilterQuery JSON (predicates, time_range, order_by)");
    search->add_option("--cursor", *cursor);
    search->add_option("--limit", *limit);
    search->callback([&, filter, cursor, limit] {
      action = [&, filter, cursor, limit](Api& api) {
        httplib::Params params;
        if (!filter->empty()) params.emplace("filter", *filter);
        if (!cursor->empty()) params.emplace("cursor", *cursor);
        if (*limit > 0) params.emplace("limit", std::to_string(*limit));
        return emit(api.get(project_path() + "/traces", params), [&](const Json& j) {
          print_trace_rows(out, j.at("traces"));
          if (j.contains("next_cursor")) out << "next_cursor " << j["next_cursor"].get<std::string>() << '\n';
        });
      };
    });

    auto* count = traces->add_subcommand("count", "number of traces");
    add_project(count);
    auto from = std::make_shared<std::optional<std::int64_t>>();
    auto to = std::make_shared<std::optional<std::int64_t>>();
    count->add_option("--from", *from);
    count->add_option("--to", *to);
    count->callback([&, from, to] {
      action = [&, from, to](Api& api) {
        httplib::Params params;
        if (*from) params.emplace("from", std::to_string(**from));
        if (*to) params.emplace("to", std::to_string(**to));
        return emit(api.get(project_path() + "/traces/count", params),
                    [&](const Json& j) { out << j.at("count").get<std::int64_t>() << '\n'; });
      };
    });

    auto* latest = traces->add_subcommand("latest", "newest trace matching predicates");
    add_project(latest);
    auto preds = std::make_shared<std::string>();
    latest->add_option("--predicates", *preds, "JSON array of predicates");
    latest->callback([&, preds] {
      action = [&, preds](Api& api) {
        httplib::Params params;
        if (!preds->empty()) params.emplace("predicates", *preds);
        return emit(api.get(project_path() + "/traces/latest", params), [&](const Json& j) {
          if (j.at("trace").is_null()) {
            out << "no matching trace\n";
          } else {
            pretty(j["trace"]);
          }
        });
      };
    });

    auto* show = traces->add_subcommand("show", "one trace by id");
    add_project(show);
    auto id = std::make_shared<std::string>();
    show->add_option("trace_id", *id)->required();
    show->callback([&, id] {
      action = [&, id](Api& api) {
        return emit(api.get(project_path() + "/traces/" + *id), [&](const Json& j) { pretty(j.at("trace")); });
      };
    });
  }

  // metrics
  {
    auto* metrics = app.add_subcommand("metrics", "time-bucketed aggregates");
    add_project(metrics);
    auto from = std::make_shared<std::int64_t>(0);
    auto to = std::make_shared<std::int64_t>(0);
    auto bucket = std::make_shared<std::int64_t>(0);
    metrics->add_option("--from", *from)->required();
    metrics->add_option("--to", *to)->required();
    metrics->add_option("--bucket", *bucket, "bucket width in ms")->required();
    metrics->callback([&, from, to, bucket] {
      action = [&, from, to, bucket](Api& api) {
        httplib::Params params{{"from", std::to_string(*from)}, {"to", std::to_string(*to)},
                               {"bucket", std::to_string(*bucket)}};
        return emit(api.get(project_path() + "/metrics", params), [&](const Json& j) {
          out << pad("from", 16) << pad("traces", 8) << pad("latency_p50", 13) << pad("latency_p95", 13) << "scores\n";
          for (const auto& b : j.at("buckets")) {
            std::string scores;
            for (auto it = b["score_means"].begin(); it != b["score_means"].end(); ++it) {
              scores += it.key() + "=" + fmt("%.4f", it->get<double>()) + " ";
            }
            out << pad(std::to_string(b.value("from", 0)), 16) << pad(std::to_string(b.value("trace_count", 0)), 8)
                << pad(num_or_dash(b.value("latency_p50", Json()), "%.0f"), 13)
                << pad(num_or_dash(b.value("latency_p95", Json()), "%.0f"), 13) << scores << '\n';
          }
        });
      };
    });
  }

  // prompts
  auto* prompts = app.add_subcommand("prompts", "prompt library and bindings");
  prompts->require_subcommand(1);
  {
    auto* save = prompts->add_subcommand("save", "store a new prompt version");
    auto name = std::make_shared<std::string>();
    auto text = std::make_shared<std::string>();
    auto file = std::make_shared<std::string>();
    auto from_json = std::make_shared<std::string>();
    auto expected = std::make_shared<std::optional<std::int64_t>>();
    auto tag = std::make_shared<std::string>();
    auto meta = std::make_shared<std::vector<std::string>>();
    save->add_option("name", *name);
    save->add_option("--template", *text);
    save->add_option("--template-file", *file);
    save->add_option("--from-json", *from_json, "output of `prompts get --json` (file, - or inline)");
    save->add_option("--expected-latest", *expected, "compare-and-set against this latest version");
    save->add_option("--commit-tag", *tag);
    save->add_option("--metadata", *meta, "key=value");
    save->callback([&, name, text, file, from_json, expected, tag, meta] {
      Json body = Json::object();
      if (!from_json->empty()) {
        Json src = read_json_arg(*from_json);
        if (src.contains("prompt")) src = src["prompt"];
        for (const char* k : {"prompt_name", "template", "metadata", "commit_tag", "created_by"}) {
          if (src.contains(k)) body[k] = src[k];
        }
      }
      if (!name->empty()) body["prompt_name"] = *name;
      if (!file->empty()) {
        std::ifstream in(*file);
        if (!in) throw CLI::ValidationError("cannot read " + *file);
        std::ostringstream os;
        os << in.rdbuf();
        body["template"] = os.str();
      } else if (!text->empty()) {
        body["template"] = *text;
      }
      if (!body.contains("prompt_name")) throw CLI::ValidationError("prompt name required");
      if (!body.contains("template")) throw CLI::ValidationError("--template, --template-file or --from-json required");
      if (*expected) body["expected_latest"] = **expected;
      if (!tag->empty()) body["commit_tag"] = *tag;
      for (const auto& kv : *meta) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw CLI::ValidationError("--metadata expects key=value");
        body["metadata"][kv.substr(0, eq)] = kv.substr(eq + 1);
      }
      action = [&, body](Api& api) {
        const auto prompt_name = body["prompt_name"].get<std::string>();
        Json payload = body;
        payload.erase("prompt_name");
        return emit(api.put("/v1/prompts/" + prompt_name, payload), [&](const Json& j) {
          out << "saved " << j["prompt"]["prompt_name"].get<std::string>() << " v"
              << j["prompt"]["version"].get<std::int64_t>() << '\n';
        });
      };
    });

    auto* get = prompts->add_subcommand("get", "fetch a prompt version");
    auto gname = std::make_shared<std::string>();
    auto version = std::make_shared<std::optional<std::int64_t>>();
    get->add_option("name", *gname)->required();
    get->add_option("--version", *version);
    get->callback([&, gname, version] {
      action = [&, gname, version](Api& api) {
        httplib::Params params;
        if (*version) params.emplace("version", std::to_string(**version));
        return emit(api.get("/v1/prompts/" + *gname, params),
                    [&](const Json& j) { out << j["prompt"]["template"].get<std::string>() << '\n'; });
      };
    });

    auto* list = prompts->add_subcommand("list", "prompt names and bindings");
    auto lproject = std::make_shared<std::string>();
    auto ltag = std::make_shared<std::string>();
    list->add_option("--project,-p", *lproject);
    list->add_option("--commit-tag", *ltag);
    list->callback([&, lproject, ltag] {
      action = [&, lproject, ltag](Api& api) {
        httplib::Params params;
        if (!lproject->empty()) params.emplace("project", *lproject);
        if (!ltag->empty()) params.emplace("commit_tag", *ltag);
        return emit(api.get("/v1/prompts", params), [&](const Json& j) {
          for (const auto& p : j.at("prompts")) {
            out << p["prompt_name"].get<std::string>() << "\tlatest v" << p["latest_version"].get<std::int64_t>();
            if (p.contains("active_version")) out << "\tactive v" << p["active_version"].get<std::int64_t>();
            out << '\n';
          }
        });
      };
    });

    auto* activate = prompts->add_subcommand("activate", "bind a version for a project");
    add_project(activate);
    auto aname = std::make_shared<std::string>();
    auto aversion = std::make_shared<std::int64_t>(0);
    auto agent = std::make_shared<std::string>();
    activate->add_option("name", *aname)->required();
    activate->add_option("version", *aversion)->required();
    activate->add_option("--agent", *agent);
    activate->callback([&, aname, aversion, agent] {
      action = [&, aname, aversion, agent](Api& api) {
        Json body{{"version", *aversion}};
        if (!agent->empty()) body["agent"] = *agent;
        return emit(api.post(project_path() + "/bindings/" + *aname + ":activate", body), [&](const Json& j) {
          out << *aname << " active v" << j["binding"]["active_version"].get<std::int64_t>() << '\n';
        });
      };
    });

    auto* rollback = prompts->add_subcommand("rollback", "restore the previous binding");
    add_project(rollback);
    auto rname = std::make_shared<std::string>();
    rollback->add_option("name", *rname)->required();
    rollback->callback([&, rname] {
      action = [&, rname](Api& api) {
        return emit(api.post(project_path() + "/bindings/" + *rname + ":rollback"), [&](const Json& j) {
          out << *rname << " active v" << j["binding"]["active_version"].get<std::int64_t>() << '\n';
        });
      };
    });
  }

  // gate
  auto* gate = app.add_subcommand("gate", "CI regression gate");
  gate->require_subcommand(1);
  {
    auto* evaluate = gate->add_subcommand("evaluate", "evaluate a CI run; exit 0 pass, 1 fail, 2 insufficient data");
    add_project(evaluate);
    auto run = std::make_shared<std::string>();
    auto metrics = std::make_shared<std::vector<std::string>>();
    auto config = std::make_shared<std::string>();
    auto threshold = std::make_shared<std::optional<double>>();
    auto k_sigma = std::make_shared<std::optional<double>>();
    auto window = std::make_shared<std::optional<std::int64_t>>();
    auto min_runs = std::make_shared<std::optional<std::int64_t>>();
    auto lower = std::make_shared<bool>(false);
    evaluate->add_option("--run", *run)->required();
    evaluate->add_option("--metric", *metrics, "metric to gate on (repeatable)");
    evaluate->add_option("--config", *config, "JSON array of gate configs (file, - or inline)");
    evaluate->add_option("--threshold", *threshold, "relative drop threshold");
    evaluate->add_option("--k-sigma", *k_sigma);
    evaluate->add_option("--baseline-window", *window);
    evaluate->add_option("--min-baseline-runs", *min_runs);
    evaluate->add_flag("--lower-is-better", *lower);
    evaluate->callback([&, run, metrics, config, threshold, k_sigma, window, min_runs, lower] {
      Json configs = Json::array();
      if (!config->empty()) {
        configs = read_json_arg(*config);
        if (configs.is_object() && configs.contains("configs")) configs = configs["configs"];
      }
      for (const auto& m : *metrics) {
        Json c{{"metric_name", m}};
        if (*threshold) c["relative_drop_threshold"] = **threshold;
        if (*k_sigma) c["k_sigma"] = **k_sigma;
        if (*window) c["baseline_window"] = **window;
        if (*min_runs) c["min_baseline_runs"] = **min_runs;
        if (*lower) c["direction"] = "lower_is_better";
        configs.push_back(c);
      }
      if (configs.empty()) throw CLI::ValidationError("--metric or --config required");
      action = [&, run, configs](Api& api) {
        auto r = api.post(project_path() + "/gates/" + *run + ":evaluate", Json{{"configs", configs}});
        emit(r, [&](const Json& j) { print_gate(out, j); });
        return r.json.at("exit_code").get<int>();
      };
    });
  }

  // experiments
  auto* experiments = app.add_subcommand("experiments", "A/B prompt experiments");
  experiments->require_subcommand(1);
  {
    auto* start = experiments->add_subcommand("start", "start an experiment");
    add_project(start);
    auto body = std::make_shared<Json>(Json::object());
    auto prompt = std::make_shared<std::string>();
    auto candidate = std::make_shared<std::int64_t>(0);
    auto metric = std::make_shared<std::string>();
    auto id = std::make_shared<std::string>();
    auto control = std::make_shared<std::optional<std::int64_t>>();
    auto epsilon = std::make_shared<std::optional<double>>();
    auto min_samples = std::make_shared<std::optional<std::int64_t>>();
    auto delta = std::make_shared<std::optional<double>>();
    start->add_option("--prompt", *prompt)->required();
    start->add_option("--candidate", *candidate)->required();
    start->add_option("--metric", *metric)->required();
    start->add_option("--id", *id);
    start->add_option("--control", *control);
    start->add_option("--epsilon", *epsilon);
    start->add_option("--min-samples", *min_samples);
    start->add_option("--delta", *delta);
    start->callback([&, prompt, candidate, metric, id, control, epsilon, min_samples, delta] {
      Json b{{"prompt_name", *prompt}, {"candidate_version", *candidate}, {"objective_metric", *metric}};
      if (!id->empty()) b["experiment_id"] = *id;
      if (*control) b["control_version"] = **control;
      if (*epsilon) b["epsilon"] = **epsilon;
      if (*min_samples) b["min_samples_per_arm"] = **min_samples;
      if (*delta) b["promotion_delta"] = **delta;
      action = [&, b](Api& api) {
        return emit(api.post(project_path() + "/experiments", b), [&](const Json& j) {
          out << "started " << j["experiment"]["experiment_id"].get<std::string>() << '\n';
        });
      };
    });

    auto print_state = [&](const Json& e) {
      out << e["experiment_id"].get<std::string>() << '\t' << e["status"].get<std::string>() << "\tcontrol v"
          << e["control_version"].get<std::int64_t>() << " n=" << e["control"]["n"].get<std::int64_t>()
          << " mean=" << fmt("%.4f", e["control"]["mean"].get<double>()) << "\tcandidate v"
          << e["candidate_version"].get<std::int64_t>() << " n=" << e["candidate"]["n"].get<std::int64_t>()
          << " mean=" << fmt("%.4f", e["candidate"]["mean"].get<double>()) << '\n';
    };

    auto* stop = experiments->add_subcommand("stop", "stop an experiment, freezing its stats");
    auto sid = std::make_shared<std::string>();
    stop->add_option("experiment_id", *sid)->required();
    stop->callback([&, sid, print_state] {
      action = [&, sid, print_state](Api& api) {
        return emit(api.post("/v1/experiments/" + *sid + ":stop"), [&](const Json& j) { print_state(j["experiment"]); });
      };
    });

    auto* status = experiments->add_subcommand("status", "experiment state");
    auto tid = std::make_shared<std::string>();
    status->add_option("experiment_id", *tid)->required();
    status->callback([&, tid, print_state] {
      action = [&, tid, print_state](Api& api) {
        return emit(api.get("/v1/experiments/" + *tid), [&](const Json& j) { print_state(j["experiment"]); });
      };
    });
  }

  // rules
  auto* rules = app.add_subcommand("rules", "monitor rules");
  rules->require_subcommand(1);
  {
    auto* put = rules->add_subcommand("put", "create or replace rules");
    add_project(put);
    auto source = std::make_shared<std::string>();
    put->add_option("--file,-f", *source, "rule JSON, {\"rule\": ...} or {\"rules\": [...]} (file, - or inline)")
        ->required();
    put->callback([&, source] {
      Json src = read_json_arg(*source);
      Json list = Json::array();
      if (src.contains("rules")) {
        list = src["rules"];
      } else if (src.contains("rule")) {
        list.push_back(src["rule"]);
      } else {
        list.push_back(src);
      }
      for (const auto& r : list) {
        if (!r.contains("rule_id")) throw CLI::ValidationError("every rule needs a rule_id");
      }
      action = [&, list](Api& api) {
        for (const auto& r : list) {
          emit(api.put(project_path() + "/rules/" + r["rule_id"].get<std::string>(), r),
               [&](const Json& j) { out << "registered " << j["rule"]["rule_id"].get<std::string>() << '\n'; });
        }
        return 0;
      };
    });

    auto* list = rules->add_subcommand("list", "registered rules");
    add_project(list);
    list->callback([&] {
      action = [&](Api& api) {
        return emit(api.get(project_path() + "/rules"), [&](const Json& j) {
          for (const auto& r : j.at("rules")) {
            out << r["rule_id"].get<std::string>() << '\t' << r["action"].get<std::string>() << '\t'
                << (r["enabled"].get<bool>() ? "enabled" : "disabled") << '\n';
          }
        });
      };
    });
  }

  // proposals
  auto* proposals = app.add_subcommand("proposals", "proposals raised by monitors and experiments");
  proposals->require_subcommand(1);
  {
    auto* list = proposals->add_subcommand("list", "list proposals");
    auto status = std::make_shared<std::string>();
    auto lproject = std::make_shared<std::string>();
    list->add_option("--status", *status)->check(CLI::IsMember({"open", "accepted", "rejected"}));
    list->add_option("--project,-p", *lproject);
    list->callback([&, status, lproject] {
      action = [&, status, lproject](Api& api) {
        httplib::Params params;
        if (!status->empty()) params.emplace("status", *status);
        if (!lproject->empty()) params.emplace("project", *lproject);
        return emit(api.get("/v1/proposals", params), [&](const Json& j) {
          for (const auto& p : j.at("proposals")) {
            out << p["proposal_id"].get<std::string>() << '\t' << p["status"].get<std::string>() << '\t'
                << p["subject"].get<std::string>() << '\t' << p["description"].get<std::string>() << '\n';
          }
        });
      };
    });

    auto* resolve = proposals->add_subcommand("resolve", "accept or reject an open proposal");
    auto id = std::make_shared<std::string>();
    auto accept = std::make_shared<bool>(false);
    auto reject = std::make_shared<bool>(false);
    auto note = std::make_shared<std::string>();
    resolve->add_option("proposal_id", *id)->required();
    auto* a = resolve->add_flag("--accept", *accept);
    auto* r = resolve->add_flag("--reject", *reject);
    a->excludes(r);
    resolve->add_option("--note", *note);
    resolve->callback([&, id, accept, reject, note] {
      if (!*accept && !*reject) throw CLI::ValidationError("--accept or --reject required");
      action = [&, id, accept, note](Api& api) {
        Json body{{"status", *accept ? "accepted" : "rejected"}, {"note", *note}};
        return emit(api.post("/v1/proposals/" + *id + ":resolve", body), [&](const Json& j) {
          out << *id << ' ' << j["proposal"]["status"].get<std::string>() << '\n';
        });
      };
    });
  }

  // replay (offline)
  {
    auto* replay = app.add_subcommand("replay", "print logged records with seq > --from-seq, read from disk");
    auto dir = std::make_shared<std::string>(env_or("AIDE_DATA_DIR", ""));
    auto from = std::make_shared<std::uint64_t>(0);
    auto rproject = std::make_shared<std::string>();
    replay->add_option("--data-dir", *dir, "data directory (AIDE_DATA_DIR)");
    replay->add_option("--from-seq", *from);
    replay->add_option("--project,-p", *rproject);
    replay->callback([&, dir, from, rproject] {
      if (dir->empty()) throw CLI::ValidationError("--data-dir or AIDE_DATA_DIR required");
      offline = [&, dir, from, rproject] {
        for (const auto& rec : Store::read_directory(*dir)) {
          if (rec.seq <= *from) continue;
          if (!rproject->empty() && rec.project != *rproject) continue;
          out << canonical(Json{{"seq", rec.seq}, {"kind", to_string(rec.kind)}, {"project", rec.project},
                                {"payload", *rec.payload}})
              << '\n';
        }
        return 0;
      };
    });
  }

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "aide: " << e.what() << '\n';
    return kExitUsage;
  }

  try {
    if (offline) return offline();
    if (!action) {
      err << "aide: nothing to do\n";
      return kExitUsage;
    }
    Api api(addr, key);
    return action(api);
  } catch (const Unavailable& e) {
    err << "aide: server unavailable at " << addr << ": " << e.message << '\n';
    return kExitUnavailable;
  } catch (const ServerError& e) {
    std::string kind = "HTTP " + std::to_string(e.status), message = e.body;
    try {
      const auto j = Json::parse(e.body);
      kind = j.at("error").at("kind").get<std::string>();
      message = j.at("error").at("message").get<std::string>();
    } catch (const std::exception&) {
    }
    if (json) out << e.body << '\n';
    err << "aide: " << kind << ": " << message << '\n';
    return kExitServerError;
  } catch (const Error& e) {
    err << "aide: " << e.what() << '\n';
    return e.kind() == ErrorKind::ValidationError ? kExitUsage : kExitServerError;
  } catch (const std::exception& e) {
    err << "aide: " << e.what() << '\n';
    return kExitServerError;
  }
}

}  // namespace aide
