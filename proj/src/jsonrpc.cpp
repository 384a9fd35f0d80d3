#include "aide/jsonrpc.hpp"

#include <cctype>
#include <istream>
#include <ostream>

#include "aide/codec.hpp"

namespace aide {

namespace {

Json error_response(const Json& id, int code, const std::string& message, Json data = nullptr) {
  Json err{{"code", code}, {"message", message}};
  if (!data.is_null()) err["data"] = std::move(data);
  return Json{{"jsonrpc", "2.0"}, {"id", id}, {"error", err}};
}

struct RpcError {
  int code;
  std::string message;
  Json data;
};

}  // namespace

Json JsonRpcServer::call_result(const Json& payload) {
  return Json{{"content", Json::array({Json{{"type", "text"}, {"text", canonical(payload)}}})},
              {"structuredContent", payload},
              {"isError", false}};
}

Json JsonRpcServer::dispatch(const std::string& method, const Json& params) {
  if (method == "initialize") {
    return Json{{"protocolVersion", kProtocolVersion},
                {"serverInfo", Json{{"name", "aide"}, {"version", kServerVersion}}},
                {"capabilities", Json{{"tools", Json::object()}}}};
  }
  if (method == "ping") return Json::object();
  if (method == "tools/list") {
    Json list = Json::array();
    for (const auto& t : tools_.tools()) list.push_back(to_json(t));
    return Json{{"tools", list}};
  }
  if (method == "tools/call") {
    if (!params.is_object() || !params.contains("name") || !params["name"].is_string()) {
      throw RpcError{-32602, "params.name must be a string", nullptr};
    }
    const auto name = params["name"].get<std::string>();
    if (!tools_.find(name)) throw RpcError{-32601, "unknown tool " + name, nullptr};
    const Json args = params.value("arguments", Json::object());
    return call_result(tools_.call_tool(name, args));
  }
  throw RpcError{-32601, "method not found: " + method, nullptr};
}

Json JsonRpcServer::handle_message(const Json& msg) {
  if (!msg.is_object() || msg.value("jsonrpc", "") != "2.0" || !msg.contains("method") ||
      !msg["method"].is_string()) {
    return error_response(msg.is_object() ? msg.value("id", Json(nullptr)) : Json(nullptr), -32600,
                          "invalid request");
  }
  const bool notification = !msg.contains("id");
  const Json id = msg.value("id", Json(nullptr));
  Json response;
  try {
    response = Json{{"jsonrpc", "2.0"}, {"id", id},
                    {"result", dispatch(msg["method"].get<std::string>(), msg.value("params", Json::object()))}};
  } catch (const RpcError& e) {
    response = error_response(id, e.code, e.message, e.data);
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::InvalidParams) {
      response = error_response(id, -32602, e.what(), Json{{"kind", "InvalidParams"}});
    } else {
      response = error_response(id, -32000, e.what(), error_body(e));
    }
  } catch (const std::exception& e) {
    response = error_response(id, -32000, e.what(), Json{{"kind", "Internal"}, {"message", e.what()}});
  }
  return notification ? Json(nullptr) : response;
}

std::string JsonRpcServer::handle(const std::string& body) {
  Json msg;
  try {
    msg = Json::parse(body);
  } catch (const Json::parse_error& e) {
    return canonical(error_response(nullptr, -32700, std::string("parse error: ") + e.what()));
  }
  if (msg.is_array()) {
    if (msg.empty()) return canonical(error_response(nullptr, -32600, "empty batch"));
    Json out = Json::array();
    for (const auto& m : msg) {
      auto r = handle_message(m);
      if (!r.is_null()) out.push_back(std::move(r));
    }
    return out.empty() ? std::string() : canonical(out);
  }
  auto r = handle_message(msg);
  return r.is_null() ? std::string() : canonical(r);
}

std::optional<std::string> read_frame(std::istream& in) {
  std::optional<std::size_t> length;
  std::string line;
  bool any = false;
  while (std::getline(in, line)) {
    any = true;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) {
      if (!length) throw Error(ErrorKind::InvalidParams, "frame without Content-Length");
      std::string body(*length, '\0');
      in.read(body.data(), static_cast<std::streamsize>(*length));
      if (static_cast<std::size_t>(in.gcount()) != *length) {
        throw Error(ErrorKind::InvalidParams, "truncated frame");
      }
      return body;
    }
    const auto colon = line.find(':');
    if (colon == std::string::npos) throw Error(ErrorKind::InvalidParams, "malformed header: " + line);
    std::string name = line.substr(0, colon);
    for (auto& c : name) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    if (name == "content-length") {
      try {
        length = std::stoul(line.substr(colon + 1));
      } catch (const std::exception&) {
        throw Error(ErrorKind::InvalidParams, "bad Content-Length");
      }
    }
  }
  if (any) throw Error(ErrorKind::InvalidParams, "truncated frame header");
  return std::nullopt;
}

void write_frame(std::ostream& out, const std::string& body) {
  out << "Content-Length: " << body.size() << "\r\n\r\n" << body;
  out.flush();
}

void serve_stdio(JsonRpcServer& server, std::istream& in, std::ostream& out) {
  while (true) {
    std::optional<std::string> body;
    try {
      body = read_frame(in);
    } catch (const Error& e) {
      write_frame(out, canonical(error_response(nullptr, -32700, e.what())));
      return;
    }
    if (!body) return;
    auto response = server.handle(*body);
    if (!response.empty()) write_frame(out, response);
  }
}

}  // namespace aide
