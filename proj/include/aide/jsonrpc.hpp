#pragma once

// JSON-RPC 2.0 front end for the tool registry: initialize, ping,
// tools/list and tools/call. Used over stdio (Content-Length framing, as in
// LSP) and over HTTP (POST /mcp).
//
// Error codes: -32700 parse error, -32600 invalid request, -32601 unknown
// method or tool, -32602 arguments failing the input schema, -32000 module
// errors with data.kind naming the error.

#include <iosfwd>
#include <optional>
#include <string>

#include "aide/tools.hpp"

namespace aide {

inline constexpr const char* kProtocolVersion = "2024-11-05";
inline constexpr const char* kServerVersion = "0.1.0";

class JsonRpcServer {
 public:
  explicit JsonRpcServer(ToolRegistry& tools) : tools_(tools) {}

  // One request, notification or batch; returns the response text, empty
  // when nothing is to be sent back.
  std::string handle(const std::string& body);
  // Null for notifications.
  Json handle_message(const Json& message);

  // The text content of a tools/call result: the canonical payload.
  static Json call_result(const Json& payload);

 private:
  Json dispatch(const std::string& method, const Json& params);
  ToolRegistry& tools_;
};

// Reads one `Content-Length: N\r\n\r\n<N bytes>` frame; nullopt at EOF.
// Throws Error(InvalidParams) on a malformed header.
std::optional<std::string> read_frame(std::istream& in);
void write_frame(std::ostream& out, const std::string& body);

// Serves framed requests until EOF.
void serve_stdio(JsonRpcServer& server, std::istream& in, std::ostream& out);

}  // namespace aide
