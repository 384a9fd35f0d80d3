#pragma once

// HTTP transport: REST routes, JSON-RPC at POST /mcp and the SSE stream.
// Every route authenticates with `Authorization: Bearer <api key>` when a
// key is configured. Errors carry {"error": {"kind", "message"[, "field"]}}.

#include <atomic>
#include <memory>
#include <string>

#include "aide/jsonrpc.hpp"
#include "aide/service.hpp"
#include "aide/tools.hpp"

namespace httplib {
class Server;
}

namespace aide {

int http_status(ErrorKind kind);

// "host:port" -> (host, port). Throws ValidationError.
std::pair<std::string, int> parse_addr(const std::string& addr);

class HttpServer {
 public:
  HttpServer(Service& service, std::string api_key);
  ~HttpServer();

  // Binds and serves until stop(); returns false if binding failed.
  bool listen(const std::string& host, int port);
  // Binds an ephemeral port (for tests); serve with listen_after_bind().
  int bind_any_port(const std::string& host);
  bool listen_after_bind();
  void stop();
  bool running() const;

 private:
  void routes();

  Service& service_;
  std::string api_key_;
  ToolRegistry tools_;
  JsonRpcServer rpc_;
  std::unique_ptr<httplib::Server> server_;
  std::atomic<bool> stopping_{false};
};

}  // namespace aide
