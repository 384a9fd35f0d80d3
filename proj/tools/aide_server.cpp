// aide-server: HTTP API on AIDE_HTTP_ADDR, or JSON-RPC over stdio with --stdio.
// Configuration comes from AIDE_CONFIG (a JSON file) and the AIDE_* overrides.

#include <csignal>
#include <iostream>
#include <memory>
#include <thread>

#include <CLI11.hpp>

#include "aide/http_server.hpp"
#include "aide/jsonrpc.hpp"
#include "aide/service.hpp"
#include "aide/tools.hpp"

namespace {

aide::HttpServer* g_server = nullptr;

void on_signal(int) {
  if (g_server) g_server->stop();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"aide-server"};
  bool stdio = false;
  std::string addr;
  std::string data_dir;
  app.add_flag("--stdio", stdio, "serve JSON-RPC over stdin/stdout instead of HTTP");
  app.add_option("--addr", addr, "listen address host:port");
  app.add_option("--data-dir", data_dir);
  CLI11_PARSE(app, argc, argv);

  try {
    auto config = aide::config_from_env();
    if (!addr.empty()) config.http_addr = addr;
    if (!data_dir.empty()) config.store.data_dir = data_dir;
    aide::Service service(config);
    service.start_scheduler();

    if (stdio) {
      std::ios::sync_with_stdio(false);
      aide::ToolRegistry tools(service);
      aide::JsonRpcServer rpc(tools);
      aide::serve_stdio(rpc, std::cin, std::cout);
      service.shutdown();
      return 0;
    }

    const auto [host, port] = aide::parse_addr(config.http_addr);
    aide::HttpServer server(service, config.api_key);
    g_server = &server;
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    std::cerr << "aide-server listening on " << host << ':' << port << '\n';
    const bool ok = server.listen(host, port);
    g_server = nullptr;
    service.shutdown();
    if (!ok) {
      std::cerr << "aide-server: cannot bind " << config.http_addr << '\n';
      return 1;
    }
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "aide-server: " << e.what() << '\n';
    return 1;
  }
}
