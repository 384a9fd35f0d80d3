#pragma once

// The operation table shared by every transport. The 22 advertised tools
// are what JSON-RPC exposes; REST routes call the same handlers (plus a few
// unadvertised operations), so all transports return identical payloads.

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "aide/service.hpp"

namespace aide {

struct ToolDescriptor {
  std::string name;
  std::string description;
  Json input_schema;
  Json output_schema;
  Json example;  // a valid input
};

Json to_json(const ToolDescriptor& tool);

// {"kind", "message"[, "field"]} for an error response body.
Json error_body(const Error& error);

class ToolRegistry {
 public:
  explicit ToolRegistry(Service& service);

  // Lexicographic by name.
  const std::vector<ToolDescriptor>& tools() const { return tools_; }
  const ToolDescriptor* find(const std::string& name) const;

  // Throws Error(NotFound) for a name that is not an advertised tool and
  // Error(InvalidParams) when the arguments fail the input schema.
  Json call_tool(const std::string& name, const Json& arguments);
  // Any operation, advertised or not; arguments are checked by the decoders.
  Json call_operation(const std::string& name, const Json& arguments);

 private:
  using Handler = std::function<Json(const Json&)>;

  void add_tool(ToolDescriptor descriptor, Handler handler);
  void add_operation(const std::string& name, Handler handler);

  Service& service_;
  std::vector<ToolDescriptor> tools_;
  std::map<std::string, Handler> handlers_;
};

}  // namespace aide
