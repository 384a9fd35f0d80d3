#pragma once

// Versioned prompt library. Prompts are global to the server; bindings of a
// prompt to a version are per project and keep their history as a stack, so
// rollback undoes the last activation rather than stepping to version - 1.

#include <map>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include "aide/ingest.hpp"
#include "aide/model.hpp"
#include "aide/storage.hpp"

namespace aide {

struct PromptSummary {
  std::string prompt_name;
  std::int64_t latest_version = 0;
  std::optional<std::int64_t> active_version;
  std::optional<std::string> agent;
  std::optional<std::string> experiment_id;
  std::map<std::int64_t, std::string> commit_tags;  // version -> tag
};

Json to_json(const PromptSummary& summary);

struct SaveRequest {
  std::string prompt_name;
  std::string template_text;
  std::map<std::string, std::string> metadata;
  std::optional<std::int64_t> expected_latest;
  std::optional<std::string> commit_tag;
  std::string created_by;
};

class PromptRegistry {
 public:
  PromptRegistry(Store& store, ProjectDirectory& projects, Clock clock)
      : store_(store), projects_(projects), clock_(std::move(clock)) {}

  // Compare-and-set when expected_latest is given; throws VersionConflict if
  // another save won, EmptyTemplate for an empty template.
  PromptVersion save(const SaveRequest& request);
  PromptVersion get(const std::string& prompt_name, std::optional<std::int64_t> version = {}) const;
  std::vector<PromptVersion> versions(const std::string& prompt_name) const;
  std::vector<PromptSummary> list(const std::optional<std::string>& project = {},
                                  const std::optional<std::string>& commit_tag = {}) const;

  ActiveBinding activate(const std::string& project, const std::string& prompt_name,
                         std::int64_t version, const std::optional<std::string>& agent = {});
  ActiveBinding rollback(const std::string& project, const std::string& prompt_name);
  std::optional<ActiveBinding> binding(const std::string& project, const std::string& prompt_name) const;
  // Binding history, oldest first.
  std::vector<std::int64_t> history(const std::string& project, const std::string& prompt_name) const;

  void apply(const LogRecord& record);

 private:
  struct BindingState {
    std::vector<std::int64_t> stack;
    std::optional<std::string> agent;
  };
  using BindingKey = std::pair<std::string, std::string>;  // (project, prompt)

  void require_version(const std::string& prompt_name, std::int64_t version) const;
  ActiveBinding to_binding(const BindingKey& key, const BindingState& state) const;

  Store& store_;
  ProjectDirectory& projects_;
  Clock clock_;
  std::mutex write_mu_;
  mutable std::shared_mutex mu_;
  std::map<std::string, std::vector<PromptVersion>> prompts_;
  std::map<BindingKey, BindingState> bindings_;
};

}  // namespace aide
