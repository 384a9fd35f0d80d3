#include "aide/prompts.hpp"

#include "aide/codec.hpp"

namespace aide {

Json to_json(const PromptSummary& s) {
  Json tags = Json::array();
  for (const auto& [version, tag] : s.commit_tags) {
    tags.push_back(Json{{"version", version}, {"commit_tag", tag}});
  }
  Json j{{"prompt_name", s.prompt_name}, {"latest_version", s.latest_version}, {"commit_tags", tags}};
  if (s.active_version) j["active_version"] = *s.active_version;
  if (s.agent) j["agent"] = *s.agent;
  if (s.experiment_id) j["experiment_id"] = *s.experiment_id;
  return j;
}

namespace {

void check_prompt_name(const std::string& name) {
  if (!is_valid_id(name)) throw ValidationError("prompt_name", "invalid prompt name");
}

}  // namespace

PromptVersion PromptRegistry::save(const SaveRequest& request) {
  check_prompt_name(request.prompt_name);
  if (request.template_text.empty()) throw Error(ErrorKind::EmptyTemplate, "template is empty");
  if (!is_valid_utf8(request.template_text)) throw ValidationError("template", "not valid UTF-8");
  if (request.expected_latest && *request.expected_latest < 0) {
    throw ValidationError("expected_latest", "must be >= 0");
  }

  std::lock_guard lock(write_mu_);
  std::int64_t latest = 0;
  {
    std::shared_lock read(mu_);
    if (auto it = prompts_.find(request.prompt_name); it != prompts_.end()) {
      latest = static_cast<std::int64_t>(it->second.size());
    }
  }
  if (request.expected_latest && *request.expected_latest != latest) {
    throw Error(ErrorKind::VersionConflict,
                "expected latest version " + std::to_string(*request.expected_latest) + " of " +
                    request.prompt_name + ", found " + std::to_string(latest));
  }
  PromptVersion pv;
  pv.prompt_name = request.prompt_name;
  pv.version = latest + 1;
  pv.template_text = request.template_text;
  pv.metadata = request.metadata;
  pv.created_at = clock_();
  pv.created_by = request.created_by;
  pv.commit_tag = request.commit_tag;
  store_.append(kServerScope, RecordKind::prompt_version,
                Json{{"prompt", to_json(pv)}, {"ts", pv.created_at}});
  return pv;
}

PromptVersion PromptRegistry::get(const std::string& prompt_name,
                                  std::optional<std::int64_t> version) const {
  std::shared_lock lock(mu_);
  auto it = prompts_.find(prompt_name);
  if (it == prompts_.end()) throw Error(ErrorKind::UnknownPrompt, "unknown prompt " + prompt_name);
  const auto& list = it->second;
  if (!version) return list.back();
  if (*version < 1 || *version > static_cast<std::int64_t>(list.size())) {
    throw Error(ErrorKind::UnknownVersion,
                prompt_name + " has no version " + std::to_string(*version));
  }
  return list[static_cast<std::size_t>(*version - 1)];
}

std::vector<PromptVersion> PromptRegistry::versions(const std::string& prompt_name) const {
  std::shared_lock lock(mu_);
  auto it = prompts_.find(prompt_name);
  if (it == prompts_.end()) throw Error(ErrorKind::UnknownPrompt, "unknown prompt " + prompt_name);
  return it->second;
}

std::vector<PromptSummary> PromptRegistry::list(const std::optional<std::string>& project,
                                                const std::optional<std::string>& commit_tag) const {
  std::vector<PromptSummary> out;
  std::shared_lock lock(mu_);
  for (const auto& [name, list] : prompts_) {
    PromptSummary s;
    s.prompt_name = name;
    s.latest_version = static_cast<std::int64_t>(list.size());
    bool tag_match = !commit_tag;
    for (const auto& pv : list) {
      if (!pv.commit_tag) continue;
      s.commit_tags[pv.version] = *pv.commit_tag;
      if (commit_tag && *pv.commit_tag == *commit_tag) tag_match = true;
    }
    if (!tag_match) continue;
    if (project) {
      auto b = bindings_.find({*project, name});
      if (b != bindings_.end() && !b->second.stack.empty()) {
        s.active_version = b->second.stack.back();
        s.agent = b->second.agent;
      }
    }
    out.push_back(std::move(s));
  }
  return out;
}

void PromptRegistry::require_version(const std::string& prompt_name, std::int64_t version) const {
  std::shared_lock lock(mu_);
  auto it = prompts_.find(prompt_name);
  if (it == prompts_.end()) throw Error(ErrorKind::UnknownPrompt, "unknown prompt " + prompt_name);
  if (version < 1 || version > static_cast<std::int64_t>(it->second.size())) {
    throw Error(ErrorKind::UnknownVersion, prompt_name + " has no version " + std::to_string(version));
  }
}

ActiveBinding PromptRegistry::to_binding(const BindingKey& key, const BindingState& state) const {
  ActiveBinding b;
  b.project_id = key.first;
  b.prompt_name = key.second;
  b.active_version = state.stack.back();
  b.agent = state.agent;
  return b;
}

ActiveBinding PromptRegistry::activate(const std::string& project, const std::string& prompt_name,
                                       std::int64_t version, const std::optional<std::string>& agent) {
  projects_.admit(project);
  if (agent && !is_valid_id(*agent)) throw ValidationError("agent", "invalid agent name");
  require_version(prompt_name, version);
  std::lock_guard lock(write_mu_);
  std::optional<std::int64_t> previous;
  {
    std::shared_lock read(mu_);
    auto it = bindings_.find({project, prompt_name});
    if (it != bindings_.end() && !it->second.stack.empty()) previous = it->second.stack.back();
  }
  Json payload{{"project_id", project}, {"prompt_name", prompt_name}, {"op", "activate"},
               {"version", version}, {"ts", clock_()}};
  if (previous) payload["previous_version"] = *previous;
  if (agent) payload["agent"] = *agent;
  store_.append(project, RecordKind::binding_change, std::move(payload));
  return *binding(project, prompt_name);
}

ActiveBinding PromptRegistry::rollback(const std::string& project, const std::string& prompt_name) {
  projects_.require(project);
  std::lock_guard lock(write_mu_);
  std::int64_t current = 0, target = 0;
  {
    std::shared_lock read(mu_);
    auto it = bindings_.find({project, prompt_name});
    if (it == bindings_.end() || it->second.stack.size() < 2) {
      throw Error(ErrorKind::NoHistory, "no earlier binding of " + prompt_name + " in " + project);
    }
    const auto& stack = it->second.stack;
    current = stack.back();
    target = stack[stack.size() - 2];
  }
  store_.append(project, RecordKind::binding_change,
                Json{{"project_id", project}, {"prompt_name", prompt_name}, {"op", "rollback"},
                     {"version", target}, {"previous_version", current}, {"ts", clock_()}});
  return *binding(project, prompt_name);
}

std::optional<ActiveBinding> PromptRegistry::binding(const std::string& project,
                                                     const std::string& prompt_name) const {
  std::shared_lock lock(mu_);
  auto it = bindings_.find({project, prompt_name});
  if (it == bindings_.end() || it->second.stack.empty()) return std::nullopt;
  return to_binding(it->first, it->second);
}

std::vector<std::int64_t> PromptRegistry::history(const std::string& project,
                                                  const std::string& prompt_name) const {
  std::shared_lock lock(mu_);
  auto it = bindings_.find({project, prompt_name});
  return it == bindings_.end() ? std::vector<std::int64_t>{} : it->second.stack;
}

void PromptRegistry::apply(const LogRecord& record) {
  if (record.kind == RecordKind::prompt_version) {
    auto pv = prompt_version_from_json(record.payload->at("prompt"));
    std::unique_lock lock(mu_);
    auto& list = prompts_[pv.prompt_name];
    if (pv.version == static_cast<std::int64_t>(list.size()) + 1) list.push_back(std::move(pv));
  } else if (record.kind == RecordKind::binding_change) {
    const auto& p = *record.payload;
    const BindingKey key{record.project, p.at("prompt_name").get<std::string>()};
    std::unique_lock lock(mu_);
    auto& state = bindings_[key];
    if (p.at("op") == "rollback") {
      if (!state.stack.empty()) state.stack.pop_back();
    } else {
      state.stack.push_back(p.at("version").get<std::int64_t>());
      if (p.contains("agent")) state.agent = p["agent"].get<std::string>();
    }
  }
}

}  // namespace aide
