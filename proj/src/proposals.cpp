#include "aide/proposals.hpp"

#include <algorithm>

namespace aide {

std::string_view to_string(ProposalSource source) {
  return source == ProposalSource::monitor_rule ? "monitor_rule" : "experiment_promotion";
}

std::string_view to_string(ProposalStatus status) {
  switch (status) {
    case ProposalStatus::open: return "open";
    case ProposalStatus::accepted: return "accepted";
    case ProposalStatus::rejected: return "rejected";
  }
  return "open";
}

ProposalStatus proposal_status_from_string(std::string_view name) {
  if (name == "open") return ProposalStatus::open;
  if (name == "accepted") return ProposalStatus::accepted;
  if (name == "rejected") return ProposalStatus::rejected;
  throw ValidationError("status", "expected open, accepted or rejected");
}

Json to_json(const Proposal& p) {
  Json j{{"proposal_id", p.proposal_id},   {"source", to_string(p.source)},
         {"project_id", p.project_id},     {"subject", p.subject},
         {"description", p.description},   {"evidence", p.evidence},
         {"status", to_string(p.status)},  {"created_at", p.created_at},
         {"action_params", p.action_params}};
  if (p.rule_id) j["rule_id"] = *p.rule_id;
  if (p.experiment_id) j["experiment_id"] = *p.experiment_id;
  if (p.resolution_note) j["resolution_note"] = *p.resolution_note;
  if (p.resolved_at) j["resolved_at"] = *p.resolved_at;
  return j;
}

Proposal proposal_from_json(const Json& j) {
  Proposal p;
  p.proposal_id = j.at("proposal_id").get<std::string>();
  p.source = j.at("source") == "monitor_rule" ? ProposalSource::monitor_rule
                                              : ProposalSource::experiment_promotion;
  p.project_id = j.at("project_id").get<std::string>();
  p.subject = j.at("subject").get<std::string>();
  p.description = j.at("description").get<std::string>();
  p.evidence = j.at("evidence").get<std::vector<std::string>>();
  p.status = proposal_status_from_string(j.at("status").get<std::string>());
  p.created_at = j.at("created_at").get<TimestampMs>();
  p.action_params = j.value("action_params", Json::object());
  if (j.contains("rule_id")) p.rule_id = j["rule_id"].get<std::string>();
  if (j.contains("experiment_id")) p.experiment_id = j["experiment_id"].get<std::string>();
  if (j.contains("resolution_note")) p.resolution_note = j["resolution_note"].get<std::string>();
  if (j.contains("resolved_at")) p.resolved_at = j["resolved_at"].get<TimestampMs>();
  return p;
}

Proposal ProposalBook::create(Proposal proposal) {
  proposal.status = ProposalStatus::open;
  proposal.resolution_note.reset();
  proposal.resolved_at.reset();
  std::erase_if(proposal.evidence, [&](const std::string& id) {
    return !traces_.get(proposal.project_id, id).has_value();
  });
  std::lock_guard lock(write_mu_);
  if (get(proposal.proposal_id)) {
    throw ValidationError("proposal_id", "proposal " + proposal.proposal_id + " already exists");
  }
  store_.append(proposal.project_id, RecordKind::monitor_event,
                Json{{"type", "proposal"}, {"proposal", to_json(proposal)}, {"ts", proposal.created_at}});
  return *get(proposal.proposal_id);
}

Proposal ProposalBook::resolve(const std::string& proposal_id, ProposalStatus status,
                               const std::string& note) {
  if (status == ProposalStatus::open) {
    throw Error(ErrorKind::IllegalTransition, "a proposal cannot be reopened");
  }
  std::lock_guard lock(write_mu_);
  auto current = get(proposal_id);
  if (!current) throw Error(ErrorKind::UnknownProposal, "unknown proposal " + proposal_id);
  if (current->status != ProposalStatus::open) {
    throw Error(ErrorKind::IllegalTransition, "proposal " + proposal_id + " is already " +
                                                  std::string(to_string(current->status)));
  }
  store_.append(current->project_id, RecordKind::monitor_event,
                Json{{"type", "proposal_resolved"},
                     {"proposal_id", proposal_id},
                     {"status", to_string(status)},
                     {"note", note},
                     {"ts", clock_()}});
  return *get(proposal_id);
}

std::optional<Proposal> ProposalBook::get(const std::string& proposal_id) const {
  std::shared_lock lock(mu_);
  auto it = proposals_.find(proposal_id);
  if (it == proposals_.end()) return std::nullopt;
  return it->second;
}

std::vector<Proposal> ProposalBook::list(const std::optional<ProposalStatus>& status,
                                         const std::optional<std::string>& project) const {
  std::vector<Proposal> out;
  {
    std::shared_lock lock(mu_);
    for (const auto& [id, p] : proposals_) {
      if (status && p.status != *status) continue;
      if (project && p.project_id != *project) continue;
      out.push_back(p);
    }
  }
  std::stable_sort(out.begin(), out.end(), [](const Proposal& a, const Proposal& b) {
    return a.created_at != b.created_at ? a.created_at < b.created_at : a.proposal_id < b.proposal_id;
  });
  return out;
}

void ProposalBook::apply(const LogRecord& record) {
  if (record.kind != RecordKind::monitor_event) return;
  const auto& p = *record.payload;
  const auto type = p.value("type", "");
  if (type == "proposal") {
    auto proposal = proposal_from_json(p.at("proposal"));
    std::unique_lock lock(mu_);
    proposals_.emplace(proposal.proposal_id, std::move(proposal));
  } else if (type == "proposal_resolved") {
    std::unique_lock lock(mu_);
    auto it = proposals_.find(p.at("proposal_id").get<std::string>());
    if (it == proposals_.end()) return;
    it->second.status = proposal_status_from_string(p.at("status").get<std::string>());
    it->second.resolution_note = p.at("note").get<std::string>();
    it->second.resolved_at = p.at("ts").get<TimestampMs>();
  }
}

}  // namespace aide
