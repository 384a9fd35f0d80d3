#include "aide/events.hpp"

#include <algorithm>

#include "aide/codec.hpp"

namespace aide {

std::string to_sse(const StreamEvent& e) {
  return "id: " + std::to_string(e.seq) + "\nevent: " + e.type + "\ndata: " + canonical(e.data) + "\n\n";
}

std::optional<StreamEvent> event_for(const LogRecord& record, const CompiledFilter& filter,
                                     const Trace* trace) {
  const auto& p = *record.payload;
  switch (record.kind) {
    case RecordKind::trace:
      if (!trace || !filter.matches(*trace)) return std::nullopt;
      return StreamEvent{record.seq, "trace", p.at("trace"), false};
    case RecordKind::binding_change:
      return StreamEvent{record.seq, "binding_change", p, false};
    case RecordKind::experiment_event:
      return StreamEvent{record.seq, p.value("type", "") == "agent_state" ? "agent_state" : "experiment", p,
                         false};
    case RecordKind::monitor_event:
      return StreamEvent{record.seq, "monitor", p, false};
    default:
      return std::nullopt;
  }
}

std::optional<StreamEvent> Subscription::next(std::chrono::milliseconds timeout) {
  std::unique_lock lock(mu_);
  cv_.wait_for(lock, timeout, [this] { return closed_ || !backlog_.empty() || !live_.empty() || ended_; });
  if (closed_) return std::nullopt;
  auto& q = !backlog_.empty() ? backlog_ : live_;
  if (q.empty()) return std::nullopt;
  auto e = std::move(q.front());
  q.pop_front();
  if (e.terminal) closed_ = true;
  return e;
}

bool Subscription::finished() const {
  std::lock_guard lock(mu_);
  return closed_ || (ended_ && backlog_.empty() && live_.empty());
}

void Subscription::close() {
  {
    std::lock_guard lock(mu_);
    closed_ = true;
    ended_ = true;
  }
  cv_.notify_all();
}

bool Subscription::push_live(StreamEvent event) {
  {
    std::lock_guard lock(mu_);
    if (ended_) return false;
    if (live_.size() >= depth_) {
      live_.push_back(StreamEvent{event.seq, "error",
                                  Json{{"kind", "LaggingSubscriber"},
                                       {"message", "subscriber fell " + std::to_string(depth_) +
                                                       " events behind; resume from the last seen seq"}},
                                  true});
      ended_ = true;
    } else {
      live_.push_back(std::move(event));
    }
  }
  cv_.notify_all();
  std::lock_guard lock(mu_);
  return !ended_;
}

std::shared_ptr<Subscription> SubscriptionHub::subscribe(const std::string& project,
                                                         const std::vector<Predicate>& filter,
                                                         std::optional<SeqNo> from_seq) {
  if (!is_valid_id(project)) throw ValidationError("project_id", "invalid identifier");
  auto sub = std::make_shared<Subscription>(project, CompiledFilter::compile(filter), depth_);
  store_.with_commits_paused([&] {
    if (from_seq) {
      for (const auto& r : store_.records_after(*from_seq, project)) {
        std::optional<Trace> trace;
        if (r.kind == RecordKind::trace) trace = trace_from_json(r.payload->at("trace"));
        if (auto e = event_for(r, sub->filter_, trace ? &*trace : nullptr)) sub->backlog_.push_back(std::move(*e));
      }
    }
    std::lock_guard lock(mu_);
    subs_.push_back(sub);
  });
  return sub;
}

void SubscriptionHub::unsubscribe(const std::shared_ptr<Subscription>& subscription) {
  subscription->close();
  std::lock_guard lock(mu_);
  std::erase(subs_, subscription);
}

void SubscriptionHub::publish(const LogRecord& record) {
  std::lock_guard lock(mu_);
  if (subs_.empty()) return;
  std::optional<Trace> trace;
  if (record.kind == RecordKind::trace) trace = trace_from_json(record.payload->at("trace"));
  std::erase_if(subs_, [&](const std::shared_ptr<Subscription>& sub) {
    if (sub->project() != record.project) return false;
    auto e = event_for(record, sub->filter_, trace ? &*trace : nullptr);
    if (!e) return false;
    return !sub->push_live(std::move(*e));
  });
}

std::size_t SubscriptionHub::subscriber_count() const {
  std::lock_guard lock(mu_);
  return subs_.size();
}

}  // namespace aide
