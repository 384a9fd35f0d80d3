#pragma once

// Live event fan-out. The store's commit listener publishes every record;
// each subscriber gets, in commit order, the matching trace events plus
// binding, experiment, agent-state and monitor events of its project.
//
// Live queues are bounded. A subscriber that falls `depth` events behind
// receives a terminal LaggingSubscriber event and is dropped.

#include <chrono>
#include <condition_variable>
#include <deque>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "aide/query.hpp"
#include "aide/storage.hpp"

namespace aide {

struct StreamEvent {
  SeqNo seq = 0;
  std::string type;  // trace | binding_change | agent_state | experiment | monitor | error
  Json data;
  bool terminal = false;
};

// `id: <seq>`, `event: <type>`, `data: <canonical json>`, blank line.
std::string to_sse(const StreamEvent& event);

// The event a subscriber with `filter` should see for `record`, if any.
// `trace` is the decoded trace for trace records (decoded once per publish).
std::optional<StreamEvent> event_for(const LogRecord& record, const CompiledFilter& filter,
                                     const Trace* trace);

class Subscription {
 public:
  Subscription(std::string project, CompiledFilter filter, std::size_t depth)
      : project_(std::move(project)), filter_(std::move(filter)), depth_(depth) {}

  // Waits up to `timeout`; nullopt on timeout or once the stream has ended.
  std::optional<StreamEvent> next(std::chrono::milliseconds timeout);
  // True once the terminal event (if any) has been consumed or close() ran.
  bool finished() const;
  void close();

  const std::string& project() const { return project_; }

 private:
  friend class SubscriptionHub;
  // Returns false when the subscriber should be dropped.
  bool push_live(StreamEvent event);

  std::string project_;
  CompiledFilter filter_;
  std::size_t depth_;

  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::deque<StreamEvent> backlog_;  // resume replay, unbounded
  std::deque<StreamEvent> live_;
  bool ended_ = false;  // no more events will be queued
  bool closed_ = false;
};

class SubscriptionHub {
 public:
  explicit SubscriptionHub(Store& store, std::size_t depth = 1024) : store_(store), depth_(depth) {}

  // Events strictly after `from_seq` are replayed from the log first when
  // it is given; otherwise delivery starts at the next commit.
  std::shared_ptr<Subscription> subscribe(const std::string& project, const std::vector<Predicate>& filter,
                                          std::optional<SeqNo> from_seq = std::nullopt);
  void unsubscribe(const std::shared_ptr<Subscription>& subscription);

  // Commit-listener entry point.
  void publish(const LogRecord& record);

  std::size_t subscriber_count() const;
  std::size_t depth() const { return depth_; }

 private:
  Store& store_;
  std::size_t depth_;
  mutable std::mutex mu_;
  std::vector<std::shared_ptr<Subscription>> subs_;
};

}  // namespace aide
