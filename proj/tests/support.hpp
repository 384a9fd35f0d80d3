#pragma once

// Shared fixtures for the test binaries.

#include <atomic>
#include <filesystem>
#include <memory>
#include <random>
#include <string>

#include "aide/codec.hpp"
#include "aide/model.hpp"
#include "aide/service.hpp"

namespace aide::test {

// Manually advanced clock shared by copies.
struct ManualClock {
  std::shared_ptr<std::atomic<TimestampMs>> now = std::make_shared<std::atomic<TimestampMs>>(1'700'000'000'000);
  Clock clock() const {
    auto n = now;
    return [n] { return n->load(); };
  }
  void set(TimestampMs t) { now->store(t); }
  void advance(TimestampMs d) { now->fetch_add(d); }
  TimestampMs get() const { return now->load(); }
};

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("aide-test-" + std::to_string(rd()) + "-" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline Trace make_trace(const std::string& id, TimestampMs start, TimestampMs latency = 100) {
  Trace t;
  t.trace_id = id;
  t.name = "request";
  t.start_time = start;
  t.end_time = start + latency;
  t.input = "question " + id;
  t.output = "answer " + id;
  t.token_usage = {10, 20};
  return t;
}

inline Trace with_score(Trace t, const std::string& metric, double value) {
  t.scores[metric] = value;
  return t;
}

inline Trace with_tag(Trace t, const std::string& tag) {
  t.tags.insert(tag);
  return t;
}

inline ServiceConfig memory_config() {
  ServiceConfig c;
  return c;
}

}  // namespace aide::test
