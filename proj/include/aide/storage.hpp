#pragma once

// Append-only record log with snapshots.
//
// On-disk layout under the data directory:
//   <project_id>/log-<epoch>.ndj    one record per line:
//                                   {"seq":N,"kind":"...","crc":C,"payload":{...}}
//   <project_id>/snapshot-<seq>.bin binary image of every record <= seq
// Server-scoped records (the prompt library) live under `@server/`.
//
// The CRC is CRC-32 (IEEE) over the exact payload bytes of the line.
// Recovery truncates each project log at the first invalid line.

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <thread>
#include <vector>

#include "aide/model.hpp"

namespace aide {

inline const std::string kServerScope = "@server";

enum class RecordKind {
  trace,
  score_append,
  prompt_version,
  binding_change,
  experiment_event,
  gate_result,
  monitor_event,
  config_event,
};

std::string_view to_string(RecordKind kind);
std::optional<RecordKind> record_kind_from_string(std::string_view name);

struct LogRecord {
  SeqNo seq = 0;
  RecordKind kind = RecordKind::trace;
  std::string project;
  std::shared_ptr<const Json> payload;

  // Ordering key used by scan(): the trace start_time for trace records,
  // the payload's "ts" field otherwise.
  TimestampMs time() const;
};

std::uint32_t crc32_of(std::string_view bytes);

// One encoded log line, without the trailing newline.
std::string encode_log_line(SeqNo seq, RecordKind kind, std::string_view payload);

enum class RecoveryMode { truncate, strict };

struct StoreOptions {
  std::filesystem::path data_dir;    // empty: memory only
  std::uint64_t max_bytes = 0;       // 0: unlimited
  bool fsync = false;                // fdatasync each append
  RecoveryMode recovery = RecoveryMode::truncate;
  std::uint64_t snapshot_every = 0;  // records per project; 0 disables
};

struct Truncation {
  std::filesystem::path file;
  std::uint64_t offset = 0;
  std::string reason;
};

struct RecoveryReport {
  std::uint64_t records = 0;
  SeqNo last_seq = 0;
  std::vector<Truncation> truncations;
  std::vector<std::filesystem::path> snapshots_loaded;
};

class Store {
 public:
  using CommitListener = std::function<void(const LogRecord&)>;

  // Opens (and recovers) the store. Throws CorruptLogError in strict mode.
  explicit Store(StoreOptions options);
  ~Store();

  Store(const Store&) = delete;
  Store& operator=(const Store&) = delete;

  // Durably appends one record; returns its global sequence number.
  // The commit listener runs before append() returns, in sequence order.
  SeqNo append(const std::string& project, RecordKind kind, Json payload);

  void set_commit_listener(CommitListener listener);

  // Records of one project, optionally restricted, ordered by (time, seq).
  std::vector<LogRecord> scan(const std::string& project,
                              std::optional<TimeRange> range = std::nullopt,
                              std::optional<RecordKind> kind = std::nullopt) const;

  // Every record with seq > after, across projects (or one), in seq order.
  std::vector<LogRecord> records_after(SeqNo after,
                                       const std::optional<std::string>& project = std::nullopt) const;

  std::vector<std::string> projects() const;
  bool has_project(const std::string& project) const;

  // Runs `fn` while no append can commit; used to attach subscribers
  // without gaps or duplicates.
  void with_commits_paused(const std::function<void()>& fn);

  // Writes a snapshot for every project and rotates its log.
  void snapshot();

  SeqNo last_seq() const;
  const RecoveryReport& recovery_report() const { return report_; }
  const StoreOptions& options() const { return options_; }

  // Read-only load of a data directory (no repair); used by offline replay.
  static std::vector<LogRecord> read_directory(const std::filesystem::path& data_dir);

 private:
  struct ProjectLog {
    std::filesystem::path dir;
    int fd = -1;
    std::uint64_t epoch = 0;
    std::vector<LogRecord> records;
    std::uint64_t since_snapshot = 0;
  };

  void recover();
  ProjectLog& project_log(const std::string& project);  // requires append_mu_
  void open_log_file(ProjectLog& log);
  void write_line(ProjectLog& log, const std::string& line);
  void snapshot_project(const std::string& project);
  void snapshot_loop();

  StoreOptions options_;
  RecoveryReport report_;

  mutable std::mutex append_mu_;
  mutable std::shared_mutex records_mu_;
  std::map<std::string, ProjectLog> logs_;
  std::uint64_t bytes_used_ = 0;
  SeqNo next_seq_ = 1;
  CommitListener listener_;

  std::thread snapshotter_;
  std::mutex snap_mu_;
  std::condition_variable snap_cv_;
  std::vector<std::string> snap_pending_;
  bool stopping_ = false;
};

}  // namespace aide
