#include "aide/storage.hpp"

#include <fcntl.h>
#include <unistd.h>
#include <zlib.h>

#include <algorithm>
#include <cerrno>
#include <cstring>
#include <fstream>
#include <sstream>

#include "aide/codec.hpp"

namespace aide {

namespace fs = std::filesystem;

std::string_view to_string(RecordKind kind) {
  switch (kind) {
    case RecordKind::trace: return "trace";
    case RecordKind::score_append: return "score_append";
    case RecordKind::prompt_version: return "prompt_version";
    case RecordKind::binding_change: return "binding_change";
    case RecordKind::experiment_event: return "experiment_event";
    case RecordKind::gate_result: return "gate_result";
    case RecordKind::monitor_event: return "monitor_event";
    case RecordKind::config_event: return "config_event";
  }
  return "trace";
}

std::optional<RecordKind> record_kind_from_string(std::string_view name) {
  for (auto kind : {RecordKind::trace, RecordKind::score_append, RecordKind::prompt_version,
                    RecordKind::binding_change, RecordKind::experiment_event,
                    RecordKind::gate_result, RecordKind::monitor_event, RecordKind::config_event}) {
    if (to_string(kind) == name) return kind;
  }
  return std::nullopt;
}

TimestampMs LogRecord::time() const {
  if (kind == RecordKind::trace) {
    return payload->at("trace").at("start_time").get<TimestampMs>();
  }
  auto it = payload->find("ts");
  return it != payload->end() && it->is_number_integer() ? it->get<TimestampMs>() : 0;
}

std::uint32_t crc32_of(std::string_view bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed in chunks.
  while (!bytes.empty()) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(bytes.size(), 1u << 30));
    crc = crc32(crc, reinterpret_cast<const Bytef*>(bytes.data()), chunk);
    bytes.remove_prefix(chunk);
  }
  return static_cast<std::uint32_t>(crc);
}

std::string encode_log_line(SeqNo seq, RecordKind kind, std::string_view payload) {
  std::string line;
  line.reserve(payload.size() + 64);
  line += "{\"seq\":";
  line += std::to_string(seq);
  line += ",\"kind\":\"";
  line += to_string(kind);
  line += "\",\"crc\":";
  line += std::to_string(crc32_of(payload));
  line += ",\"payload\":";
  line += payload;
  line += '}';
  return line;
}

namespace {

constexpr std::string_view kPayloadKey = ",\"payload\":";
constexpr char kSnapshotMagic[8] = {'A', 'I', 'D', 'E', 'S', 'N', 'P', '1'};

struct ParsedLine {
  SeqNo seq = 0;
  RecordKind kind = RecordKind::trace;
  std::shared_ptr<const Json> payload;
};

// Returns an error reason, or nullopt when the line is a valid record.
std::optional<std::string> parse_line(std::string_view line, ParsedLine& out) {
  const auto pos = line.find(kPayloadKey);
  if (pos == std::string_view::npos || line.empty() || line.back() != '}') {
    return "malformed record";
  }
  const auto payload = line.substr(pos + kPayloadKey.size(),
                                   line.size() - pos - kPayloadKey.size() - 1);
  Json header;
  try {
    header = Json::parse(std::string(line.substr(0, pos)) + "}");
  } catch (const Json::exception&) {
    return "malformed header";
  }
  if (!header.is_object() || !header.contains("seq") || !header.contains("kind") ||
      !header.contains("crc") || !header["seq"].is_number_unsigned() ||
      !header["kind"].is_string() || !header["crc"].is_number_unsigned()) {
    return "malformed header";
  }
  auto kind = record_kind_from_string(header["kind"].get<std::string>());
  if (!kind) return "unknown record kind";
  if (header["crc"].get<std::uint64_t>() != crc32_of(payload)) return "checksum mismatch";
  try {
    auto parsed = Json::parse(payload);
    if (!parsed.is_object()) return "payload is not an object";
    out.payload = std::make_shared<const Json>(std::move(parsed));
  } catch (const Json::exception&) {
    return "payload is not valid JSON";
  }
  out.seq = header["seq"].get<SeqNo>();
  out.kind = *kind;
  return std::nullopt;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::optional<std::uint64_t> numbered_file(const fs::path& path, std::string_view prefix,
                                           std::string_view suffix) {
  const auto name = path.filename().string();
  if (name.size() <= prefix.size() + suffix.size() || !name.starts_with(prefix) ||
      !name.ends_with(suffix)) {
    return std::nullopt;
  }
  const auto digits = name.substr(prefix.size(), name.size() - prefix.size() - suffix.size());
  if (digits.empty() || !std::all_of(digits.begin(), digits.end(), ::isdigit)) return std::nullopt;
  return std::stoull(digits);
}

template <typename T>
void put(std::string& buf, T value) {
  buf.append(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
bool take(std::string_view& buf, T& value) {
  if (buf.size() < sizeof(T)) return false;
  std::memcpy(&value, buf.data(), sizeof(T));
  buf.remove_prefix(sizeof(T));
  return true;
}

struct SnapshotImage {
  SeqNo last_seq = 0;
  std::uint64_t next_epoch = 1;
  std::vector<ParsedLine> records;
};

std::string encode_snapshot(SeqNo last_seq, std::uint64_t next_epoch,
                            const std::vector<LogRecord>& records) {
  std::string buf(kSnapshotMagic, sizeof(kSnapshotMagic));
  put<std::uint64_t>(buf, last_seq);
  put<std::uint64_t>(buf, next_epoch);
  put<std::uint64_t>(buf, records.size());
  for (const auto& r : records) {
    const auto payload = canonical(*r.payload);
    put<std::uint64_t>(buf, r.seq);
    put<std::uint8_t>(buf, static_cast<std::uint8_t>(r.kind));
    put<std::uint32_t>(buf, static_cast<std::uint32_t>(payload.size()));
    buf += payload;
  }
  put<std::uint32_t>(buf, crc32_of(buf));
  return buf;
}

std::optional<SnapshotImage> decode_snapshot(const std::string& bytes) {
  if (bytes.size() < sizeof(kSnapshotMagic) + 28) return std::nullopt;
  std::string_view body(bytes.data(), bytes.size() - 4);
  std::uint32_t crc;
  std::memcpy(&crc, bytes.data() + bytes.size() - 4, 4);
  if (crc != crc32_of(body)) return std::nullopt;
  if (std::memcmp(body.data(), kSnapshotMagic, sizeof(kSnapshotMagic)) != 0) return std::nullopt;
  body.remove_prefix(sizeof(kSnapshotMagic));
  SnapshotImage image;
  std::uint64_t count = 0;
  if (!take(body, image.last_seq) || !take(body, image.next_epoch) || !take(body, count)) {
    return std::nullopt;
  }
  for (std::uint64_t i = 0; i < count; ++i) {
    ParsedLine rec;
    std::uint8_t kind;
    std::uint32_t len;
    if (!take(body, rec.seq) || !take(body, kind) || !take(body, len) || body.size() < len ||
        kind > static_cast<std::uint8_t>(RecordKind::config_event)) {
      return std::nullopt;
    }
    rec.kind = static_cast<RecordKind>(kind);
    try {
      rec.payload = std::make_shared<const Json>(Json::parse(body.substr(0, len)));
    } catch (const Json::exception&) {
      return std::nullopt;
    }
    body.remove_prefix(len);
    image.records.push_back(std::move(rec));
  }
  return image;
}

struct ProjectLoad {
  std::vector<LogRecord> records;
  std::uint64_t epoch = 1;
  std::uint64_t bytes = 0;
  std::uint64_t file_size = 0;  // size of the current (last) log file
};

enum class LoadMode { repair_truncate, strict, read_only };

ProjectLoad load_project(const fs::path& dir, const std::string& project, LoadMode mode,
                         RecoveryReport* report) {
  ProjectLoad load;
  std::vector<std::pair<std::uint64_t, fs::path>> snapshots;
  std::vector<std::pair<std::uint64_t, fs::path>> logs;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (auto seq = numbered_file(entry.path(), "snapshot-", ".bin")) {
      snapshots.emplace_back(*seq, entry.path());
    } else if (auto epoch = numbered_file(entry.path(), "log-", ".ndj")) {
      logs.emplace_back(*epoch, entry.path());
    }
  }
  std::sort(snapshots.rbegin(), snapshots.rend());
  std::sort(logs.begin(), logs.end());

  std::uint64_t start_epoch = 1;
  SeqNo last_seq = 0;
  for (const auto& [seq, path] : snapshots) {
    auto image = decode_snapshot(read_file(path));
    if (!image) continue;
    for (auto& rec : image->records) {
      load.records.push_back(LogRecord{rec.seq, rec.kind, project, std::move(rec.payload)});
    }
    last_seq = image->last_seq;
    start_epoch = image->next_epoch;
    if (report) report->snapshots_loaded.push_back(path);
    break;
  }
  load.epoch = start_epoch;

  bool stopped = false;
  for (const auto& [epoch, path] : logs) {
    if (epoch < start_epoch) continue;
    if (stopped) {
      // Everything after the first invalid record is discarded.
      if (mode == LoadMode::repair_truncate) {
        fs::rename(path, fs::path(path.string() + ".discarded"));
        if (report) report->truncations.push_back({path, 0, "follows a truncated log"});
      }
      continue;
    }
    load.epoch = epoch;
    const auto content = read_file(path);
    std::size_t offset = 0;
    while (offset < content.size()) {
      const auto nl = content.find('\n', offset);
      std::optional<std::string> problem;
      ParsedLine parsed;
      if (nl == std::string::npos) {
        problem = "torn record (no newline)";
      } else {
        problem = parse_line(std::string_view(content).substr(offset, nl - offset), parsed);
        if (!problem && parsed.seq <= last_seq) problem = "sequence number not increasing";
      }
      if (problem) {
        if (mode == LoadMode::strict) throw CorruptLogError(path.string(), offset, *problem);
        if (mode == LoadMode::repair_truncate) {
          fs::resize_file(path, offset);
          if (report) report->truncations.push_back({path, offset, *problem});
        }
        stopped = true;
        break;
      }
      last_seq = parsed.seq;
      load.records.push_back(LogRecord{parsed.seq, parsed.kind, project, std::move(parsed.payload)});
      offset = nl + 1;
    }
    load.bytes += offset;
    load.file_size = offset;
  }
  return load;
}

bool is_full_errno(int err) { return err == ENOSPC || err == EDQUOT || err == EFBIG; }

}  // namespace

Store::Store(StoreOptions options) : options_(std::move(options)) {
  recover();
  if (!options_.data_dir.empty() && options_.snapshot_every > 0) {
    snapshotter_ = std::thread([this] { snapshot_loop(); });
  }
}

Store::~Store() {
  {
    std::lock_guard lock(snap_mu_);
    stopping_ = true;
  }
  snap_cv_.notify_all();
  if (snapshotter_.joinable()) snapshotter_.join();
  for (auto& [_, log] : logs_) {
    if (log.fd >= 0) ::close(log.fd);
  }
}

void Store::recover() {
  if (options_.data_dir.empty()) return;
  fs::create_directories(options_.data_dir);
  const auto mode =
      options_.recovery == RecoveryMode::strict ? LoadMode::strict : LoadMode::repair_truncate;
  SeqNo max_seq = 0;
  for (const auto& entry : fs::directory_iterator(options_.data_dir)) {
    if (!entry.is_directory()) continue;
    const auto project = entry.path().filename().string();
    if (project != kServerScope && !is_valid_id(project)) continue;
    auto load = load_project(entry.path(), project, mode, &report_);
    ProjectLog log;
    log.dir = entry.path();
    log.epoch = load.epoch;
    if (!load.records.empty()) max_seq = std::max(max_seq, load.records.back().seq);
    report_.records += load.records.size();
    bytes_used_ += load.bytes;
    log.records = std::move(load.records);
    logs_.emplace(project, std::move(log));
  }
  next_seq_ = max_seq + 1;
  report_.last_seq = max_seq;
}

Store::ProjectLog& Store::project_log(const std::string& project) {
  auto it = logs_.find(project);
  if (it != logs_.end()) return it->second;
  ProjectLog log;
  if (!options_.data_dir.empty()) {
    log.dir = options_.data_dir / project;
    fs::create_directories(log.dir);
  }
  log.epoch = 1;
  std::unique_lock records_lock(records_mu_);
  return logs_.emplace(project, std::move(log)).first->second;
}

void Store::open_log_file(ProjectLog& log) {
  const auto path = log.dir / ("log-" + std::to_string(log.epoch) + ".ndj");
  log.fd = ::open(path.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
  if (log.fd < 0) {
    throw Error(ErrorKind::Internal, "cannot open " + path.string() + ": " + std::strerror(errno));
  }
}

void Store::write_line(ProjectLog& log, const std::string& line) {
  if (log.fd < 0) open_log_file(log);
  const auto before = ::lseek(log.fd, 0, SEEK_END);
  const char* data = line.data();
  std::size_t left = line.size();
  while (left > 0) {
    const auto n = ::write(log.fd, data, left);
    if (n < 0) {
      if (errno == EINTR) continue;
      const int err = errno;
      // Never leave a torn record in front of later appends.
      if (before >= 0 && ::ftruncate(log.fd, before) != 0) {
        // Recovery will truncate the torn tail.
      }
      if (is_full_errno(err)) throw Error(ErrorKind::StorageFull, "storage full");
      throw Error(ErrorKind::Internal, std::string("log write failed: ") + std::strerror(err));
    }
    data += n;
    left -= static_cast<std::size_t>(n);
  }
  if (options_.fsync && ::fdatasync(log.fd) != 0) {
    throw Error(ErrorKind::Internal, std::string("fdatasync failed: ") + std::strerror(errno));
  }
}

SeqNo Store::append(const std::string& project, RecordKind kind, Json payload) {
  const auto encoded = canonical(payload);
  std::lock_guard lock(append_mu_);
  const SeqNo seq = next_seq_;
  auto line = encode_log_line(seq, kind, encoded);
  line += '\n';
  if (options_.max_bytes > 0 && bytes_used_ + line.size() > options_.max_bytes) {
    throw Error(ErrorKind::StorageFull, "storage quota of " + std::to_string(options_.max_bytes) +
                                            " bytes exhausted");
  }
  auto& log = project_log(project);
  if (!options_.data_dir.empty()) write_line(log, line);
  bytes_used_ += line.size();
  ++next_seq_;

  LogRecord record{seq, kind, project, std::make_shared<const Json>(std::move(payload))};
  {
    std::unique_lock records_lock(records_mu_);
    log.records.push_back(record);
  }
  if (listener_) listener_(record);

  if (options_.snapshot_every > 0 && snapshotter_.joinable() &&
      ++log.since_snapshot >= options_.snapshot_every) {
    log.since_snapshot = 0;
    {
      std::lock_guard snap_lock(snap_mu_);
      snap_pending_.push_back(project);
    }
    snap_cv_.notify_one();
  }
  return seq;
}

void Store::set_commit_listener(CommitListener listener) {
  std::lock_guard lock(append_mu_);
  listener_ = std::move(listener);
}

std::vector<LogRecord> Store::scan(const std::string& project, std::optional<TimeRange> range,
                                   std::optional<RecordKind> kind) const {
  std::vector<LogRecord> out;
  {
    std::shared_lock lock(records_mu_);
    auto it = logs_.find(project);
    if (it == logs_.end()) return out;
    for (const auto& r : it->second.records) {
      if (kind && r.kind != *kind) continue;
      if (range && !range->contains(r.time())) continue;
      out.push_back(r);
    }
  }
  std::stable_sort(out.begin(), out.end(), [](const LogRecord& a, const LogRecord& b) {
    const auto ta = a.time(), tb = b.time();
    return ta != tb ? ta < tb : a.seq < b.seq;
  });
  return out;
}

std::vector<LogRecord> Store::records_after(SeqNo after,
                                            const std::optional<std::string>& project) const {
  std::vector<LogRecord> out;
  std::shared_lock lock(records_mu_);
  for (const auto& [name, log] : logs_) {
    if (project && name != *project) continue;
    auto first = std::upper_bound(log.records.begin(), log.records.end(), after,
                                  [](SeqNo s, const LogRecord& r) { return s < r.seq; });
    out.insert(out.end(), first, log.records.end());
  }
  std::sort(out.begin(), out.end(),
            [](const LogRecord& a, const LogRecord& b) { return a.seq < b.seq; });
  return out;
}

std::vector<std::string> Store::projects() const {
  std::shared_lock lock(records_mu_);
  std::vector<std::string> out;
  for (const auto& [name, _] : logs_) {
    if (name != kServerScope) out.push_back(name);
  }
  return out;
}

bool Store::has_project(const std::string& project) const {
  std::shared_lock lock(records_mu_);
  return logs_.contains(project);
}

void Store::with_commits_paused(const std::function<void()>& fn) {
  std::lock_guard lock(append_mu_);
  fn();
}

SeqNo Store::last_seq() const {
  std::lock_guard lock(append_mu_);
  return next_seq_ - 1;
}

void Store::snapshot() {
  if (options_.data_dir.empty()) return;
  std::vector<std::string> names;
  {
    std::lock_guard lock(append_mu_);
    for (const auto& [name, _] : logs_) names.push_back(name);
  }
  for (const auto& name : names) snapshot_project(name);
}

void Store::snapshot_project(const std::string& project) {
  std::vector<LogRecord> records;
  fs::path dir;
  std::uint64_t next_epoch;
  {
    std::lock_guard lock(append_mu_);
    auto it = logs_.find(project);
    if (it == logs_.end() || it->second.records.empty()) return;
    auto& log = it->second;
    {
      std::shared_lock records_lock(records_mu_);
      records = log.records;
    }
    // Later appends go to a fresh log generation.
    if (log.fd >= 0) {
      ::close(log.fd);
      log.fd = -1;
    }
    log.epoch += 1;
    next_epoch = log.epoch;
    dir = log.dir;
  }
  const auto last = records.back().seq;
  const auto bytes = encode_snapshot(last, next_epoch, records);
  const auto final_path = dir / ("snapshot-" + std::to_string(last) + ".bin");
  const auto tmp_path = fs::path(final_path.string() + ".tmp");
  const int fd = ::open(tmp_path.c_str(), O_WRONLY | O_CREAT | O_TRUNC | O_CLOEXEC, 0644);
  if (fd < 0) throw Error(ErrorKind::Internal, "cannot write snapshot " + tmp_path.string());
  std::size_t done = 0;
  while (done < bytes.size()) {
    const auto n = ::write(fd, bytes.data() + done, bytes.size() - done);
    if (n < 0) {
      if (errno == EINTR) continue;
      const int err = errno;
      ::close(fd);
      fs::remove(tmp_path);
      if (is_full_errno(err)) throw Error(ErrorKind::StorageFull, "storage full");
      throw Error(ErrorKind::Internal, "snapshot write failed");
    }
    done += static_cast<std::size_t>(n);
  }
  ::fsync(fd);
  ::close(fd);
  fs::rename(tmp_path, final_path);
}

void Store::snapshot_loop() {
  std::unique_lock lock(snap_mu_);
  while (true) {
    snap_cv_.wait(lock, [this] { return stopping_ || !snap_pending_.empty(); });
    if (stopping_) return;
    auto pending = std::move(snap_pending_);
    snap_pending_.clear();
    lock.unlock();
    for (const auto& project : pending) {
      try {
        snapshot_project(project);
      } catch (const Error&) {
        // Snapshots are an optimization; the log stays authoritative.
      }
    }
    lock.lock();
  }
}

std::vector<LogRecord> Store::read_directory(const fs::path& data_dir) {
  std::vector<LogRecord> out;
  if (!fs::exists(data_dir)) return out;
  for (const auto& entry : fs::directory_iterator(data_dir)) {
    if (!entry.is_directory()) continue;
    const auto project = entry.path().filename().string();
    if (project != kServerScope && !is_valid_id(project)) continue;
    auto load = load_project(entry.path(), project, LoadMode::read_only, nullptr);
    out.insert(out.end(), load.records.begin(), load.records.end());
  }
  std::sort(out.begin(), out.end(),
            [](const LogRecord& a, const LogRecord& b) { return a.seq < b.seq; });
  return out;
}

}  // namespace aide
