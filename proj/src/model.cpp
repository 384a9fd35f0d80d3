#include "aide/model.hpp"

#include <array>
#include <chrono>
#include <cmath>
#include <random>
#include <unordered_map>

namespace aide {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::ValidationError: return "ValidationError";
    case ErrorKind::DuplicateTraceId: return "DuplicateTraceId";
    case ErrorKind::StorageFull: return "StorageFull";
    case ErrorKind::CorruptLog: return "CorruptLog";
    case ErrorKind::BatchTooLarge: return "BatchTooLarge";
    case ErrorKind::EvaluatorError: return "EvaluatorError";
    case ErrorKind::UnknownField: return "UnknownField";
    case ErrorKind::InvalidRange: return "InvalidRange";
    case ErrorKind::UnknownProject: return "UnknownProject";
    case ErrorKind::UnknownTrace: return "UnknownTrace";
    case ErrorKind::WindowTooWide: return "WindowTooWide";
    case ErrorKind::VersionConflict: return "VersionConflict";
    case ErrorKind::EmptyTemplate: return "EmptyTemplate";
    case ErrorKind::UnknownPrompt: return "UnknownPrompt";
    case ErrorKind::UnknownVersion: return "UnknownVersion";
    case ErrorKind::NoHistory: return "NoHistory";
    case ErrorKind::EmptyRun: return "EmptyRun";
    case ErrorKind::UnknownRun: return "UnknownRun";
    case ErrorKind::EmptyWindow: return "EmptyWindow";
    case ErrorKind::UnknownBinding: return "UnknownBinding";
    case ErrorKind::UnknownExperiment: return "UnknownExperiment";
    case ErrorKind::ExperimentNotRunning: return "ExperimentNotRunning";
    case ErrorKind::ExperimentAlreadyRunning: return "ExperimentAlreadyRunning";
    case ErrorKind::ScoreOutOfRange: return "ScoreOutOfRange";
    case ErrorKind::PausedAgent: return "PausedAgent";
    case ErrorKind::UnknownRule: return "UnknownRule";
    case ErrorKind::UnknownProposal: return "UnknownProposal";
    case ErrorKind::IllegalTransition: return "IllegalTransition";
    case ErrorKind::LaggingSubscriber: return "LaggingSubscriber";
    case ErrorKind::Unauthorized: return "Unauthorized";
    case ErrorKind::InvalidParams: return "InvalidParams";
    case ErrorKind::NotFound: return "NotFound";
    case ErrorKind::Internal: return "Internal";
  }
  return "Internal";
}

Clock system_clock() {
  return [] {
    return std::chrono::duration_cast<std::chrono::milliseconds>(
               std::chrono::system_clock::now().time_since_epoch())
        .count();
  };
}

bool is_valid_id(std::string_view id) {
  if (id.empty() || id.size() > kMaxIdLength) return false;
  for (char c : id) {
    const bool ok = (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') ||
                    (c >= '0' && c <= '9') || c == '.' || c == '_' || c == '-';
    if (!ok) return false;
  }
  return true;
}

bool is_valid_utf8(std::string_view text) {
  std::size_t i = 0;
  const auto n = text.size();
  while (i < n) {
    const auto c = static_cast<unsigned char>(text[i]);
    std::size_t extra;
    std::uint32_t cp;
    if (c < 0x80) {
      ++i;
      continue;
    } else if ((c & 0xE0) == 0xC0) {
      extra = 1;
      cp = c & 0x1F;
    } else if ((c & 0xF0) == 0xE0) {
      extra = 2;
      cp = c & 0x0F;
    } else if ((c & 0xF8) == 0xF0) {
      extra = 3;
      cp = c & 0x07;
    } else {
      return false;
    }
    if (i + extra >= n) return false;
    for (std::size_t k = 1; k <= extra; ++k) {
      const auto cc = static_cast<unsigned char>(text[i + k]);
      if ((cc & 0xC0) != 0x80) return false;
      cp = (cp << 6) | (cc & 0x3F);
    }
    // Overlong encodings, surrogates, out of range.
    static constexpr std::array<std::uint32_t, 4> kMin{0, 0x80, 0x800, 0x10000};
    if (cp < kMin[extra] || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) {
      return false;
    }
    i += extra + 1;
  }
  return true;
}

std::size_t utf8_length(std::string_view text) {
  std::size_t count = 0;
  for (char c : text) {
    if ((static_cast<unsigned char>(c) & 0xC0) != 0x80) ++count;
  }
  return count;
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : bytes) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t value) {
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[i] = kHex[value & 0xF];
    value >>= 4;
  }
  return out;
}

std::string generate_id() {
  thread_local std::mt19937_64 rng{std::random_device{}() ^
                                   (static_cast<std::uint64_t>(std::random_device{}()) << 32)};
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out(32, '0');
  for (int half = 0; half < 2; ++half) {
    auto bits = rng();
    for (int i = 0; i < 16; ++i) {
      out[half * 16 + i] = kHex[bits & 0xF];
      bits >>= 4;
    }
  }
  return out;
}

bool Trace::error_present() const {
  for (const auto& span : spans) {
    if (span.error) return true;
  }
  return false;
}

bool is_numeric_path(std::string_view path) {
  if (path.starts_with("scores.")) return path.size() > 7;
  return path == "latency_ms" || path == "feedback" || path == "prompt_ref.version" ||
         path == "token_usage.prompt_tokens" || path == "token_usage.completion_tokens";
}

std::optional<double> numeric_field(const Trace& trace, std::string_view path) {
  if (path.starts_with("scores.")) {
    auto it = trace.scores.find(std::string(path.substr(7)));
    if (it == trace.scores.end()) return std::nullopt;
    return it->second;
  }
  if (path == "latency_ms") return static_cast<double>(trace.latency_ms());
  if (path == "feedback") {
    if (!trace.feedback) return std::nullopt;
    return static_cast<double>(*trace.feedback);
  }
  if (path == "prompt_ref.version") {
    if (!trace.prompt_ref) return std::nullopt;
    return static_cast<double>(trace.prompt_ref->version);
  }
  if (path == "token_usage.prompt_tokens") return static_cast<double>(trace.token_usage.prompt_tokens);
  if (path == "token_usage.completion_tokens") {
    return static_cast<double>(trace.token_usage.completion_tokens);
  }
  return std::nullopt;
}

namespace {

void check_payload(const std::string& field, const std::string& payload) {
  if (payload.size() > kMaxPayloadBytes) {
    throw ValidationError(field, "payload exceeds 1 MiB");
  }
  if (!is_valid_utf8(payload)) throw ValidationError(field, "payload is not valid UTF-8");
}

void check_usage(const std::string& field, const TokenUsage& usage) {
  if (usage.prompt_tokens < 0) throw ValidationError(field + ".prompt_tokens", "must be >= 0");
  if (usage.completion_tokens < 0) {
    throw ValidationError(field + ".completion_tokens", "must be >= 0");
  }
}

}  // namespace

Trace validate_trace(Trace candidate) {
  const auto& t = candidate;
  if (!is_valid_id(t.trace_id)) throw ValidationError("trace_id", "invalid identifier");
  if (!is_valid_id(t.project_id)) throw ValidationError("project_id", "invalid identifier");
  if (!is_valid_utf8(t.name)) throw ValidationError("name", "not valid UTF-8");
  if (t.end_time < t.start_time) throw ValidationError("end_time", "end_time < start_time");
  check_payload("input", t.input);
  check_payload("output", t.output);
  check_usage("token_usage", t.token_usage);
  if (t.prompt_ref) {
    if (t.prompt_ref->prompt_name.empty()) {
      throw ValidationError("prompt_ref.prompt_name", "must be nonempty");
    }
    if (t.prompt_ref->version < 1) throw ValidationError("prompt_ref.version", "must be >= 1");
  }
  for (const auto& [metric, value] : t.scores) {
    if (metric.empty() || !is_valid_utf8(metric)) {
      throw ValidationError("scores", "metric name must be nonempty UTF-8");
    }
    if (!std::isfinite(value) || value < 0.0 || value > 1.0) {
      throw ValidationError("scores." + metric, "score must lie in [0,1]");
    }
  }
  if (t.feedback && (*t.feedback < -1 || *t.feedback > 1)) {
    throw ValidationError("feedback", "must be -1, 0 or +1");
  }
  for (const auto& tag : t.tags) {
    if (tag.empty() || !is_valid_utf8(tag)) {
      throw ValidationError("tags", "tags must be nonempty UTF-8");
    }
  }

  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < t.spans.size(); ++i) {
    const auto& s = t.spans[i];
    const auto prefix = "spans[" + std::to_string(i) + "].";
    if (!is_valid_id(s.span_id)) throw ValidationError(prefix + "span_id", "invalid identifier");
    if (!index.emplace(s.span_id, i).second) {
      throw ValidationError(prefix + "span_id", "duplicate span id");
    }
    if (s.end_time < s.start_time) throw ValidationError(prefix + "end_time", "end_time < start_time");
    if (!is_valid_utf8(s.name)) throw ValidationError(prefix + "name", "not valid UTF-8");
    check_payload(prefix + "input", s.input);
    check_payload(prefix + "output", s.output);
    if (s.token_usage) check_usage(prefix + "token_usage", *s.token_usage);
    if (s.error && !is_valid_utf8(*s.error)) throw ValidationError(prefix + "error", "not valid UTF-8");
  }
  for (std::size_t i = 0; i < t.spans.size(); ++i) {
    const auto& parent = t.spans[i].parent_span;
    if (parent && !index.contains(*parent)) {
      throw ValidationError("spans[" + std::to_string(i) + "].parent_span",
                            "refers to a span not in this trace");
    }
  }
  // Each span has at most one parent, so a cycle shows up as a parent chain
  // longer than the span count.
  for (std::size_t i = 0; i < t.spans.size(); ++i) {
    std::size_t cursor = i;
    for (std::size_t steps = 0;; ++steps) {
      const auto& parent = t.spans[cursor].parent_span;
      if (!parent) break;
      if (steps >= t.spans.size()) {
        throw ValidationError("spans[" + std::to_string(i) + "].parent_span",
                              "span parent links form a cycle");
      }
      cursor = index.at(*parent);
    }
  }
  return candidate;
}

}  // namespace aide
