#pragma once

// Regression gate over CI runs. A run is the set of traces tagged
// `ci-run:<run_id>`; its summary holds the per-metric mean. A new run is
// compared against the summaries recorded before it.

#include <map>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include "aide/ingest.hpp"
#include "aide/query.hpp"

namespace aide {

enum class Direction { higher_is_better, lower_is_better };

struct GateConfig {
  std::string metric_name;
  std::int64_t baseline_window = 10;
  double relative_drop_threshold = 0.10;
  double k_sigma = 2.0;
  std::int64_t min_baseline_runs = 3;
  Direction direction = Direction::higher_is_better;
};

Json to_json(const GateConfig& config);
// Missing fields take their value from `defaults`.
GateConfig gate_config_from_json(const Json& j, const GateConfig& defaults = {});
void validate(const GateConfig& config);

struct RunSummary {
  std::string run_id;
  std::optional<std::string> commit_tag;
  std::map<std::string, double> metric_means;
  std::int64_t trace_count = 0;
  TimestampMs created_at = 0;
};

Json to_json(const RunSummary& summary);
RunSummary run_summary_from_json(const Json& j);

enum class GateRule { none, relative_drop, sigma_band, insufficient_data_pass };
std::string_view to_string(GateRule rule);

struct MetricVerdict {
  std::string metric_name;
  Direction direction = Direction::higher_is_better;
  std::optional<double> current_mean;
  std::optional<double> baseline_mean;
  std::optional<double> baseline_std;
  std::optional<double> relative_change;
  std::int64_t baseline_runs = 0;
  GateRule rule_triggered = GateRule::none;
};

struct GateVerdict {
  std::string run_id;
  bool pass = true;
  bool insufficient_data = false;
  std::vector<MetricVerdict> metrics;

  // 0 = pass, 1 = fail, 2 = passed only for lack of baseline data.
  int exit_code() const { return !pass ? 1 : (insufficient_data ? 2 : 0); }
};

Json to_json(const GateVerdict& verdict);

struct DriftReport {
  std::string metric_name;
  TimeRange window_a;
  TimeRange window_b;
  double mean_a = 0;
  double mean_b = 0;
  std::int64_t count_a = 0;
  std::int64_t count_b = 0;
  std::optional<double> relative_change_pct;
  double threshold_pct = 0;
  bool triggered = false;
};

Json to_json(const DriftReport& report);

inline std::string run_tag(const std::string& run_id) { return "ci-run:" + run_id; }

class CiGate {
 public:
  CiGate(Store& store, const QueryEngine& queries, ProjectDirectory& projects, Clock clock)
      : store_(store), queries_(queries), projects_(projects), clock_(std::move(clock)) {}

  // Idempotent: re-summarizing unchanged inputs returns the stored summary.
  RunSummary summarize_run(const std::string& project, const std::string& run_id,
                           const std::optional<std::string>& commit_tag = {});
  // Summarizes the run if needed, then applies every config.
  GateVerdict evaluate_gate(const std::string& project, const std::string& run_id,
                            const std::vector<GateConfig>& configs);
  DriftReport drift_check(const std::string& project, const std::string& metric_name,
                          TimeRange window_a, TimeRange window_b, double threshold_pct) const;

  std::optional<RunSummary> summary(const std::string& project, const std::string& run_id) const;
  // In order of first summarization.
  std::vector<RunSummary> summaries(const std::string& project) const;

  void apply(const LogRecord& record);

 private:
  Store& store_;
  const QueryEngine& queries_;
  ProjectDirectory& projects_;
  Clock clock_;
  std::mutex write_mu_;
  mutable std::shared_mutex mu_;
  std::map<std::string, std::vector<RunSummary>> runs_;  // project -> ordered summaries
};

}  // namespace aide
