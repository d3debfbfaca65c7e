#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace alsim {

enum class RunStatus { running, success, failed };

std::string_view to_string(RunStatus status);
RunStatus parse_run_status(std::string_view text);

struct MetricRow {
  std::int64_t step_index = 0;
  std::string name;
  double value = 0.0;
};

struct RunRecord {
  std::string run_id;
  std::string step_name;
  std::string fingerprint;
  std::string revision;
  RunStatus status = RunStatus::running;
  std::filesystem::path dir;
};

// File-backed run store. Layout under the root:
//
//   index.jsonl             one line per run: run_id, step, fingerprint, revision
//   execution.log           one line per executed or skipped pipeline action
//   runs/<run_id>/params.json
//   runs/<run_id>/status    running | success | failed
//   runs/<run_id>/metrics   append-only "step_index,name,value" lines
//   runs/<run_id>/artifacts/<name> and artifacts/MANIFEST (name -> sha256)
//
// Appends to the shared files go through an in-process mutex plus an
// advisory flock, so concurrent seed runs never interleave within a line.
class RunStore {
 public:
  explicit RunStore(std::filesystem::path root);

  const std::filesystem::path& root() const { return root_; }

  // Deterministic id for a (step, fingerprint, revision) key.
  static std::string run_id_for(std::string_view step_name, std::string_view fingerprint, std::string_view revision);

  std::optional<RunRecord> find_matching_run(std::string_view step_name, std::string_view fingerprint,
                                             std::string_view revision) const;
  std::optional<RunRecord> get_run(std::string_view run_id) const;
  std::vector<RunRecord> list_runs() const;

  // Creates the run (or reopens a failed/stale one) with status running.
  // Refuses to reopen a successful run.
  RunRecord begin_run(std::string_view step_name, std::string_view fingerprint, std::string_view revision,
                      const nlohmann::json& params);

  void set_status(RunRecord& run, RunStatus status);

  void log_metric(const RunRecord& run, std::int64_t step_index, std::string_view name, double value);
  std::vector<MetricRow> metrics(const RunRecord& run) const;

  void put_artifact(const RunRecord& run, std::string_view name, std::string_view bytes);
  bool has_artifact(const RunRecord& run, std::string_view name) const;
  void remove_artifact(const RunRecord& run, std::string_view name);
  // Verifies the manifest digest; throws CorruptArtifact on mismatch or absence.
  std::string get_artifact(const RunRecord& run, std::string_view name) const;
  std::filesystem::path artifact_path(const RunRecord& run, std::string_view name) const;

  nlohmann::json params(const RunRecord& run) const;

  void log_execution(std::string_view event);
  std::vector<std::string> execution_log() const;

 private:
  void append_locked(const std::filesystem::path& file, std::string_view line);
  std::map<std::string, std::string> manifest(const RunRecord& run) const;
  std::optional<RunRecord> load_run(const std::filesystem::path& dir) const;

  std::filesystem::path root_;
  mutable std::mutex mutex_;
};

// Learning curve in metric form: one point per simulation step.
struct CurvePoint {
  std::int64_t step_index = 0;
  std::uint64_t labeled_count = 0;
  std::map<std::string, double> metrics;

  bool operator==(const CurvePoint&) const = default;
};

struct LearningCurve {
  std::int64_t seed = 0;
  std::vector<CurvePoint> points;

  bool operator==(const LearningCurve&) const = default;
};

struct MetricStats {
  double mean = 0.0;
  double min = 0.0;
  double max = 0.0;
  double stddev = 0.0;  // population standard deviation
};

struct AggregatePoint {
  std::int64_t step_index = 0;
  std::uint64_t labeled_count = 0;
  std::size_t seed_count = 0;
  std::map<std::string, MetricStats> metrics;
};

struct AggregatedCurve {
  std::vector<AggregatePoint> points;
};

// Per step index: mean/min/max/stddev of every metric over the seeds that
// reached that step. Throws ValidationError when curves disagree on the
// labeled count of a shared step (names the offending seeds).
AggregatedCurve aggregate_seed_runs(std::span<const LearningCurve> curves);

inline constexpr std::string_view kCurveCsvHeader = "step_index,labeled_count,metric,value";

std::string curve_to_csv(const LearningCurve& curve);
LearningCurve curve_from_csv(std::string_view csv, std::int64_t seed = 0);
// Metric names are suffixed with _mean, _min, _max and _std.
std::string aggregate_to_csv(const AggregatedCurve& curve);
AggregatedCurve aggregate_from_csv(std::string_view csv);

struct PlotSeries {
  std::string label;
  AggregatedCurve curve;
};

// Mean line with a min-max band per series, for one metric.
std::string render_svg(std::span<const PlotSeries> series, std::string_view metric, std::string_view title);

}  // namespace alsim
