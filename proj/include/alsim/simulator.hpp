#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "alsim/config.hpp"
#include "alsim/corpus.hpp"
#include "alsim/featurize.hpp"
#include "alsim/teachers.hpp"
#include "alsim/tracking.hpp"
#include "alsim/trainer.hpp"

namespace alsim {

// One simulation step: step 0 is the initial training, later steps follow a
// propose/annotate/train cycle.
struct StepRecord {
  std::int64_t step_index = 0;
  std::uint64_t labeled_count = 0;
  std::vector<DocId> batch;  // ids annotated in this step, in proposal order
  EvaluationReport dev;
  EvaluationReport test;
};

// Metric names carried by learning curves.
inline constexpr std::string_view kDevMacroF1 = "dev_macro_f1";
inline constexpr std::string_view kTestMacroF1 = "test_macro_f1";

LearningCurve to_learning_curve(std::int64_t seed, std::span<const StepRecord> steps);

// Raised when a run is stopped on request (interrupt hook or SIGINT) after
// committing a step.
class Interrupted : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SimulationHooks {
  // Receives "propose", "annotate", "train", "evaluate_dev", "evaluate_test",
  // "after_initial_train" and "after_train" in call order.
  std::function<void(std::string_view)> trace;
  // Stop with Interrupted right after step N has been committed.
  std::optional<std::int64_t> interrupt_after_step;
  // Polled between steps; when set, stop with Interrupted.
  const std::atomic<bool>* cancel = nullptr;
};

// ceil(initial_ratio * pool_size), robust to representation error in the ratio.
std::size_t initial_set_size(double initial_ratio, std::size_t pool_size);

// Fingerprint keying every random stream of a seed run. Covers the data,
// trainer and experiment settings that shape a run, but not the seed list,
// the stop conditions or the teacher choice, so strategies compared under
// one seed share the initial set and the trainer's shuffle schedule.
std::string stream_fingerprint(const ExperimentConfig& cfg);

// Immutable per-experiment inputs shared by all seed runs.
struct SimulationInputs {
  const ExperimentConfig& config;
  const DatasetSplit& split;
  const Vocabulary& vocabulary;
  const FeatureTable& features;
};

// Persisted progress of a seed run, sufficient to continue it.
struct SeedProgress {
  std::vector<StepRecord> steps;
  bool finished = false;
};

std::string encode_progress(const SeedProgress& progress);
SeedProgress decode_progress(std::string_view text);

// In-memory driver of one seed run.
class SeedRun {
 public:
  SeedRun(const SimulationInputs& inputs, std::int64_t seed, SimulationHooks hooks = {});
  ~SeedRun();

  // Initial selection, training and evaluation (step 0).
  void initialize();
  // One propose step. Returns false when no step was run because a stop
  // condition already holds.
  bool advance();
  bool finished() const;

  // Rebuilds the state after the last recorded step from recorded batches
  // and the matching model checkpoint.
  void restore(const SeedProgress& progress, const Checkpoint& checkpoint);
  Checkpoint checkpoint() const;
  SeedProgress progress() const;

  const std::vector<StepRecord>& steps() const { return steps_; }
  const AnnotationState& annotation() const { return state_; }
  std::int64_t seed() const { return seed_; }

  std::vector<LabelIndex> oracle_annotate(std::span<const DocId> ids) const;

 private:
  void trace(std::string_view event) const;
  void record_step(std::int64_t step_index, std::vector<DocId> batch, bool initial);
  std::vector<DocId> checked_proposal(std::vector<DocId> proposal, std::span<const DocId> potential,
                                      std::size_t expected) const;

  const SimulationInputs& inputs_;
  std::int64_t seed_;
  SimulationHooks hooks_;
  std::string stream_fp_;
  std::unique_ptr<OnlineTrainer> trainer_;
  std::unique_ptr<Teacher> teacher_;
  AnnotationState state_;
  std::vector<LabelIndex> labels_;  // oracle labels aligned with state_.labeled()
  std::vector<StepRecord> steps_;
  std::string trainer_rng_state_;
  bool stopped_ = false;
};

// Runs one seed to completion in memory (no run store).
std::vector<StepRecord> run_seed_steps(const SimulationInputs& inputs, std::int64_t seed,
                                       SimulationHooks hooks = {});
LearningCurve run_seed(const ExperimentConfig& cfg, const DatasetSplit& split, std::int64_t seed);

// ---------------------------------------------------------------------------
// Tracked pipeline

struct RunOptions {
  bool resume = false;  // continue failed seed runs from their last checkpoint
  SimulationHooks hooks;
};

struct SeedRunResult {
  std::int64_t seed = 0;
  std::string run_id;
  RunStatus status = RunStatus::failed;
  bool cache_hit = false;
  bool resumed = false;
  bool interrupted = false;
  std::string error;
  LearningCurve curve;
};

struct ExperimentResult {
  bool success = false;
  std::string aggregate_run_id;
  std::vector<SeedRunResult> seeds;
  AggregatedCurve aggregate;
};

// Step fingerprints. The data steps hash data.* plus the raw file digests;
// a seed run adds the experiment/teacher/trainer sections and its seed; the
// aggregate adds the seed list.
std::string data_fingerprint(const ExperimentConfig& cfg);
std::string seed_run_fingerprint(const ExperimentConfig& cfg, std::string_view data_fp, std::int64_t seed);
std::string aggregate_fingerprint(const ExperimentConfig& cfg, std::string_view data_fp);

// load_raw -> convert -> load_converted, each cached in the store.
DatasetSplit prepare_data(const ExperimentConfig& cfg, RunStore& store);

// Shared state for a tracked experiment; fits the vocabulary lazily.
class Experiment {
 public:
  Experiment(const ExperimentConfig& cfg, RunStore& store);
  ~Experiment();

  const DatasetSplit& split() const { return split_; }
  const std::string& data_fp() const { return data_fp_; }

  SeedRunResult run_seed(std::int64_t seed, const RunOptions& options);

  // Continues a failed seed run by id. Throws ValidationError when the run
  // was recorded under a different configuration.
  SeedRunResult resume_seed_run(std::string_view run_id, const RunOptions& options);

 private:
  const SimulationInputs& inputs();
  SeedRunResult execute(std::int64_t seed, RunRecord run, bool try_resume, const RunOptions& options);

  const ExperimentConfig& cfg_;
  RunStore& store_;
  DatasetSplit split_;
  std::string data_fp_;
  std::once_flag features_once_;
  std::unique_ptr<Vocabulary> vocabulary_;
  std::unique_ptr<FeatureTable> features_;
  std::unique_ptr<SimulationInputs> inputs_;
};

// Full pipeline: data steps, one seed run per configured seed on at most
// tracking.worker_count threads, then aggregation. Aggregation is skipped
// when any seed run fails.
ExperimentResult run_experiment(const ExperimentConfig& cfg, RunStore& store, const RunOptions& options = {});

}  // namespace alsim
