#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "alsim/config.hpp"
#include "alsim/corpus.hpp"
#include "alsim/featurize.hpp"
#include "alsim/rng.hpp"

namespace alsim {

// Multiclass linear scorer: score(c, x) = <weights[c], x> + bias[c].
struct LinearModel {
  std::size_t label_count = 0;
  std::size_t feature_count = 0;
  std::vector<double> weights;  // label_count x feature_count, row-major
  std::vector<double> bias;
  std::uint64_t step_counter = 0;

  static LinearModel zeros(std::size_t label_count, std::size_t feature_count);

  std::span<double> row(std::size_t label) { return {weights.data() + label * feature_count, feature_count}; }
  std::span<const double> row(std::size_t label) const {
    return {weights.data() + label * feature_count, feature_count};
  }
  bool all_finite() const;

  bool operator==(const LinearModel&) const = default;
};

// Borrowed view of a labeled training set.
struct Examples {
  std::span<const SparseVector* const> features;
  std::span<const LabelIndex> labels;

  std::size_t size() const { return features.size(); }
};

std::vector<double> linear_scores(const LinearModel& model, const SparseVector& x);
std::vector<double> softmax(std::span<const double> scores);
std::vector<double> predict_proba(const LinearModel& model, const SparseVector& x);
std::vector<std::vector<double>> predict_proba(const LinearModel& model, std::span<const SparseVector* const> xs);

// Highest-scoring label; ties go to the lowest index.
LabelIndex predict_label(const LinearModel& model, const SparseVector& x);

// Mean cross-entropy over the examples plus (l2 / 2) * ||weights||^2.
// The bias is not penalised.
double objective(const LinearModel& model, const Examples& data, double l2);

struct Gradient {
  double loss = 0.0;
  std::vector<double> weights;
  std::vector<double> bias;
};

Gradient objective_gradient(const LinearModel& model, const Examples& data, double l2);

// Warm-started minibatch SGD over all given examples. Each epoch visits the
// examples in an order drawn from `rng`; the stream is left positioned after
// the last draw, so two calls continue one schedule.
LinearModel train_online(LinearModel model, const Examples& data, const TrainerConfig& cfg, Rng& rng);

struct LabelScores {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::uint64_t support = 0;
};

struct EvaluationReport {
  std::string split;  // "dev" | "test"
  std::uint64_t labeled_count = 0;
  double macro_f1 = 0.0;
  double accuracy = 0.0;
  std::vector<LabelScores> per_label;
};

// Per-label precision/recall/F1 with 0/0 := 0; macro-F1 averages over every
// label in [0, label_count), including labels absent from the split.
EvaluationReport score_predictions(std::span<const LabelIndex> predicted, std::span<const LabelIndex> gold,
                                   std::size_t label_count, std::string split);

EvaluationReport evaluate(const LinearModel& model, const Examples& data, std::string split);

// Checkpoint layout (little-endian): magic "ALSIMCKP", u32 version,
// u64 feature_count, u64 label_count, u64 step_counter, f64 weights[L*V],
// f64 bias[L], u32 rng_state_length, rng_state bytes.
struct Checkpoint {
  LinearModel model;
  std::string rng_state;

  bool operator==(const Checkpoint&) const = default;
};

std::string encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(std::string_view bytes);
void store_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint restore_checkpoint(const std::filesystem::path& path);

// Dense id -> feature vector table over all documents of a split
// (ids are global, so train, dev and test share one table).
class FeatureTable {
 public:
  FeatureTable() = default;
  FeatureTable(const DatasetSplit& split, const Vocabulary& vocab);

  const SparseVector& operator[](DocId id) const { return vectors_.at(id); }
  std::size_t size() const { return vectors_.size(); }

 private:
  std::vector<SparseVector> vectors_;
};

// Read-only prediction surface handed to teachers.
class Predictor {
 public:
  virtual ~Predictor() = default;
  virtual std::size_t label_count() const = 0;
  virtual std::vector<std::vector<double>> predict_proba(std::span<const DocId> ids) const = 0;
};

// Trainer bound to one corpus: trains on labeled train ids, evaluates
// dev and test, and exposes predictions through Predictor.
class OnlineTrainer final : public Predictor {
 public:
  OnlineTrainer(const DatasetSplit& split, const FeatureTable& features, std::size_t feature_count,
                TrainerConfig cfg);

  // Labels come from the oracle, aligned with labeled_ids.
  void train(std::span<const DocId> labeled_ids, std::span<const LabelIndex> labels, Rng& rng);
  EvaluationReport evaluate_dev() const;
  EvaluationReport evaluate_test() const;

  std::size_t label_count() const override { return model_.label_count; }
  std::vector<std::vector<double>> predict_proba(std::span<const DocId> ids) const override;

  const LinearModel& model() const { return model_; }
  void set_model(LinearModel model);

 private:
  EvaluationReport evaluate_split(std::span<const AnnotatedDocument> docs, const std::string& tag) const;

  const DatasetSplit& split_;
  const FeatureTable& features_;
  TrainerConfig cfg_;
  LinearModel model_;
};

}  // namespace alsim
