#pragma once

#include <cmath>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <vector>

#include "alsim/config.hpp"
#include "alsim/corpus.hpp"
#include "alsim/kmeans.hpp"
#include "alsim/rng.hpp"
#include "alsim/trainer.hpp"

namespace alsim {

// Inputs of one propose step. Step size and budget are already clamped to
// the number of potential ids.
struct ProposeContext {
  std::span<const DocId> potential_ids;
  std::size_t step_size = 0;
  std::size_t budget = 0;
  const Predictor& predictor;
  Rng& rng;
};

struct ClampedStep {
  std::size_t step_size;
  std::size_t budget;
};

ClampedStep clamp_step(std::size_t pool_size, std::size_t step_size, std::size_t budget);

// Query strategy. Implementations return exactly ctx.step_size distinct ids
// drawn from ctx.potential_ids.
class Teacher {
 public:
  virtual ~Teacher() = default;

  virtual std::vector<DocId> propose(const ProposeContext& ctx) = 0;

  virtual void after_initial_train(const EvaluationReport& /*dev*/) {}
  virtual void after_train(const EvaluationReport& /*dev*/) {}
};

// What a strategy may see when it is constructed.
struct TeacherEnv {
  const ExperimentConfig& config;
  const DatasetSplit& corpus;
  const FeatureTable& features;
  std::size_t feature_count;
  std::size_t label_count;
  Rng& fit_rng;  // for one-off fitting work (k-means seeding)
};

using TeacherFactory = std::function<std::unique_ptr<Teacher>(const TeacherEnv&)>;

// Name -> factory. The built-in "random", "kmeans" and "margin" strategies
// are registered on first use; further strategies may be added at any time.
class TeacherRegistry {
 public:
  static TeacherRegistry& instance();

  void add(const std::string& name, TeacherFactory factory);
  bool contains(const std::string& name) const;
  std::vector<std::string> names() const;

  // Throws ValidationError for an unknown name.
  std::unique_ptr<Teacher> create(const std::string& name, const TeacherEnv& env) const;

 private:
  TeacherRegistry();

  mutable std::mutex mutex_;
  std::map<std::string, TeacherFactory> factories_;
};

// p(best) - p(second best).
double margin_score(std::span<const double> probabilities);

class RandomTeacher final : public Teacher {
 public:
  std::vector<DocId> propose(const ProposeContext& ctx) override;
};

// Clusters the whole train pool once at construction and proposes the
// unlabeled documents farthest from their own cluster center.
class KMeansTeacher final : public Teacher {
 public:
  KMeansTeacher(std::span<const SparseVector* const> pool, std::size_t feature_count, std::size_t k, Rng& rng);

  std::vector<DocId> propose(const ProposeContext& ctx) override;

  const KMeansResult& clustering() const { return clustering_; }
  double distance_to_center(DocId id) const { return std::sqrt(squared_distance_.at(id)); }

 private:
  KMeansResult clustering_;
  std::vector<double> squared_distance_;  // indexed by train id
};

// Scores a random sample of `budget` unlabeled documents and proposes the
// ones with the smallest best-vs-second-best probability margin.
class MarginTeacher final : public Teacher {
 public:
  std::vector<DocId> propose(const ProposeContext& ctx) override;
};

}  // namespace alsim
