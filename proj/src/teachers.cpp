#include "alsim/teachers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "alsim/errors.hpp"

namespace alsim {

ClampedStep clamp_step(std::size_t pool_size, std::size_t step_size, std::size_t budget) {
  return {std::min(step_size, pool_size), std::min(std::max(budget, step_size), pool_size)};
}

TeacherRegistry::TeacherRegistry() {
  factories_["random"] = [](const TeacherEnv&) { return std::make_unique<RandomTeacher>(); };
  factories_["margin"] = [](const TeacherEnv&) { return std::make_unique<MarginTeacher>(); };
  factories_["kmeans"] = [](const TeacherEnv& env) -> std::unique_ptr<Teacher> {
    const std::size_t k = env.config.teacher.k ? static_cast<std::size_t>(*env.config.teacher.k) : env.label_count;
    std::vector<const SparseVector*> pool;
    pool.reserve(env.corpus.train.size());
    for (const auto& doc : env.corpus.train) pool.push_back(&env.features[doc.id]);
    return std::make_unique<KMeansTeacher>(pool, env.feature_count, k, env.fit_rng);
  };
}

TeacherRegistry& TeacherRegistry::instance() {
  static TeacherRegistry registry;
  return registry;
}

void TeacherRegistry::add(const std::string& name, TeacherFactory factory) {
  std::lock_guard lock(mutex_);
  factories_[name] = std::move(factory);
}

bool TeacherRegistry::contains(const std::string& name) const {
  std::lock_guard lock(mutex_);
  return factories_.contains(name);
}

std::vector<std::string> TeacherRegistry::names() const {
  std::lock_guard lock(mutex_);
  std::vector<std::string> out;
  for (const auto& [name, _] : factories_) out.push_back(name);
  return out;
}

std::unique_ptr<Teacher> TeacherRegistry::create(const std::string& name, const TeacherEnv& env) const {
  TeacherFactory factory;
  {
    std::lock_guard lock(mutex_);
    auto it = factories_.find(name);
    if (it == factories_.end()) throw ValidationError("teacher.strategy", "unknown strategy '" + name + "'");
    factory = it->second;
  }
  return factory(env);
}

double margin_score(std::span<const double> probabilities) {
  if (probabilities.size() < 2) throw ValidationError("probabilities", "margin needs at least two labels");
  double best = -std::numeric_limits<double>::infinity();
  double second = best;
  for (double p : probabilities) {
    if (p > best) {
      second = best;
      best = p;
    } else if (p > second) {
      second = p;
    }
  }
  return best - second;
}

std::vector<DocId> RandomTeacher::propose(const ProposeContext& ctx) {
  return ctx.rng.sample(ctx.potential_ids, ctx.step_size);
}

KMeansTeacher::KMeansTeacher(std::span<const SparseVector* const> pool, std::size_t feature_count, std::size_t k,
                             Rng& rng)
    : clustering_(fit_kmeans(pool, feature_count, k, rng)) {
  std::vector<double> norms;
  for (const auto& c : clustering_.centers) {
    double s = 0.0;
    for (double v : c) s += v * v;
    norms.push_back(s);
  }
  squared_distance_.reserve(pool.size());
  for (std::size_t i = 0; i < pool.size(); ++i) {
    const std::size_t c = clustering_.assignments[i];
    squared_distance_.push_back(squared_distance(*pool[i], clustering_.centers[c], norms[c]));
  }
}

std::vector<DocId> KMeansTeacher::propose(const ProposeContext& ctx) {
  std::vector<DocId> ranked(ctx.potential_ids.begin(), ctx.potential_ids.end());
  for (DocId id : ranked) {
    if (id >= squared_distance_.size()) throw ValidationError("potential_ids", fmt::format("id {} not in pool", id));
  }
  const auto farther = [this](DocId a, DocId b) {
    const double da = squared_distance_[a];
    const double db = squared_distance_[b];
    return da != db ? da > db : a < b;
  };
  const std::size_t n = std::min(ctx.step_size, ranked.size());
  std::partial_sort(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(n), ranked.end(), farther);
  ranked.resize(n);
  return ranked;
}

std::vector<DocId> MarginTeacher::propose(const ProposeContext& ctx) {
  const auto sample = ctx.rng.sample(ctx.potential_ids, ctx.budget);
  const auto probs = ctx.predictor.predict_proba(sample);

  std::vector<std::pair<double, DocId>> scored;
  scored.reserve(sample.size());
  for (std::size_t i = 0; i < sample.size(); ++i) scored.emplace_back(margin_score(probs[i]), sample[i]);
  const std::size_t n = std::min(ctx.step_size, scored.size());
  std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(n), scored.end());
  std::vector<DocId> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(scored[i].second);
  return out;
}

}  // namespace alsim
