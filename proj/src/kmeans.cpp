#include "alsim/kmeans.hpp"

#include <algorithm>
#include <limits>

#include <fmt/format.h>

#include "alsim/errors.hpp"

namespace alsim {

namespace {

double squared_norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return s;
}

std::vector<double> densify(const SparseVector& x, std::size_t dims) {
  std::vector<double> d(dims, 0.0);
  for (const auto& e : x.entries) d[e.index] = e.weight;
  return d;
}

struct Assignment {
  std::vector<std::size_t> cluster;
  double objective = 0.0;
};

Assignment assign(std::span<const SparseVector* const> vectors, const std::vector<std::vector<double>>& centers) {
  std::vector<double> norms;
  norms.reserve(centers.size());
  for (const auto& c : centers) norms.push_back(squared_norm(c));

  Assignment a;
  a.cluster.resize(vectors.size());
  for (std::size_t i = 0; i < vectors.size(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t arg = 0;
    for (std::size_t c = 0; c < centers.size(); ++c) {
      const double d = squared_distance(*vectors[i], centers[c], norms[c]);
      if (d < best) {
        best = d;
        arg = c;
      }
    }
    a.cluster[i] = arg;
    a.objective += best;
  }
  return a;
}

}  // namespace

double squared_distance(const SparseVector& x, std::span<const double> center, double center_squared_norm) {
  double d = center_squared_norm;
  for (const auto& e : x.entries) {
    const double c = center[e.index];
    const double diff = e.weight - c;
    d += diff * diff - c * c;
  }
  return d < 0.0 ? 0.0 : d;
}

KMeansResult fit_kmeans(std::span<const SparseVector* const> vectors, std::size_t dimensions, std::size_t k,
                        Rng& rng, std::size_t max_iterations, const KMeansObserver& observer) {
  if (k < 1) throw ValidationError("k", "must be >= 1");
  if (vectors.size() < k) {
    throw ValidationError("k", fmt::format("cannot form {} clusters from {} points", k, vectors.size()));
  }
  const std::size_t n = vectors.size();

  // k-means++ seeding.
  KMeansResult result;
  result.centers.push_back(densify(*vectors[rng.below(n)], dimensions));
  std::vector<double> nearest(n, std::numeric_limits<double>::infinity());
  while (result.centers.size() < k) {
    const auto& last = result.centers.back();
    const double last_norm = squared_norm(last);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      nearest[i] = std::min(nearest[i], squared_distance(*vectors[i], last, last_norm));
      total += nearest[i];
    }
    std::size_t pick = n - 1;
    if (total > 0.0) {
      const double target = rng.unit() * total;
      double acc = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        acc += nearest[i];
        if (target < acc) {
          pick = i;
          break;
        }
      }
    } else {
      pick = static_cast<std::size_t>(rng.below(n));
    }
    result.centers.push_back(densify(*vectors[pick], dimensions));
  }

  Assignment current = assign(vectors, result.centers);
  result.objective.push_back(current.objective);
  if (observer) observer(result.centers, current.cluster);

  for (std::size_t iter = 0; iter < max_iterations; ++iter) {
    std::vector<std::vector<double>> sums(k, std::vector<double>(dimensions, 0.0));
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t c = current.cluster[i];
      ++counts[c];
      for (const auto& e : vectors[i]->entries) sums[c][e.index] += e.weight;
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] == 0) continue;
      const double inv = 1.0 / static_cast<double>(counts[c]);
      for (double& v : sums[c]) v *= inv;
      result.centers[c] = std::move(sums[c]);
    }

    Assignment next = assign(vectors, result.centers);
    ++result.iterations;
    result.objective.push_back(next.objective);
    const bool changed = next.cluster != current.cluster;
    current = std::move(next);
    if (observer) observer(result.centers, current.cluster);
    if (!changed) break;
  }

  result.assignments = std::move(current.cluster);
  return result;
}

}  // namespace alsim
