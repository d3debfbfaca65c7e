#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "alsim/featurize.hpp"
#include "alsim/rng.hpp"

namespace alsim {

struct KMeansResult {
  std::vector<std::vector<double>> centers;  // dense, one per cluster
  std::vector<std::size_t> assignments;      // cluster per input vector
  std::size_t iterations = 0;                // Lloyd iterations run
  std::vector<double> objective;             // within-cluster SSE after seeding, then per iteration
};

// Called after the initial assignment and after every Lloyd iteration.
using KMeansObserver =
    std::function<void(std::span<const std::vector<double>> centers, std::span<const std::size_t> assignments)>;

inline constexpr std::size_t kMaxLloydIterations = 100;

// k-means++ seeding from `rng`, then Lloyd iterations until the assignment
// stops changing or max_iterations is reached. An emptied cluster keeps its
// previous center. Distance ties go to the lower cluster index.
KMeansResult fit_kmeans(std::span<const SparseVector* const> vectors, std::size_t dimensions, std::size_t k,
                        Rng& rng, std::size_t max_iterations = kMaxLloydIterations,
                        const KMeansObserver& observer = {});

// ||x - center||^2 given the precomputed ||center||^2. Clamped at 0.
double squared_distance(const SparseVector& x, std::span<const double> center, double center_squared_norm);

}  // namespace alsim
