#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "modforge/dense_matrix.hpp"
#include "modforge/objective.hpp"

namespace modforge {

struct KMeansResult {
    DenseMatrix centroids;             // K x dims
    std::vector<ModuleId> assignment;  // one entry per point, in [0, K)
    double inertia = 0.0;              // sum of squared distances to the assigned centroid
    std::vector<double> inertia_history;  // per Lloyd iteration, non-increasing
    std::size_t iterations = 0;
    bool converged = false;
};

// k-means++ seeding followed by Lloyd iterations until the assignment is
// stable or `max_iters` is reached. A cluster that goes empty is re-seeded with
// the point farthest from its centroid. Throws UsageError if K is 0 or exceeds
// the number of points.
KMeansResult kmeans(const DenseMatrix& points, std::size_t K, std::uint64_t seed,
                    std::size_t max_iters = 100);

}  // namespace modforge
