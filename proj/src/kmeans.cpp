#include "modforge/kmeans.hpp"

#include <algorithm>
#include <limits>
#include <string>

#include "modforge/error.hpp"
#include "modforge/rng.hpp"

namespace modforge {

namespace {

double squared_distance(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

DenseMatrix plus_plus_seeds(const DenseMatrix& points, std::size_t k, Rng& rng) {
    const std::size_t n = points.rows();
    DenseMatrix centroids(k, points.cols());
    std::vector<bool> chosen(n, false);
    std::vector<double> d2(n, std::numeric_limits<double>::infinity());

    std::size_t pick = static_cast<std::size_t>(rng.below(n));
    for (std::size_t c = 0;; ++c) {
        chosen[pick] = true;
        std::copy(points.row(pick).begin(), points.row(pick).end(), centroids.row(c).begin());
        if (c + 1 == k) break;

        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            d2[i] = std::min(d2[i], squared_distance(points.row(i), centroids.row(c)));
            total += d2[i];
        }
        if (total > 0.0) {
            const double target = rng.uniform() * total;
            double acc = 0.0;
            pick = n;
            for (std::size_t i = 0; i < n; ++i) {
                if (d2[i] == 0.0) continue;
                acc += d2[i];
                pick = i;
                if (acc > target) break;
            }
        } else {
            // every point coincides with a centroid: take the first unused index
            pick = 0;
            while (chosen[pick]) ++pick;
        }
    }
    return centroids;
}

}  // namespace

KMeansResult kmeans(const DenseMatrix& points, std::size_t K, std::uint64_t seed,
                    std::size_t max_iters) {
    const std::size_t n = points.rows(), dims = points.cols();
    if (K == 0) throw UsageError("k-means: K must be positive");
    if (K > n)
        throw UsageError("k-means: K=" + std::to_string(K) + " exceeds the number of points (" +
                         std::to_string(n) + ")");
    if (max_iters == 0) throw UsageError("k-means: max_iters must be positive");

    Rng rng(seed);
    KMeansResult res;
    res.centroids = plus_plus_seeds(points, K, rng);
    res.assignment.assign(n, 0);
    std::vector<double> dist(n, 0.0);
    std::vector<std::size_t> sizes(K);

    std::vector<ModuleId> previous;
    for (std::size_t it = 0; it < max_iters; ++it) {
        previous = res.assignment;
        std::fill(sizes.begin(), sizes.end(), 0);
        for (std::size_t i = 0; i < n; ++i) {
            ModuleId best = 0;
            double best_d = std::numeric_limits<double>::infinity();
            for (std::size_t c = 0; c < K; ++c) {
                const double d = squared_distance(points.row(i), res.centroids.row(c));
                if (d < best_d) {
                    best_d = d;
                    best = static_cast<ModuleId>(c);
                }
            }
            res.assignment[i] = best;
            dist[i] = best_d;
            ++sizes[best];
        }

        for (std::size_t c = 0; c < K; ++c) {
            if (sizes[c] != 0) continue;
            std::size_t far = n;
            for (std::size_t i = 0; i < n; ++i)
                if (sizes[res.assignment[i]] >= 2 && (far == n || dist[i] > dist[far])) far = i;
            --sizes[res.assignment[far]];
            res.assignment[far] = static_cast<ModuleId>(c);
            ++sizes[c];
            dist[far] = 0.0;
            std::copy(points.row(far).begin(), points.row(far).end(), res.centroids.row(c).begin());
        }
        const bool changed = it == 0 || res.assignment != previous;

        double inertia = 0.0;
        for (double d : dist) inertia += d;
        res.inertia_history.push_back(inertia);
        res.iterations = it + 1;

        // centroid update
        DenseMatrix sums(K, dims);
        for (std::size_t i = 0; i < n; ++i) {
            auto dst = sums.row(res.assignment[i]);
            const auto src = points.row(i);
            for (std::size_t d = 0; d < dims; ++d) dst[d] += src[d];
        }
        for (std::size_t c = 0; c < K; ++c)
            for (std::size_t d = 0; d < dims; ++d)
                res.centroids(c, d) = sums(c, d) / static_cast<double>(sizes[c]);

        if (!changed) {
            res.converged = true;
            break;
        }
    }

    res.inertia = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        res.inertia += squared_distance(points.row(i), res.centroids.row(res.assignment[i]));
    return res;
}

}  // namespace modforge
