#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "modforge/dense_matrix.hpp"

namespace modforge {

struct PCAOptions {
    double tolerance = 1e-9;  // relative change of the Ritz values between sweeps
    std::size_t max_iters = 1000;
    std::uint64_t seed = 0;   // starting block of the subspace iteration
};

struct PCAModel {
    DenseMatrix components;                // dims x M, orthonormal rows
    std::vector<double> mean;              // length M
    std::vector<double> explained_variance;  // length dims, descending (population covariance)
    std::size_t iterations = 0;
    bool converged = false;

    // (rows - mean) * components^T
    DenseMatrix transform(const DenseMatrix& rows) const;
};

struct PCAResult {
    PCAModel model;
    DenseMatrix reduced;  // N x dims
};

// Principal components of the rows of an N x M matrix via orthogonal (subspace)
// iteration with Rayleigh-Ritz on the covariance. Throws UsageError unless
// 1 <= dims <= min(N, M).
PCAResult pca_fit_transform(const DenseMatrix& rows, std::size_t dims,
                            const PCAOptions& options = {});

}  // namespace modforge
