#include "modforge/pca.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "jacobi.hpp"
#include "modforge/error.hpp"
#include "modforge/rng.hpp"

namespace modforge {

namespace {

// Above this width the covariance is applied implicitly through the centered
// data instead of being materialized (M^2 doubles).
constexpr std::size_t kExplicitCovarianceMaxDim = 2048;

double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
    for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

// Applies the population covariance of the centered rows to a block of row vectors.
class CovarianceOperator {
public:
    explicit CovarianceOperator(DenseMatrix centered) : x_(std::move(centered)) {
        const std::size_t m = x_.cols();
        if (m <= kExplicitCovarianceMaxDim) {
            cov_ = DenseMatrix(m, m);
            for (std::size_t r = 0; r < x_.rows(); ++r) {
                const auto row = x_.row(r);
                for (std::size_t i = 0; i < m; ++i) {
                    const double xi = row[i];
                    if (xi == 0.0) continue;
                    double* dst = &cov_(i, 0);
                    for (std::size_t j = i; j < m; ++j) dst[j] += xi * row[j];
                }
            }
            const double inv_n = 1.0 / static_cast<double>(x_.rows());
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = i; j < m; ++j) {
                    cov_(i, j) *= inv_n;
                    cov_(j, i) = cov_(i, j);
                }
            x_ = DenseMatrix();
        }
    }

    DenseMatrix apply(const DenseMatrix& q) const {
        const std::size_t b = q.rows(), m = q.cols();
        DenseMatrix z(b, m);
        if (!cov_.empty()) {
            for (std::size_t i = 0; i < m; ++i) {
                const auto crow = cov_.row(i);
                for (std::size_t r = 0; r < b; ++r) {
                    const double qi = q(r, i);
                    if (qi != 0.0) axpy(qi, crow, z.row(r));
                }
            }
            return z;
        }
        const double inv_n = 1.0 / static_cast<double>(x_.rows());
        for (std::size_t n = 0; n < x_.rows(); ++n) {
            const auto xrow = x_.row(n);
            for (std::size_t r = 0; r < b; ++r) axpy(dot(xrow, q.row(r)) * inv_n, xrow, z.row(r));
        }
        return z;
    }

private:
    DenseMatrix x_;
    DenseMatrix cov_;
};

// Modified Gram-Schmidt with one reorthogonalization pass. Columns that vanish
// (rank deficiency) are replaced by fresh random directions.
void orthonormalize_rows(DenseMatrix& q, Rng& rng) {
    const std::size_t b = q.rows();
    for (std::size_t r = 0; r < b; ++r) {
        auto v = q.row(r);
        for (int attempt = 0;; ++attempt) {
            const double before = std::sqrt(dot(v, v));
            for (int pass = 0; pass < 2; ++pass)
                for (std::size_t s = 0; s < r; ++s) axpy(-dot(q.row(s), v), q.row(s), v);
            const double norm = std::sqrt(dot(v, v));
            if (norm > 1e-10 * before && norm > 0.0) {
                for (double& x : v) x /= norm;
                break;
            }
            if (attempt > 16) throw Error("PCA: failed to complete an orthonormal basis");
            for (double& x : v) x = rng.normal();
        }
    }
}

// rows of the result = V^T * rows of q  (V is b x b, columns are eigenvectors)
DenseMatrix rotate(const DenseMatrix& v, const DenseMatrix& q) {
    DenseMatrix out(q.rows(), q.cols());
    for (std::size_t c = 0; c < v.cols(); ++c)
        for (std::size_t r = 0; r < q.rows(); ++r) {
            const double w = v(r, c);
            if (w != 0.0) axpy(w, q.row(r), out.row(c));
        }
    return out;
}

}  // namespace

DenseMatrix PCAModel::transform(const DenseMatrix& rows) const {
    if (rows.cols() != mean.size())
        throw UsageError("PCA transform: expected " + std::to_string(mean.size()) + " columns");
    DenseMatrix out(rows.rows(), components.rows());
    std::vector<double> centered(mean.size());
    for (std::size_t n = 0; n < rows.rows(); ++n) {
        const auto row = rows.row(n);
        for (std::size_t j = 0; j < centered.size(); ++j) centered[j] = row[j] - mean[j];
        for (std::size_t d = 0; d < components.rows(); ++d)
            out(n, d) = dot(centered, components.row(d));
    }
    return out;
}

PCAResult pca_fit_transform(const DenseMatrix& rows, std::size_t dims, const PCAOptions& options) {
    const std::size_t n = rows.rows(), m = rows.cols();
    if (dims == 0 || dims > std::min(n, m))
        throw UsageError("PCA dims must be in [1, min(N, M)] = [1, " +
                         std::to_string(std::min(n, m)) + "], got " + std::to_string(dims));

    PCAModel model;
    model.mean.assign(m, 0.0);
    for (std::size_t r = 0; r < n; ++r) axpy(1.0, rows.row(r), model.mean);
    for (double& x : model.mean) x /= static_cast<double>(n);

    DenseMatrix centered = rows;
    for (std::size_t r = 0; r < n; ++r) axpy(-1.0, model.mean, centered.row(r));
    const CovarianceOperator cov(std::move(centered));

    // Oversampled block: the trailing directions speed up convergence of the leading ones.
    const std::size_t block = std::min(m, dims + std::max<std::size_t>(10, dims / 2));
    Rng rng(options.seed);
    DenseMatrix q(block, m);
    for (double& x : q.flat()) x = rng.normal();
    orthonormalize_rows(q, rng);

    std::vector<double> previous;
    for (std::size_t it = 1;; ++it) {
        const DenseMatrix z = cov.apply(q);
        DenseMatrix h(block, block);
        for (std::size_t i = 0; i < block; ++i)
            for (std::size_t j = i; j < block; ++j) {
                const double v = 0.5 * (dot(q.row(i), z.row(j)) + dot(q.row(j), z.row(i)));
                h(i, j) = v;
                h(j, i) = v;
            }
        const auto eig = detail::jacobi_eigen(std::move(h));
        DenseMatrix ritz = rotate(eig.vectors, q);

        bool converged = false;
        if (!previous.empty()) {
            const double scale = std::max(std::abs(eig.values[0]), 1e-300);
            double change = 0.0;
            for (std::size_t d = 0; d < dims; ++d)
                change = std::max(change, std::abs(eig.values[d] - previous[d]));
            converged = change <= options.tolerance * scale;
        }
        previous.assign(eig.values.begin(), eig.values.end());

        if (converged || it >= options.max_iters) {
            model.iterations = it;
            model.converged = converged;
            model.components = DenseMatrix(dims, m);
            for (std::size_t d = 0; d < dims; ++d) {
                std::copy(ritz.row(d).begin(), ritz.row(d).end(), model.components.row(d).begin());
                model.explained_variance.push_back(std::max(0.0, eig.values[d]));
            }
            break;
        }
        q = rotate(eig.vectors, z);
        orthonormalize_rows(q, rng);
    }

    PCAResult result{std::move(model), {}};
    result.reduced = result.model.transform(rows);
    return result;
}

}  // namespace modforge
