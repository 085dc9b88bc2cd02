#pragma once

#include <vector>

#include "modforge/dense_matrix.hpp"

namespace modforge::detail {

struct SymmetricEigen {
    std::vector<double> values;  // descending
    DenseMatrix vectors;         // column i is the eigenvector of values[i]
};

// Cyclic Jacobi rotations on a small dense symmetric matrix.
SymmetricEigen jacobi_eigen(DenseMatrix a);

}  // namespace modforge::detail
