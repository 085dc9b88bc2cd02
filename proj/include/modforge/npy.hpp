#pragma once

#include <filesystem>
#include <iosfwd>

#include "modforge/dense_matrix.hpp"

namespace modforge::npy {

enum class Dtype { f32, f64 };

struct Matrix2D {
    DenseMatrix values;  // always widened to 64-bit
    Dtype source_dtype = Dtype::f64;
};

// Reads a 2-D little-endian f4/f8 C-order array in the NumPy ".npy" container
// (format versions 1.0 and 2.0). Throws DataError on any format violation.
Matrix2D read(std::istream& in);
Matrix2D read(const std::filesystem::path& path);

// Writes format version 1.0 with the header padded to a 64-byte boundary.
// f32 output narrows each value; f64 output is bit-exact.
void write(std::ostream& out, const DenseMatrix& values, Dtype dtype = Dtype::f64);
void write(const std::filesystem::path& path, const DenseMatrix& values,
           Dtype dtype = Dtype::f64);

}  // namespace modforge::npy
