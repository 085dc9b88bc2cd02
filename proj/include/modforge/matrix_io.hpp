#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "modforge/dense_matrix.hpp"

namespace modforge {

// Identity of one FFN neuron. (layer, index_in_layer) pairs are unique.
struct NeuronMeta {
    std::uint32_t layer = 0;
    std::uint32_t index_in_layer = 0;
    friend bool operator==(const NeuronMeta&, const NeuronMeta&) = default;
};

struct SampleMeta {
    std::string id;
    std::optional<std::string> label;
    std::optional<std::int64_t> token_count;  // >= 1 when present
    friend bool operator==(const SampleMeta&, const SampleMeta&) = default;
};

struct MatrixMeta {
    std::vector<NeuronMeta> neurons;
    std::vector<SampleMeta> samples;
    bool normalized = false;
};

// Per-neuron z-score statistics. std is the population standard deviation and
// is recorded as exactly 0 for dead (constant) neurons.
struct NormStats {
    std::vector<double> mean;
    std::vector<double> std;
};

// N x M activations: row i is neuron i, column j is sample j.
// Immutable once constructed; the constructor enforces every invariant.
class ActivationMatrix {
public:
    // Throws DataError when dimensions, metadata or values are invalid, or when
    // `normalized` is set but some row is neither standardized nor all zero.
    ActivationMatrix(DenseMatrix values, std::vector<NeuronMeta> neurons,
                     std::vector<SampleMeta> samples, bool normalized = false);

    // Neurons get (layer 0, index i); samples get ids "s0", "s1", ... and no label.
    static ActivationMatrix with_default_meta(DenseMatrix values, bool normalized = false);

    const DenseMatrix& values() const { return values_; }
    const std::vector<NeuronMeta>& neurons() const { return neurons_; }
    const std::vector<SampleMeta>& samples() const { return samples_; }
    bool normalized() const { return normalized_; }
    std::size_t num_neurons() const { return values_.rows(); }
    std::size_t num_samples() const { return values_.cols(); }

    bool has_any_label() const;
    bool has_all_labels() const;

private:
    DenseMatrix values_;
    std::vector<NeuronMeta> neurons_;
    std::vector<SampleMeta> samples_;
    bool normalized_ = false;
};

// Tolerance on per-row mean and std used to validate normalized matrices.
inline constexpr double kNormalizedTolerance = 1e-6;

MatrixMeta read_metadata(const std::filesystem::path& meta_path);
void write_metadata(const std::filesystem::path& meta_path, const MatrixMeta& meta);

// Loads an .npy payload (f32 or f64) plus its JSON sidecar.
ActivationMatrix load_matrix(const std::filesystem::path& matrix_path,
                             const std::filesystem::path& meta_path);

// Writes the payload as f64 so a reload is bit-exact. Both files are written
// through a temporary and renamed into place.
void save_matrix(const ActivationMatrix& m, const std::filesystem::path& matrix_path,
                 const std::filesystem::path& meta_path);

// Row-wise (A - mean) / std with population std. Constant rows become zeros.
// Throws UsageError if `m` is already normalized or has fewer than 2 samples.
std::pair<ActivationMatrix, NormStats> zscore_normalize(const ActivationMatrix& m);

}  // namespace modforge
