#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "modforge/dense_matrix.hpp"

namespace modforge {

using ModuleId = std::uint32_t;

// Dual partition F = {(S_k, U_k)}. Completeness and exclusivity hold because
// both assignments are total functions; non-emptiness is checked by validate().
struct Partition {
    std::size_t K = 0;
    std::vector<ModuleId> neuron_assign;  // length N, entries in [0, K)
    std::vector<ModuleId> sample_assign;  // length M, entries in [0, K)

    // Throws ConstraintError naming the first violated constraint.
    void validate(std::size_t num_neurons, std::size_t num_samples) const;

    std::vector<std::size_t> neuron_counts() const;
    std::vector<std::size_t> sample_counts() const;

    friend bool operator==(const Partition&, const Partition&) = default;
};

struct ObjectiveValue {
    double xi = 0.0;       // activation modularity
    double balance = 0.0;  // harmonic-mean balance score B
    double L = 0.0;        // xi * balance
};

// Per-module aggregates of the objective. Single writer; see commit_move().
struct ObjectiveState {
    std::vector<double> W;        // within-block sums
    std::vector<std::size_t> n;   // |U_k|
    std::vector<std::size_t> m;   // |S_k|
    double sum_W = 0.0;
    double sum_P = 0.0;           // sum_k n_k m_k
    double sum_invP = 0.0;        // sum_k 1 / (n_k m_k)
    std::uint64_t version = 0;    // bumped by every non-trivial commit

    std::size_t K() const { return W.size(); }
};

enum class Axis : std::uint8_t { neuron, sample };

struct MoveDelta {
    Axis kind = Axis::neuron;
    std::size_t element = 0;
    ModuleId from_module = 0;
    ModuleId to_module = 0;
    double L_after = 0.0;
    bool valid = true;  // false when the move would empty from_module

    // Module sums of the moving element over the opposite axis, for from and to.
    double sum_from = 0.0;
    double sum_to = 0.0;
    std::uint64_t state_version = 0;
};

// O(N*M). Throws ConstraintError if the partition is invalid for the matrix.
ObjectiveState build_state(const DenseMatrix& a, const Partition& p);

ObjectiveValue evaluate(const ObjectiveState& state);

inline ObjectiveValue evaluate(const DenseMatrix& a, const Partition& p) {
    return evaluate(build_state(a, p));
}

// r[k] = sum over samples s in S_k of A[u, s]. `out` has length K.
void neuron_module_sums(const DenseMatrix& a, const Partition& p, std::size_t u,
                        std::span<double> out);
// c[k] = sum over neurons u in U_k of A[u, s]. `out` has length K.
void sample_module_sums(const DenseMatrix& a, const Partition& p, std::size_t s,
                        std::span<double> out);

// All rows at once: N x K matrix of neuron_module_sums, one pass over A.
DenseMatrix all_neuron_module_sums(const DenseMatrix& a, const Partition& p);
// M x K matrix of sample_module_sums, one pass over A.
DenseMatrix all_sample_module_sums(const DenseMatrix& a, const Partition& p);

// Candidate evaluation from precomputed module sums (length K). Pure; O(1).
// A move that would empty its source module comes back with valid = false.
MoveDelta eval_neuron_move(const ObjectiveState& state, const Partition& p, std::size_t u,
                           ModuleId target, std::span<const double> row_sums);
MoveDelta eval_sample_move(const ObjectiveState& state, const Partition& p, std::size_t s,
                           ModuleId target, std::span<const double> col_sums);

// Same, computing the module sums on demand (O(M) resp. O(N)).
MoveDelta eval_neuron_move(const ObjectiveState& state, const DenseMatrix& a,
                           const Partition& p, std::size_t u, ModuleId target);
MoveDelta eval_sample_move(const ObjectiveState& state, const DenseMatrix& a,
                           const Partition& p, std::size_t s, ModuleId target);

// Applies a delta produced against the current state. Throws Error on a stale
// or invalid delta. A stay move (from == to) leaves everything untouched.
void commit_move(ObjectiveState& state, Partition& p, const MoveDelta& delta);

}  // namespace modforge
