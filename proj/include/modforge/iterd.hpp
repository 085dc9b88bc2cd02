#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string_view>
#include <vector>

#include "modforge/dense_matrix.hpp"
#include "modforge/matrix_io.hpp"
#include "modforge/objective.hpp"

namespace modforge {

enum class InitMode { random_balanced, kmeans_pca };

std::string_view to_string(InitMode mode);

struct IterDConfig {
    std::size_t K = 0;
    InitMode init = InitMode::random_balanced;
    std::size_t restarts = 4;
    std::size_t max_iters = 100;
    std::uint64_t seed = 42;
    std::size_t pca_dims = 50;  // capped at min(N, M)
    std::size_t threads = 1;    // restart-level parallelism

    // Throws UsageError for zero-valued counts and ConstraintError if K > min(N, M).
    void validate(std::size_t num_neurons, std::size_t num_samples) const;
};

struct IterationRecord {
    std::size_t t = 0;  // 1-based sweep index
    ObjectiveValue value;
    std::size_t reassignments = 0;
    std::size_t neuron_moves = 0;
    std::size_t sample_moves = 0;
};

enum class RunStatus { converged, max_iters_reached };

std::string_view to_string(RunStatus status);

struct IterDTrace {
    ObjectiveValue initial;
    std::vector<IterationRecord> iterations;
    RunStatus status = RunStatus::max_iters_reached;
};

struct RunResult {
    Partition partition;
    ObjectiveValue value;
    IterDTrace trace;
};

struct DiscoverResult {
    Partition partition;
    ObjectiveValue value;
    IterDTrace trace;                // of the winning restart
    std::size_t best_restart = 0;
    std::vector<double> restart_L;   // final L of every restart
};

using IterationLogger = std::function<void(std::size_t restart, const IterationRecord&)>;

// Initial partition F_0 for one restart. `restart` selects the derived seed.
Partition init_partition(const DenseMatrix& a, const IterDConfig& cfg, std::size_t restart = 0);
// Requires a normalized matrix.
Partition init_partition(const ActivationMatrix& m, const IterDConfig& cfg);

// Re-establishes non-emptiness on both axes: each empty module takes, from the
// currently largest module on that axis, the element whose move maximizes the
// objective over the non-empty blocks (ties: lowest index). Neurons first.
void repair_empty_modules(const DenseMatrix& a, Partition& p);

// One full sweep: every neuron in ascending order, then every sample, each
// moved to its argmax target immediately. Ties keep the current module, then
// prefer the lowest module id. `state` is rebuilt from scratch at the end.
IterationRecord run_iteration(const DenseMatrix& a, Partition& p, ObjectiveState& state);

// Sweeps from `initial` until a sweep makes no reassignment or max_iters.
RunResult run_iterd(const DenseMatrix& a, Partition initial, std::size_t max_iters,
                    const std::function<void(const IterationRecord&)>& log = {});

// Runs cfg.restarts seeded restarts and keeps the highest final L (ties: lowest
// restart index). Operates on raw values; the ActivationMatrix overload
// requires normalized input.
DiscoverResult discover(const DenseMatrix& a, const IterDConfig& cfg,
                        const IterationLogger& log = {});
DiscoverResult discover(const ActivationMatrix& m, const IterDConfig& cfg,
                        const IterationLogger& log = {});

// Restarts from caller-provided initial partitions (e.g. exhaustive enumeration).
DiscoverResult discover_from(const DenseMatrix& a, std::span<const Partition> initials,
                             std::size_t max_iters, std::size_t threads = 1);

}  // namespace modforge
