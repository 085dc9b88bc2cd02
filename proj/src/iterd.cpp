#include "modforge/iterd.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <numeric>
#include <optional>
#include <string>
#include <thread>

#include "modforge/error.hpp"
#include "modforge/kmeans.hpp"
#include "modforge/pca.hpp"
#include "modforge/rng.hpp"

namespace modforge {

namespace {

// A candidate must beat the current L by this relative margin to be committed,
// so rounding noise never counts as an improvement.
constexpr double kImprovementEps = 1e-12;
constexpr std::uint64_t kPcaStream = 0xFFFFFFFFULL;

bool improves(double candidate, double current) {
    return candidate > current + kImprovementEps * std::max(1.0, std::abs(current));
}

// One greedy pass over an axis. `sums` row i holds the element's module sums
// over the fixed axis.
std::size_t sweep_axis(Axis axis, Partition& p, ObjectiveState& state, const DenseMatrix& sums) {
    const std::size_t count = sums.rows();
    auto& assign = axis == Axis::neuron ? p.neuron_assign : p.sample_assign;
    const auto& sizes = axis == Axis::neuron ? state.n : state.m;
    double current = evaluate(state).L;
    std::size_t moves = 0;

    for (std::size_t e = 0; e < count; ++e) {
        const ModuleId from = assign[e];
        if (sizes[from] < 2) continue;
        const auto row = sums.row(e);
        std::optional<MoveDelta> best;
        for (ModuleId k = 0; k < p.K; ++k) {
            if (k == from) continue;
            MoveDelta d = axis == Axis::neuron ? eval_neuron_move(state, p, e, k, row)
                                               : eval_sample_move(state, p, e, k, row);
            if (!d.valid) continue;
            if (!best || d.L_after > best->L_after) best = d;
        }
        if (best && improves(best->L_after, current)) {
            commit_move(state, p, *best);
            current = best->L_after;
            ++moves;
        }
    }
    return moves;
}

double partial_objective(std::span<const double> w, std::span<const std::size_t> n,
                         std::span<const std::size_t> m) {
    double sum_w = 0.0, sum_p = 0.0, sum_inv = 0.0;
    std::size_t blocks = 0;
    for (std::size_t k = 0; k < w.size(); ++k) {
        if (n[k] == 0 || m[k] == 0) continue;
        const double prod = static_cast<double>(n[k]) * static_cast<double>(m[k]);
        sum_w += w[k];
        sum_p += prod;
        sum_inv += 1.0 / prod;
        ++blocks;
    }
    if (blocks == 0) return -std::numeric_limits<double>::infinity();
    return (sum_w / sum_p) * (static_cast<double>(blocks) / sum_inv);
}

std::vector<double> block_sums(const DenseMatrix& a, const Partition& p) {
    std::vector<double> w(p.K, 0.0);
    for (std::size_t u = 0; u < a.rows(); ++u) {
        const ModuleId k = p.neuron_assign[u];
        const auto row = a.row(u);
        for (std::size_t s = 0; s < row.size(); ++s)
            if (p.sample_assign[s] == k) w[k] += row[s];
    }
    return w;
}

// Fills one empty module on `axis`; returns false when that axis has none.
bool repair_one(const DenseMatrix& a, Partition& p, Axis axis) {
    auto& assign = axis == Axis::neuron ? p.neuron_assign : p.sample_assign;
    auto n = p.neuron_counts();
    auto m = p.sample_counts();
    auto& sizes = axis == Axis::neuron ? n : m;

    const auto empty_it = std::find(sizes.begin(), sizes.end(), 0u);
    if (empty_it == sizes.end()) return false;
    const auto target = static_cast<ModuleId>(empty_it - sizes.begin());
    const auto donor = static_cast<ModuleId>(std::max_element(sizes.begin(), sizes.end()) - sizes.begin());
    if (sizes[donor] < 2) throw ConstraintError("cannot repair empty module: K exceeds axis size");

    const auto w = block_sums(a, p);
    std::vector<double> element_sums(p.K);
    std::size_t best_element = assign.size();
    double best_score = -std::numeric_limits<double>::infinity();
    for (std::size_t e = 0; e < assign.size(); ++e) {
        if (assign[e] != donor) continue;
        if (axis == Axis::neuron)
            neuron_module_sums(a, p, e, element_sums);
        else
            sample_module_sums(a, p, e, element_sums);
        auto w2 = w;
        w2[donor] -= element_sums[donor];
        w2[target] += element_sums[target];
        --sizes[donor];
        ++sizes[target];
        const double score = partial_objective(w2, n, m);
        ++sizes[donor];
        --sizes[target];
        if (best_element == assign.size() || score > best_score) {
            best_score = score;
            best_element = e;
        }
    }
    assign[best_element] = target;
    return true;
}

Partition random_balanced(std::size_t n, std::size_t m, std::size_t k, std::uint64_t seed) {
    Rng rng(seed);
    Partition p;
    p.K = k;
    auto deal = [&](std::size_t count) {
        std::vector<std::size_t> order(count);
        std::iota(order.begin(), order.end(), 0);
        rng.shuffle(std::span<std::size_t>(order));
        std::vector<ModuleId> assign(count);
        for (std::size_t i = 0; i < count; ++i) assign[order[i]] = static_cast<ModuleId>(i % k);
        return assign;
    };
    p.neuron_assign = deal(n);
    p.sample_assign = deal(m);
    return p;
}

std::size_t effective_pca_dims(const DenseMatrix& a, const IterDConfig& cfg) {
    return std::min({cfg.pca_dims, a.rows(), a.cols()});
}

DenseMatrix reduce_rows(const DenseMatrix& a, const IterDConfig& cfg) {
    PCAOptions opts;
    opts.seed = mix_seed(cfg.seed, kPcaStream);
    return pca_fit_transform(a, effective_pca_dims(a, cfg), opts).reduced;
}

Partition kmeans_partition(const DenseMatrix& a, const DenseMatrix& reduced, std::size_t k,
                           std::uint64_t seed) {
    Partition p;
    p.K = k;
    p.neuron_assign = kmeans(reduced, k, seed).assignment;
    p.sample_assign.assign(a.cols(), 0);

    const auto n = p.neuron_counts();
    const DenseMatrix c = all_sample_module_sums(a, p);
    for (std::size_t s = 0; s < a.cols(); ++s) {
        ModuleId best = 0;
        double best_aff = -std::numeric_limits<double>::infinity();
        for (ModuleId j = 0; j < k; ++j) {
            if (n[j] == 0) continue;
            const double aff = c(s, j) / static_cast<double>(n[j]);
            if (aff > best_aff) {
                best_aff = aff;
                best = j;
            }
        }
        p.sample_assign[s] = best;
    }
    repair_empty_modules(a, p);
    return p;
}

Partition init_with(const DenseMatrix& a, const IterDConfig& cfg, std::size_t restart,
                    const DenseMatrix* reduced) {
    const std::uint64_t seed = mix_seed(cfg.seed, restart);
    switch (cfg.init) {
        case InitMode::random_balanced:
            return random_balanced(a.rows(), a.cols(), cfg.K, seed);
        case InitMode::kmeans_pca: {
            if (reduced) return kmeans_partition(a, *reduced, cfg.K, seed);
            const DenseMatrix own = reduce_rows(a, cfg);
            return kmeans_partition(a, own, cfg.K, seed);
        }
    }
    throw UsageError("unknown init mode");
}

// Runs `job(i)` for i in [0, count) on up to `threads` workers and rethrows the
// first failure.
template <typename Job>
void parallel_for(std::size_t count, std::size_t threads, Job&& job) {
    threads = std::max<std::size_t>(1, std::min(threads, count));
    if (threads == 1) {
        for (std::size_t i = 0; i < count; ++i) job(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) {
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < count; i = next++) {
                try {
                    job(i);
                } catch (...) {
                    std::lock_guard lock(failure_mutex);
                    if (!failure) failure = std::current_exception();
                }
            }
        });
    }
    for (auto& th : pool) th.join();
    if (failure) std::rethrow_exception(failure);
}

DiscoverResult pick_best(std::vector<RunResult>& runs) {
    DiscoverResult out;
    out.restart_L.reserve(runs.size());
    std::size_t best = 0;
    for (std::size_t r = 0; r < runs.size(); ++r) {
        out.restart_L.push_back(runs[r].value.L);
        if (runs[r].value.L > runs[best].value.L) best = r;
    }
    out.best_restart = best;
    out.partition = std::move(runs[best].partition);
    out.value = runs[best].value;
    out.trace = std::move(runs[best].trace);
    return out;
}

}  // namespace

std::string_view to_string(InitMode mode) {
    return mode == InitMode::random_balanced ? "random_balanced" : "kmeans_pca";
}

std::string_view to_string(RunStatus status) {
    return status == RunStatus::converged ? "converged" : "max_iters_reached";
}

void IterDConfig::validate(std::size_t num_neurons, std::size_t num_samples) const {
    if (K == 0) throw UsageError("K must be positive");
    if (restarts == 0) throw UsageError("restarts must be positive");
    if (max_iters == 0) throw UsageError("max_iters must be positive");
    if (pca_dims == 0) throw UsageError("pca_dims must be positive");
    if (K > std::min(num_neurons, num_samples))
        throw ConstraintError("K=" + std::to_string(K) + " exceeds min(N, M) = " +
                              std::to_string(std::min(num_neurons, num_samples)));
}

Partition init_partition(const DenseMatrix& a, const IterDConfig& cfg, std::size_t restart) {
    cfg.validate(a.rows(), a.cols());
    return init_with(a, cfg, restart, nullptr);
}

Partition init_partition(const ActivationMatrix& m, const IterDConfig& cfg) {
    if (!m.normalized()) throw UsageError("initialization requires a normalized matrix");
    return init_partition(m.values(), cfg, 0);
}

void repair_empty_modules(const DenseMatrix& a, Partition& p) {
    if (p.K == 0 || p.K > std::min(a.rows(), a.cols()))
        throw ConstraintError("K=" + std::to_string(p.K) + " exceeds min(N, M)");
    while (repair_one(a, p, Axis::neuron)) {
    }
    while (repair_one(a, p, Axis::sample)) {
    }
}

IterationRecord run_iteration(const DenseMatrix& a, Partition& p, ObjectiveState& state) {
    IterationRecord rec;
    // neuron sums depend only on the sample partition, which Step 1 holds fixed
    rec.neuron_moves = sweep_axis(Axis::neuron, p, state, all_neuron_module_sums(a, p));
    // sample sums use the neuron partition just produced by Step 1
    rec.sample_moves = sweep_axis(Axis::sample, p, state, all_sample_module_sums(a, p));
    rec.reassignments = rec.neuron_moves + rec.sample_moves;
    state = build_state(a, p);
    rec.value = evaluate(state);
    return rec;
}

RunResult run_iterd(const DenseMatrix& a, Partition initial, std::size_t max_iters,
                    const std::function<void(const IterationRecord&)>& log) {
    if (max_iters == 0) throw UsageError("max_iters must be positive");
    RunResult out;
    out.partition = std::move(initial);
    ObjectiveState state = build_state(a, out.partition);
    out.trace.initial = evaluate(state);
    out.value = out.trace.initial;
    out.trace.status = RunStatus::max_iters_reached;
    for (std::size_t t = 1; t <= max_iters; ++t) {
        IterationRecord rec = run_iteration(a, out.partition, state);
        rec.t = t;
        out.trace.iterations.push_back(rec);
        out.value = rec.value;
        if (log) log(rec);
        if (rec.reassignments == 0) {
            out.trace.status = RunStatus::converged;
            break;
        }
    }
    return out;
}

DiscoverResult discover(const DenseMatrix& a, const IterDConfig& cfg, const IterationLogger& log) {
    cfg.validate(a.rows(), a.cols());
    std::optional<DenseMatrix> reduced;
    if (cfg.init == InitMode::kmeans_pca) reduced = reduce_rows(a, cfg);

    std::vector<RunResult> runs(cfg.restarts);
    std::mutex log_mutex;
    parallel_for(cfg.restarts, cfg.threads, [&](std::size_t r) {
        Partition init = init_with(a, cfg, r, reduced ? &*reduced : nullptr);
        std::function<void(const IterationRecord&)> per_run;
        if (log)
            per_run = [&, r](const IterationRecord& rec) {
                std::lock_guard lock(log_mutex);
                log(r, rec);
            };
        runs[r] = run_iterd(a, std::move(init), cfg.max_iters, per_run);
    });
    return pick_best(runs);
}

DiscoverResult discover(const ActivationMatrix& m, const IterDConfig& cfg, const IterationLogger& log) {
    if (!m.normalized()) throw UsageError("discover requires a normalized matrix");
    return discover(m.values(), cfg, log);
}

DiscoverResult discover_from(const DenseMatrix& a, std::span<const Partition> initials,
                             std::size_t max_iters, std::size_t threads) {
    if (initials.empty()) throw UsageError("discover_from needs at least one initial partition");
    std::vector<RunResult> runs(initials.size());
    parallel_for(initials.size(), threads,
                 [&](std::size_t r) { runs[r] = run_iterd(a, initials[r], max_iters); });
    return pick_best(runs);
}

}  // namespace modforge
