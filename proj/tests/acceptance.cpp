// Acceptance suite: one PASS/FAIL line per primary criterion.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <functional>
#include <limits>
#include <string>
#include <thread>
#include <vector>

#include "modforge/iterd.hpp"
#include "modforge/metrics.hpp"
#include "modforge/synth.hpp"
#include "oracles.hpp"

using namespace modforge;
using Clock = std::chrono::steady_clock;

namespace {

struct Verdict {
    bool pass;
    std::string detail;
};

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

std::size_t worker_count() { return std::max(1u, std::thread::hardware_concurrency()); }

bool trace_monotone(const IterDTrace& trace) {
    double prev = trace.initial.L;
    for (const auto& rec : trace.iterations) {
        if (rec.value.L < prev - 1e-12 * std::max(1.0, std::abs(prev))) return false;
        prev = rec.value.L;
    }
    return true;
}

Verdict objective_correctness() {
    const auto t0 = Clock::now();
    Rng rng(20240601);
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t n = 3 + rng.below(8), m = 3 + rng.below(8), K = 2 + rng.below(2);
        const auto a = oracle::random_matrix(n, m, 7000 + trial, -2, 2);
        const auto p = oracle::random_partition(n, m, K, rng);
        const auto got = evaluate(a, p);
        const auto want = oracle::objective(a, p);
        worst = std::max({worst, oracle::rel_err(got.xi, want.xi), oracle::rel_err(got.balance, want.B),
                          oracle::rel_err(got.L, want.L)});
    }
    const double secs = seconds_since(t0);
    return {worst <= 1e-12 && secs < 1.0, fmt("100 matrices, max rel err %.3g (tol 1e-12), %.3fs (limit 1s)", worst, secs)};
}

Verdict incremental_equivalence() {
    const auto t0 = Clock::now();
    Rng rng(77);
    double worst = 0.0;
    std::size_t moves = 0;
    for (int trial = 0; moves < 10000; ++trial) {
        const std::size_t n = 4 + rng.below(20), m = 4 + rng.below(20), K = 2 + rng.below(3);
        const auto a = oracle::random_matrix(n, m, 10000 + trial, -3, 3);
        Partition p = oracle::random_partition(n, m, K, rng);
        auto st = build_state(a, p);
        for (int step = 0; step < 100; ++step) {
            const bool neuron = rng.below(2) == 0;
            const std::size_t e = rng.below(neuron ? n : m);
            const auto k = static_cast<ModuleId>(rng.below(K));
            const auto d = neuron ? eval_neuron_move(st, a, p, e, k) : eval_sample_move(st, a, p, e, k);
            if (!d.valid) continue;
            Partition q = p;
            (neuron ? q.neuron_assign : q.sample_assign)[e] = k;
            worst = std::max(worst, oracle::rel_err(d.L_after, oracle::objective(a, q).L));
            ++moves;
            commit_move(st, p, d);
        }
    }
    const double secs = seconds_since(t0);
    return {worst <= 1e-9 && secs < 5.0,
            fmt("%zu moves, max rel err %.3g (tol 1e-9), %.3fs (limit 5s)", moves, worst, secs)};
}

Verdict monotonicity_termination() {
    std::size_t runs = 0, monotone = 0, converged = 0;
    for (std::uint64_t seed = 1; seed <= 5; ++seed)
        for (double sigma : {0.25, 0.5, 1.0})
            for (auto mode : {InitMode::random_balanced, InitMode::kmeans_pca}) {
                PlantedSpec spec;
                spec.seed = seed;
                spec.sigma = sigma;
                const auto z = zscore_normalize(generate(spec).first).first;
                IterDConfig cfg;
                cfg.K = spec.K;
                cfg.init = mode;
                cfg.restarts = 2;
                cfg.max_iters = 100;
                cfg.seed = seed;
                std::size_t local_runs = 0, local_ok = 0;
                // Every restart's trace is checked, not only the winner's.
                const auto p0 = init_partition(z.values(), cfg, 0);
                const auto p1 = init_partition(z.values(), cfg, 1);
                for (const auto& init : {p0, p1}) {
                    const auto run = run_iterd(z.values(), init, cfg.max_iters);
                    ++local_runs;
                    local_ok += trace_monotone(run.trace);
                    converged += run.trace.status == RunStatus::converged;
                }
                runs += local_runs;
                monotone += local_ok;
            }
    return {monotone == runs && converged == runs,
            fmt("%zu planted runs: %zu monotone, %zu converged within 100 iterations", runs, monotone, converged)};
}

Verdict global_optimality() {
    const auto t0 = Clock::now();
    const auto all = oracle::all_k2_partitions(4, 4);
    double worst = 0.0;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const auto a = oracle::random_matrix(4, 4, 400 + seed, -1, 1);
        double best = -std::numeric_limits<double>::infinity();
        for (const auto& p : all) best = std::max(best, oracle::objective(a, p).L);
        const auto res = discover_from(a, all, 100);
        worst = std::max(worst, oracle::rel_err(res.value.L, best));
    }
    const auto ex = oracle::from_rows({{2, 2, 0}, {2, 2, 0}, {0, 0, 2}});
    const auto v = evaluate(ex, Partition{2, {0, 0, 1}, {0, 0, 1}});
    const auto ex_best = discover_from(ex, oracle::all_k2_partitions(3, 3), 100).value.L;
    const bool example_ok = std::abs(v.xi - 2.0) <= 1e-12 && std::abs(v.balance - 1.6) <= 1e-12 &&
                            std::abs(v.L - 3.2) <= 1e-12 && std::abs(ex_best - 3.2) <= 1e-12;
    const double secs = seconds_since(t0);
    return {worst <= 1e-12 && example_ok && secs < 10.0,
            fmt("5 matrices x %zu partitions, max gap to L* %.3g (tol 1e-12); 3x3 example xi=%.6g B=%.6g L=%.6g, "
                "exhaustive best %.6g; %.3fs (limit 10s)",
                all.size(), worst, v.xi, v.balance, v.L, ex_best, secs)};
}

Verdict planted_recovery() {
    const std::size_t seeds = 20;
    std::vector<double> ari_n(seeds), ari_s(seeds), secs(seeds);
    std::vector<std::thread> pool;
    std::atomic<std::size_t> next{0};
    // Seeds run side by side; each run is itself single-threaded and timed alone.
    for (std::size_t w = 0; w < std::min(worker_count(), seeds); ++w)
        pool.emplace_back([&] {
            for (std::size_t i; (i = next++) < seeds;) {
                PlantedSpec spec{.N = 2000, .M = 700, .K = 7, .mu = 1.0, .sigma = 0.5, .seed = i + 1};
                const auto [raw, truth] = generate(spec);
                const auto z = zscore_normalize(raw).first;
                IterDConfig cfg;
                cfg.K = 7;
                cfg.init = InitMode::random_balanced;
                cfg.restarts = 4;
                cfg.threads = 1;
                const auto t0 = Clock::now();
                const auto res = discover(z, cfg);
                secs[i] = seconds_since(t0);
                ari_n[i] = adjusted_rand_index(res.partition.neuron_assign, truth.neuron_truth);
                ari_s[i] = adjusted_rand_index(res.partition.sample_assign, truth.sample_truth);
            }
        });
    for (auto& t : pool) t.join();
    std::size_t ok = 0;
    for (std::size_t i = 0; i < seeds; ++i) ok += ari_n[i] >= 0.95 && ari_s[i] >= 0.95;
    const double worst_n = *std::min_element(ari_n.begin(), ari_n.end());
    const double worst_s = *std::min_element(ari_s.begin(), ari_s.end());
    const double slowest = *std::max_element(secs.begin(), secs.end());
    // Concurrent seeds share the machine, so a single run is re-timed on its own.
    PlantedSpec spec{.N = 2000, .M = 700, .K = 7, .mu = 1.0, .sigma = 0.5, .seed = 1};
    const auto z = zscore_normalize(generate(spec).first).first;
    IterDConfig cfg;
    cfg.K = 7;
    cfg.threads = 1;
    const auto t0 = Clock::now();
    discover(z, cfg);
    const double solo = seconds_since(t0);
    return {ok >= 19 && solo < 10.0,
            fmt("%zu/20 seeds with ARI >= 0.95 on both axes (min neuron %.4f, min sample %.4f); "
                "single run %.2fs alone (limit 10s), slowest concurrent %.2fs",
                ok, worst_n, worst_s, solo, slowest)};
}

Verdict dominates_initialization() {
    std::size_t not_worse = 0, strictly = 0;
    std::string gains;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        PlantedSpec spec;
        spec.sigma = 1.0;
        spec.seed = seed;
        const auto z = zscore_normalize(generate(spec).first).first;
        IterDConfig cfg;
        cfg.K = spec.K;
        cfg.init = InitMode::kmeans_pca;
        cfg.restarts = 1;
        cfg.seed = seed;
        const auto res = discover(z, cfg);
        const double init_L = evaluate(z.values(), init_partition(z.values(), cfg, 0)).L;
        not_worse += res.value.L >= init_L;
        strictly += res.value.L > init_L;
        gains += fmt("%s%.3g", gains.empty() ? "" : ",", res.value.L / init_L);
    }
    return {not_worse == 10 && strictly >= 8,
            fmt("final >= init on %zu/10, strictly greater on %zu/10 (need 8); L_final/L_init = [%s]", not_worse,
                strictly, gains.c_str())};
}

Verdict features_informative() {
    std::size_t good = 0;
    double worst_acc = 1.0, worst_f1 = 1.0;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        PlantedSpec spec{.N = 2000, .M = 700, .K = 7, .mu = 1.0, .sigma = 0.5, .seed = seed};
        const auto [raw, truth] = generate(spec);
        const auto z = zscore_normalize(raw).first;
        IterDConfig cfg;
        cfg.K = 7;
        cfg.threads = worker_count();
        const auto res = discover(z, cfg);
        const auto x = extract_features(z.values(), res.partition);
        const auto rep = train_eval_classifier(x, sample_labels(z), 42);
        worst_acc = std::min(worst_acc, rep.accuracy);
        worst_f1 = std::min(worst_f1, rep.macro_f1);
        good += rep.accuracy >= 0.95 && rep.macro_f1 >= 0.95;
    }

    PlantedSpec two{.N = 400, .M = 700, .K = 2, .mu = 1.0, .sigma = 0.5, .seed = 11};
    const auto z2 = zscore_normalize(generate(two).first).first;
    IterDConfig cfg2;
    cfg2.K = 2;
    const auto res2 = discover(z2, cfg2);
    const auto x2 = extract_features(z2.values(), res2.partition);
    double shuffled = 0.0;
    for (int r = 0; r < 20; ++r) {
        auto labels = sample_labels(z2);
        Rng rng(5000 + r);
        rng.shuffle(std::span<std::optional<std::string>>(labels));
        shuffled += train_eval_classifier(x2, labels, r).accuracy / 20.0;
    }
    return {good == 5 && shuffled <= 0.6,
            fmt("recovered partitions: %zu/5 with accuracy and macro-F1 >= 0.95 (min acc %.4f, min F1 %.4f); "
                "shuffled 2-class control mean accuracy %.4f over 20 shuffles (limit 0.6)",
                good, worst_acc, worst_f1, shuffled)};
}

Verdict balance_behavior() {
    const auto t0 = Clock::now();
    const DenseMatrix a(8, 8, 1.0);
    const auto rows = oracle::two_labelings(8);
    double best = -std::numeric_limits<double>::infinity();
    std::size_t best_count = 0, best_balanced = 0;
    for (const auto& r : rows)
        for (const auto& c : rows) {
            const Partition p{2, r, c};
            const double L = evaluate(a, p).L;
            const auto n = p.neuron_counts(), m = p.sample_counts();
            const bool balanced = n[0] == 4 && n[1] == 4 && m[0] == 4 && m[1] == 4;
            if (L > best + 1e-12) {
                best = L;
                best_count = 0;
                best_balanced = 0;
            }
            if (std::abs(L - best) <= 1e-12) {
                ++best_count;
                best_balanced += balanced;
            }
        }
    const double secs = seconds_since(t0);
    return {best_count > 0 && best_balanced == best_count && std::abs(best - 16.0) <= 1e-12 && secs < 5.0,
            fmt("%zu partitions enumerated, max L %.6g attained by %zu partitions, %zu of them with sizes (4,4)x(4,4); "
                "%.3fs (limit 5s)",
                rows.size() * rows.size(), best, best_count, best_balanced, secs)};
}

Verdict report_fidelity() {
    double worst = 0.0;
    bool sums_ok = true;
    const auto check = [&](const DenseMatrix& a, const Partition& p, const std::vector<NeuronMeta>& neurons) {
        const auto H = block_heatmap(a, p);
        for (std::size_t i = 0; i < H.rows(); ++i)
            for (std::size_t j = 0; j < H.cols(); ++j) worst = std::max(worst, std::abs(H(i, j) - (i == j ? 1.0 : 0.0)));
        const auto dist = layer_distribution(p, neurons);
        const auto n = p.neuron_counts();
        for (std::size_t k = 0; k < p.K; ++k) {
            std::size_t total = 0;
            for (auto c : dist.counts[k]) total += c;
            sums_ok = sums_ok && total == n[k];
        }
    };
    check(oracle::block4(), oracle::block4_aligned(), ActivationMatrix::with_default_meta(oracle::block4()).neurons());
    PlantedSpec spec;
    spec.sigma = 0.0;
    const auto [m, truth] = generate(spec);
    check(m.values(), Partition{spec.K, truth.neuron_truth, truth.sample_truth}, m.neurons());
    return {worst <= 1e-12 && sums_ok,
            fmt("max |H - I| = %.3g (tol 1e-12); layer row sums equal n_k: %s", worst, sums_ok ? "yes" : "no")};
}

}  // namespace

int main() {
    const std::vector<std::pair<const char*, std::function<Verdict()>>> criteria{
        {"objective correctness", objective_correctness},
        {"incremental equivalence", incremental_equivalence},
        {"monotonicity and termination", monotonicity_termination},
        {"global optimality on tiny instances", global_optimality},
        {"planted recovery", planted_recovery},
        {"IterD dominates its K-Means initialization", dominates_initialization},
        {"module features are informative", features_informative},
        {"balance favors equal block sizes", balance_behavior},
        {"report fidelity", report_fidelity},
    };
    int failures = 0;
    for (const auto& [name, fn] : criteria) {
        Verdict v{false, ""};
        try {
            v = fn();
        } catch (const std::exception& e) {
            v = {false, std::string("exception: ") + e.what()};
        }
        failures += !v.pass;
        std::printf("%s %s: %s\n", v.pass ? "PASS" : "FAIL", name, v.detail.c_str());
        std::fflush(stdout);
    }
    return failures == 0 ? 0 : 1;
}
