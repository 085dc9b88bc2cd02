#include "cli.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <optional>
#include <ostream>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "modforge/atomic_file.hpp"
#include "modforge/error.hpp"
#include "modforge/iterd.hpp"
#include "modforge/matrix_io.hpp"
#include "modforge/metrics.hpp"
#include "modforge/report.hpp"
#include "modforge/synth.hpp"

namespace modforge::cli {

namespace {

using nlohmann::json;
using Clock = std::chrono::steady_clock;

std::string fmt_g(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

std::size_t resolve_threads(std::optional<std::size_t> flag) {
    if (const char* env = std::getenv("MODFORGE_THREADS"); env && *env) {
        char* end = nullptr;
        const long long v = std::strtoll(env, &end, 10);
        if (*end != '\0' || v <= 0) throw UsageError("MODFORGE_THREADS must be a positive integer");
        return static_cast<std::size_t>(v);
    }
    if (flag) {
        if (*flag == 0) throw UsageError("--threads must be positive");
        return *flag;
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

// Loads a matrix and brings it to the representation the optimizer consumes.
ActivationMatrix load_prepared(const std::string& activations, const std::string& meta,
                               const std::string& normalize, std::ostream& err) {
    ActivationMatrix m = load_matrix(activations, meta);
    if (m.normalized()) return m;
    if (normalize == "zscore") return zscore_normalize(m).first;
    err << "note: using unnormalized activations (--normalize none)\n";
    return m;
}

std::size_t positive_count(long long v, const char* flag) {
    if (v <= 0) throw UsageError(std::string(flag) + " must be a positive integer");
    return static_cast<std::size_t>(v);
}

// ---------------------------------------------------------------- discover

struct DiscoverArgs {
    std::string activations, meta, out;
    long long k = 0;
    std::string init = "kmeans";
    long long restarts = 4;
    std::uint64_t seed = 42;
    long long max_iters = 100;
    long long pca_dims = 50;
    std::string normalize = "zscore";
    std::optional<std::size_t> threads;
    bool verbose = false;
    bool record_timings = false;
};

int cmd_discover(const DiscoverArgs& a, std::ostream& out, std::ostream& err) {
    IterDConfig cfg;
    cfg.K = positive_count(a.k, "--k");
    cfg.init = a.init == "random" ? InitMode::random_balanced : InitMode::kmeans_pca;
    cfg.restarts = positive_count(a.restarts, "--restarts");
    cfg.seed = a.seed;
    cfg.max_iters = positive_count(a.max_iters, "--max-iters");
    cfg.pca_dims = positive_count(a.pca_dims, "--pca-dims");
    cfg.threads = resolve_threads(a.threads);

    auto t0 = Clock::now();
    const ActivationMatrix loaded = load_matrix(a.activations, a.meta);
    const double load_s = seconds_since(t0);
    t0 = Clock::now();
    const ActivationMatrix m =
        loaded.normalized() || a.normalize == "none" ? loaded : zscore_normalize(loaded).first;
    if (!loaded.normalized() && a.normalize == "none")
        err << "note: using unnormalized activations (--normalize none)\n";
    const double normalize_s = seconds_since(t0);

    IterationLogger log;
    if (a.verbose)
        log = [&err](std::size_t restart, const IterationRecord& rec) {
            err << "restart " << restart << " iter " << rec.t << " L=" << fmt_g(rec.value.L)
                << " xi=" << fmt_g(rec.value.xi) << " B=" << fmt_g(rec.value.balance)
                << " moves=" << rec.reassignments << '\n';
        };
    t0 = Clock::now();
    const DiscoverResult res = discover(m.values(), cfg, log);
    const double discover_s = seconds_since(t0);

    json report;
    report["config"] = {{"K", cfg.K},
                        {"init", std::string(to_string(cfg.init))},
                        {"restarts", cfg.restarts},
                        {"seed", cfg.seed},
                        {"max_iters", cfg.max_iters},
                        {"pca_dims", cfg.pca_dims},
                        {"normalize", m.normalized() ? "zscore" : "none"},
                        {"activations", a.activations},
                        {"meta", a.meta}};
    report["K"] = cfg.K;
    report["objective"] = to_json(res.value);
    report["scaled_1e6"] = scaled_1e6_json(res.value);
    report["neuron_assignment"] = res.partition.neuron_assign;
    report["sample_assignment"] = res.partition.sample_assign;
    report["trace"] = to_json(res.trace);
    report["best_restart"] = res.best_restart;
    report["restart_L"] = res.restart_L;
    if (a.record_timings)
        report["timings"] = {{"load_s", load_s}, {"normalize_s", normalize_s}, {"discover_s", discover_s}};
    write_text_atomically(a.out, report.dump(2) + "\n");

    out << "L (x1e6) = " << fmt_g(res.value.L / 1e6) << '\n'
        << "xi       = " << fmt_g(res.value.xi) << '\n'
        << "B (x1e6) = " << fmt_g(res.value.balance / 1e6) << '\n'
        << "status   = " << to_string(res.trace.status) << " after " << res.trace.iterations.size()
        << " iterations (best restart " << res.best_restart << ")\n";
    return kOk;
}

// ---------------------------------------------------------------- synth

struct SynthArgs {
    std::optional<std::string> spec_path;
    std::optional<long long> n, m, k, layers;
    std::optional<double> signal, noise;
    std::optional<std::uint64_t> seed;
    std::vector<double> neuron_props, sample_props;
    bool no_labels = false;
    std::string out_prefix;
};

int cmd_synth(const SynthArgs& a, std::ostream& out) {
    PlantedSpec spec;
    if (a.spec_path) {
        std::ifstream in(*a.spec_path);
        if (!in) throw UsageError("cannot open spec file: " + *a.spec_path);
        json j;
        try {
            in >> j;
        } catch (const json::exception& e) {
            throw UsageError("spec file is not valid JSON: " + std::string(e.what()));
        }
        spec = planted_spec_from_json(j);
    }
    auto count = [](long long v, const char* flag) {
        if (v <= 0) throw UsageError(std::string(flag) + " must be a positive integer");
        return static_cast<std::size_t>(v);
    };
    if (a.n) spec.N = count(*a.n, "--n");
    if (a.m) spec.M = count(*a.m, "--m");
    if (a.k) spec.K = count(*a.k, "--k");
    if (a.layers) spec.layers = count(*a.layers, "--layers");
    if (a.signal) spec.mu = *a.signal;
    if (a.noise) spec.sigma = *a.noise;
    if (a.seed) spec.seed = *a.seed;
    if (!a.neuron_props.empty()) spec.neuron_props = a.neuron_props;
    if (!a.sample_props.empty()) spec.sample_props = a.sample_props;
    if (a.no_labels) spec.with_labels = false;

    const auto [matrix, truth] = generate(spec);
    const std::string prefix = a.out_prefix;
    save_matrix(matrix, prefix + ".npy", prefix + ".meta.json");
    json truth_doc = to_json(truth, spec.K);
    truth_doc["spec"] = to_json(spec);
    write_text_atomically(prefix + ".truth.json", truth_doc.dump(2) + "\n");
    out << "wrote " << prefix << ".npy (" << spec.N << " x " << spec.M << "), " << prefix
        << ".meta.json, " << prefix << ".truth.json\n";
    return kOk;
}

// ---------------------------------------------------------------- eval / report

struct EvalArgs {
    std::string partition, activations, meta, out;
    std::optional<std::string> truth, heatmap, layer_dist;
    std::uint64_t split_seed = 42;
    double test_fraction = 0.2;
    std::string normalize = "zscore";
    bool require_labels = false;
};

std::string derived_path(const std::string& out, const std::string& suffix) {
    std::filesystem::path p(out);
    p.replace_extension();
    return p.string() + suffix;
}

int cmd_eval(const EvalArgs& a, std::ostream& out, std::ostream& err) {
    const ActivationMatrix m = load_prepared(a.activations, a.meta, a.normalize, err);
    const Partition p = read_partition(a.partition);
    p.validate(m.num_neurons(), m.num_samples());

    json report;
    report["K"] = p.K;
    report["objective"] = to_json(evaluate(m.values(), p));
    report["scaled_1e6"] = scaled_1e6_json(evaluate(m.values(), p));

    const DenseMatrix features = extract_features(m.values(), p);
    const auto labels = sample_labels(m);
    if (m.has_any_label() && !m.has_all_labels())
        throw DataError("some samples have no label; the classifier needs every label");
    if (a.require_labels && !m.has_any_label()) throw DataError("classifier requested but samples carry no labels");
    if (m.has_all_labels()) {
        ClassifierOptions opts;
        opts.test_fraction = a.test_fraction;
        const auto clf = train_eval_classifier(features, labels, a.split_seed, opts);
        report["informativeness"] = to_json(clf);
        report["informativeness"]["split_seed"] = a.split_seed;
        report["category_similarity"] = to_json(category_similarity(features, labels));
        out << "accuracy = " << fmt_g(clf.accuracy) << '\n' << "macro_f1 = " << fmt_g(clf.macro_f1) << '\n';
    }

    if (a.truth) {
        std::ifstream in(*a.truth);
        if (!in) throw DataError("cannot open truth file: " + *a.truth);
        json j;
        try {
            in >> j;
        } catch (const json::exception& e) {
            throw DataError("truth file is not valid JSON: " + std::string(e.what()));
        }
        const PlantedTruth truth = planted_truth_from_json(j);
        if (truth.neuron_truth.size() != p.neuron_assign.size() ||
            truth.sample_truth.size() != p.sample_assign.size())
            throw DataError("truth lengths do not match the partition");
        const double ari_n = adjusted_rand_index(truth.neuron_truth, p.neuron_assign);
        const double ari_s = adjusted_rand_index(truth.sample_truth, p.sample_assign);
        report["ari"] = {{"neurons", ari_n}, {"samples", ari_s}};
        out << "ARI neurons = " << fmt_g(ari_n) << '\n' << "ARI samples = " << fmt_g(ari_s) << '\n';
    }

    const std::string heatmap_path = a.heatmap.value_or(derived_path(a.out, ".heatmap.csv"));
    const std::string layers_path = a.layer_dist.value_or(derived_path(a.out, ".layers.csv"));
    write_text_atomically(heatmap_path, heatmap_csv(block_heatmap(m.values(), p)));
    write_text_atomically(layers_path, layer_distribution_csv(layer_distribution(p, m.neurons())));
    report["heatmap_csv"] = heatmap_path;
    report["layer_distribution_csv"] = layers_path;
    write_text_atomically(a.out, report.dump(2) + "\n");
    return kOk;
}

struct ReportArgs {
    std::string partition, activations, meta, heatmap, layer_dist;
    std::string normalize = "zscore";
};

int cmd_report(const ReportArgs& a, std::ostream& out, std::ostream& err) {
    const ActivationMatrix m = load_prepared(a.activations, a.meta, a.normalize, err);
    const Partition p = read_partition(a.partition);
    p.validate(m.num_neurons(), m.num_samples());
    write_text_atomically(a.heatmap, heatmap_csv(block_heatmap(m.values(), p)));
    write_text_atomically(a.layer_dist, layer_distribution_csv(layer_distribution(p, m.neurons())));
    out << "wrote " << a.heatmap << " and " << a.layer_dist << '\n';
    return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"modforge: neuron-sample dual partitioning of activation matrices"};
    app.require_subcommand(1);

    DiscoverArgs d;
    auto* discover_cmd = app.add_subcommand("discover", "find K function modules with IterD");
    discover_cmd->add_option("--activations", d.activations, "matrix file (.npy)")->required();
    discover_cmd->add_option("--meta", d.meta, "metadata JSON")->required();
    discover_cmd->add_option("--k", d.k, "number of modules")->required();
    discover_cmd->add_option("--init", d.init, "initialization")
        ->check(CLI::IsMember({"kmeans", "random"}))
        ->capture_default_str();
    discover_cmd->add_option("--restarts", d.restarts)->capture_default_str();
    discover_cmd->add_option("--seed", d.seed)->capture_default_str();
    discover_cmd->add_option("--max-iters", d.max_iters)->capture_default_str();
    discover_cmd->add_option("--pca-dims", d.pca_dims)->capture_default_str();
    discover_cmd->add_option("--normalize", d.normalize)
        ->check(CLI::IsMember({"zscore", "none"}))
        ->capture_default_str();
    discover_cmd->add_option("--threads", d.threads, "restart workers (MODFORGE_THREADS overrides)");
    discover_cmd->add_option("--out", d.out, "run report JSON")->required();
    discover_cmd->add_flag("--verbose", d.verbose, "log one line per iteration to stderr");
    discover_cmd->add_flag("--record-timings", d.record_timings, "add wall-clock timings to the report");

    SynthArgs s;
    auto* synth_cmd = app.add_subcommand("synth", "write a planted-block fixture");
    synth_cmd->add_option("--spec", s.spec_path, "planted spec JSON (flags override)");
    synth_cmd->add_option("--n", s.n, "neurons (default 200)");
    synth_cmd->add_option("--m", s.m, "samples (default 70)");
    synth_cmd->add_option("--k", s.k, "modules (default 7)");
    synth_cmd->add_option("--signal", s.signal, "on-block mean lift mu (default 1.0)");
    synth_cmd->add_option("--noise", s.noise, "noise std sigma (default 0.25)");
    synth_cmd->add_option("--seed", s.seed, "seed (default 1)");
    synth_cmd->add_option("--layers", s.layers, "layers the neurons are spread over (default 4)");
    synth_cmd->add_option("--neuron-props", s.neuron_props, "module proportions for neurons")->delimiter(',');
    synth_cmd->add_option("--sample-props", s.sample_props, "module proportions for samples")->delimiter(',');
    synth_cmd->add_flag("--no-labels", s.no_labels, "omit sample labels");
    synth_cmd->add_option("--out-prefix", s.out_prefix, "writes PREFIX.npy, PREFIX.meta.json, PREFIX.truth.json")
        ->required();

    EvalArgs e;
    auto* eval_cmd = app.add_subcommand("eval", "score a partition");
    eval_cmd->add_option("--partition", e.partition, "run report or partition JSON")->required();
    eval_cmd->add_option("--activations", e.activations)->required();
    eval_cmd->add_option("--meta", e.meta)->required();
    eval_cmd->add_option("--truth", e.truth, "planted truth JSON for ARI");
    eval_cmd->add_option("--split-seed", e.split_seed)->capture_default_str();
    eval_cmd->add_option("--test-fraction", e.test_fraction)->check(CLI::Range(0.0, 1.0))->capture_default_str();
    eval_cmd->add_option("--normalize", e.normalize)
        ->check(CLI::IsMember({"zscore", "none"}))
        ->capture_default_str();
    eval_cmd->add_option("--heatmap", e.heatmap, "heatmap CSV (default derived from --out)");
    eval_cmd->add_option("--layer-dist", e.layer_dist, "layer distribution CSV (default derived from --out)");
    eval_cmd->add_flag("--require-labels", e.require_labels, "fail if samples carry no labels");
    eval_cmd->add_option("--out", e.out, "evaluation JSON")->required();

    ReportArgs r;
    auto* report_cmd = app.add_subcommand("report", "write heatmap and layer distribution CSVs");
    report_cmd->add_option("--partition", r.partition)->required();
    report_cmd->add_option("--activations", r.activations)->required();
    report_cmd->add_option("--meta", r.meta)->required();
    report_cmd->add_option("--heatmap", r.heatmap)->required();
    report_cmd->add_option("--layer-dist", r.layer_dist)->required();
    report_cmd->add_option("--normalize", r.normalize)
        ->check(CLI::IsMember({"zscore", "none"}))
        ->capture_default_str();

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kOk;
    } catch (const CLI::ParseError& ex) {
        err << "error: " << ex.what() << '\n';
        if (const auto* sub = app.get_subcommands().empty() ? nullptr : app.get_subcommands().front())
            err << sub->help();
        return kUsage;
    }

    try {
        if (discover_cmd->parsed()) return cmd_discover(d, out, err);
        if (synth_cmd->parsed()) return cmd_synth(s, out);
        if (eval_cmd->parsed()) return cmd_eval(e, out, err);
        if (report_cmd->parsed()) return cmd_report(r, out, err);
    } catch (const UsageError& ex) {
        err << "usage error: " << ex.what() << '\n';
        return kUsage;
    } catch (const ConstraintError& ex) {
        err << "constraint violation: " << ex.what() << '\n';
        return kConstraint;
    } catch (const DataError& ex) {
        err << "data error: " << ex.what() << '\n';
        return kData;
    } catch (const std::exception& ex) {
        err << "error: " << ex.what() << '\n';
        return kData;
    }
    return kUsage;
}

}  // namespace modforge::cli
