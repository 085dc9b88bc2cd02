#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "cli.hpp"
#include "modforge/error.hpp"
#include "modforge/iterd.hpp"
#include "modforge/matrix_io.hpp"
#include "modforge/metrics.hpp"
#include "modforge/synth.hpp"

namespace py = pybind11;
using namespace modforge;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

DenseMatrix to_dense(const Array& a) {
    if (a.ndim() != 2) throw UsageError("expected a 2-D array");
    const auto r = static_cast<std::size_t>(a.shape(0)), c = static_cast<std::size_t>(a.shape(1));
    return DenseMatrix(r, c, std::vector<double>(a.data(), a.data() + r * c));
}

Array to_array(const DenseMatrix& m) {
    Array out({m.rows(), m.cols()});
    std::copy(m.flat().begin(), m.flat().end(), out.mutable_data());
    return out;
}

Partition make_partition(std::size_t K, std::vector<ModuleId> neurons, std::vector<ModuleId> samples) {
    return Partition{K, std::move(neurons), std::move(samples)};
}

py::dict value_dict(const ObjectiveValue& v) {
    py::dict d;
    d["L"] = v.L;
    d["xi"] = v.xi;
    d["B"] = v.balance;
    return d;
}

InitMode parse_init(const std::string& s) {
    if (s == "kmeans" || s == "kmeans_pca") return InitMode::kmeans_pca;
    if (s == "random" || s == "random_balanced") return InitMode::random_balanced;
    throw UsageError("init must be 'kmeans' or 'random'");
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Neuron-sample dual partitioning (IterD) core";

    py::register_exception<UsageError>(m, "UsageError", PyExc_ValueError);
    py::register_exception<DataError>(m, "DataError", PyExc_ValueError);
    py::register_exception<ConstraintError>(m, "ConstraintError", PyExc_ValueError);

    m.def("evaluate",
          [](const Array& a, std::vector<ModuleId> neurons, std::vector<ModuleId> samples, std::size_t K) {
              return value_dict(evaluate(to_dense(a), make_partition(K, std::move(neurons), std::move(samples))));
          },
          py::arg("activations"), py::arg("neuron_assignment"), py::arg("sample_assignment"), py::arg("k"));

    m.def("zscore",
          [](const Array& a) {
              const auto [z, stats] = zscore_normalize(ActivationMatrix::with_default_meta(to_dense(a)));
              return py::make_tuple(to_array(z.values()), stats.mean, stats.std);
          },
          py::arg("activations"));

    m.def("discover",
          [](const Array& a, std::size_t K, const std::string& init, std::size_t restarts, std::uint64_t seed,
             std::size_t max_iters, std::size_t pca_dims, std::size_t threads) {
              IterDConfig cfg{K, parse_init(init), restarts, max_iters, seed, pca_dims, threads};
              const DenseMatrix dense = to_dense(a);
              DiscoverResult res;
              {
                  py::gil_scoped_release release;
                  res = discover(dense, cfg);
              }
              py::list trace;
              for (const auto& rec : res.trace.iterations) {
                  py::dict d = value_dict(rec.value);
                  d["t"] = rec.t;
                  d["reassignments"] = rec.reassignments;
                  trace.append(d);
              }
              py::dict out;
              out["neuron_assignment"] = res.partition.neuron_assign;
              out["sample_assignment"] = res.partition.sample_assign;
              out["objective"] = value_dict(res.value);
              out["initial"] = value_dict(res.trace.initial);
              out["trace"] = trace;
              out["status"] = std::string(to_string(res.trace.status));
              out["best_restart"] = res.best_restart;
              out["restart_L"] = res.restart_L;
              return out;
          },
          py::arg("activations"), py::arg("k"), py::arg("init") = "kmeans", py::arg("restarts") = 4,
          py::arg("seed") = 42, py::arg("max_iters") = 100, py::arg("pca_dims") = 50, py::arg("threads") = 1,
          "Runs IterD on the matrix as given; normalize first (see zscore).");

    m.def("synth",
          [](std::size_t N, std::size_t M, std::size_t K, double mu, double sigma, std::uint64_t seed,
             std::size_t layers) {
              PlantedSpec spec{N, M, K, mu, sigma, std::nullopt, std::nullopt, seed, layers, true};
              const auto [mat, truth] = generate(spec);
              return py::make_tuple(to_array(mat.values()), truth.neuron_truth, truth.sample_truth);
          },
          py::arg("n") = 200, py::arg("m") = 70, py::arg("k") = 7, py::arg("mu") = 1.0, py::arg("sigma") = 0.25,
          py::arg("seed") = 1, py::arg("layers") = 4);

    m.def("adjusted_rand_index",
          [](const std::vector<ModuleId>& a, const std::vector<ModuleId>& b) { return adjusted_rand_index(a, b); });

    m.def("extract_features",
          [](const Array& a, std::vector<ModuleId> neurons, std::vector<ModuleId> samples, std::size_t K) {
              return to_array(extract_features(to_dense(a), make_partition(K, std::move(neurons), std::move(samples))));
          },
          py::arg("activations"), py::arg("neuron_assignment"), py::arg("sample_assignment"), py::arg("k"));

    m.def("block_heatmap",
          [](const Array& a, std::vector<ModuleId> neurons, std::vector<ModuleId> samples, std::size_t K) {
              return to_array(block_heatmap(to_dense(a), make_partition(K, std::move(neurons), std::move(samples))));
          },
          py::arg("activations"), py::arg("neuron_assignment"), py::arg("sample_assignment"), py::arg("k"));

    m.def("train_eval_classifier",
          [](const Array& features, const std::vector<std::string>& labels, std::uint64_t split_seed,
             double test_fraction) {
              ClassifierOptions opts;
              opts.test_fraction = test_fraction;
              const auto rep = train_eval_classifier(to_dense(features), std::span<const std::string>(labels),
                                                     split_seed, opts);
              py::dict d;
              d["accuracy"] = rep.accuracy;
              d["macro_f1"] = rep.macro_f1;
              d["per_class_f1"] = rep.per_class_f1;
              d["confusion"] = rep.confusion;
              d["classes"] = rep.model.classes;
              return d;
          },
          py::arg("features"), py::arg("labels"), py::arg("split_seed") = 42, py::arg("test_fraction") = 0.2);

    m.def("load_matrix",
          [](const std::string& matrix_path, const std::string& meta_path) {
              const auto mat = load_matrix(matrix_path, meta_path);
              return py::make_tuple(to_array(mat.values()), mat.normalized());
          },
          py::arg("matrix_path"), py::arg("meta_path"));

    m.def("run_cli",
          [](const std::vector<std::string>& args) {
              std::ostringstream out, err;
              int code;
              {
                  py::gil_scoped_release release;
                  code = cli::run(args, out, err);
              }
              return py::make_tuple(code, out.str(), err.str());
          },
          py::arg("args"), "Runs a modforge subcommand in-process; returns (exit_code, stdout, stderr).");
}
