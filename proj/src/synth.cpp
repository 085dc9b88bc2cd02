#include "modforge/synth.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <string>

#include "modforge/error.hpp"
#include "modforge/rng.hpp"

namespace modforge {

using nlohmann::json;

namespace {

void check_props(const std::optional<std::vector<double>>& props, std::size_t k, const char* name) {
    if (!props) return;
    if (props->size() != k)
        throw UsageError(std::string(name) + " must have K=" + std::to_string(k) + " entries");
    double total = 0.0;
    for (double p : *props) {
        if (!std::isfinite(p) || p < 0.0) throw UsageError(std::string(name) + " must be non-negative");
        total += p;
    }
    if (std::abs(total - 1.0) > 1e-9) throw UsageError(std::string(name) + " must sum to 1");
}

std::vector<ModuleId> shuffled_labels(const std::vector<std::size_t>& sizes, Rng& rng) {
    std::vector<ModuleId> labels;
    for (std::size_t k = 0; k < sizes.size(); ++k) labels.insert(labels.end(), sizes[k], static_cast<ModuleId>(k));
    rng.shuffle(std::span<ModuleId>(labels));
    return labels;
}

}  // namespace

void PlantedSpec::validate() const {
    if (N == 0 || M == 0 || K == 0) throw UsageError("N, M and K must be positive");
    if (K > std::min(N, M)) throw UsageError("K must not exceed min(N, M)");
    if (!std::isfinite(mu) || mu <= 0.0) throw UsageError("mu must be > 0");
    if (!std::isfinite(sigma) || sigma < 0.0) throw UsageError("sigma must be >= 0");
    if (layers == 0 || layers > N) throw UsageError("layers must be in [1, N]");
    check_props(neuron_props, K, "neuron_props");
    check_props(sample_props, K, "sample_props");
}

std::vector<std::size_t> planted_sizes(std::size_t total, std::size_t k,
                                       const std::optional<std::vector<double>>& props) {
    check_props(props, k, "proportions");
    std::vector<double> w = props ? *props : std::vector<double>(k, 1.0 / static_cast<double>(k));
    for (std::size_t i = 0; i < k; ++i)
        if (w[i] <= 0.0) throw UsageError("proportion of module " + std::to_string(i) + " forces an empty module");

    std::vector<std::size_t> sizes(k);
    std::vector<std::pair<double, std::size_t>> remainders;
    std::size_t assigned = 0;
    for (std::size_t i = 0; i < k; ++i) {
        const double exact = w[i] * static_cast<double>(total);
        sizes[i] = static_cast<std::size_t>(std::floor(exact));
        assigned += sizes[i];
        remainders.emplace_back(exact - static_cast<double>(sizes[i]), i);
    }
    std::stable_sort(remainders.begin(), remainders.end(),
                     [](const auto& x, const auto& y) { return x.first > y.first; });
    for (std::size_t r = 0; assigned < total; ++r, ++assigned) ++sizes[remainders[r % k].second];

    // tiny proportions can round to zero: borrow from the largest module
    for (std::size_t i = 0; i < k; ++i) {
        if (sizes[i] > 0) continue;
        auto largest = std::max_element(sizes.begin(), sizes.end());
        if (*largest < 2) throw UsageError("proportions force an empty module");
        --*largest;
        sizes[i] = 1;
    }
    return sizes;
}

std::pair<ActivationMatrix, PlantedTruth> generate(const PlantedSpec& spec) {
    spec.validate();
    Rng rng(spec.seed);
    PlantedTruth truth;
    truth.neuron_truth = shuffled_labels(planted_sizes(spec.N, spec.K, spec.neuron_props), rng);
    truth.sample_truth = shuffled_labels(planted_sizes(spec.M, spec.K, spec.sample_props), rng);

    DenseMatrix values(spec.N, spec.M);
    for (std::size_t u = 0; u < spec.N; ++u) {
        auto row = values.row(u);
        for (std::size_t s = 0; s < spec.M; ++s) {
            const double base = truth.neuron_truth[u] == truth.sample_truth[s] ? spec.mu : 0.0;
            row[s] = spec.sigma > 0.0 ? base + spec.sigma * rng.normal() : base;
        }
    }

    std::vector<NeuronMeta> neurons(spec.N);
    const std::size_t width = (spec.N + spec.layers - 1) / spec.layers;
    for (std::size_t u = 0; u < spec.N; ++u)
        neurons[u] = {static_cast<std::uint32_t>(u / width), static_cast<std::uint32_t>(u % width)};
    std::vector<SampleMeta> samples(spec.M);
    for (std::size_t s = 0; s < spec.M; ++s) {
        samples[s].id = "s" + std::to_string(s);
        if (spec.with_labels) samples[s].label = "module_" + std::to_string(truth.sample_truth[s]);
    }
    return {ActivationMatrix(std::move(values), std::move(neurons), std::move(samples)), std::move(truth)};
}

double adjusted_rand_index(std::span<const ModuleId> a, std::span<const ModuleId> b) {
    if (a.size() != b.size())
        throw UsageError("ARI: label vectors differ in length (" + std::to_string(a.size()) +
                         " vs " + std::to_string(b.size()) + ")");
    if (a.size() < 2) throw UsageError("ARI needs at least 2 elements");

    std::map<std::pair<ModuleId, ModuleId>, double> cells;
    std::map<ModuleId, double> rows, cols;
    for (std::size_t i = 0; i < a.size(); ++i) {
        cells[{a[i], b[i]}] += 1.0;
        rows[a[i]] += 1.0;
        cols[b[i]] += 1.0;
    }
    auto pairs = [](double x) { return x * (x - 1.0) / 2.0; };
    double index = 0.0, sum_rows = 0.0, sum_cols = 0.0;
    for (const auto& [_, c] : cells) index += pairs(c);
    for (const auto& [_, c] : rows) sum_rows += pairs(c);
    for (const auto& [_, c] : cols) sum_cols += pairs(c);
    const double total = pairs(static_cast<double>(a.size()));
    const double expected = sum_rows * sum_cols / total;
    const double max_index = 0.5 * (sum_rows + sum_cols);
    if (max_index == expected) return 1.0;
    return (index - expected) / (max_index - expected);
}

json to_json(const PlantedSpec& spec) {
    json j{{"N", spec.N},         {"M", spec.M},           {"K", spec.K},
           {"mu", spec.mu},       {"sigma", spec.sigma},   {"seed", spec.seed},
           {"layers", spec.layers}, {"with_labels", spec.with_labels}};
    j["neuron_props"] = spec.neuron_props ? json(*spec.neuron_props) : json(nullptr);
    j["sample_props"] = spec.sample_props ? json(*spec.sample_props) : json(nullptr);
    return j;
}

PlantedSpec planted_spec_from_json(const json& j) {
    PlantedSpec spec;
    try {
        if (j.contains("N")) spec.N = j.at("N").get<std::size_t>();
        if (j.contains("M")) spec.M = j.at("M").get<std::size_t>();
        if (j.contains("K")) spec.K = j.at("K").get<std::size_t>();
        if (j.contains("mu")) spec.mu = j.at("mu").get<double>();
        if (j.contains("sigma")) spec.sigma = j.at("sigma").get<double>();
        if (j.contains("seed")) spec.seed = j.at("seed").get<std::uint64_t>();
        if (j.contains("layers")) spec.layers = j.at("layers").get<std::size_t>();
        if (j.contains("with_labels")) spec.with_labels = j.at("with_labels").get<bool>();
        if (j.contains("neuron_props") && !j.at("neuron_props").is_null())
            spec.neuron_props = j.at("neuron_props").get<std::vector<double>>();
        if (j.contains("sample_props") && !j.at("sample_props").is_null())
            spec.sample_props = j.at("sample_props").get<std::vector<double>>();
    } catch (const json::exception& e) {
        throw UsageError("malformed planted spec: " + std::string(e.what()));
    }
    return spec;
}

json to_json(const PlantedTruth& truth, std::size_t K) {
    return json{{"K", K}, {"neuron_truth", truth.neuron_truth}, {"sample_truth", truth.sample_truth}};
}

PlantedTruth planted_truth_from_json(const json& j) {
    try {
        return {j.at("neuron_truth").get<std::vector<ModuleId>>(),
                j.at("sample_truth").get<std::vector<ModuleId>>()};
    } catch (const json::exception& e) {
        throw DataError("malformed truth file: " + std::string(e.what()));
    }
}

}  // namespace modforge
