#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include <json.hpp>

#include "modforge/matrix_io.hpp"
#include "modforge/objective.hpp"

namespace modforge {

// Planted-block model: A[u, s] = mu * [truth(u) == truth(s)] + N(0, sigma^2).
struct PlantedSpec {
    std::size_t N = 200;
    std::size_t M = 70;
    std::size_t K = 7;
    double mu = 1.0;
    double sigma = 0.25;
    std::optional<std::vector<double>> neuron_props;
    std::optional<std::vector<double>> sample_props;
    std::uint64_t seed = 1;
    std::size_t layers = 4;      // neurons are split evenly into this many layers
    bool with_labels = true;     // sample label = "module_<truth>"

    void validate() const;  // throws UsageError
};

struct PlantedTruth {
    std::vector<ModuleId> neuron_truth;
    std::vector<ModuleId> sample_truth;
};

// Module sizes by largest-remainder apportionment of `total` over `props`,
// each at least 1. Throws UsageError when a proportion forces an empty module.
std::vector<std::size_t> planted_sizes(std::size_t total, std::size_t k,
                                       const std::optional<std::vector<double>>& props);

// The returned matrix is unnormalized.
std::pair<ActivationMatrix, PlantedTruth> generate(const PlantedSpec& spec);

// Adjusted Rand index from the contingency table. Labels need not be
// contiguous. Returns 1 when both labelings are the same trivial partition.
// Throws UsageError on length mismatch or length < 2.
double adjusted_rand_index(std::span<const ModuleId> a, std::span<const ModuleId> b);

nlohmann::json to_json(const PlantedSpec& spec);
PlantedSpec planted_spec_from_json(const nlohmann::json& j);  // missing keys keep defaults
nlohmann::json to_json(const PlantedTruth& truth, std::size_t K);
PlantedTruth planted_truth_from_json(const nlohmann::json& j);

}  // namespace modforge
