#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include <json.hpp>

#include "modforge/iterd.hpp"
#include "modforge/metrics.hpp"
#include "modforge/objective.hpp"

namespace modforge {

// Shortest round-trip decimal form of a double (used by every CSV writer).
std::string format_double(double v);

nlohmann::json to_json(const ObjectiveValue& v);
// L and B in units of 1e6 (raw / 1e6); xi is left unscaled.
nlohmann::json scaled_1e6_json(const ObjectiveValue& v);
nlohmann::json to_json(const IterDTrace& trace);
nlohmann::json to_json(const ClassifierReport& report);
nlohmann::json to_json(const CategorySimilarity& sim);

// Partition files: either a discover run report or a bare
// {"K", "neuron_assignment", "sample_assignment"} object. Throws DataError.
Partition read_partition(const std::filesystem::path& path);
Partition partition_from_json(const nlohmann::json& j);
nlohmann::json partition_json(const Partition& p);

// Header row "sample_module\neuron_module,U0,...", then one row "S<i>,..." per sample module.
std::string heatmap_csv(const DenseMatrix& heatmap);
// Header row "module,layer_0,...", then one row per module.
std::string layer_distribution_csv(const LayerDistribution& dist);

}  // namespace modforge
