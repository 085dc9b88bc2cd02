#include "modforge/matrix_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_set>

#include <json.hpp>

#include "modforge/atomic_file.hpp"
#include "modforge/error.hpp"
#include "modforge/npy.hpp"

namespace modforge {

using nlohmann::json;

namespace {

std::string at_cell(std::size_t r, std::size_t c) {
    return "(" + std::to_string(r) + "," + std::to_string(c) + ")";
}

// Mean and population std of one row.
std::pair<double, double> row_moments(std::span<const double> row) {
    double sum = 0.0;
    for (double v : row) sum += v;
    const double mean = sum / static_cast<double>(row.size());
    double ss = 0.0;
    for (double v : row) ss += (v - mean) * (v - mean);
    return {mean, std::sqrt(ss / static_cast<double>(row.size()))};
}

}  // namespace

ActivationMatrix::ActivationMatrix(DenseMatrix values, std::vector<NeuronMeta> neurons,
                                   std::vector<SampleMeta> samples, bool normalized)
    : values_(std::move(values)),
      neurons_(std::move(neurons)),
      samples_(std::move(samples)),
      normalized_(normalized) {
    const std::size_t n = values_.rows(), m = values_.cols();
    if (n == 0 || m == 0) throw DataError("activation matrix must have at least one row and column");
    if (neurons_.size() != n)
        throw DataError("dimension mismatch: metadata lists " + std::to_string(neurons_.size()) +
                        " neurons but matrix has " + std::to_string(n) + " rows");
    if (samples_.size() != m)
        throw DataError("dimension mismatch: metadata lists " + std::to_string(samples_.size()) +
                        " samples but matrix has " + std::to_string(m) + " columns");

    for (std::size_t r = 0; r < n; ++r) {
        const auto row = values_.row(r);
        for (std::size_t c = 0; c < m; ++c)
            if (!std::isfinite(row[c])) throw DataError("non-finite value at " + at_cell(r, c));
    }

    std::set<std::pair<std::uint32_t, std::uint32_t>> seen_neurons;
    for (std::size_t i = 0; i < n; ++i) {
        if (!seen_neurons.emplace(neurons_[i].layer, neurons_[i].index_in_layer).second)
            throw DataError("duplicate neuron (layer " + std::to_string(neurons_[i].layer) +
                            ", index " + std::to_string(neurons_[i].index_in_layer) + ")");
    }
    std::unordered_set<std::string> seen_ids;
    for (const auto& s : samples_) {
        if (!seen_ids.insert(s.id).second) throw DataError("duplicate sample id '" + s.id + "'");
        if (s.token_count && *s.token_count < 1)
            throw DataError("sample '" + s.id + "' has token_count < 1");
    }

    if (normalized_) {
        for (std::size_t r = 0; r < n; ++r) {
            const auto row = values_.row(r);
            if (std::all_of(row.begin(), row.end(), [](double v) { return v == 0.0; })) continue;
            const auto [mean, sd] = row_moments(row);
            if (std::abs(mean) > kNormalizedTolerance || std::abs(sd - 1.0) > kNormalizedTolerance)
                throw DataError("matrix flagged normalized but row " + std::to_string(r) +
                                " has mean " + std::to_string(mean) + ", std " +
                                std::to_string(sd));
        }
    }
}

ActivationMatrix ActivationMatrix::with_default_meta(DenseMatrix values, bool normalized) {
    std::vector<NeuronMeta> neurons(values.rows());
    for (std::size_t i = 0; i < neurons.size(); ++i)
        neurons[i] = {0, static_cast<std::uint32_t>(i)};
    std::vector<SampleMeta> samples(values.cols());
    for (std::size_t j = 0; j < samples.size(); ++j) samples[j].id = "s" + std::to_string(j);
    return ActivationMatrix(std::move(values), std::move(neurons), std::move(samples), normalized);
}

bool ActivationMatrix::has_any_label() const {
    return std::any_of(samples_.begin(), samples_.end(),
                       [](const SampleMeta& s) { return s.label.has_value(); });
}

bool ActivationMatrix::has_all_labels() const {
    return std::all_of(samples_.begin(), samples_.end(),
                       [](const SampleMeta& s) { return s.label.has_value(); });
}

MatrixMeta read_metadata(const std::filesystem::path& meta_path) {
    std::ifstream in(meta_path);
    if (!in) throw DataError("cannot open metadata file: " + meta_path.string());
    json doc;
    try {
        in >> doc;
    } catch (const json::exception& e) {
        throw DataError("metadata is not valid JSON: " + std::string(e.what()));
    }

    MatrixMeta meta;
    try {
        if (!doc.is_object() || !doc.contains("neurons") || !doc.contains("samples"))
            throw DataError("metadata must be an object with 'neurons' and 'samples'");
        for (const auto& jn : doc.at("neurons")) {
            const auto layer = jn.at("layer").get<std::int64_t>();
            const auto index = jn.at("index").get<std::int64_t>();
            if (layer < 0 || index < 0) throw DataError("neuron layer/index must be non-negative");
            meta.neurons.push_back(
                {static_cast<std::uint32_t>(layer), static_cast<std::uint32_t>(index)});
        }
        for (const auto& js : doc.at("samples")) {
            SampleMeta s;
            s.id = js.at("id").get<std::string>();
            if (js.contains("label") && !js.at("label").is_null())
                s.label = js.at("label").get<std::string>();
            if (js.contains("token_count") && !js.at("token_count").is_null())
                s.token_count = js.at("token_count").get<std::int64_t>();
            meta.samples.push_back(std::move(s));
        }
        if (doc.contains("normalized")) meta.normalized = doc.at("normalized").get<bool>();
    } catch (const json::exception& e) {
        throw DataError("malformed metadata: " + std::string(e.what()));
    }
    return meta;
}

void write_metadata(const std::filesystem::path& meta_path, const MatrixMeta& meta) {
    json doc;
    doc["neurons"] = json::array();
    for (const auto& n : meta.neurons)
        doc["neurons"].push_back({{"layer", n.layer}, {"index", n.index_in_layer}});
    doc["samples"] = json::array();
    for (const auto& s : meta.samples) {
        json js;
        js["id"] = s.id;
        js["label"] = s.label ? json(*s.label) : json(nullptr);
        js["token_count"] = s.token_count ? json(*s.token_count) : json(nullptr);
        doc["samples"].push_back(std::move(js));
    }
    doc["normalized"] = meta.normalized;
    write_text_atomically(meta_path, doc.dump() + "\n");
}

ActivationMatrix load_matrix(const std::filesystem::path& matrix_path,
                             const std::filesystem::path& meta_path) {
    auto payload = npy::read(matrix_path);
    auto meta = read_metadata(meta_path);
    return ActivationMatrix(std::move(payload.values), std::move(meta.neurons),
                            std::move(meta.samples), meta.normalized);
}

void save_matrix(const ActivationMatrix& m, const std::filesystem::path& matrix_path,
                 const std::filesystem::path& meta_path) {
    write_atomically(matrix_path,
                     [&](std::ostream& out) { npy::write(out, m.values(), npy::Dtype::f64); });
    write_metadata(meta_path, {m.neurons(), m.samples(), m.normalized()});
}

std::pair<ActivationMatrix, NormStats> zscore_normalize(const ActivationMatrix& m) {
    if (m.normalized()) throw UsageError("matrix is already normalized");
    const std::size_t n = m.num_neurons(), cols = m.num_samples();
    if (cols < 2) throw UsageError("z-score normalization needs at least 2 samples");

    NormStats stats{std::vector<double>(n), std::vector<double>(n)};
    DenseMatrix out(n, cols);
    for (std::size_t i = 0; i < n; ++i) {
        const auto row = m.values().row(i);
        const auto [lo, hi] = std::minmax_element(row.begin(), row.end());
        const auto [mean, sd] = row_moments(row);
        stats.mean[i] = mean;
        if (*lo == *hi) {
            stats.std[i] = 0.0;  // dead neuron: output row stays zero
            continue;
        }
        stats.std[i] = sd;
        auto dst = out.row(i);
        for (std::size_t j = 0; j < cols; ++j) dst[j] = (row[j] - mean) / sd;
    }
    return {ActivationMatrix(std::move(out), m.neurons(), m.samples(), true), std::move(stats)};
}

}  // namespace modforge
