#include "modforge/report.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "modforge/error.hpp"

namespace modforge {

using nlohmann::json;

std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

json to_json(const ObjectiveValue& v) { return json{{"L", v.L}, {"xi", v.xi}, {"B", v.balance}}; }

json scaled_1e6_json(const ObjectiveValue& v) {
    return json{{"L", v.L / 1e6}, {"B", v.balance / 1e6}};
}

json to_json(const IterDTrace& trace) {
    json iterations = json::array();
    for (const auto& rec : trace.iterations)
        iterations.push_back({{"t", rec.t},
                              {"L", rec.value.L},
                              {"xi", rec.value.xi},
                              {"B", rec.value.balance},
                              {"reassignments", rec.reassignments},
                              {"neuron_moves", rec.neuron_moves},
                              {"sample_moves", rec.sample_moves}});
    return json{{"status", std::string(to_string(trace.status))},
                {"initial", to_json(trace.initial)},
                {"iterations", std::move(iterations)}};
}

json to_json(const ClassifierReport& report) {
    return json{{"accuracy", report.accuracy},
                {"macro_f1", report.macro_f1},
                {"per_class_f1", report.per_class_f1},
                {"confusion", report.confusion},
                {"classes", report.model.classes},
                {"train_size", report.train_size},
                {"test_size", report.test_size},
                {"epochs", report.epochs}};
}

json to_json(const CategorySimilarity& sim) {
    json rows = json::array();
    for (std::size_t i = 0; i < sim.sd.rows(); ++i) {
        const auto r = sim.sd.row(i);
        rows.push_back(std::vector<double>(r.begin(), r.end()));
    }
    return json{{"classes", sim.classes}, {"sd", std::move(rows)}, {"diagonal", "self_pairs_included"}};
}

Partition partition_from_json(const json& j) {
    try {
        Partition p;
        if (j.contains("K"))
            p.K = j.at("K").get<std::size_t>();
        else if (j.contains("config") && j.at("config").contains("K"))
            p.K = j.at("config").at("K").get<std::size_t>();
        else
            throw DataError("partition file has no K");
        p.neuron_assign = j.at("neuron_assignment").get<std::vector<ModuleId>>();
        p.sample_assign = j.at("sample_assignment").get<std::vector<ModuleId>>();
        return p;
    } catch (const json::exception& e) {
        throw DataError("malformed partition file: " + std::string(e.what()));
    }
}

Partition read_partition(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open partition file: " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw DataError("partition file is not valid JSON: " + std::string(e.what()));
    }
    return partition_from_json(j);
}

json partition_json(const Partition& p) {
    return json{{"K", p.K}, {"neuron_assignment", p.neuron_assign}, {"sample_assignment", p.sample_assign}};
}

std::string heatmap_csv(const DenseMatrix& heatmap) {
    std::ostringstream out;
    out << "sample_module\\neuron_module";
    for (std::size_t j = 0; j < heatmap.cols(); ++j) out << ",U" << j;
    out << '\n';
    for (std::size_t i = 0; i < heatmap.rows(); ++i) {
        out << 'S' << i;
        for (double v : heatmap.row(i)) out << ',' << format_double(v);
        out << '\n';
    }
    return out.str();
}

std::string layer_distribution_csv(const LayerDistribution& dist) {
    std::ostringstream out;
    out << "module";
    for (std::size_t l = 0; l < dist.num_layers; ++l) out << ",layer_" << l;
    out << '\n';
    for (std::size_t k = 0; k < dist.counts.size(); ++k) {
        out << k;
        for (std::size_t c : dist.counts[k]) out << ',' << c;
        out << '\n';
    }
    return out.str();
}

}  // namespace modforge
