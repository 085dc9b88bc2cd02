#include "modforge/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "modforge/error.hpp"
#include "modforge/rng.hpp"

namespace modforge {

namespace {

std::vector<std::string> sorted_classes(std::span<const std::optional<std::string>> labels) {
    std::vector<std::string> classes;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (!labels[i]) throw DataError("sample " + std::to_string(i) + " has no label");
        classes.push_back(*labels[i]);
    }
    std::sort(classes.begin(), classes.end());
    classes.erase(std::unique(classes.begin(), classes.end()), classes.end());
    return classes;
}

std::vector<std::size_t> encode(std::span<const std::optional<std::string>> labels,
                                const std::vector<std::string>& classes) {
    std::vector<std::size_t> y(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const auto it = std::lower_bound(classes.begin(), classes.end(), *labels[i]);
        if (it == classes.end() || *it != *labels[i])
            throw DataError("label '" + *labels[i] + "' is not among the given classes");
        y[i] = static_cast<std::size_t>(it - classes.begin());
    }
    return y;
}

}  // namespace

DenseMatrix extract_features(const DenseMatrix& a, const Partition& p) {
    p.validate(a.rows(), a.cols());
    DenseMatrix x(a.cols(), p.K);
    for (std::size_t u = 0; u < a.rows(); ++u) {
        const ModuleId k = p.neuron_assign[u];
        const auto row = a.row(u);
        for (std::size_t s = 0; s < row.size(); ++s) x(s, k) += row[s];
    }
    const auto n = p.neuron_counts();
    for (std::size_t s = 0; s < x.rows(); ++s)
        for (std::size_t k = 0; k < p.K; ++k) x(s, k) /= static_cast<double>(n[k]);
    return x;
}

ConfusionScores score_confusion(const Confusion& confusion) {
    const std::size_t c = confusion.size();
    ConfusionScores out;
    out.per_class_f1.assign(c, 0.0);
    std::size_t total = 0, correct = 0, seen = 0;
    double f1_sum = 0.0;
    for (std::size_t k = 0; k < c; ++k) {
        std::size_t support = 0, predicted = 0;
        for (std::size_t j = 0; j < c; ++j) {
            support += confusion[k][j];
            predicted += confusion[j][k];
        }
        total += support;
        correct += confusion[k][k];
        const double tp = static_cast<double>(confusion[k][k]);
        if (tp > 0.0) {
            // 2 tp / (2 tp + fp + fn)
            out.per_class_f1[k] = 2.0 * tp / (static_cast<double>(support) + static_cast<double>(predicted));
        }
        if (support > 0 || predicted > 0) {
            f1_sum += out.per_class_f1[k];
            ++seen;
        }
    }
    out.accuracy = total ? static_cast<double>(correct) / static_cast<double>(total) : 0.0;
    out.macro_f1 = seen ? f1_sum / static_cast<double>(seen) : 0.0;
    return out;
}

std::size_t ClassifierModel::predict(std::span<const double> x) const {
    std::size_t best = 0;
    double best_score = -INFINITY;
    for (std::size_t c = 0; c < classes.size(); ++c) {
        double z = bias[c];
        for (std::size_t k = 0; k < x.size(); ++k)
            z += weights(c, k) * (x[k] - feature_mean[k]) / feature_scale[k];
        if (z > best_score) {
            best_score = z;
            best = c;
        }
    }
    return best;
}

ClassifierReport train_eval_classifier(const DenseMatrix& features,
                                       std::span<const std::optional<std::string>> labels,
                                       std::uint64_t split_seed, const ClassifierOptions& options) {
    if (labels.size() != features.rows())
        throw DataError("classifier: " + std::to_string(labels.size()) + " labels for " +
                        std::to_string(features.rows()) + " feature vectors");
    const auto classes = sorted_classes(labels);
    if (classes.size() < 2) throw DataError("classifier needs at least 2 classes");
    const auto y = encode(labels, classes);
    const std::size_t num_classes = classes.size(), dims = features.cols();

    // stratified split
    Rng rng(split_seed);
    std::vector<std::vector<std::size_t>> by_class(num_classes);
    for (std::size_t i = 0; i < y.size(); ++i) by_class[y[i]].push_back(i);
    std::vector<std::size_t> train, test;
    for (auto& members : by_class) {
        rng.shuffle(std::span<std::size_t>(members));
        const auto n = members.size();
        auto n_test = static_cast<std::size_t>(std::llround(options.test_fraction * static_cast<double>(n)));
        n_test = std::min(n_test, n - 1);
        test.insert(test.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(n_test));
        train.insert(train.end(), members.begin() + static_cast<std::ptrdiff_t>(n_test), members.end());
    }
    std::sort(train.begin(), train.end());
    std::sort(test.begin(), test.end());
    if (test.empty()) throw DataError("classifier: test split is empty (too few samples)");

    ClassifierReport rep;
    rep.train_size = train.size();
    rep.test_size = test.size();
    ClassifierModel& model = rep.model;
    model.classes = classes;
    model.feature_mean.assign(dims, 0.0);
    model.feature_scale.assign(dims, 1.0);
    for (std::size_t i : train)
        for (std::size_t k = 0; k < dims; ++k) model.feature_mean[k] += features(i, k);
    for (double& v : model.feature_mean) v /= static_cast<double>(train.size());
    for (std::size_t k = 0; k < dims; ++k) {
        double ss = 0.0;
        for (std::size_t i : train) {
            const double d = features(i, k) - model.feature_mean[k];
            ss += d * d;
        }
        const double sd = std::sqrt(ss / static_cast<double>(train.size()));
        if (sd > 0.0) model.feature_scale[k] = sd;
    }

    DenseMatrix x(train.size(), dims);
    for (std::size_t r = 0; r < train.size(); ++r)
        for (std::size_t k = 0; k < dims; ++k)
            x(r, k) = (features(train[r], k) - model.feature_mean[k]) / model.feature_scale[k];

    model.weights = DenseMatrix(num_classes, dims);
    model.bias.assign(num_classes, 0.0);
    const double inv_n = 1.0 / static_cast<double>(train.size());
    std::vector<double> prob(num_classes);
    DenseMatrix grad_w(num_classes, dims);
    std::vector<double> grad_b(num_classes);

    for (std::size_t epoch = 0; epoch < options.max_epochs; ++epoch) {
        std::fill(grad_w.flat().begin(), grad_w.flat().end(), 0.0);
        std::fill(grad_b.begin(), grad_b.end(), 0.0);
        for (std::size_t r = 0; r < train.size(); ++r) {
            double zmax = -INFINITY;
            for (std::size_t c = 0; c < num_classes; ++c) {
                double z = model.bias[c];
                for (std::size_t k = 0; k < dims; ++k) z += model.weights(c, k) * x(r, k);
                prob[c] = z;
                zmax = std::max(zmax, z);
            }
            double norm = 0.0;
            for (double& z : prob) {
                z = std::exp(z - zmax);
                norm += z;
            }
            for (std::size_t c = 0; c < num_classes; ++c) {
                const double err = prob[c] / norm - (y[train[r]] == c ? 1.0 : 0.0);
                grad_b[c] += err * inv_n;
                for (std::size_t k = 0; k < dims; ++k) grad_w(c, k) += err * x(r, k) * inv_n;
            }
        }
        double gnorm = 0.0;
        for (std::size_t c = 0; c < num_classes; ++c) {
            for (std::size_t k = 0; k < dims; ++k) {
                grad_w(c, k) += options.l2 * model.weights(c, k);
                gnorm += grad_w(c, k) * grad_w(c, k);
            }
            gnorm += grad_b[c] * grad_b[c];
        }
        if (std::sqrt(gnorm) < options.gradient_tolerance) break;
        for (std::size_t c = 0; c < num_classes; ++c) {
            model.bias[c] -= options.learning_rate * grad_b[c];
            for (std::size_t k = 0; k < dims; ++k)
                model.weights(c, k) -= options.learning_rate * grad_w(c, k);
        }
        rep.epochs = epoch + 1;
    }

    rep.confusion.assign(num_classes, std::vector<std::size_t>(num_classes, 0));
    for (std::size_t i : test) ++rep.confusion[y[i]][model.predict(features.row(i))];
    const auto scores = score_confusion(rep.confusion);
    rep.accuracy = scores.accuracy;
    rep.macro_f1 = scores.macro_f1;
    rep.per_class_f1 = scores.per_class_f1;
    return rep;
}

ClassifierReport train_eval_classifier(const DenseMatrix& features, std::span<const std::string> labels,
                                       std::uint64_t split_seed, const ClassifierOptions& options) {
    std::vector<std::optional<std::string>> wrapped(labels.begin(), labels.end());
    return train_eval_classifier(features, wrapped, split_seed, options);
}

CategorySimilarity category_similarity(const DenseMatrix& features,
                                       std::span<const std::optional<std::string>> labels,
                                       std::span<const std::string> classes) {
    if (labels.size() != features.rows())
        throw DataError("category similarity: label count does not match feature rows");
    CategorySimilarity out;
    if (classes.empty()) {
        out.classes = sorted_classes(labels);
    } else {
        for (std::size_t i = 0; i < labels.size(); ++i)
            if (!labels[i]) throw DataError("sample " + std::to_string(i) + " has no label");
        out.classes.assign(classes.begin(), classes.end());
        std::sort(out.classes.begin(), out.classes.end());
    }
    const std::size_t c = out.classes.size(), dims = features.cols();
    const auto y = encode(labels, out.classes);

    // mean pairwise cosine = (sum of unit vectors) . (sum of unit vectors) / (n_c n_c')
    DenseMatrix unit_sums(c, dims);
    std::vector<std::size_t> counts(c, 0);
    for (std::size_t i = 0; i < features.rows(); ++i) {
        const auto row = features.row(i);
        double norm = 0.0;
        for (double v : row) norm += v * v;
        norm = std::sqrt(norm);
        ++counts[y[i]];
        if (norm == 0.0) continue;
        for (std::size_t k = 0; k < dims; ++k) unit_sums(y[i], k) += row[k] / norm;
    }
    for (std::size_t k = 0; k < c; ++k)
        if (counts[k] == 0) throw DataError("category '" + out.classes[k] + "' has no samples");

    out.sd = DenseMatrix(c, c);
    for (std::size_t i = 0; i < c; ++i)
        for (std::size_t j = i; j < c; ++j) {
            double d = 0.0;
            for (std::size_t k = 0; k < dims; ++k) d += unit_sums(i, k) * unit_sums(j, k);
            d /= static_cast<double>(counts[i]) * static_cast<double>(counts[j]);
            d = std::clamp(d, -1.0, 1.0);
            out.sd(i, j) = d;
            out.sd(j, i) = d;
        }
    return out;
}

DenseMatrix block_heatmap(const DenseMatrix& a, const Partition& p) {
    p.validate(a.rows(), a.cols());
    const DenseMatrix col_sums = all_sample_module_sums(a, p);  // M x K over neuron modules
    DenseMatrix h(p.K, p.K);
    for (std::size_t s = 0; s < a.cols(); ++s) {
        const ModuleId i = p.sample_assign[s];
        for (std::size_t j = 0; j < p.K; ++j) h(i, j) += col_sums(s, j);
    }
    const auto n = p.neuron_counts();
    const auto m = p.sample_counts();
    for (std::size_t i = 0; i < p.K; ++i)
        for (std::size_t j = 0; j < p.K; ++j)
            h(i, j) /= static_cast<double>(n[j]) * static_cast<double>(m[i]);
    return h;
}

LayerDistribution layer_distribution(const Partition& p, std::span<const NeuronMeta> neurons) {
    if (neurons.size() != p.neuron_assign.size())
        throw DataError("layer distribution: metadata lists " + std::to_string(neurons.size()) +
                        " neurons, partition has " + std::to_string(p.neuron_assign.size()));
    LayerDistribution out;
    for (const auto& n : neurons) out.num_layers = std::max<std::size_t>(out.num_layers, n.layer + 1);
    out.counts.assign(p.K, std::vector<std::size_t>(out.num_layers, 0));
    for (std::size_t u = 0; u < neurons.size(); ++u) {
        if (p.neuron_assign[u] >= p.K) throw ConstraintError("neuron assigned outside [0, K)");
        ++out.counts[p.neuron_assign[u]][neurons[u].layer];
    }
    return out;
}

std::vector<std::optional<std::string>> sample_labels(const ActivationMatrix& m) {
    std::vector<std::optional<std::string>> labels;
    labels.reserve(m.num_samples());
    for (const auto& s : m.samples()) labels.push_back(s.label);
    return labels;
}

}  // namespace modforge
