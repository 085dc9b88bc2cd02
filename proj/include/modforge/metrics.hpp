#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "modforge/dense_matrix.hpp"
#include "modforge/matrix_io.hpp"
#include "modforge/objective.hpp"

namespace modforge {

// Activation pattern vectors: M x K, row s holds x_{s,k} = mean over U_k of A[u, s].
DenseMatrix extract_features(const DenseMatrix& a, const Partition& p);

using Confusion = std::vector<std::vector<std::size_t>>;  // [true class][predicted class]

struct ConfusionScores {
    double accuracy = 0.0;
    double macro_f1 = 0.0;             // mean over classes seen in truth or predictions
    std::vector<double> per_class_f1;  // 0 for classes with no true positives
};

ConfusionScores score_confusion(const Confusion& confusion);

struct ClassifierOptions {
    double test_fraction = 0.2;
    double l2 = 1e-4;
    double learning_rate = 0.1;
    std::size_t max_epochs = 500;
    double gradient_tolerance = 1e-6;
};

// Multinomial logistic regression on standardized features.
struct ClassifierModel {
    std::vector<std::string> classes;   // sorted; row c of weights scores classes[c]
    DenseMatrix weights;                // C x K
    std::vector<double> bias;           // C
    std::vector<double> feature_mean;   // standardization, fitted on the training split
    std::vector<double> feature_scale;

    std::size_t predict(std::span<const double> x) const;
};

struct ClassifierReport {
    double accuracy = 0.0;
    double macro_f1 = 0.0;
    std::vector<double> per_class_f1;
    Confusion confusion;
    ClassifierModel model;
    std::size_t train_size = 0;
    std::size_t test_size = 0;
    std::size_t epochs = 0;
};

// Seeded stratified split, then full-batch gradient descent. Throws DataError
// on a missing label, on single-class data and when the test split is empty.
ClassifierReport train_eval_classifier(const DenseMatrix& features,
                                       std::span<const std::optional<std::string>> labels,
                                       std::uint64_t split_seed,
                                       const ClassifierOptions& options = {});
ClassifierReport train_eval_classifier(const DenseMatrix& features,
                                       std::span<const std::string> labels,
                                       std::uint64_t split_seed,
                                       const ClassifierOptions& options = {});

struct CategorySimilarity {
    std::vector<std::string> classes;
    DenseMatrix sd;  // C x C mean pairwise cosine; the diagonal includes self-pairs
};

// Zero feature vectors have cosine 0 with everything, themselves included.
// If `classes` is given it fixes the order and every class must have a sample.
CategorySimilarity category_similarity(const DenseMatrix& features,
                                       std::span<const std::optional<std::string>> labels,
                                       std::span<const std::string> classes = {});

// H[i][j] = mean of A over sample module i x neuron module j.
DenseMatrix block_heatmap(const DenseMatrix& a, const Partition& p);

struct LayerDistribution {
    std::size_t num_layers = 0;  // max layer + 1
    std::vector<std::vector<std::size_t>> counts;  // [module][layer]
};

LayerDistribution layer_distribution(const Partition& p, std::span<const NeuronMeta> neurons);

std::vector<std::optional<std::string>> sample_labels(const ActivationMatrix& m);

}  // namespace modforge
