#pragma once

#include <cstdint>
#include <vector>

namespace salibi {

using FeatureMatrix = std::vector<std::vector<double>>;

// Cosine-similarity k-nearest-neighbors majority vote; vote ties broken by
// summed similarity. Returns accuracy on the test set.
double knn_probe(const FeatureMatrix& train_features, const std::vector<int>& train_labels,
                 const FeatureMatrix& test_features, const std::vector<int>& test_labels,
                 std::size_t k = 20);

std::vector<int> knn_predict(const FeatureMatrix& train_features,
                             const std::vector<int>& train_labels,
                             const FeatureMatrix& test_features, std::size_t k);

struct KMeansResult {
    std::vector<int> assignments;
    std::vector<std::vector<double>> centroids;
    double matched_accuracy = 0.0; // via Hungarian matching of clusters to labels
};

// Lloyd's algorithm with k-means++ initialization, 50 iterations or centroid
// shift below 1e-6.
KMeansResult kmeans_probe(const FeatureMatrix& features, const std::vector<int>& labels,
                          std::size_t k, std::uint64_t seed);

// Minimum-cost assignment (Hungarian algorithm) on a square cost matrix;
// returns column assigned to each row.
std::vector<std::size_t> hungarian_assignment(const std::vector<std::vector<double>>& cost);

struct MlpProbeOptions {
    std::size_t hidden = 2048;
    std::size_t epochs = 50;
    double lr = 1e-3;
    std::uint64_t seed = 0;
};

// Single-hidden-layer classifier trained with Adam on softmax cross-entropy.
double mlp_probe(const FeatureMatrix& train_features, const std::vector<int>& train_labels,
                 const FeatureMatrix& test_features, const std::vector<int>& test_labels,
                 const MlpProbeOptions& opts);

} // namespace salibi
