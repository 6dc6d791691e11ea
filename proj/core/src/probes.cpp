#include "salibi/probes.hpp"

#include "salibi/adam.hpp"
#include "salibi/ops.hpp"
#include "salibi/params.hpp"
#include "salibi/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <stdexcept>

namespace salibi {

namespace {

double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b) {
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    const double denom = std::sqrt(na) * std::sqrt(nb);
    return denom > 0.0 ? dot / denom : 0.0;
}

double sq_dist(const std::vector<double>& a, const std::vector<double>& b) {
    double d = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double x = a[i] - b[i];
        d += x * x;
    }
    return d;
}

} // namespace

std::vector<int> knn_predict(const FeatureMatrix& train_features,
                             const std::vector<int>& train_labels,
                             const FeatureMatrix& test_features, std::size_t k) {
    if (train_features.empty()) throw std::invalid_argument("knn: empty train set");
    if (train_features.size() != train_labels.size())
        throw std::invalid_argument("knn: features/labels size mismatch");
    if (k == 0 || k > train_features.size())
        throw std::invalid_argument("knn: k=" + std::to_string(k) + " out of range for " +
                                    std::to_string(train_features.size()) + " train samples");
    std::vector<int> predictions;
    predictions.reserve(test_features.size());
    for (const auto& q : test_features) {
        std::vector<std::pair<double, std::size_t>> sims; // (similarity, index)
        sims.reserve(train_features.size());
        for (std::size_t i = 0; i < train_features.size(); ++i)
            sims.emplace_back(cosine_similarity(q, train_features[i]), i);
        std::partial_sort(sims.begin(), sims.begin() + static_cast<std::ptrdiff_t>(k), sims.end(),
                          [](const auto& a, const auto& b) {
                              if (a.first != b.first) return a.first > b.first;
                              return a.second < b.second; // deterministic tie order
                          });
        std::map<int, std::pair<std::size_t, double>> votes; // label -> (count, summed sim)
        for (std::size_t i = 0; i < k; ++i) {
            auto& v = votes[train_labels[sims[i].second]];
            v.first += 1;
            v.second += sims[i].first;
        }
        int best = votes.begin()->first;
        auto best_v = votes.begin()->second;
        for (const auto& [label, v] : votes) {
            if (v.first > best_v.first || (v.first == best_v.first && v.second > best_v.second)) {
                best = label;
                best_v = v;
            }
        }
        predictions.push_back(best);
    }
    return predictions;
}

double knn_probe(const FeatureMatrix& train_features, const std::vector<int>& train_labels,
                 const FeatureMatrix& test_features, const std::vector<int>& test_labels,
                 std::size_t k) {
    const auto preds = knn_predict(train_features, train_labels, test_features, k);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < preds.size(); ++i)
        if (preds[i] == test_labels[i]) ++correct;
    return test_labels.empty() ? 0.0
                               : static_cast<double>(correct) / static_cast<double>(preds.size());
}

std::vector<std::size_t> hungarian_assignment(const std::vector<std::vector<double>>& cost) {
    // O(n^3) potentials formulation, 1-based internal indexing
    const std::size_t n = cost.size();
    for (const auto& row : cost)
        if (row.size() != n) throw std::invalid_argument("hungarian: cost matrix not square");
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
    std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
    for (std::size_t i = 1; i <= n; ++i) {
        p[0] = i;
        std::size_t j0 = 0;
        std::vector<double> minv(n + 1, inf);
        std::vector<bool> used(n + 1, false);
        do {
            used[j0] = true;
            const std::size_t i0 = p[j0];
            double delta = inf;
            std::size_t j1 = 0;
            for (std::size_t j = 1; j <= n; ++j) {
                if (used[j]) continue;
                const double cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (std::size_t j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            const std::size_t j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0 != 0);
    }
    std::vector<std::size_t> row_to_col(n, 0);
    for (std::size_t j = 1; j <= n; ++j)
        if (p[j] != 0) row_to_col[p[j] - 1] = j - 1;
    return row_to_col;
}

KMeansResult kmeans_probe(const FeatureMatrix& features, const std::vector<int>& labels,
                          std::size_t k, std::uint64_t seed) {
    const std::size_t n = features.size();
    if (k == 0) throw std::invalid_argument("kmeans: k must be >= 1");
    if (k > n)
        throw std::invalid_argument("kmeans: k=" + std::to_string(k) + " exceeds sample count " +
                                    std::to_string(n));
    if (labels.size() != n) throw std::invalid_argument("kmeans: features/labels size mismatch");
    const std::size_t dim = features[0].size();
    Rng rng(seed);

    // k-means++ seeding
    std::vector<std::vector<double>> centroids;
    centroids.push_back(features[rng.below(n)]);
    std::vector<double> d2(n);
    while (centroids.size() < k) {
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double best = std::numeric_limits<double>::infinity();
            for (const auto& c : centroids) best = std::min(best, sq_dist(features[i], c));
            d2[i] = best;
            total += best;
        }
        std::size_t pick = 0;
        if (total > 0.0) {
            const double r = rng.uniform() * total;
            double acc = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                acc += d2[i];
                if (acc >= r) {
                    pick = i;
                    break;
                }
            }
        } else {
            pick = rng.below(n);
        }
        centroids.push_back(features[pick]);
    }

    std::vector<int> assign(n, 0);
    for (std::size_t iter = 0; iter < 50; ++iter) {
        for (std::size_t i = 0; i < n; ++i) {
            double best = std::numeric_limits<double>::infinity();
            int bj = 0;
            for (std::size_t j = 0; j < k; ++j) {
                const double d = sq_dist(features[i], centroids[j]);
                if (d < best) {
                    best = d;
                    bj = static_cast<int>(j);
                }
            }
            assign[i] = bj;
        }
        std::vector<std::vector<double>> next(k, std::vector<double>(dim, 0.0));
        std::vector<std::size_t> counts(k, 0);
        for (std::size_t i = 0; i < n; ++i) {
            ++counts[static_cast<std::size_t>(assign[i])];
            for (std::size_t d = 0; d < dim; ++d)
                next[static_cast<std::size_t>(assign[i])][d] += features[i][d];
        }
        double shift = 0.0;
        for (std::size_t j = 0; j < k; ++j) {
            if (counts[j] == 0) { // empty cluster keeps its centroid
                next[j] = centroids[j];
                continue;
            }
            for (std::size_t d = 0; d < dim; ++d) next[j][d] /= static_cast<double>(counts[j]);
            shift = std::max(shift, std::sqrt(sq_dist(next[j], centroids[j])));
        }
        centroids = std::move(next);
        if (shift < 1e-6) break;
    }

    // Hungarian matching of clusters to label values
    std::vector<int> label_values;
    for (int l : labels)
        if (std::find(label_values.begin(), label_values.end(), l) == label_values.end())
            label_values.push_back(l);
    std::sort(label_values.begin(), label_values.end());
    const std::size_t m = std::max(k, label_values.size());
    std::vector<std::vector<double>> cost(m, std::vector<double>(m, 0.0));
    for (std::size_t i = 0; i < n; ++i) {
        const auto li = static_cast<std::size_t>(
            std::find(label_values.begin(), label_values.end(), labels[i]) - label_values.begin());
        cost[static_cast<std::size_t>(assign[i])][li] -= 1.0; // maximize matches
    }
    const auto match = hungarian_assignment(cost);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t col = match[static_cast<std::size_t>(assign[i])];
        if (col < label_values.size() && label_values[col] == labels[i]) ++correct;
    }

    KMeansResult res;
    res.assignments = std::move(assign);
    res.centroids = std::move(centroids);
    res.matched_accuracy = static_cast<double>(correct) / static_cast<double>(n);
    return res;
}

double mlp_probe(const FeatureMatrix& train_features, const std::vector<int>& train_labels,
                 const FeatureMatrix& test_features, const std::vector<int>& test_labels,
                 const MlpProbeOptions& opts) {
    if (train_features.empty()) throw std::invalid_argument("mlp_probe: empty train set");
    std::vector<int> label_values;
    for (int l : train_labels)
        if (std::find(label_values.begin(), label_values.end(), l) == label_values.end())
            label_values.push_back(l);
    std::sort(label_values.begin(), label_values.end());
    if (label_values.size() < 2)
        throw std::invalid_argument("mlp_probe: need at least two classes in train labels");
    const std::size_t classes = label_values.size();
    const std::size_t n = train_features.size();
    const std::size_t dim = train_features[0].size();
    auto label_index = [&](int l) {
        return static_cast<std::size_t>(
            std::find(label_values.begin(), label_values.end(), l) - label_values.begin());
    };

    Rng rng(opts.seed);
    ParamStore ps;
    Tensor w1 = ps.xavier("w1", dim, opts.hidden, rng);
    Tensor b1 = ps.zeros("b1", {opts.hidden});
    Tensor w2 = ps.xavier("w2", opts.hidden, classes, rng);
    Tensor b2 = ps.zeros("b2", {classes});

    std::vector<double> x_data(n * dim);
    for (std::size_t i = 0; i < n; ++i)
        std::copy(train_features[i].begin(), train_features[i].end(), x_data.begin() + i * dim);
    const Tensor x = Tensor::from({n, dim}, std::move(x_data));
    Tensor onehot = Tensor::zeros({n, classes});
    for (std::size_t i = 0; i < n; ++i)
        onehot.data()[i * classes + label_index(train_labels[i])] = 1.0;

    AdamState opt;
    for (std::size_t epoch = 0; epoch < opts.epochs; ++epoch) {
        ps.zero_grads();
        Tensor hidden = gelu(add_rows(matmul(x, w1), b1));
        Tensor logits = add_rows(matmul(hidden, w2), b2);
        Tensor probs = softmax_rows(logits);
        Tensor picked = sum_last(mul(probs, onehot)); // [n]
        Tensor loss = mul_scalar(mean(log(picked)), -1.0);
        backward(loss);
        auto tensors = ps.tensors();
        adam_step(tensors, opt, opts.lr);
    }

    // evaluation
    auto predict = [&](const std::vector<double>& f) {
        Tensor q = Tensor::from({std::size_t{1}, dim}, std::vector<double>(f));
        Tensor logits = add_rows(matmul(gelu(add_rows(matmul(q, w1), b1)), w2), b2);
        std::size_t best = 0;
        for (std::size_t c = 1; c < classes; ++c)
            if (logits.at(c) > logits.at(best)) best = c;
        return label_values[best];
    };
    std::size_t correct = 0;
    for (std::size_t i = 0; i < test_features.size(); ++i)
        if (predict(test_features[i]) == test_labels[i]) ++correct;
    return test_features.empty()
               ? 0.0
               : static_cast<double>(correct) / static_cast<double>(test_features.size());
}

} // namespace salibi
