#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "salibi/probes.hpp"
#include "salibi/rng.hpp"

#include <cmath>

using namespace salibi;

namespace {

// two well-separated clusters on the unit circle
void separable_set(std::size_t per_class, Rng& rng, FeatureMatrix& feats,
                   std::vector<int>& labels) {
    for (int cls = 0; cls < 2; ++cls)
        for (std::size_t i = 0; i < per_class; ++i) {
            const double cx = cls == 0 ? 1.0 : -1.0;
            feats.push_back({cx + rng.uniform(-0.1, 0.1), rng.uniform(-0.1, 0.1)});
            labels.push_back(cls);
        }
}

} // namespace

TEST_CASE("knn: duplicated train point at k=1 returns its own label") {
    FeatureMatrix train{{1, 0}, {0, 1}, {-1, 0}};
    std::vector<int> labels{0, 1, 2};
    auto pred = knn_predict(train, labels, {{0, 1}}, 1);
    CHECK(pred == std::vector<int>{1});
    CHECK(knn_probe(train, labels, train, labels, 1) == doctest::Approx(1.0));
}

TEST_CASE("knn: separated clusters are classified perfectly") {
    Rng rng(5);
    FeatureMatrix train, test;
    std::vector<int> train_l, test_l;
    separable_set(30, rng, train, train_l);
    separable_set(20, rng, test, test_l);
    CHECK(knn_probe(train, train_l, test, test_l, 20) == doctest::Approx(1.0));
}

TEST_CASE("knn: shuffled labels score near chance") {
    Rng rng(9);
    FeatureMatrix train, test;
    std::vector<int> train_l, test_l;
    for (int i = 0; i < 200; ++i) {
        train.push_back({rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)});
        train_l.push_back(static_cast<int>(rng.below(2)));
    }
    for (int i = 0; i < 200; ++i) {
        test.push_back({rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)});
        test_l.push_back(static_cast<int>(rng.below(2)));
    }
    const double acc = knn_probe(train, train_l, test, test_l, 20);
    // chance is 0.5; 200 Bernoulli trials, ~4 sigma band
    CHECK(acc > 0.5 - 0.15);
    CHECK(acc < 0.5 + 0.15);
}

TEST_CASE("knn contract errors") {
    CHECK_THROWS_AS(knn_predict({}, {}, {{1, 0}}, 1), std::invalid_argument);
    FeatureMatrix train{{1, 0}};
    CHECK_THROWS_AS(knn_predict(train, {0}, {{1, 0}}, 2), std::invalid_argument); // k > n
}

TEST_CASE("hungarian assignment solves small instances exactly") {
    // brute-force-verifiable example
    std::vector<std::vector<double>> cost{{4, 1, 3}, {2, 0, 5}, {3, 2, 2}};
    auto a = hungarian_assignment(cost);
    // optimal: row0->col1 (1), row1->col0 (2), row2->col2 (2), total 5
    CHECK(a == std::vector<std::size_t>{1, 0, 2});

    std::vector<std::vector<double>> ident{{0, 1}, {1, 0}};
    CHECK(hungarian_assignment(ident) == std::vector<std::size_t>{0, 1});

    std::vector<std::vector<double>> rect{{1, 2, 3}, {4, 5, 6}};
    CHECK_THROWS_AS(hungarian_assignment(rect), std::invalid_argument);
}

TEST_CASE("hungarian matches brute force on random instances") {
    Rng rng(13);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t n = 4;
        std::vector<std::vector<double>> cost(n, std::vector<double>(n));
        for (auto& row : cost)
            for (auto& v : row) v = rng.uniform(0, 10);
        auto a = hungarian_assignment(cost);
        double got = 0;
        for (std::size_t i = 0; i < n; ++i) got += cost[i][a[i]];

        std::vector<std::size_t> perm{0, 1, 2, 3};
        double best = 1e300;
        do {
            double total = 0;
            for (std::size_t i = 0; i < n; ++i) total += cost[i][perm[i]];
            best = std::min(best, total);
        } while (std::next_permutation(perm.begin(), perm.end()));
        CHECK(got == doctest::Approx(best).epsilon(1e-9));
    }
}

TEST_CASE("kmeans: separated clusters reach matched accuracy 1") {
    Rng rng(21);
    FeatureMatrix feats;
    std::vector<int> labels;
    separable_set(40, rng, feats, labels);
    KMeansResult r = kmeans_probe(feats, labels, 2, 7);
    CHECK(r.matched_accuracy == doctest::Approx(1.0));
    CHECK(r.assignments.size() == feats.size());
    CHECK(r.centroids.size() == 2);
}

TEST_CASE("kmeans: k equal to sample count isolates every point") {
    FeatureMatrix feats{{0, 0}, {1, 0}, {0, 1}, {5, 5}};
    std::vector<int> labels{0, 1, 2, 3};
    KMeansResult r = kmeans_probe(feats, labels, 4, 3);
    CHECK(r.matched_accuracy == doctest::Approx(1.0));
    std::vector<bool> used(4, false);
    for (int a : r.assignments) {
        CHECK(!used[static_cast<std::size_t>(a)]);
        used[static_cast<std::size_t>(a)] = true;
    }
}

TEST_CASE("kmeans: fixed seed gives identical runs, k=0 rejected") {
    Rng rng(31);
    FeatureMatrix feats;
    std::vector<int> labels;
    separable_set(25, rng, feats, labels);
    KMeansResult a = kmeans_probe(feats, labels, 3, 11);
    KMeansResult b = kmeans_probe(feats, labels, 3, 11);
    CHECK(a.assignments == b.assignments);
    CHECK(a.centroids == b.centroids);
    CHECK(a.matched_accuracy == b.matched_accuracy);

    CHECK_THROWS_AS(kmeans_probe(feats, labels, 0, 1), std::invalid_argument);
    CHECK_THROWS_AS(kmeans_probe(feats, labels, feats.size() + 1, 1), std::invalid_argument);
}

TEST_CASE("mlp probe separates a linear problem") {
    Rng rng(41);
    FeatureMatrix train, test;
    std::vector<int> train_l, test_l;
    separable_set(40, rng, train, train_l);
    separable_set(25, rng, test, test_l);
    MlpProbeOptions opts;
    opts.hidden = 16;
    opts.epochs = 60;
    opts.seed = 1;
    CHECK(mlp_probe(train, train_l, test, test_l, opts) >= 0.95);
}

TEST_CASE("mlp probe with one hidden unit cannot solve xor") {
    FeatureMatrix train;
    std::vector<int> labels;
    Rng rng(51);
    for (int i = 0; i < 100; ++i) {
        const double x = rng.uniform(-1, 1), y = rng.uniform(-1, 1);
        train.push_back({x, y});
        labels.push_back((x > 0) != (y > 0) ? 1 : 0);
    }
    MlpProbeOptions opts;
    opts.hidden = 1;
    opts.epochs = 80;
    opts.seed = 2;
    const double acc = mlp_probe(train, labels, train, labels, opts);
    CHECK(acc < 0.8); // capacity-limited, far from solving the task
}

TEST_CASE("mlp probe determinism and contracts") {
    Rng rng(61);
    FeatureMatrix train;
    std::vector<int> labels;
    separable_set(20, rng, train, labels);
    MlpProbeOptions opts;
    opts.hidden = 8;
    opts.epochs = 10;
    opts.seed = 5;
    const double a = mlp_probe(train, labels, train, labels, opts);
    const double b = mlp_probe(train, labels, train, labels, opts);
    CHECK(a == b);

    std::vector<int> single(labels.size(), 0);
    CHECK_THROWS_AS(mlp_probe(train, single, train, single, opts), std::invalid_argument);
}
