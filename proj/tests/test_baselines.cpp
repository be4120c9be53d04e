#include <cmath>

#include "coco/baselines.hpp"
#include "coco/errors.hpp"
#include "coco/rng.hpp"
#include "doctest.h"

using namespace coco;

namespace {

Batch make_batch(const std::vector<Vec>& rows, const std::vector<int>& labels,
                 int num_classes) {
    Batch b;
    b.num_classes = num_classes;
    b.features = Matrix(rows.size(), rows.front().size());
    for (std::size_t i = 0; i < rows.size(); ++i)
        std::copy(rows[i].begin(), rows[i].end(), b.features.row(i));
    b.labels = labels;
    return b;
}

} // namespace

TEST_SUITE("baselines") {

TEST_CASE("softmax loss with zero parameters is ln K per sample") {
    const auto batch = make_batch({{1, 2}, {3, -1}, {0.5, 0.5}}, {1, 2, 3}, 3);
    LinearClassifier clf;
    clf.weights = Matrix(3, 2);
    clf.biases.assign(3, 0.0);
    const auto r = softmax_loss(batch, clf);
    CHECK(r.loss == doctest::Approx(3.0 * std::log(3.0)).epsilon(1e-12));
}

TEST_CASE("softmax loss saturates to zero on a dominant correct logit") {
    const auto batch = make_batch({{1, 0}}, {1}, 2);
    LinearClassifier clf;
    clf.weights = Matrix(2, 2);
    clf.weights(0, 0) = 100.0;  // huge logit for the true class
    clf.biases.assign(2, 0.0);
    const auto r = softmax_loss(batch, clf);
    CHECK(r.loss < 1e-10);
}

TEST_CASE("softmax loss is invariant to a common bias shift") {
    Rng rng(61);
    const auto batch = make_batch({{1, 2}, {3, -1}}, {1, 2}, 2);
    LinearClassifier clf;
    clf.weights = Matrix(2, 2);
    for (auto& w : clf.weights.data) w = rng.normal();
    clf.biases = {0.3, -0.7};
    const double base = softmax_loss(batch, clf).loss;
    for (double c : {-50.0, 0.1, 12.0}) {
        LinearClassifier shifted = clf;
        for (auto& b : shifted.biases) b += c;
        CHECK(std::fabs(softmax_loss(batch, shifted).loss - base) < 1e-10);
    }
}

TEST_CASE("center loss values and gradients") {
    SUBCASE("features at their centers") {
        const auto batch = make_batch({{1, 2}, {3, 4}}, {1, 2}, 2);
        CenterBank bank;
        bank.centers = batch.features;
        const auto r = center_loss(batch, bank);
        CHECK(r.loss == 0.0);
        for (double g : r.d_features.data) CHECK(g == 0.0);
    }
    SUBCASE("unit offset quadratic form") {
        const auto batch = make_batch({{2, 0}}, {1}, 1);
        CenterBank bank;
        bank.centers = Matrix(1, 2);
        bank.centers(0, 0) = 1.0;  // difference f - c = [1, 0]
        const auto r = center_loss(batch, bank);
        CHECK(r.loss == doctest::Approx(0.5));
        CHECK(r.d_features(0, 0) == doctest::Approx(1.0));
        CHECK(r.d_features(0, 1) == doctest::Approx(0.0));
    }
    SUBCASE("non-negative, zero only at the centers") {
        Rng rng(67);
        const auto batch = make_batch({{1, 1}, {0, 2}}, {1, 1}, 1);
        CenterBank bank;
        bank.centers = Matrix(1, 2);
        bank.centers(0, 0) = rng.normal();
        bank.centers(0, 1) = rng.normal();
        CHECK(center_loss(batch, bank).loss > 0.0);
    }
}

TEST_CASE("center update matches the brute-force statistical rule") {
    Rng rng(71);
    for (int rep = 0; rep < 20; ++rep) {
        const int K = 3;
        std::vector<Vec> rows;
        std::vector<int> labels;
        for (int i = 0; i < 6; ++i) {
            rows.push_back({rng.normal(), rng.normal()});
            labels.push_back(1 + static_cast<int>(rng.uniform_index(K)));
        }
        const auto batch = make_batch(rows, labels, K);
        CenterBank bank;
        bank.update_rate = 0.5;
        bank.centers = Matrix(K, 2);
        for (auto& c : bank.centers.data) c = rng.normal();

        // Oracle: recompute the rule per class from scratch.
        Matrix expected = bank.centers;
        for (int k = 0; k < K; ++k) {
            Vec sum(2, 0.0);
            int count = 0;
            for (std::size_t i = 0; i < batch.size(); ++i) {
                if (labels[i] != k + 1) continue;
                for (std::size_t d = 0; d < 2; ++d)
                    sum[d] += bank.centers(static_cast<std::size_t>(k), d) -
                              batch.features(i, d);
                ++count;
            }
            if (count == 0) continue;
            for (std::size_t d = 0; d < 2; ++d)
                expected(static_cast<std::size_t>(k), d) -=
                    bank.update_rate * sum[d] / (1.0 + count);
        }

        center_update(batch, bank);
        for (std::size_t i = 0; i < bank.centers.data.size(); ++i)
            CHECK(bank.centers.data[i] ==
                  doctest::Approx(expected.data[i]).epsilon(1e-12));
    }
}

TEST_CASE("triplet loss cases") {
    TripletConfig cfg;
    cfg.margin = 0.2;

    SUBCASE("satisfied triplet is silent") {
        const Vec a{1, 0}, n{0, 1};
        const auto r = triplet_loss(a, a, n, cfg);  // ||a-n||^2 = 2 > margin
        CHECK(r.loss == 0.0);
        CHECK_FALSE(r.active);
        for (double g : r.d_anchor) CHECK(g == 0.0);
    }
    SUBCASE("anchor equals negative, orthogonal positive") {
        const Vec a{1, 0}, p{0, 1};
        const auto r = triplet_loss(a, p, a, cfg);
        CHECK(r.loss == doctest::Approx(2.2).epsilon(1e-12));
        CHECK(r.active);
    }
    SUBCASE("zero exactly when margin satisfied") {
        Rng rng(73);
        for (int rep = 0; rep < 50; ++rep) {
            Vec a(4), p(4), n(4);
            for (auto& x : a) x = rng.normal();
            for (auto& x : p) x = rng.normal();
            for (auto& x : n) x = rng.normal();
            double dp = 0, dn = 0;
            for (int d = 0; d < 4; ++d) {
                dp += (a[d] - p[d]) * (a[d] - p[d]);
                dn += (a[d] - n[d]) * (a[d] - n[d]);
            }
            const auto r = triplet_loss(a, p, n, cfg);
            CHECK(r.loss >= 0.0);
            if (dp + cfg.margin <= dn)
                CHECK(r.loss == 0.0);
            else
                CHECK(r.loss > 0.0);
        }
    }
}

} // TEST_SUITE
