#include <cmath>

#include "coco/coco_loss.hpp"
#include "coco/core_math.hpp"
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

CentroidBank make_bank(const std::vector<Vec>& rows) {
    CentroidBank bank;
    bank.mode = CentroidMode::parametric;
    bank.centroids = Matrix(rows.size(), rows.front().size());
    for (std::size_t k = 0; k < rows.size(); ++k)
        std::copy(rows[k].begin(), rows[k].end(), bank.centroids.row(k));
    return bank;
}

Batch random_batch(Rng& rng, int M, int D, int K) {
    std::vector<Vec> rows;
    std::vector<int> labels;
    for (int i = 0; i < M; ++i) {
        Vec f(static_cast<std::size_t>(D));
        double sq = 0;
        do {
            sq = 0;
            for (auto& x : f) {
                x = rng.normal();
                sq += x * x;
            }
        } while (sq < 0.01);
        rows.push_back(f);
        labels.push_back(1 + static_cast<int>(rng.uniform_index(K)));
    }
    return make_batch(rows, labels, K);
}

CentroidBank random_bank(Rng& rng, int K, int D) {
    std::vector<Vec> rows;
    for (int k = 0; k < K; ++k) {
        Vec c(static_cast<std::size_t>(D));
        double sq = 0;
        do {
            sq = 0;
            for (auto& x : c) {
                x = rng.normal();
                sq += x * x;
            }
        } while (sq < 0.01);
        rows.push_back(c);
    }
    return make_bank(rows);
}

} // namespace

TEST_SUITE("coco_loss") {

TEST_CASE("batch_centroids means") {
    SUBCASE("one sample per class") {
        const auto b = make_batch({{1, 2}, {3, 4}}, {1, 2}, 2);
        const auto bank = batch_centroids(b);
        CHECK(bank.centroids(0, 0) == 1.0);
        CHECK(bank.centroids(0, 1) == 2.0);
        CHECK(bank.centroids(1, 0) == 3.0);
        CHECK(bank.centroids(1, 1) == 4.0);
        CHECK(bank.counts == std::vector<int>{1, 1});
    }
    SUBCASE("two identical features") {
        const auto b = make_batch({{5, 6}, {5, 6}}, {1, 1}, 1);
        const auto bank = batch_centroids(b);
        CHECK(bank.centroids(0, 0) == 5.0);
        CHECK(bank.centroids(0, 1) == 6.0);
    }
    SUBCASE("arithmetic mean") {
        const auto b = make_batch({{2, 0}, {0, 2}}, {1, 1}, 1);
        const auto bank = batch_centroids(b);
        CHECK(bank.centroids(0, 0) == doctest::Approx(1.0));
        CHECK(bank.centroids(0, 1) == doctest::Approx(1.0));
    }
    SUBCASE("absent class flagged unusable") {
        const auto b = make_batch({{1, 0}}, {1}, 3);
        const auto bank = batch_centroids(b);
        CHECK(bank.usable(0));
        CHECK_FALSE(bank.usable(1));
        CHECK_FALSE(bank.usable(2));
        CHECK(bank.counts == std::vector<int>{1, 0, 0});
    }
}

TEST_CASE("optimal_alpha forms") {
    // Frozen from a 40-digit evaluation of 0.5*ln((K-1)/(e^eps - 1)).
    CHECK(optimal_alpha(10, 1e-4, AlphaForm::exact_bound) ==
          doctest::Approx(5.7037574744478677).epsilon(1e-13));
    CHECK(optimal_alpha(10, 1e-4, AlphaForm::paper_closed_form) ==
          doctest::Approx(4.0986122886681097).epsilon(1e-13));
    CHECK(optimal_alpha(2, std::log(2.0), AlphaForm::exact_bound) ==
          doctest::Approx(0.0));
    CHECK_THROWS_AS(optimal_alpha(1, 1e-4, AlphaForm::exact_bound),
                    InvalidKError);
    CHECK(default_alpha(10) ==
          optimal_alpha(10, 1e-4, AlphaForm::paper_closed_form));
}

TEST_CASE("optimal_alpha positive for small eps") {
    for (int K : {2, 10, 1000}) {
        CHECK(optimal_alpha(K, 1e-4, AlphaForm::exact_bound) > 0.0);
        CHECK(optimal_alpha(K, 1e-4, AlphaForm::paper_closed_form) > 0.0);
    }
}

TEST_CASE("scale bound consistency: loss cap holds just above the bound") {
    Rng rng(23);
    for (int rep = 0; rep < 100; ++rep) {
        const int K = 2 + static_cast<int>(rng.uniform_index(100000));
        const double eps = std::exp(rng.uniform(std::log(1e-6), std::log(1e-1)));
        const double delta = std::exp(rng.uniform(std::log(1e-9), std::log(1.0)));
        const double alpha =
            optimal_alpha(K, eps, AlphaForm::exact_bound) + delta;
        // log(e^a + (K-1)e^-a) - a, evaluated without cancellation.
        const double worst = std::log1p((K - 1) * std::exp(-2.0 * alpha));
        CHECK(worst < eps);
    }
}

TEST_CASE("coco_forward hand-computed two-class example") {
    const auto batch = make_batch({{2, 0}}, {1}, 2);
    const auto bank = make_bank({{1, 0}, {0, 1}});
    ScaleConfig cfg;
    cfg.alpha = 1.0;
    const LossOutput out = coco_forward(batch, bank, cfg);
    // logits [1, 0]; p1 = e/(e+1); loss = -log p1. 40-digit oracle values.
    CHECK(out.probs(0, 0) == doctest::Approx(0.73105857863000488).epsilon(1e-14));
    CHECK(out.probs(0, 1) == doctest::Approx(0.26894142136999512).epsilon(1e-14));
    CHECK(out.loss == doctest::Approx(0.31326168751822283).epsilon(1e-14));
    CHECK(out.targets(0, 0) == 1.0);
    CHECK(out.targets(0, 1) == 0.0);
}

TEST_CASE("identical centroids give the uniform distribution and ln K loss") {
    Rng rng(31);
    const int K = 5;
    const auto batch = random_batch(rng, 4, 8, K);
    const Vec c{1.0, 2.0, 0.5, -1.0, 0.0, 0.25, 1.5, -2.0};
    const auto bank = make_bank(std::vector<Vec>(K, c));
    ScaleConfig cfg;
    cfg.alpha = default_alpha(K);
    const LossOutput out = coco_forward(batch, bank, cfg);
    for (std::size_t i = 0; i < batch.size(); ++i)
        for (int k = 0; k < K; ++k)
            CHECK(out.probs(i, static_cast<std::size_t>(k)) ==
                  doctest::Approx(1.0 / K).epsilon(1e-12));
    CHECK(out.loss ==
          doctest::Approx(batch.size() * std::log(double(K))).epsilon(1e-12));
}

TEST_CASE("feature rescaling leaves loss and probabilities unchanged") {
    Rng rng(37);
    const auto batch = random_batch(rng, 6, 8, 4);
    const auto bank = random_bank(rng, 4, 8);
    ScaleConfig cfg;
    cfg.alpha = default_alpha(4);
    const LossOutput base = coco_forward(batch, bank, cfg);

    for (double c : {1e-3, 7.0, 1e3}) {
        Batch scaled = batch;
        for (std::size_t d = 0; d < scaled.dim(); ++d)
            scaled.features(2, d) *= c;
        const LossOutput out = coco_forward(scaled, bank, cfg);
        CHECK(std::fabs(out.loss - base.loss) <=
              1e-10 * std::max(1.0, std::fabs(base.loss)));
        for (std::size_t i = 0; i < batch.size(); ++i)
            for (std::size_t k = 0; k < 4; ++k)
                CHECK(std::fabs(out.probs(i, k) - base.probs(i, k)) < 1e-12);
    }
}

TEST_CASE("probability rows sum to one") {
    Rng rng(41);
    for (int rep = 0; rep < 50; ++rep) {
        const int K = 2 + static_cast<int>(rng.uniform_index(20));
        const auto batch = random_batch(rng, 8, 4, K);
        const auto bank = random_bank(rng, K, 4);
        ScaleConfig cfg;
        cfg.alpha = default_alpha(K);
        const LossOutput out = coco_forward(batch, bank, cfg);
        for (std::size_t i = 0; i < batch.size(); ++i) {
            double sum = 0.0;
            for (int k = 0; k < K; ++k)
                sum += out.probs(i, static_cast<std::size_t>(k));
            CHECK(std::fabs(sum - 1.0) < 1e-12);
        }
    }
}

TEST_CASE("loss equals the negative log-likelihood of emitted probabilities") {
    Rng rng(43);
    for (int rep = 0; rep < 100; ++rep) {
        const int K = 2 + static_cast<int>(rng.uniform_index(10));
        const int M = 1 + static_cast<int>(rng.uniform_index(12));
        const auto batch = random_batch(rng, M, 6, K);
        const auto bank = random_bank(rng, K, 6);
        ScaleConfig cfg;
        cfg.alpha = default_alpha(K);
        const LossOutput out = coco_forward(batch, bank, cfg);
        double recomputed = 0.0;
        for (std::size_t i = 0; i < batch.size(); ++i)
            recomputed -= std::log(
                out.probs(i, static_cast<std::size_t>(batch.labels[i] - 1)));
        CHECK(std::fabs(recomputed - out.loss) < 1e-10);
    }
}

TEST_CASE("gradients are tangential to features and centroids") {
    Rng rng(47);
    for (int rep = 0; rep < 50; ++rep) {
        const int K = 2 + static_cast<int>(rng.uniform_index(8));
        const auto batch = random_batch(rng, 6, 8, K);
        const auto bank = random_bank(rng, K, 8);
        ScaleConfig cfg;
        cfg.alpha = default_alpha(K);
        const LossOutput out = coco_forward(batch, bank, cfg);
        const GradientBundle g = coco_backward(batch, bank, cfg, out);

        for (std::size_t i = 0; i < batch.size(); ++i) {
            double dot = 0.0, gnorm = 0.0, fnorm = 0.0;
            for (std::size_t d = 0; d < batch.dim(); ++d) {
                dot += g.d_features(i, d) * batch.features(i, d);
                gnorm += g.d_features(i, d) * g.d_features(i, d);
                fnorm += batch.features(i, d) * batch.features(i, d);
            }
            const double denom = std::sqrt(gnorm) * std::sqrt(fnorm);
            if (denom > 1e-12) CHECK(std::fabs(dot) / denom < 1e-10);
        }
        for (int k = 0; k < K; ++k) {
            double dot = 0.0, gnorm = 0.0, cnorm = 0.0;
            for (std::size_t d = 0; d < batch.dim(); ++d) {
                const auto ks = static_cast<std::size_t>(k);
                dot += g.d_centroids(ks, d) * bank.centroids(ks, d);
                gnorm += g.d_centroids(ks, d) * g.d_centroids(ks, d);
                cnorm += bank.centroids(ks, d) * bank.centroids(ks, d);
            }
            const double denom = std::sqrt(gnorm) * std::sqrt(cnorm);
            if (denom > 1e-12) CHECK(std::fabs(dot) / denom < 1e-10);
        }
    }
}

TEST_CASE("raising the true-class logit lowers that sample's loss") {
    Rng rng(53);
    for (int rep = 0; rep < 100; ++rep) {
        const std::size_t K = 2 + rng.uniform_index(10);
        Vec z(K);
        for (auto& x : z) x = rng.normal(0.0, 3.0);
        const std::size_t li = rng.uniform_index(K);
        const double before = -std::log(stable_softmax(z)[li]);
        z[li] += std::exp(rng.uniform(std::log(1e-3), std::log(2.0)));
        const double after = -std::log(stable_softmax(z)[li]);
        CHECK(after < before);
    }
}

TEST_CASE("batch mode: absent classes are excluded, missing own class errors") {
    const auto batch = make_batch({{1, 0}, {0, 1}}, {1, 2}, 3);
    const auto bank = batch_centroids(batch);  // class 3 unusable
    ScaleConfig cfg;
    cfg.alpha = 2.0;

    const LossOutput out = coco_forward(batch, bank, cfg);
    for (std::size_t i = 0; i < 2; ++i) {
        CHECK(out.probs(i, 2) == 0.0);
        CHECK(out.probs(i, 0) + out.probs(i, 1) == doctest::Approx(1.0));
    }

    // A sample whose own class has no centroid in the bank.
    const auto orphan = make_batch({{1, 1}}, {3}, 3);
    CHECK_THROWS_AS(coco_forward(orphan, bank, cfg), UnusableCentroidError);
}

TEST_CASE("zero-norm inputs are rejected") {
    const auto batch = make_batch({{0, 0}}, {1}, 2);
    const auto bank = make_bank({{1, 0}, {0, 1}});
    ScaleConfig cfg;
    cfg.alpha = 1.0;
    CHECK_THROWS_AS(coco_forward(batch, bank, cfg), ZeroNormError);

    const auto ok = make_batch({{1, 0}}, {1}, 2);
    const auto bad_bank = make_bank({{0, 0}, {0, 1}});
    CHECK_THROWS_AS(coco_forward(ok, bad_bank, cfg), ZeroNormError);
}

TEST_CASE("naive pairwise objective") {
    ScaleConfig cfg;
    cfg.pair_epsilon = 1e-2;

    SUBCASE("same-class identical features: 1/epsilon per ordered pair") {
        const auto b = make_batch({{1, 2}, {1, 2}}, {1, 1}, 1);
        CHECK(naive_pair_loss(b, cfg) == doctest::Approx(200.0).epsilon(1e-12));
    }
    SUBCASE("cross-class pairs contribute zero") {
        const auto b = make_batch({{1, 0}, {0.5, 0.5}}, {1, 2}, 2);
        CHECK(naive_pair_loss(b, cfg) == doctest::Approx(0.0));
    }
    SUBCASE("mixed batch matches the brute-force double loop") {
        Rng rng(59);
        for (int rep = 0; rep < 20; ++rep) {
            const auto b = random_batch(rng, 3, 4, 2);
            // Independent oracle: cosine per ordered pair, straight sum.
            double expected = 0.0;
            for (std::size_t i = 0; i < b.size(); ++i)
                for (std::size_t j = 0; j < b.size(); ++j) {
                    if (i == j) continue;
                    const double c = cosine_similarity(
                        {b.features.row(i), b.dim()}, {b.features.row(j), b.dim()});
                    const double same =
                        b.labels[i] == b.labels[j] ? 1.0 : 0.0;
                    expected +=
                        same * c / ((1.0 - same) * c + cfg.pair_epsilon);
                }
            CHECK(naive_pair_loss(b, cfg) ==
                  doctest::Approx(expected).epsilon(1e-12));
        }
    }
    SUBCASE("needs two samples") {
        const auto b = make_batch({{1, 0}}, {1}, 1);
        CHECK_THROWS(naive_pair_loss(b, cfg));
    }
}

} // TEST_SUITE
