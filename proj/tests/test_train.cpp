#include <cmath>
#include <filesystem>

#include "coco/errors.hpp"
#include "coco/io.hpp"
#include "coco/rng.hpp"
#include "coco/train.hpp"
#include "doctest.h"

using namespace coco;

namespace {

TrainConfig small_config(TrainLoss loss, int epochs = 5) {
    TrainConfig cfg;
    cfg.loss = loss;
    cfg.epochs = epochs;
    cfg.batch_size = 16;
    cfg.hidden = {16};
    cfg.feature_dim = 8;
    cfg.seed = 11;
    return cfg;
}

} // namespace

TEST_SUITE("train") {

TEST_CASE("mlp forward shapes and determinism") {
    const auto model = MlpModel::init({4, 8, 3}, 5, 0.05);
    Matrix x(6, 4);
    for (std::size_t i = 0; i < x.data.size(); ++i)
        x.data[i] = 0.1 * static_cast<double>(i % 7) - 0.3;
    const auto a = mlp_forward(model, x);
    const auto b = mlp_forward(model, x);
    CHECK(a.features().rows == 6);
    CHECK(a.features().cols == 3);
    CHECK(a.features() == b.features());
}

TEST_CASE("mlp parameter gradients match finite differences") {
    const auto model = MlpModel::init({3, 5, 2}, 9, 0.5);
    Matrix x(4, 3);
    Rng rng(13);
    for (auto& v : x.data) v = rng.normal();

    // Scalar head: L = sum of squared features, dL/dF = 2F.
    auto loss_of = [&](const MlpModel& m) {
        const auto acts = mlp_forward(m, x);
        double s = 0.0;
        for (double v : acts.features().data) s += v * v;
        return s;
    };

    const auto acts = mlp_forward(model, x);
    Matrix d_features = acts.features();
    for (auto& v : d_features.data) v *= 2.0;
    const auto grads = mlp_backward(model, x, acts, d_features);

    for (std::size_t l = 0; l < model.num_layers(); ++l) {
        for (std::size_t idx = 0; idx < model.weights[l].data.size(); ++idx) {
            MlpModel up = model, dn = model;
            const double h =
                1e-6 * std::max(1.0, std::fabs(model.weights[l].data[idx]));
            up.weights[l].data[idx] += h;
            dn.weights[l].data[idx] -= h;
            const double num = (loss_of(up) - loss_of(dn)) / (2.0 * h);
            CHECK(grads.d_weights[l].data[idx] ==
                  doctest::Approx(num).epsilon(1e-6));
        }
        for (std::size_t idx = 0; idx < model.biases[l].size(); ++idx) {
            MlpModel up = model, dn = model;
            up.biases[l][idx] += 1e-6;
            dn.biases[l][idx] -= 1e-6;
            const double num = (loss_of(up) - loss_of(dn)) / 2e-6;
            CHECK(grads.d_biases[l][idx] == doctest::Approx(num).epsilon(1e-6));
        }
    }
}

TEST_CASE("zero learning rate freezes the loss curve") {
    const auto data = synth_clusters(3, 8, 20, 0.1, 3);
    auto cfg = small_config(TrainLoss::coco, 4);
    cfg.optimizer.learning_rate = 0.0;
    const auto run = train(data, cfg);
    for (std::size_t e = 1; e < run.epochs.size(); ++e)
        CHECK(std::fabs(run.epochs[e].mean_loss - run.epochs[0].mean_loss) <
              1e-12);
}

TEST_CASE("same seed and config replay the loss curve bit for bit") {
    const auto data = synth_clusters(4, 8, 25, 0.1, 5);
    for (TrainLoss loss : {TrainLoss::coco, TrainLoss::softmax,
                           TrainLoss::center_softmax, TrainLoss::triplet}) {
        const auto cfg = small_config(loss, 4);
        const auto a = train(data, cfg);
        const auto b = train(data, cfg);
        REQUIRE(a.epochs.size() == b.epochs.size());
        for (std::size_t e = 0; e < a.epochs.size(); ++e) {
            CHECK(a.epochs[e].mean_loss == b.epochs[e].mean_loss);
            CHECK(a.epochs[e].train_accuracy == b.epochs[e].train_accuracy);
        }
        for (std::size_t l = 0; l < a.model.num_layers(); ++l)
            CHECK(a.model.weights[l] == b.model.weights[l]);
    }
}

TEST_CASE("first-epoch coco loss sits near ln K on spread-0.1 clusters") {
    for (std::uint64_t seed : {1ULL, 2ULL, 3ULL}) {
        const auto data = synth_clusters(4, 16, 50, 0.1, seed);
        auto cfg = small_config(TrainLoss::coco, 1);
        cfg.seed = seed;
        const auto run = train(data, cfg);
        const double lnk = std::log(4.0);
        CHECK(run.epochs[0].mean_loss >= 0.5 * lnk);
        CHECK(run.epochs[0].mean_loss <= 1.5 * lnk);
    }
}

TEST_CASE("coco training converges on an easy synthetic task") {
    const auto data = synth_clusters(4, 16, 50, 0.1, 21);
    auto cfg = small_config(TrainLoss::coco, 30);
    const auto run = train(data, cfg);
    CHECK(run.epochs.back().mean_loss < 0.1 * std::log(4.0));
    CHECK(run.epochs.back().train_accuracy >= 0.99);
}

TEST_CASE("batch centroid mode also trains") {
    const auto data = synth_clusters(3, 8, 30, 0.1, 23);
    auto cfg = small_config(TrainLoss::coco, 10);
    cfg.centroid_mode = CentroidMode::batch;
    const auto run = train(data, cfg);
    CHECK(run.epochs.back().mean_loss < run.epochs.front().mean_loss);
    CHECK(run.centroids.centroids.rows == 3);  // final full-pass means
}

TEST_CASE("weight decay off leaves zero-gradient parameters fixed") {
    // Constant zero input: first-layer weights never receive gradient
    // (input is zero), so with wd = 0 they must not move.
    Dataset data;
    data.num_classes = 2;
    data.inputs = Matrix(8, 4, 0.0);
    data.labels = {1, 2, 1, 2, 1, 2, 1, 2};
    auto cfg = small_config(TrainLoss::softmax, 3);
    cfg.optimizer.weight_decay = 0.0;
    const auto run = train(data, cfg);
    const auto fresh = MlpModel::init({4, 16, 8}, cfg.seed, cfg.init_std);
    CHECK(run.model.weights[0] == fresh.weights[0]);
}

TEST_CASE("extract_features is deterministic with the configured dim") {
    const auto data = synth_clusters(3, 8, 10, 0.1, 31);
    const auto cfg = small_config(TrainLoss::softmax, 2);
    const auto run = train(data, cfg);
    const Matrix f1 = extract_features(run.model, data.inputs);
    const Matrix f2 = extract_features(run.model, data.inputs);
    CHECK(f1 == f2);
    CHECK(f1.cols == 8);
    CHECK(f1.rows == data.size());
}

TEST_CASE("checkpoint round-trips the model and loss parameters") {
    namespace fs = std::filesystem;
    const auto dir = fs::temp_directory_path() / "cocolab_ckpt_test";
    fs::create_directories(dir);

    const auto data = synth_clusters(3, 8, 15, 0.1, 37);
    for (TrainLoss loss :
         {TrainLoss::coco, TrainLoss::softmax, TrainLoss::center_softmax}) {
        const auto cfg = small_config(loss, 2);
        const auto run = train(data, cfg);
        const auto path = (dir / "model.bin").string();
        save_checkpoint(path, run);
        const auto loaded = load_checkpoint(path);
        CHECK(loaded.loss == run.loss);
        CHECK(loaded.alpha == run.alpha);
        CHECK(loaded.model.layer_sizes == run.model.layer_sizes);
        for (std::size_t l = 0; l < run.model.num_layers(); ++l) {
            CHECK(loaded.model.weights[l] == run.model.weights[l]);
            CHECK(loaded.model.biases[l] == run.model.biases[l]);
        }
        CHECK(loaded.centroids.centroids == run.centroids.centroids);
        CHECK(loaded.classifier.weights == run.classifier.weights);
        CHECK(loaded.centers.centers == run.centers.centers);
    }

    SUBCASE("bad magic is rejected") {
        const auto path = (dir / "bad.bin").string();
        write_text_file(path, "NOTACKPT rest of the file");
        CHECK_THROWS_AS(load_checkpoint(path), BadMagicError);
    }
}

TEST_CASE("training diverges loudly on an absurd learning rate") {
    const auto data = synth_clusters(3, 8, 20, 0.1, 41);
    auto cfg = small_config(TrainLoss::softmax, 30);
    cfg.optimizer.learning_rate = 1e12;
    CHECK_THROWS_AS(train(data, cfg), DivergedError);
}

} // TEST_SUITE
