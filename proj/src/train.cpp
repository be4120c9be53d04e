#include "coco/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include "coco/core_math.hpp"
#include "coco/errors.hpp"
#include "coco/io.hpp"
#include "coco/rng.hpp"

namespace coco {

TrainLoss parse_train_loss(const std::string& name) {
    if (name == "coco") return TrainLoss::coco;
    if (name == "softmax") return TrainLoss::softmax;
    if (name == "center") return TrainLoss::center;
    if (name == "center+softmax" || name == "center_softmax")
        return TrainLoss::center_softmax;
    if (name == "triplet") return TrainLoss::triplet;
    if (name == "triplet+softmax" || name == "triplet_softmax")
        return TrainLoss::triplet_softmax;
    throw ConfigError("unknown training loss: " + name);
}

std::string train_loss_name(TrainLoss loss) {
    switch (loss) {
        case TrainLoss::coco: return "coco";
        case TrainLoss::softmax: return "softmax";
        case TrainLoss::center: return "center";
        case TrainLoss::center_softmax: return "center+softmax";
        case TrainLoss::triplet: return "triplet";
        case TrainLoss::triplet_softmax: return "triplet+softmax";
    }
    return "?";
}

Matrix extract_features(const MlpModel& model, const Matrix& inputs) {
    return mlp_forward(model, inputs).post.back();
}

namespace {

bool has_classifier(TrainLoss loss) {
    return loss == TrainLoss::softmax || loss == TrainLoss::center_softmax ||
           loss == TrainLoss::triplet_softmax;
}

bool has_centers(TrainLoss loss) {
    return loss == TrainLoss::center || loss == TrainLoss::center_softmax;
}

bool has_triplet(TrainLoss loss) {
    return loss == TrainLoss::triplet || loss == TrainLoss::triplet_softmax;
}

// Per-class means of the given features; classes are guaranteed dense.
Matrix class_means(const Matrix& features, const std::vector<int>& labels,
                   int num_classes) {
    Matrix means(static_cast<std::size_t>(num_classes), features.cols);
    std::vector<int> counts(static_cast<std::size_t>(num_classes), 0);
    for (std::size_t i = 0; i < features.rows; ++i) {
        const auto k = static_cast<std::size_t>(labels[i] - 1);
        const double* f = features.row(i);
        double* m = means.row(k);
        for (std::size_t d = 0; d < features.cols; ++d) m[d] += f[d];
        ++counts[k];
    }
    for (std::size_t k = 0; k < means.rows; ++k) {
        if (counts[k] == 0)
            throw Error("class " + std::to_string(k + 1) +
                        " has no samples; labels must be dense");
        const double inv = 1.0 / counts[k];
        double* m = means.row(k);
        for (std::size_t d = 0; d < means.cols; ++d) m[d] *= inv;
    }
    return means;
}

// Classical momentum: v = mu*v - lr*(g + wd*w); w += v.
void sgd_update(double* w, double* vel, const double* grad, std::size_t n,
                double lr, double momentum, double weight_decay) {
    for (std::size_t i = 0; i < n; ++i) {
        vel[i] = momentum * vel[i] - lr * (grad[i] + weight_decay * w[i]);
        w[i] += vel[i];
    }
}

struct TripletBatchResult {
    double loss_sum = 0.0;
    Matrix d_features;  // gradient w.r.t. raw (unnormalized) features
};

// Mines one triplet per anchor: a random in-batch positive and the hardest
// negative (smallest squared distance) among those still violating the
// margin. Gradients flow through the unit normalization.
TripletBatchResult triplet_batch(const Matrix& features,
                                 const std::vector<int>& labels, double margin,
                                 Rng& rng) {
    const std::size_t M = features.rows;
    const std::size_t D = features.cols;
    TripletConfig tc{margin};

    Matrix unit(M, D);
    Vec norms(M);
    for (std::size_t i = 0; i < M; ++i) {
        const double* f = features.row(i);
        norms[i] = l2_norm({f, D});
        if (norms[i] < kZeroNormThreshold)
            throw ZeroNormError("triplet: zero-norm feature");
        double* u = unit.row(i);
        for (std::size_t d = 0; d < D; ++d) u[d] = f[d] / norms[i];
    }

    Matrix d_unit(M, D);
    TripletBatchResult res;
    for (std::size_t a = 0; a < M; ++a) {
        std::vector<std::size_t> positives;
        for (std::size_t j = 0; j < M; ++j)
            if (j != a && labels[j] == labels[a]) positives.push_back(j);
        if (positives.empty()) continue;
        const std::size_t p =
            positives[rng.uniform_index(positives.size())];

        std::size_t best_n = M;
        double best_dist = HUGE_VAL;
        for (std::size_t j = 0; j < M; ++j) {
            if (labels[j] == labels[a]) continue;
            double dist = 0.0;
            const double* ua = unit.row(a);
            const double* uj = unit.row(j);
            for (std::size_t d = 0; d < D; ++d) {
                const double diff = ua[d] - uj[d];
                dist += diff * diff;
            }
            if (dist < best_dist) {
                best_dist = dist;
                best_n = j;
            }
        }
        if (best_n == M) continue;

        const auto r = triplet_loss({unit.row(a), D}, {unit.row(p), D},
                                    {unit.row(best_n), D}, tc);
        if (!r.active) continue;
        res.loss_sum += r.loss;
        for (std::size_t d = 0; d < D; ++d) {
            d_unit(a, d) += r.d_anchor[d];
            d_unit(p, d) += r.d_positive[d];
            d_unit(best_n, d) += r.d_negative[d];
        }
    }

    // Chain rule of u = f/||f||: project out the radial part and rescale.
    res.d_features = Matrix(M, D);
    for (std::size_t i = 0; i < M; ++i) {
        const double* g = d_unit.row(i);
        const double* u = unit.row(i);
        double radial = 0.0;
        for (std::size_t d = 0; d < D; ++d) radial += g[d] * u[d];
        double* out = res.d_features.row(i);
        for (std::size_t d = 0; d < D; ++d)
            out[d] = (g[d] - radial * u[d]) / norms[i];
    }
    return res;
}

std::vector<int> predict(const TrainRun& run, const Matrix& features,
                         const std::vector<int>& labels_for_means,
                         int num_classes) {
    const std::size_t N = features.rows;
    const std::size_t D = features.cols;
    std::vector<int> pred(N, 1);

    if (run.loss == TrainLoss::coco) {
        Matrix cents = run.centroids.centroids;
        if (cents.rows == 0)
            cents = class_means(features, labels_for_means, num_classes);
        Matrix unit_c(cents.rows, D);
        for (std::size_t k = 0; k < cents.rows; ++k) {
            const Vec u = normalize_scale({cents.row(k), D}, 1.0);
            std::copy(u.begin(), u.end(), unit_c.row(k));
        }
        for (std::size_t i = 0; i < N; ++i) {
            const double* f = features.row(i);
            double best = -HUGE_VAL;
            for (std::size_t k = 0; k < unit_c.rows; ++k) {
                const double* c = unit_c.row(k);
                double dot = 0.0;
                for (std::size_t d = 0; d < D; ++d) dot += c[d] * f[d];
                if (dot > best) {
                    best = dot;
                    pred[i] = static_cast<int>(k) + 1;
                }
            }
        }
    } else if (has_classifier(run.loss)) {
        for (std::size_t i = 0; i < N; ++i) {
            const double* f = features.row(i);
            double best = -HUGE_VAL;
            for (std::size_t k = 0; k < run.classifier.weights.rows; ++k) {
                const double* w = run.classifier.weights.row(k);
                double z = run.classifier.biases[k];
                for (std::size_t d = 0; d < D; ++d) z += w[d] * f[d];
                if (z > best) {
                    best = z;
                    pred[i] = static_cast<int>(k) + 1;
                }
            }
        }
    } else if (run.loss == TrainLoss::center) {
        for (std::size_t i = 0; i < N; ++i) {
            const double* f = features.row(i);
            double best = HUGE_VAL;
            for (std::size_t k = 0; k < run.centers.centers.rows; ++k) {
                const double* c = run.centers.centers.row(k);
                double dist = 0.0;
                for (std::size_t d = 0; d < D; ++d) {
                    const double diff = f[d] - c[d];
                    dist += diff * diff;
                }
                if (dist < best) {
                    best = dist;
                    pred[i] = static_cast<int>(k) + 1;
                }
            }
        }
    } else {  // triplet: nearest class mean by cosine
        const Matrix means = class_means(features, labels_for_means, num_classes);
        for (std::size_t i = 0; i < N; ++i) {
            double best = -HUGE_VAL;
            for (std::size_t k = 0; k < means.rows; ++k) {
                const double c = cosine_similarity({features.row(i), D},
                                                   {means.row(k), D});
                if (c > best) {
                    best = c;
                    pred[i] = static_cast<int>(k) + 1;
                }
            }
        }
    }
    return pred;
}

} // namespace

double evaluate_accuracy(const TrainRun& run, const Matrix& inputs,
                         const std::vector<int>& labels) {
    if (inputs.rows == 0)
        throw Error("evaluate_accuracy: empty input");
    int num_classes = 0;
    for (int l : labels) num_classes = std::max(num_classes, l);
    const Matrix features = extract_features(run.model, inputs);
    const auto pred = predict(run, features, labels, num_classes);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < labels.size(); ++i)
        if (pred[i] == labels[i]) ++hits;
    return static_cast<double>(hits) / static_cast<double>(labels.size());
}

TrainRun train(const Dataset& data, const TrainConfig& cfg) {
    if (data.size() == 0)
        throw Error("train: empty dataset");
    if (cfg.epochs < 1)
        throw ConfigError("train: epochs must be >= 1");
    if (cfg.batch_size < 1)
        throw ConfigError("train: batch_size must be >= 1");
    if (!(cfg.optimizer.momentum >= 0.0 && cfg.optimizer.momentum < 1.0))
        throw ConfigError("train: momentum must be in [0,1)");
    if (!(cfg.optimizer.learning_rate >= 0.0))
        throw ConfigError("train: learning rate must be >= 0");

    const int K = data.num_classes;
    const std::size_t N = data.size();

    TrainRun run;
    run.loss = cfg.loss;
    run.alpha = cfg.alpha > 0.0 ? cfg.alpha : default_alpha(K);

    std::vector<int> sizes;
    sizes.push_back(static_cast<int>(data.dim()));
    sizes.insert(sizes.end(), cfg.hidden.begin(), cfg.hidden.end());
    sizes.push_back(cfg.feature_dim);
    run.model = MlpModel::init(sizes, cfg.seed, cfg.init_std);

    Rng root(cfg.seed);

    // Loss-side parameters. Centroids and centers start at the class means
    // of an initial full pass through the untrained network.
    if (cfg.loss == TrainLoss::coco && cfg.centroid_mode == CentroidMode::parametric) {
        const Matrix feats = extract_features(run.model, data.inputs);
        run.centroids.mode = CentroidMode::parametric;
        run.centroids.centroids = class_means(feats, data.labels, K);
    }
    if (has_centers(cfg.loss)) {
        const Matrix feats = extract_features(run.model, data.inputs);
        run.centers.centers = class_means(feats, data.labels, K);
        run.centers.update_rate = cfg.center_update_rate;
    }
    if (has_classifier(cfg.loss)) {
        Rng clf_rng = root.derive(2);
        run.classifier.weights =
            Matrix(static_cast<std::size_t>(K),
                   static_cast<std::size_t>(cfg.feature_dim));
        for (auto& w : run.classifier.weights.data)
            w = clf_rng.normal(0.0, cfg.init_std);
        run.classifier.biases.assign(static_cast<std::size_t>(K), 0.0);
    }

    // Velocity buffers, one per trainable tensor.
    std::vector<Matrix> vel_w;
    std::vector<Vec> vel_b;
    for (std::size_t l = 0; l < run.model.num_layers(); ++l) {
        vel_w.emplace_back(run.model.weights[l].rows, run.model.weights[l].cols);
        vel_b.emplace_back(run.model.biases[l].size(), 0.0);
    }
    Matrix vel_centroids(run.centroids.centroids.rows,
                         run.centroids.centroids.cols);
    Matrix vel_clf_w(run.classifier.weights.rows, run.classifier.weights.cols);
    Vec vel_clf_b(run.classifier.biases.size(), 0.0);

    // Epoch boundaries where the learning rate drops.
    std::vector<int> drop_epochs;
    for (double p : cfg.optimizer.drop_points)
        drop_epochs.push_back(static_cast<int>(p * cfg.epochs));

    std::vector<std::size_t> order(N);
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        int stage = 0;
        for (int de : drop_epochs)
            if (epoch - 1 >= de) ++stage;
        const double lr =
            cfg.optimizer.learning_rate * std::pow(cfg.optimizer.drop_factor, stage);

        Rng epoch_rng = root.derive(1000 + static_cast<std::uint64_t>(epoch));
        epoch_rng.shuffle(order);

        double loss_sum = 0.0;
        for (std::size_t start = 0; start < N; start += cfg.batch_size) {
            const std::size_t end =
                std::min(N, start + static_cast<std::size_t>(cfg.batch_size));
            const std::size_t mb = end - start;

            Batch batch;
            batch.num_classes = K;
            batch.features = Matrix(mb, data.dim());
            batch.labels.resize(mb);
            for (std::size_t i = 0; i < mb; ++i) {
                const std::size_t src = order[start + i];
                std::memcpy(batch.features.row(i), data.inputs.row(src),
                            data.dim() * sizeof(double));
                batch.labels[i] = data.labels[src];
            }

            const MlpActivations acts = mlp_forward(run.model, batch.features);
            if (!acts.features().all_finite())
                throw DivergedError("train: non-finite features at epoch " +
                                    std::to_string(epoch));
            Batch fb;  // feature-space batch fed to the losses
            fb.num_classes = K;
            fb.features = acts.features();
            fb.labels = batch.labels;

            double batch_loss = 0.0;
            Matrix d_features(mb, static_cast<std::size_t>(cfg.feature_dim));
            Matrix d_centroids;
            Matrix d_clf_w;
            Vec d_clf_b;

            switch (cfg.loss) {
                case TrainLoss::coco: {
                    ScaleConfig sc;
                    sc.alpha = run.alpha;
                    sc.target_loss = cfg.target_loss;
                    CentroidBank local;
                    const CentroidBank* bank = &run.centroids;
                    if (cfg.centroid_mode == CentroidMode::batch) {
                        local = batch_centroids(fb);
                        bank = &local;
                    }
                    const LossOutput out = coco_forward(fb, *bank, sc);
                    const GradientBundle g = coco_backward(fb, *bank, sc, out);
                    batch_loss = out.loss;
                    d_features = g.d_features;
                    if (cfg.centroid_mode == CentroidMode::parametric)
                        d_centroids = g.d_centroids;
                    break;
                }
                case TrainLoss::softmax: {
                    const SoftmaxLossResult r = softmax_loss(fb, run.classifier);
                    batch_loss = r.loss;
                    d_features = r.d_features;
                    d_clf_w = r.d_weights;
                    d_clf_b = r.d_biases;
                    break;
                }
                case TrainLoss::center: {
                    const CenterLossResult r = center_loss(fb, run.centers);
                    batch_loss = r.loss;
                    d_features = r.d_features;
                    break;
                }
                case TrainLoss::center_softmax: {
                    const SoftmaxLossResult s = softmax_loss(fb, run.classifier);
                    const CenterLossResult c = center_loss(fb, run.centers);
                    batch_loss = s.loss + c.loss;
                    d_features = s.d_features;
                    for (std::size_t i = 0; i < d_features.data.size(); ++i)
                        d_features.data[i] += c.d_features.data[i];
                    d_clf_w = s.d_weights;
                    d_clf_b = s.d_biases;
                    break;
                }
                case TrainLoss::triplet: {
                    const TripletBatchResult r =
                        triplet_batch(fb.features, fb.labels, cfg.margin, epoch_rng);
                    batch_loss = r.loss_sum;
                    d_features = r.d_features;
                    break;
                }
                case TrainLoss::triplet_softmax: {
                    const TripletBatchResult t =
                        triplet_batch(fb.features, fb.labels, cfg.margin, epoch_rng);
                    const SoftmaxLossResult s = softmax_loss(fb, run.classifier);
                    batch_loss = t.loss_sum + s.loss;
                    d_features = s.d_features;
                    for (std::size_t i = 0; i < d_features.data.size(); ++i)
                        d_features.data[i] += t.d_features.data[i];
                    d_clf_w = s.d_weights;
                    d_clf_b = s.d_biases;
                    break;
                }
            }

            if (!std::isfinite(batch_loss))
                throw DivergedError("train: non-finite loss at epoch " +
                                    std::to_string(epoch));
            loss_sum += batch_loss;

            // Batch-mean gradients keep step sizes independent of M.
            const double inv_mb = 1.0 / static_cast<double>(mb);
            for (auto& g : d_features.data) g *= inv_mb;

            const MlpGradients grads =
                mlp_backward(run.model, batch.features, acts, d_features);
            for (std::size_t l = 0; l < run.model.num_layers(); ++l) {
                sgd_update(run.model.weights[l].data.data(),
                           vel_w[l].data.data(), grads.d_weights[l].data.data(),
                           run.model.weights[l].data.size(), lr,
                           cfg.optimizer.momentum, cfg.optimizer.weight_decay);
                sgd_update(run.model.biases[l].data(), vel_b[l].data(),
                           grads.d_biases[l].data(),
                           run.model.biases[l].size(), lr,
                           cfg.optimizer.momentum, 0.0);
            }
            if (d_centroids.rows > 0) {
                for (auto& g : d_centroids.data) g *= inv_mb;
                sgd_update(run.centroids.centroids.data.data(),
                           vel_centroids.data.data(), d_centroids.data.data(),
                           d_centroids.data.size(), lr, cfg.optimizer.momentum,
                           cfg.optimizer.weight_decay);
            }
            if (d_clf_w.rows > 0) {
                for (auto& g : d_clf_w.data) g *= inv_mb;
                for (auto& g : d_clf_b) g *= inv_mb;
                sgd_update(run.classifier.weights.data.data(),
                           vel_clf_w.data.data(), d_clf_w.data.data(),
                           d_clf_w.data.size(), lr, cfg.optimizer.momentum,
                           cfg.optimizer.weight_decay);
                sgd_update(run.classifier.biases.data(), vel_clf_b.data(),
                           d_clf_b.data(), d_clf_b.size(), lr,
                           cfg.optimizer.momentum, 0.0);
            }
            if (has_centers(cfg.loss))
                center_update(fb, run.centers);
        }

        EpochRecord rec;
        rec.epoch = epoch;
        rec.mean_loss = loss_sum / static_cast<double>(N);
        rec.train_accuracy = evaluate_accuracy(run, data.inputs, data.labels);
        if (!std::isfinite(rec.mean_loss))
            throw DivergedError("train: non-finite epoch loss");
        run.epochs.push_back(rec);
    }

    // Batch-mode runs keep the final full-pass class means so downstream
    // consumers always see a populated bank.
    if (cfg.loss == TrainLoss::coco && cfg.centroid_mode == CentroidMode::batch) {
        const Matrix feats = extract_features(run.model, data.inputs);
        Batch full;
        full.features = feats;
        full.labels = data.labels;
        full.num_classes = K;
        run.centroids = batch_centroids(full);
    }

    return run;
}

namespace {

constexpr char kCheckpointMagic[8] = {'C', 'O', 'C', 'O', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kCheckpointVersion = 1;

void write_matrix(std::ostream& out, const Matrix& m) {
    write_le_u32(out, static_cast<std::uint32_t>(m.rows));
    write_le_u32(out, static_cast<std::uint32_t>(m.cols));
    for (double v : m.data) write_le_f64(out, v);
}

Matrix read_matrix(std::istream& in, const char* what) {
    const std::uint32_t rows = read_le_u32(in, what);
    const std::uint32_t cols = read_le_u32(in, what);
    Matrix m(rows, cols);
    for (auto& v : m.data) v = read_le_f64(in, what);
    return m;
}

} // namespace

void save_checkpoint(const std::string& path, const TrainRun& run) {
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw IoError("cannot open for writing: " + path);
    out.write(kCheckpointMagic, 8);
    write_le_u32(out, kCheckpointVersion);
    write_le_u32(out, static_cast<std::uint32_t>(run.loss));
    write_le_f64(out, run.alpha);

    write_le_u32(out, static_cast<std::uint32_t>(run.model.layer_sizes.size()));
    for (int s : run.model.layer_sizes)
        write_le_u32(out, static_cast<std::uint32_t>(s));
    for (std::size_t l = 0; l < run.model.num_layers(); ++l) {
        for (double v : run.model.weights[l].data) write_le_f64(out, v);
        for (double v : run.model.biases[l]) write_le_f64(out, v);
    }

    std::uint32_t mask = 0;
    if (run.centroids.centroids.rows > 0) mask |= 1;
    if (run.classifier.weights.rows > 0) mask |= 2;
    if (run.centers.centers.rows > 0) mask |= 4;
    write_le_u32(out, mask);

    if (mask & 1) {
        write_le_u32(out, run.centroids.mode == CentroidMode::batch ? 1 : 0);
        write_matrix(out, run.centroids.centroids);
        write_le_u32(out, static_cast<std::uint32_t>(run.centroids.counts.size()));
        for (int c : run.centroids.counts)
            write_le_u32(out, static_cast<std::uint32_t>(c));
    }
    if (mask & 2) {
        write_matrix(out, run.classifier.weights);
        write_le_u32(out, static_cast<std::uint32_t>(run.classifier.biases.size()));
        for (double v : run.classifier.biases) write_le_f64(out, v);
    }
    if (mask & 4) {
        write_matrix(out, run.centers.centers);
        write_le_f64(out, run.centers.update_rate);
    }
    if (!out)
        throw IoError("write failed: " + path);
}

TrainRun load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw IoError("cannot open: " + path);
    char magic[8];
    if (!in.read(magic, 8))
        throw TruncatedFileError("checkpoint: truncated magic");
    if (std::memcmp(magic, kCheckpointMagic, 8) != 0)
        throw BadMagicError("checkpoint: bad magic in " + path);
    const std::uint32_t version = read_le_u32(in, "checkpoint version");
    if (version != kCheckpointVersion)
        throw Error("checkpoint: unsupported version " + std::to_string(version));

    TrainRun run;
    run.loss = static_cast<TrainLoss>(read_le_u32(in, "loss kind"));
    run.alpha = read_le_f64(in, "alpha");

    const std::uint32_t n_sizes = read_le_u32(in, "layer count");
    if (n_sizes < 2 || n_sizes > 64)
        throw Error("checkpoint: implausible layer count");
    std::vector<int> sizes(n_sizes);
    for (auto& s : sizes)
        s = static_cast<int>(read_le_u32(in, "layer size"));
    run.model.layer_sizes = sizes;
    for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
        Matrix w(static_cast<std::size_t>(sizes[l + 1]),
                 static_cast<std::size_t>(sizes[l]));
        for (auto& v : w.data) v = read_le_f64(in, "weights");
        run.model.weights.push_back(std::move(w));
        Vec b(static_cast<std::size_t>(sizes[l + 1]));
        for (auto& v : b) v = read_le_f64(in, "biases");
        run.model.biases.push_back(std::move(b));
    }

    const std::uint32_t mask = read_le_u32(in, "aux mask");
    if (mask & 1) {
        run.centroids.mode = read_le_u32(in, "centroid mode") == 1
                                 ? CentroidMode::batch
                                 : CentroidMode::parametric;
        run.centroids.centroids = read_matrix(in, "centroids");
        const std::uint32_t nc = read_le_u32(in, "centroid counts");
        run.centroids.counts.resize(nc);
        for (auto& c : run.centroids.counts)
            c = static_cast<int>(read_le_u32(in, "centroid count"));
    }
    if (mask & 2) {
        run.classifier.weights = read_matrix(in, "classifier weights");
        const std::uint32_t nb = read_le_u32(in, "classifier biases");
        run.classifier.biases.resize(nb);
        for (auto& v : run.classifier.biases)
            v = read_le_f64(in, "classifier bias");
    }
    if (mask & 4) {
        run.centers.centers = read_matrix(in, "centers");
        run.centers.update_rate = read_le_f64(in, "center update rate");
    }
    return run;
}

} // namespace coco
