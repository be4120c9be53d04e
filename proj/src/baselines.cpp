#include "coco/baselines.hpp"

#include <cmath>

#include "coco/core_math.hpp"
#include "coco/errors.hpp"

namespace coco {

SoftmaxLossResult softmax_loss(const Batch& batch, const LinearClassifier& clf) {
    batch.validate();
    const std::size_t M = batch.size();
    const std::size_t D = batch.dim();
    const std::size_t K = static_cast<std::size_t>(batch.num_classes);
    if (clf.weights.rows != K || clf.weights.cols != D || clf.biases.size() != K)
        throw DimMismatchError("softmax_loss: classifier shape mismatch");

    SoftmaxLossResult res;
    res.probs = Matrix(M, K);
    res.d_features = Matrix(M, D);
    res.d_weights = Matrix(K, D);
    res.d_biases.assign(K, 0.0);
    Vec sample_loss(M);

    // Per-sample logits, probabilities and the feature gradient
    // W^T (p - t); each row is owned by one thread.
#pragma omp parallel for schedule(static) if (M * K * D > 4096)
    for (std::size_t i = 0; i < M; ++i) {
        const double* f = batch.features.row(i);
        double* p = res.probs.row(i);
        for (std::size_t k = 0; k < K; ++k) {
            const double* w = clf.weights.row(k);
            double z = clf.biases[k];
            for (std::size_t d = 0; d < D; ++d) z += w[d] * f[d];
            p[k] = z;
        }
        stable_softmax_inplace(p, K);
        const std::size_t li = static_cast<std::size_t>(batch.labels[i] - 1);
        sample_loss[i] = -std::log(p[li]);

        double* g = res.d_features.row(i);
        for (std::size_t k = 0; k < K; ++k) {
            const double coeff = p[k] - (k == li ? 1.0 : 0.0);
            const double* w = clf.weights.row(k);
            for (std::size_t d = 0; d < D; ++d) g[d] += coeff * w[d];
        }
    }

    // Parameter gradients accumulate over samples in ascending order per
    // class row, so results match the serial reference bit for bit.
#pragma omp parallel for schedule(static) if (M * K * D > 4096)
    for (std::size_t k = 0; k < K; ++k) {
        double* gw = res.d_weights.row(k);
        double gb = 0.0;
        for (std::size_t i = 0; i < M; ++i) {
            const std::size_t li = static_cast<std::size_t>(batch.labels[i] - 1);
            const double coeff = res.probs(i, k) - (k == li ? 1.0 : 0.0);
            const double* f = batch.features.row(i);
            for (std::size_t d = 0; d < D; ++d) gw[d] += coeff * f[d];
            gb += coeff;
        }
        res.d_biases[k] = gb;
    }

    double total = 0.0;
    for (std::size_t i = 0; i < M; ++i) total += sample_loss[i];
    res.loss = total;
    return res;
}

CenterLossResult center_loss(const Batch& batch, const CenterBank& bank) {
    batch.validate();
    const std::size_t M = batch.size();
    const std::size_t D = batch.dim();
    if (bank.centers.rows != static_cast<std::size_t>(batch.num_classes) ||
        bank.centers.cols != D)
        throw DimMismatchError("center_loss: center bank shape mismatch");

    CenterLossResult res;
    res.d_features = Matrix(M, D);
    double total = 0.0;
    for (std::size_t i = 0; i < M; ++i) {
        const double* f = batch.features.row(i);
        const double* c = bank.centers.row(static_cast<std::size_t>(batch.labels[i] - 1));
        double* g = res.d_features.row(i);
        double sq = 0.0;
        for (std::size_t d = 0; d < D; ++d) {
            const double diff = f[d] - c[d];
            g[d] = diff;
            sq += diff * diff;
        }
        total += 0.5 * sq;
    }
    res.loss = total;
    return res;
}

void center_update(const Batch& batch, CenterBank& bank) {
    batch.validate();
    const std::size_t D = batch.dim();
    const std::size_t K = static_cast<std::size_t>(batch.num_classes);
    if (bank.centers.rows != K || bank.centers.cols != D)
        throw DimMismatchError("center_update: center bank shape mismatch");
    if (!(bank.update_rate > 0.0) || bank.update_rate > 1.0)
        throw Error("center_update: update_rate must be in (0, 1]");

    Matrix delta(K, D);
    std::vector<int> counts(K, 0);
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const std::size_t k = static_cast<std::size_t>(batch.labels[i] - 1);
        const double* f = batch.features.row(i);
        const double* c = bank.centers.row(k);
        double* dk = delta.row(k);
        for (std::size_t d = 0; d < D; ++d) dk[d] += c[d] - f[d];
        ++counts[k];
    }
    for (std::size_t k = 0; k < K; ++k) {
        if (counts[k] == 0) continue;
        const double scale = bank.update_rate / (1.0 + counts[k]);
        double* c = bank.centers.row(k);
        const double* dk = delta.row(k);
        for (std::size_t d = 0; d < D; ++d) c[d] -= scale * dk[d];
    }
}

TripletLossResult triplet_loss(std::span<const double> anchor,
                               std::span<const double> positive,
                               std::span<const double> negative,
                               const TripletConfig& cfg) {
    const std::size_t D = anchor.size();
    if (positive.size() != D || negative.size() != D)
        throw DimMismatchError("triplet_loss: dimension mismatch");
    if (!(cfg.margin > 0.0))
        throw Error("triplet_loss: margin must be positive");

    double dist_pos = 0.0, dist_neg = 0.0;
    for (std::size_t d = 0; d < D; ++d) {
        const double dp = anchor[d] - positive[d];
        const double dn = anchor[d] - negative[d];
        dist_pos += dp * dp;
        dist_neg += dn * dn;
    }

    TripletLossResult res;
    res.d_anchor.assign(D, 0.0);
    res.d_positive.assign(D, 0.0);
    res.d_negative.assign(D, 0.0);
    const double violation = dist_pos - dist_neg + cfg.margin;
    if (violation <= 0.0) return res;  // hinge off, subgradient zero

    res.loss = violation;
    res.active = true;
    for (std::size_t d = 0; d < D; ++d) {
        res.d_anchor[d] = 2.0 * (negative[d] - positive[d]);
        res.d_positive[d] = -2.0 * (anchor[d] - positive[d]);
        res.d_negative[d] = 2.0 * (anchor[d] - negative[d]);
    }
    return res;
}

} // namespace coco
