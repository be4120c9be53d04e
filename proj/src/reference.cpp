#include "coco/reference.hpp"

#include <cmath>
#include <string>

#include "coco/core_math.hpp"
#include "coco/errors.hpp"

namespace coco::reference {

namespace {

Matrix unit_rows(const Matrix& m, const CentroidBank* bank) {
    Matrix unit(m.rows, m.cols);
    for (std::size_t k = 0; k < m.rows; ++k) {
        if (bank && !bank->usable(static_cast<int>(k))) continue;
        const double* src = m.row(k);
        const double norm = l2_norm({src, m.cols});
        if (norm < kZeroNormThreshold)
            throw ZeroNormError("reference: row " + std::to_string(k) +
                                " has zero norm");
        double* dst = unit.row(k);
        const double inv = 1.0 / norm;
        for (std::size_t d = 0; d < m.cols; ++d) dst[d] = src[d] * inv;
    }
    return unit;
}

} // namespace

LossOutput coco_forward(const Batch& batch, const CentroidBank& bank,
                        const ScaleConfig& cfg) {
    batch.validate();
    const std::size_t M = batch.size();
    const std::size_t D = batch.dim();
    const std::size_t K = static_cast<std::size_t>(batch.num_classes);
    const Matrix unit_c = unit_rows(bank.centroids, &bank);

    LossOutput out;
    out.probs = Matrix(M, K);
    out.targets = Matrix(M, K);
    Vec sample_loss(M);

    for (std::size_t i = 0; i < M; ++i) {
        const double* f = batch.features.row(i);
        const double fnorm = l2_norm({f, D});
        if (fnorm < kZeroNormThreshold)
            throw ZeroNormError("reference: zero-norm feature");
        if (!bank.usable(batch.labels[i] - 1))
            throw UnusableCentroidError("reference: unusable own-class centroid");
        const double fscale = cfg.alpha / fnorm;
        double* p = out.probs.row(i);

        double zmax = -HUGE_VAL;
        for (std::size_t k = 0; k < K; ++k) {
            if (!bank.usable(static_cast<int>(k))) { p[k] = 0.0; continue; }
            const double* c = unit_c.row(k);
            double dot = 0.0;
            for (std::size_t d = 0; d < D; ++d) dot += c[d] * f[d];
            p[k] = dot * fscale;
            zmax = std::max(zmax, p[k]);
        }
        double sum = 0.0;
        for (std::size_t k = 0; k < K; ++k) {
            if (!bank.usable(static_cast<int>(k))) continue;
            p[k] = std::exp(p[k] - zmax);
            sum += p[k];
        }
        const double inv = 1.0 / sum;
        for (std::size_t k = 0; k < K; ++k)
            if (bank.usable(static_cast<int>(k))) p[k] *= inv;

        const std::size_t li = static_cast<std::size_t>(batch.labels[i] - 1);
        out.targets(i, li) = 1.0;
        sample_loss[i] = -std::log(p[li]);
    }

    double total = 0.0;
    for (std::size_t i = 0; i < M; ++i) total += sample_loss[i];
    out.loss = total;
    return out;
}

GradientBundle coco_backward(const Batch& batch, const CentroidBank& bank,
                             const ScaleConfig& cfg, const LossOutput& out) {
    const std::size_t M = batch.size();
    const std::size_t D = batch.dim();
    const std::size_t K = static_cast<std::size_t>(batch.num_classes);
    const Matrix unit_c = unit_rows(bank.centroids, &bank);

    GradientBundle grads;
    grads.d_features = Matrix(M, D);
    grads.d_centroids = Matrix(K, D);

    for (std::size_t i = 0; i < M; ++i) {
        const double* f = batch.features.row(i);
        const double* p = out.probs.row(i);
        const std::size_t li = static_cast<std::size_t>(batch.labels[i] - 1);
        const double fnorm = l2_norm({f, D});

        double* g = grads.d_features.row(i);
        for (std::size_t k = 0; k < K; ++k) {
            if (!bank.usable(static_cast<int>(k))) continue;
            const double coeff = p[k] - (k == li ? 1.0 : 0.0);
            const double* c = unit_c.row(k);
            for (std::size_t d = 0; d < D; ++d) g[d] += coeff * c[d];
        }
        double radial = 0.0;
        for (std::size_t d = 0; d < D; ++d) radial += g[d] * f[d];
        radial /= fnorm * fnorm;
        const double scale = cfg.alpha / fnorm;
        for (std::size_t d = 0; d < D; ++d)
            g[d] = scale * (g[d] - radial * f[d]);
    }

    for (std::size_t k = 0; k < K; ++k) {
        if (!bank.usable(static_cast<int>(k))) continue;
        double* g = grads.d_centroids.row(k);
        for (std::size_t i = 0; i < M; ++i) {
            const double* f = batch.features.row(i);
            const double fscale = cfg.alpha / l2_norm({f, D});
            const std::size_t li = static_cast<std::size_t>(batch.labels[i] - 1);
            const double coeff = out.probs(i, k) - (k == li ? 1.0 : 0.0);
            for (std::size_t d = 0; d < D; ++d)
                g[d] += coeff * fscale * f[d];
        }
        const double* c = bank.centroids.row(k);
        const double cnorm = l2_norm({c, D});
        double radial = 0.0;
        for (std::size_t d = 0; d < D; ++d) radial += g[d] * c[d];
        radial /= cnorm * cnorm;
        const double inv = 1.0 / cnorm;
        for (std::size_t d = 0; d < D; ++d)
            g[d] = inv * (g[d] - radial * c[d]);
    }

    return grads;
}

SoftmaxLossResult softmax_loss(const Batch& batch, const LinearClassifier& clf) {
    batch.validate();
    const std::size_t M = batch.size();
    const std::size_t D = batch.dim();
    const std::size_t K = static_cast<std::size_t>(batch.num_classes);

    SoftmaxLossResult res;
    res.probs = Matrix(M, K);
    res.d_features = Matrix(M, D);
    res.d_weights = Matrix(K, D);
    res.d_biases.assign(K, 0.0);
    Vec sample_loss(M);

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

} // namespace coco::reference
