#include "coco/coco_loss.hpp"

#include <cmath>
#include <string>

#include "coco/core_math.hpp"
#include "coco/errors.hpp"

namespace coco {

void Batch::validate() const {
    if (features.rows == 0)
        throw Error("batch: empty");
    if (labels.size() != features.rows)
        throw DimMismatchError("batch: label count != feature count");
    if (num_classes < 1)
        throw InvalidKError("batch: num_classes < 1");
    for (int l : labels)
        if (l < 1 || l > num_classes)
            throw Error("batch: label " + std::to_string(l) + " out of range");
    if (!features.all_finite())
        throw NonFiniteError("batch: non-finite feature entry");
}

CentroidBank batch_centroids(const Batch& batch) {
    batch.validate();
    const std::size_t K = static_cast<std::size_t>(batch.num_classes);
    const std::size_t D = batch.dim();
    CentroidBank bank;
    bank.mode = CentroidMode::batch;
    bank.centroids = Matrix(K, D);
    bank.counts.assign(K, 0);
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const std::size_t k = static_cast<std::size_t>(batch.labels[i] - 1);
        const double* f = batch.features.row(i);
        double* c = bank.centroids.row(k);
        for (std::size_t d = 0; d < D; ++d) c[d] += f[d];
        ++bank.counts[k];
    }
    for (std::size_t k = 0; k < K; ++k) {
        if (bank.counts[k] == 0) continue;
        const double inv = 1.0 / bank.counts[k];
        double* c = bank.centroids.row(k);
        for (std::size_t d = 0; d < D; ++d) c[d] *= inv;
    }
    return bank;
}

double optimal_alpha(int num_classes, double target_loss, AlphaForm form) {
    if (num_classes < 2)
        throw InvalidKError("optimal_alpha: need at least 2 classes");
    const double km1 = static_cast<double>(num_classes - 1);
    switch (form) {
        case AlphaForm::exact_bound:
            // expm1 keeps the denominator accurate for small target losses.
            return 0.5 * (std::log(km1) - std::log(std::expm1(target_loss)));
        case AlphaForm::paper_closed_form:
            return 0.5 * std::log(km1) + 3.0;
    }
    throw Error("optimal_alpha: unknown form");
}

double default_alpha(int num_classes) {
    return optimal_alpha(num_classes, 1e-4, AlphaForm::paper_closed_form);
}

namespace {

// Unit rows of the usable centroids; unusable rows left zero.
Matrix normalized_centroids(const CentroidBank& bank) {
    const std::size_t K = bank.centroids.rows;
    const std::size_t D = bank.centroids.cols;
    Matrix unit(K, D);
    for (std::size_t k = 0; k < K; ++k) {
        if (!bank.usable(static_cast<int>(k))) continue;
        const double* c = bank.centroids.row(k);
        const double norm = l2_norm({c, D});
        if (norm < kZeroNormThreshold)
            throw ZeroNormError("coco: centroid " + std::to_string(k + 1) +
                                " has zero norm");
        double* u = unit.row(k);
        const double inv = 1.0 / norm;
        for (std::size_t d = 0; d < D; ++d) u[d] = c[d] * inv;
    }
    return unit;
}

void check_bank(const Batch& batch, const CentroidBank& bank) {
    if (bank.centroids.cols != batch.dim())
        throw DimMismatchError("coco: centroid dim != feature dim");
    if (bank.centroids.rows != static_cast<std::size_t>(batch.num_classes))
        throw DimMismatchError("coco: centroid count != num_classes");
    for (std::size_t i = 0; i < batch.size(); ++i)
        if (!bank.usable(batch.labels[i] - 1))
            throw UnusableCentroidError(
                "coco: class " + std::to_string(batch.labels[i]) +
                " has no samples in the batch centroid bank");
}

// Feature norms, validated up front: OpenMP regions must not throw.
Vec feature_norms(const Batch& batch) {
    const std::size_t M = batch.size();
    const std::size_t D = batch.dim();
    Vec norms(M);
    for (std::size_t i = 0; i < M; ++i) {
        norms[i] = l2_norm({batch.features.row(i), D});
        if (norms[i] < kZeroNormThreshold)
            throw ZeroNormError("coco: feature " + std::to_string(i) +
                                " has zero norm");
    }
    return norms;
}

} // namespace

LossOutput coco_forward(const Batch& batch, const CentroidBank& bank,
                        const ScaleConfig& cfg) {
    batch.validate();
    check_bank(batch, bank);
    if (!(cfg.alpha > 0.0))
        throw Error("coco: alpha must be positive");

    const std::size_t M = batch.size();
    const std::size_t D = batch.dim();
    const std::size_t K = static_cast<std::size_t>(batch.num_classes);
    const Matrix unit_c = normalized_centroids(bank);
    const Vec fnorms = feature_norms(batch);

    LossOutput out;
    out.probs = Matrix(M, K);
    out.targets = Matrix(M, K);
    Vec sample_loss(M);

#pragma omp parallel for schedule(static) if (M * K * D > 4096)
    for (std::size_t i = 0; i < M; ++i) {
        const double* f = batch.features.row(i);
        const double fscale = cfg.alpha / fnorms[i];
        double* p = out.probs.row(i);

        // Logits over usable classes; softmax restricted to that support.
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

    // Fixed-order reduction keeps the sum identical across thread counts.
    double total = 0.0;
    for (std::size_t i = 0; i < M; ++i) total += sample_loss[i];
    out.loss = total;
    return out;
}

GradientBundle coco_backward(const Batch& batch, const CentroidBank& bank,
                             const ScaleConfig& cfg, const LossOutput& out) {
    batch.validate();
    check_bank(batch, bank);
    const std::size_t M = batch.size();
    const std::size_t D = batch.dim();
    const std::size_t K = static_cast<std::size_t>(batch.num_classes);
    if (out.probs.rows != M || out.probs.cols != K)
        throw DimMismatchError("coco_backward: probs shape mismatch");

    const Matrix unit_c = normalized_centroids(bank);
    const Vec fnorms = feature_norms(batch);

    GradientBundle grads;
    grads.d_features = Matrix(M, D);
    grads.d_centroids = Matrix(K, D);

    // Feature gradients. Per sample: top gradient g_x = sum_k (p_k - t_k)
    // c_hat_kx, then the normalization chain rule projects out the radial
    // component: dL/df = alpha * (g - (g.u) u) / ||f||, u = f/||f||.
#pragma omp parallel for schedule(static) if (M * K * D > 4096)
    for (std::size_t i = 0; i < M; ++i) {
        const double* f = batch.features.row(i);
        const double* p = out.probs.row(i);
        const std::size_t li = static_cast<std::size_t>(batch.labels[i] - 1);
        const double fnorm = fnorms[i];

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

    // Centroid gradients. Upstream for class k is sum_i (p_k - t_k) f_hat_i
    // with f_hat the alpha-scaled unit feature; the same projection removes
    // the component along c_k. Sample accumulation runs in ascending i so
    // the result does not depend on the thread count.
#pragma omp parallel for schedule(static) if (M * K * D > 4096)
    for (std::size_t k = 0; k < K; ++k) {
        if (!bank.usable(static_cast<int>(k))) continue;
        double* g = grads.d_centroids.row(k);
        for (std::size_t i = 0; i < M; ++i) {
            const double* f = batch.features.row(i);
            const double fscale = cfg.alpha / fnorms[i];
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

double naive_pair_loss(const Batch& batch, const ScaleConfig& cfg) {
    batch.validate();
    if (batch.size() < 2)
        throw Error("naive_pair_loss: need at least 2 samples");
    if (!(cfg.pair_epsilon > 0.0))
        throw Error("naive_pair_loss: pair_epsilon must be positive");

    const std::size_t M = batch.size();
    const std::size_t D = batch.dim();

    // Normalize once; every pair term is then a dot product.
    Matrix unit(M, D);
    for (std::size_t i = 0; i < M; ++i) {
        const double* f = batch.features.row(i);
        const double norm = l2_norm({f, D});
        if (norm < kZeroNormThreshold)
            throw ZeroNormError("naive_pair_loss: feature " +
                                std::to_string(i) + " has zero norm");
        double* u = unit.row(i);
        const double inv = 1.0 / norm;
        for (std::size_t d = 0; d < D; ++d) u[d] = f[d] * inv;
    }

    double total = 0.0;
    for (std::size_t i = 0; i < M; ++i) {
        for (std::size_t j = 0; j < M; ++j) {
            if (i == j) continue;
            const double* ui = unit.row(i);
            const double* uj = unit.row(j);
            double cosv = 0.0;
            for (std::size_t d = 0; d < D; ++d) cosv += ui[d] * uj[d];
            const double same = batch.labels[i] == batch.labels[j] ? 1.0 : 0.0;
            total += same * cosv / ((1.0 - same) * cosv + cfg.pair_epsilon);
        }
    }
    return total;
}

} // namespace coco
