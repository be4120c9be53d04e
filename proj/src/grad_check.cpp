#include "coco/grad_check.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>

#include "coco/baselines.hpp"
#include "coco/coco_loss.hpp"
#include "coco/core_math.hpp"
#include "coco/errors.hpp"
#include "coco/rng.hpp"

namespace coco {

Vec finite_difference(const std::function<double(const Vec&)>& f,
                      const Vec& point, double h_scale) {
    const std::size_t n = point.size();
    Vec grad(n);
    Vec base = point;
    std::atomic<bool> bad{false};
    std::exception_ptr eptr = nullptr;

    // Coordinates are independent; each thread perturbs its own copy.
    // Exceptions must not escape the parallel region, so failures are
    // recorded and rethrown afterwards.
#pragma omp parallel firstprivate(base) if (n > 16)
    {
#pragma omp for schedule(static)
        for (std::size_t j = 0; j < n; ++j) {
            if (bad.load(std::memory_order_relaxed)) continue;
            try {
                const double xj = base[j];
                const double h = h_scale * std::max(1.0, std::fabs(xj));
                base[j] = xj + h;
                const double fp = f(base);
                base[j] = xj - h;
                const double fm = f(base);
                base[j] = xj;
                if (!std::isfinite(fp) || !std::isfinite(fm)) {
                    bad.store(true, std::memory_order_relaxed);
                    continue;
                }
                grad[j] = (fp - fm) / (2.0 * h);
            } catch (...) {
#pragma omp critical
                if (!eptr) eptr = std::current_exception();
                bad.store(true, std::memory_order_relaxed);
            }
        }
    }
    if (eptr) std::rethrow_exception(eptr);
    if (bad.load())
        throw NonFiniteError("finite_difference: non-finite evaluation");
    return grad;
}

LossKind parse_loss_kind(const std::string& name) {
    if (name == "coco") return LossKind::coco;
    if (name == "softmax") return LossKind::softmax;
    if (name == "center") return LossKind::center;
    if (name == "triplet") return LossKind::triplet;
    throw ConfigError("unknown loss kind: " + name);
}

std::string loss_kind_name(LossKind kind) {
    switch (kind) {
        case LossKind::coco: return "coco";
        case LossKind::softmax: return "softmax";
        case LossKind::center: return "center";
        case LossKind::triplet: return "triplet";
    }
    return "?";
}

namespace {

constexpr double kErrFloor = 1e-12;

double inf_norm(const Vec& v) {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::fabs(x));
    return m;
}

// ||a - n||_inf / max(floor, ||n||_inf), with the worst coordinate.
TensorError tensor_error(const std::string& name, const Vec& analytic,
                         const Vec& numeric) {
    TensorError te;
    te.tensor = name;
    double worst = 0.0;
    for (std::size_t i = 0; i < analytic.size(); ++i) {
        const double diff = std::fabs(analytic[i] - numeric[i]);
        if (diff > worst) {
            worst = diff;
            te.worst_index = i;
        }
    }
    te.relative_error = worst / std::max(kErrFloor, inf_norm(numeric));
    return te;
}

// Random vector with entries ~ N(0,1), redrawn until the norm is safely
// nonzero (matters for dim 2).
Vec random_direction(Rng& rng, std::size_t dim) {
    Vec v(dim);
    for (;;) {
        double sq = 0.0;
        for (auto& x : v) {
            x = rng.normal();
            sq += x * x;
        }
        if (sq > 0.01) return v;
    }
}

Batch random_batch(Rng& rng, const GradCheckConfig& cfg) {
    Batch b;
    b.num_classes = cfg.num_classes;
    b.features = Matrix(static_cast<std::size_t>(cfg.batch_size),
                        static_cast<std::size_t>(cfg.dim));
    b.labels.resize(static_cast<std::size_t>(cfg.batch_size));
    for (std::size_t i = 0; i < b.size(); ++i) {
        const Vec f = random_direction(rng, b.dim());
        std::copy(f.begin(), f.end(), b.features.row(i));
        b.labels[i] = 1 + static_cast<int>(rng.uniform_index(
            static_cast<std::uint64_t>(cfg.num_classes)));
    }
    return b;
}

void fill_from(Matrix& m, const Vec& flat, std::size_t offset) {
    std::copy(flat.begin() + static_cast<std::ptrdiff_t>(offset),
              flat.begin() + static_cast<std::ptrdiff_t>(offset + m.data.size()),
              m.data.begin());
}

struct CaseResult {
    std::vector<TensorError> tensors;
    bool skipped = false;
};

CaseResult check_coco(Rng rng, const GradCheckConfig& cfg) {
    Batch batch = random_batch(rng, cfg);
    CentroidBank bank;
    bank.mode = CentroidMode::parametric;
    bank.centroids = Matrix(static_cast<std::size_t>(cfg.num_classes),
                            static_cast<std::size_t>(cfg.dim));
    for (std::size_t k = 0; k < bank.centroids.rows; ++k) {
        const Vec c = random_direction(rng, batch.dim());
        std::copy(c.begin(), c.end(), bank.centroids.row(k));
    }
    ScaleConfig sc;
    sc.alpha = default_alpha(cfg.num_classes);

    const std::size_t nf = batch.features.data.size();
    const std::size_t nc = bank.centroids.data.size();
    Vec point(nf + nc);
    std::copy(batch.features.data.begin(), batch.features.data.end(), point.begin());
    std::copy(bank.centroids.data.begin(), bank.centroids.data.end(),
              point.begin() + static_cast<std::ptrdiff_t>(nf));

    auto eval = [&](const Vec& x) {
        Batch b = batch;
        CentroidBank bk = bank;
        fill_from(b.features, x, 0);
        fill_from(bk.centroids, x, nf);
        return coco_forward(b, bk, sc).loss;
    };

    const Vec numeric = finite_difference(eval, point, cfg.h_scale);
    const LossOutput out = coco_forward(batch, bank, sc);
    const GradientBundle g = coco_backward(batch, bank, sc, out);

    Vec num_f(numeric.begin(), numeric.begin() + static_cast<std::ptrdiff_t>(nf));
    Vec num_c(numeric.begin() + static_cast<std::ptrdiff_t>(nf), numeric.end());

    CaseResult res;
    res.tensors.push_back(tensor_error("d_features", g.d_features.data, num_f));
    res.tensors.push_back(tensor_error("d_centroids", g.d_centroids.data, num_c));
    return res;
}

CaseResult check_softmax(Rng rng, const GradCheckConfig& cfg) {
    Batch batch = random_batch(rng, cfg);
    LinearClassifier clf;
    clf.weights = Matrix(static_cast<std::size_t>(cfg.num_classes),
                         static_cast<std::size_t>(cfg.dim));
    clf.biases.resize(static_cast<std::size_t>(cfg.num_classes));
    for (auto& w : clf.weights.data) w = rng.normal(0.0, 0.5);
    for (auto& b : clf.biases) b = rng.normal(0.0, 0.5);

    const std::size_t nf = batch.features.data.size();
    const std::size_t nw = clf.weights.data.size();
    const std::size_t nb = clf.biases.size();
    Vec point(nf + nw + nb);
    std::copy(batch.features.data.begin(), batch.features.data.end(), point.begin());
    std::copy(clf.weights.data.begin(), clf.weights.data.end(),
              point.begin() + static_cast<std::ptrdiff_t>(nf));
    std::copy(clf.biases.begin(), clf.biases.end(),
              point.begin() + static_cast<std::ptrdiff_t>(nf + nw));

    auto eval = [&](const Vec& x) {
        Batch b = batch;
        LinearClassifier c = clf;
        fill_from(b.features, x, 0);
        fill_from(c.weights, x, nf);
        std::copy(x.begin() + static_cast<std::ptrdiff_t>(nf + nw), x.end(),
                  c.biases.begin());
        return softmax_loss(b, c).loss;
    };

    const Vec numeric = finite_difference(eval, point, cfg.h_scale);
    const SoftmaxLossResult r = softmax_loss(batch, clf);

    Vec num_f(numeric.begin(), numeric.begin() + static_cast<std::ptrdiff_t>(nf));
    Vec num_w(numeric.begin() + static_cast<std::ptrdiff_t>(nf),
              numeric.begin() + static_cast<std::ptrdiff_t>(nf + nw));
    Vec num_b(numeric.begin() + static_cast<std::ptrdiff_t>(nf + nw), numeric.end());

    CaseResult res;
    res.tensors.push_back(tensor_error("d_features", r.d_features.data, num_f));
    res.tensors.push_back(tensor_error("d_weights", r.d_weights.data, num_w));
    res.tensors.push_back(tensor_error("d_biases", r.d_biases, num_b));
    return res;
}

CaseResult check_center(Rng rng, const GradCheckConfig& cfg) {
    Batch batch = random_batch(rng, cfg);
    CenterBank bank;
    bank.centers = Matrix(static_cast<std::size_t>(cfg.num_classes),
                          static_cast<std::size_t>(cfg.dim));
    for (auto& c : bank.centers.data) c = rng.normal();

    auto eval = [&](const Vec& x) {
        Batch b = batch;
        fill_from(b.features, x, 0);
        return center_loss(b, bank).loss;
    };

    const Vec numeric = finite_difference(eval, batch.features.data, cfg.h_scale);
    const CenterLossResult r = center_loss(batch, bank);

    CaseResult res;
    res.tensors.push_back(tensor_error("d_features", r.d_features.data, numeric));
    return res;
}

CaseResult check_triplet(Rng rng, const GradCheckConfig& cfg) {
    const std::size_t D = static_cast<std::size_t>(cfg.dim);
    const TripletConfig tc;
    const Vec a = normalize_scale(random_direction(rng, D), 1.0);
    const Vec p = normalize_scale(random_direction(rng, D), 1.0);
    const Vec n = normalize_scale(random_direction(rng, D), 1.0);

    const TripletLossResult r = triplet_loss(a, p, n, tc);

    // Skip draws near the kink; central differences are unusable there.
    double dp = 0.0, dn = 0.0;
    for (std::size_t d = 0; d < D; ++d) {
        dp += (a[d] - p[d]) * (a[d] - p[d]);
        dn += (a[d] - n[d]) * (a[d] - n[d]);
    }
    if (std::fabs(dp - dn + tc.margin) < 1e-4) {
        CaseResult res;
        res.skipped = true;
        return res;
    }

    Vec point(3 * D);
    std::copy(a.begin(), a.end(), point.begin());
    std::copy(p.begin(), p.end(), point.begin() + static_cast<std::ptrdiff_t>(D));
    std::copy(n.begin(), n.end(), point.begin() + static_cast<std::ptrdiff_t>(2 * D));

    auto eval = [&](const Vec& x) {
        std::span<const double> xs(x);
        return triplet_loss(xs.subspan(0, D), xs.subspan(D, D),
                            xs.subspan(2 * D, D), tc)
            .loss;
    };

    const Vec numeric = finite_difference(eval, point, cfg.h_scale);
    Vec num_a(numeric.begin(), numeric.begin() + static_cast<std::ptrdiff_t>(D));
    Vec num_p(numeric.begin() + static_cast<std::ptrdiff_t>(D),
              numeric.begin() + static_cast<std::ptrdiff_t>(2 * D));
    Vec num_n(numeric.begin() + static_cast<std::ptrdiff_t>(2 * D), numeric.end());

    CaseResult res;
    res.tensors.push_back(tensor_error("d_anchor", r.d_anchor, num_a));
    res.tensors.push_back(tensor_error("d_positive", r.d_positive, num_p));
    res.tensors.push_back(tensor_error("d_negative", r.d_negative, num_n));
    return res;
}

} // namespace

GradCheckReport check_gradients(LossKind kind, const GradCheckConfig& cfg,
                                const std::vector<std::uint64_t>& seeds) {
    GradCheckReport report;
    for (std::uint64_t seed : seeds) {
        Rng rng(seed);
        CaseResult cr;
        switch (kind) {
            case LossKind::coco: cr = check_coco(rng, cfg); break;
            case LossKind::softmax: cr = check_softmax(rng, cfg); break;
            case LossKind::center: cr = check_center(rng, cfg); break;
            case LossKind::triplet: cr = check_triplet(rng, cfg); break;
        }
        if (cr.skipped) {
            ++report.configs_skipped;
            continue;
        }
        ++report.configs_checked;
        for (const auto& te : cr.tensors) {
            report.per_tensor_errors.push_back(te);
            if (te.relative_error > report.max_relative_error) {
                report.max_relative_error = te.relative_error;
                report.worst_coordinate = te.tensor + "[" +
                                          std::to_string(te.worst_index) +
                                          "] @ seed " + std::to_string(seed);
            }
        }
    }
    return report;
}

} // namespace coco
