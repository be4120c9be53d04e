#include "coco/core_math.hpp"

#include <algorithm>
#include <cmath>

#include "coco/errors.hpp"

namespace coco {

double l2_norm(std::span<const double> v) {
    double acc = 0.0;
    for (double x : v) acc += x * x;
    return std::sqrt(acc);
}

Vec normalize_scale(std::span<const double> v, double alpha) {
    const double norm = l2_norm(v);
    if (norm < kZeroNormThreshold)
        throw ZeroNormError("normalize_scale: vector norm below 1e-30");
    Vec out(v.size());
    const double scale = alpha / norm;
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = scale * v[i];
    return out;
}

double cosine_similarity(std::span<const double> u, std::span<const double> v) {
    if (u.size() != v.size())
        throw DimMismatchError("cosine_similarity: dimension mismatch");
    const double nu = l2_norm(u);
    const double nv = l2_norm(v);
    if (nu < kZeroNormThreshold || nv < kZeroNormThreshold)
        throw ZeroNormError("cosine_similarity: zero-norm operand");
    double dot = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) dot += u[i] * v[i];
    return std::clamp(dot / (nu * nv), -1.0, 1.0);
}

double stable_softmax_inplace(double* z, std::size_t n) {
    double zmax = z[0];
    for (std::size_t k = 1; k < n; ++k) zmax = std::max(zmax, z[k]);
    double sum = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        z[k] = std::exp(z[k] - zmax);
        sum += z[k];
    }
    const double inv = 1.0 / sum;
    for (std::size_t k = 0; k < n; ++k) z[k] *= inv;
    return std::log(sum) + zmax;
}

Vec stable_softmax(std::span<const double> logits) {
    Vec out(logits.begin(), logits.end());
    stable_softmax_inplace(out.data(), out.size());
    return out;
}

} // namespace coco
