#pragma once

#include <span>

#include "coco/matrix.hpp"

namespace coco {

// Norm below this is treated as a degenerate (zero) feature. Hard error,
// no epsilon smoothing: a zero feature means an upstream bug.
inline constexpr double kZeroNormThreshold = 1e-30;

// Euclidean norm, sqrt(sum v_d^2).
double l2_norm(std::span<const double> v);

// alpha * v / ||v||. Throws ZeroNormError when ||v|| < 1e-30.
Vec normalize_scale(std::span<const double> v, double alpha);

// u.v / (||u|| ||v||), in [-1, 1]. Throws ZeroNormError / DimMismatchError.
double cosine_similarity(std::span<const double> u, std::span<const double> v);

// Softmax with max-subtraction so large logits cannot overflow.
Vec stable_softmax(std::span<const double> logits);

// In-place variant used by the loss kernels; z holds logits on entry and
// probabilities on exit. Returns log(sum exp(z - max)) + max, i.e. the
// log-partition, so callers can form log-probabilities without re-summing.
double stable_softmax_inplace(double* z, std::size_t n);

} // namespace coco
