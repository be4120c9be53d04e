#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "coco/matrix.hpp"

namespace coco {

// Central finite differences (f(x+h) - f(x-h)) / 2h per coordinate with
// h = h_scale * max(1, |x|). Throws NonFiniteError if an evaluation yields
// NaN/Inf. The oracle only ever calls the forward function, so it stays
// independent of any analytic backward path it is used to check.
Vec finite_difference(const std::function<double(const Vec&)>& f,
                      const Vec& point, double h_scale);

enum class LossKind { coco, softmax, center, triplet };

LossKind parse_loss_kind(const std::string& name);
std::string loss_kind_name(LossKind kind);

struct GradCheckConfig {
    int dim = 8;
    int num_classes = 10;
    int batch_size = 8;
    double h_scale = 1e-6;
};

struct TensorError {
    std::string tensor;
    double relative_error = 0.0;  // ||g_a - g_n||_inf / max(1e-12, ||g_n||_inf)
    std::size_t worst_index = 0;
};

struct GradCheckReport {
    double max_relative_error = 0.0;
    std::string worst_coordinate;  // "tensor[flat_index] @ seed"
    std::vector<TensorError> per_tensor_errors;
    int configs_checked = 0;
    int configs_skipped = 0;  // hinge-adjacent triplet draws
};

// Compares analytic gradients against the finite-difference oracle for one
// (dim, classes, batch) shape across the given seeds. Triplet draws within
// 1e-4 of the hinge are skipped, not failed: central differences straddle
// the kink there.
GradCheckReport check_gradients(LossKind kind, const GradCheckConfig& cfg,
                                const std::vector<std::uint64_t>& seeds);

} // namespace coco
