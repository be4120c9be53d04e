#pragma once

#include <span>

#include "coco/coco_loss.hpp"
#include "coco/matrix.hpp"

namespace coco {

// Linear classification head for the softmax baseline.
struct LinearClassifier {
    Matrix weights;  // K x D
    Vec biases;      // K
};

// Per-class centers for the center-loss baseline. Centers are moved by a
// statistical rule each batch, not by gradient descent.
struct CenterBank {
    Matrix centers;            // K x D
    double update_rate = 0.5;  // in (0, 1]
};

struct TripletConfig {
    double margin = 0.2;  // > 0; embeddings are assumed unit-norm upstream
};

struct SoftmaxLossResult {
    double loss = 0.0;  // sum over the batch of -log p[i][l_i]
    Matrix probs;       // M x K
    Matrix d_features;  // M x D
    Matrix d_weights;   // K x D
    Vec d_biases;       // K
};

// Cross-entropy over z = W f + b with analytic gradients for features,
// weights and biases. Loss summed over the batch.
SoftmaxLossResult softmax_loss(const Batch& batch, const LinearClassifier& clf);

struct CenterLossResult {
    double loss = 0.0;  // 0.5 * sum_i ||f_i - c_{l_i}||^2
    Matrix d_features;  // M x D, row i = f_i - c_{l_i}
};

CenterLossResult center_loss(const Batch& batch, const CenterBank& bank);

// Statistical center update: c_j -= update_rate * sum_{i: l_i=j}(c_j - f_i)
// / (1 + N_j). No gradient flows through the centers.
void center_update(const Batch& batch, CenterBank& bank);

struct TripletLossResult {
    double loss = 0.0;  // max(0, ||a-p||^2 - ||a-n||^2 + margin)
    bool active = false;
    Vec d_anchor, d_positive, d_negative;  // zero when the hinge is off
};

TripletLossResult triplet_loss(std::span<const double> anchor,
                               std::span<const double> positive,
                               std::span<const double> negative,
                               const TripletConfig& cfg);

} // namespace coco
