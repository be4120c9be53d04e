#pragma once

#include <vector>

#include "coco/matrix.hpp"

namespace coco {

// A mini-batch of feature vectors with 1-based class labels.
struct Batch {
    Matrix features;          // M x D
    std::vector<int> labels;  // each in {1..K}
    int num_classes = 0;      // K

    std::size_t size() const { return features.rows; }
    std::size_t dim() const { return features.cols; }

    // Throws on empty batch, label out of range or non-finite feature.
    void validate() const;
};

enum class CentroidMode { parametric, batch };

// Per-class reference directions. Parametric banks are persistent trainable
// parameters; batch banks are per-batch class means with sample counts.
struct CentroidBank {
    Matrix centroids;         // K x D
    std::vector<int> counts;  // batch mode only; size K
    CentroidMode mode = CentroidMode::parametric;

    std::size_t num_classes() const { return centroids.rows; }

    // A batch-mode class with count zero has no defined direction and is
    // excluded from the softmax support.
    bool usable(int class_index) const {
        return mode == CentroidMode::parametric ||
               counts[static_cast<std::size_t>(class_index)] > 0;
    }
};

struct ScaleConfig {
    double alpha = 0.0;         // scale applied to the normalized feature
    double target_loss = 1e-4;  // epsilon of the scale lower bound
    double pair_epsilon = 1e-2; // stabilizer of the naive pairwise loss
};

struct LossOutput {
    double loss = 0.0;  // sum over the batch of -log p[i][l_i]
    Matrix probs;       // M x K, rows sum to 1 over usable classes
    Matrix targets;     // M x K one-hot rows
};

struct GradientBundle {
    Matrix d_features;   // M x D
    Matrix d_centroids;  // K x D
};

enum class AlphaForm { exact_bound, paper_closed_form };

// Class means over the batch. Absent classes get count 0 and a zero row;
// they are flagged unusable rather than treated as directions.
CentroidBank batch_centroids(const Batch& batch);

// Lower bound on the feature scale for a K-class problem targeting a
// per-sample loss below target_loss:
//   exact_bound        0.5 * ln((K-1) / (e^eps - 1))
//   paper_closed_form  0.5 * ln(K-1) + 3
// Throws InvalidKError for K < 2.
double optimal_alpha(int num_classes, double target_loss, AlphaForm form);

// Default scale used by the trainer (the closed form above).
double default_alpha(int num_classes);

// Forward pass: f_hat = alpha * f/||f||, c_hat = c/||c||, logits
// z_k = c_hat_k . f_hat, probabilities by softmax over every usable class,
// loss summed over the batch.
LossOutput coco_forward(const Batch& batch, const CentroidBank& bank,
                        const ScaleConfig& cfg);

// Analytic gradients w.r.t. the unnormalized features and the centroids.
// Both are tangential: <d_features[i], features[i]> = 0 and
// <d_centroids[k], centroids[k]> = 0.
GradientBundle coco_backward(const Batch& batch, const CentroidBank& bank,
                             const ScaleConfig& cfg, const LossOutput& out);

// Pairwise cosine objective over ordered pairs i != j. Reference objective
// only (no backward); quadratic in the batch size, which is what the
// centroid formulation avoids.
double naive_pair_loss(const Batch& batch, const ScaleConfig& cfg);

} // namespace coco
