#pragma once

#include <cstdint>
#include <vector>

#include "coco/matrix.hpp"

namespace coco {

// Fully connected network with ReLU on the hidden layers and a linear
// feature layer at the end (the loss sees raw features, no activation).
struct MlpModel {
    std::vector<int> layer_sizes;  // input, hidden..., feature dim
    std::vector<Matrix> weights;   // per layer: out x in
    std::vector<Vec> biases;       // per layer: out

    std::size_t num_layers() const { return weights.size(); }
    int feature_dim() const { return layer_sizes.back(); }

    static MlpModel init(const std::vector<int>& layer_sizes,
                         std::uint64_t seed, double init_std);
};

// Layer activations for a batch; post.back() is the feature matrix.
struct MlpActivations {
    std::vector<Matrix> pre;   // pre-activation per layer
    std::vector<Matrix> post;  // post-activation per layer (last one linear)

    const Matrix& features() const { return post.back(); }
};

MlpActivations mlp_forward(const MlpModel& model, const Matrix& inputs);

struct MlpGradients {
    std::vector<Matrix> d_weights;
    std::vector<Vec> d_biases;
};

// Backprop of d_features through the network. Only parameter gradients are
// produced; input gradients are never needed here.
MlpGradients mlp_backward(const MlpModel& model, const Matrix& inputs,
                          const MlpActivations& acts, const Matrix& d_features);

} // namespace coco
