#include "coco/mlp.hpp"

#include <string>

#include "coco/errors.hpp"
#include "coco/rng.hpp"

namespace coco {

MlpModel MlpModel::init(const std::vector<int>& layer_sizes,
                        std::uint64_t seed, double init_std) {
    if (layer_sizes.size() < 2)
        throw Error("mlp: need at least input and feature layer sizes");
    for (int s : layer_sizes)
        if (s < 1)
            throw Error("mlp: layer size must be >= 1");

    MlpModel m;
    m.layer_sizes = layer_sizes;
    Rng rng(seed);
    for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
        const auto out = static_cast<std::size_t>(layer_sizes[l + 1]);
        const auto in = static_cast<std::size_t>(layer_sizes[l]);
        Matrix w(out, in);
        for (auto& x : w.data) x = rng.normal(0.0, init_std);
        m.weights.push_back(std::move(w));
        m.biases.emplace_back(out, 0.0);
    }
    return m;
}

MlpActivations mlp_forward(const MlpModel& model, const Matrix& inputs) {
    if (inputs.cols != static_cast<std::size_t>(model.layer_sizes.front()))
        throw DimMismatchError("mlp_forward: input dim mismatch");

    const std::size_t M = inputs.rows;
    MlpActivations acts;
    acts.pre.resize(model.num_layers());
    acts.post.resize(model.num_layers());

    const Matrix* src = &inputs;
    for (std::size_t l = 0; l < model.num_layers(); ++l) {
        const Matrix& w = model.weights[l];
        const Vec& b = model.biases[l];
        Matrix& pre = acts.pre[l];
        pre = Matrix(M, w.rows);

#pragma omp parallel for schedule(static) if (M * w.rows * w.cols > 8192)
        for (std::size_t i = 0; i < M; ++i) {
            const double* x = src->row(i);
            double* z = pre.row(i);
            for (std::size_t o = 0; o < w.rows; ++o) {
                const double* wr = w.row(o);
                double acc = b[o];
                for (std::size_t d = 0; d < w.cols; ++d) acc += wr[d] * x[d];
                z[o] = acc;
            }
        }

        Matrix& post = acts.post[l];
        post = pre;
        if (l + 1 < model.num_layers()) {  // feature layer stays linear
            for (auto& v : post.data)
                if (v < 0.0) v = 0.0;
        }
        src = &post;
    }
    return acts;
}

MlpGradients mlp_backward(const MlpModel& model, const Matrix& inputs,
                          const MlpActivations& acts, const Matrix& d_features) {
    const std::size_t L = model.num_layers();
    const std::size_t M = inputs.rows;
    if (d_features.rows != M ||
        d_features.cols != static_cast<std::size_t>(model.feature_dim()))
        throw DimMismatchError("mlp_backward: d_features shape mismatch");

    MlpGradients grads;
    grads.d_weights.resize(L);
    grads.d_biases.resize(L);

    Matrix delta = d_features;
    for (std::size_t l = L; l-- > 0;) {
        const Matrix& w = model.weights[l];
        const Matrix& layer_in = (l == 0) ? inputs : acts.post[l - 1];

        Matrix& gw = grads.d_weights[l];
        gw = Matrix(w.rows, w.cols);
        Vec& gb = grads.d_biases[l];
        gb.assign(w.rows, 0.0);

        // Per-row accumulation over samples in ascending order; each output
        // row is owned by one thread so results are thread-count invariant.
#pragma omp parallel for schedule(static) if (M * w.rows * w.cols > 8192)
        for (std::size_t o = 0; o < w.rows; ++o) {
            double* gwr = gw.row(o);
            double acc_b = 0.0;
            for (std::size_t i = 0; i < M; ++i) {
                const double dz = delta(i, o);
                const double* x = layer_in.row(i);
                for (std::size_t d = 0; d < w.cols; ++d) gwr[d] += dz * x[d];
                acc_b += dz;
            }
            gb[o] = acc_b;
        }

        if (l == 0) break;
        Matrix prev(M, w.cols);
#pragma omp parallel for schedule(static) if (M * w.rows * w.cols > 8192)
        for (std::size_t i = 0; i < M; ++i) {
            const double* dz = delta.row(i);
            const double* pre = acts.pre[l - 1].row(i);
            double* dp = prev.row(i);
            for (std::size_t d = 0; d < w.cols; ++d) {
                double acc = 0.0;
                for (std::size_t o = 0; o < w.rows; ++o)
                    acc += dz[o] * w(o, d);
                dp[d] = pre[d] > 0.0 ? acc : 0.0;  // ReLU mask
            }
        }
        delta = std::move(prev);
    }
    return grads;
}

} // namespace coco
