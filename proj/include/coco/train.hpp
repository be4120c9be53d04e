#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "coco/baselines.hpp"
#include "coco/coco_loss.hpp"
#include "coco/dataset.hpp"
#include "coco/mlp.hpp"

namespace coco {

enum class TrainLoss {
    coco,
    softmax,
    center,           // center loss alone
    center_softmax,   // unit-weight combination
    triplet,          // on unit-normalized embeddings
    triplet_softmax,  // unit-weight combination
};

TrainLoss parse_train_loss(const std::string& name);
std::string train_loss_name(TrainLoss loss);

struct OptimizerConfig {
    double learning_rate = 0.05;
    double momentum = 0.9;
    double weight_decay = 0.005;  // applied to weight matrices, not biases
    // Learning rate is divided by 1/drop_factor at these fractions of the
    // epoch budget (piecewise-constant schedule).
    std::vector<double> drop_points{0.6, 0.8};
    double drop_factor = 0.1;
};

struct TrainConfig {
    TrainLoss loss = TrainLoss::coco;
    int epochs = 30;
    int batch_size = 32;
    double alpha = 0.0;  // <= 0 resolves to the closed-form default for K
    double target_loss = 1e-4;
    double margin = 0.2;
    double center_update_rate = 0.5;
    CentroidMode centroid_mode = CentroidMode::parametric;
    std::vector<int> hidden{32};
    int feature_dim = 8;
    double init_std = 0.05;
    std::uint64_t seed = 1;
    OptimizerConfig optimizer;
};

struct EpochRecord {
    int epoch = 0;  // 1-based
    double mean_loss = 0.0;
    double train_accuracy = 0.0;
};

struct TrainRun {
    TrainLoss loss = TrainLoss::coco;
    double alpha = 0.0;  // resolved scale (coco only)
    MlpModel model;
    CentroidBank centroids;       // coco, parametric mode
    LinearClassifier classifier;  // softmax variants
    CenterBank centers;           // center variants
    std::vector<EpochRecord> epochs;
};

// Runs the staged SGD loop. Identical (seed, config, dataset) inputs give
// bit-identical epoch records. Throws DivergedError when the loss goes
// non-finite.
TrainRun train(const Dataset& data, const TrainConfig& cfg);

// Forward pass to the feature layer, no loss attached.
Matrix extract_features(const MlpModel& model, const Matrix& inputs);

// Classifies inputs with the run's natural decision rule (cosine to
// centroid for coco, linear head for softmax variants, nearest center for
// center loss, nearest class mean for triplet) and returns the hit rate.
double evaluate_accuracy(const TrainRun& run, const Matrix& inputs,
                         const std::vector<int>& labels);

// Versioned binary checkpoint: magic "COCOCKPT", u32 format version, layer
// shapes, then little-endian 64-bit floats, followed by whichever loss
// parameters the run carries.
void save_checkpoint(const std::string& path, const TrainRun& run);
TrainRun load_checkpoint(const std::string& path);

} // namespace coco
