#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "coco/matrix.hpp"

namespace coco {

struct Dataset {
    Matrix inputs;            // N x D_in
    std::vector<int> labels;  // 1-based, dense in {1..K}
    int num_classes = 0;
    std::string split = "train";

    std::size_t size() const { return inputs.rows; }
    std::size_t dim() const { return inputs.cols; }
};

// K random unit class directions; each sample is its class direction plus
// Gaussian noise of the given spread. Deterministic per seed.
Dataset synth_clusters(int num_classes, int input_dim, int per_class,
                       double spread, std::uint64_t seed);

// IDX-format reader (big-endian headers): images file magic 0x00000803
// with dims count x rows x cols of u8 pixels, labels file magic 0x00000801
// of u8 labels. Pixels are scaled to [0,1]; labels are remapped to {1..10}.
// Throws BadMagicError, TruncatedFileError, CountMismatchError.
Dataset load_idx(const std::string& images_path, const std::string& labels_path);

} // namespace coco
