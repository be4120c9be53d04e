#pragma once

#include "coco/baselines.hpp"
#include "coco/coco_loss.hpp"

namespace coco::reference {

// Plain serial implementations of the parallelized loss kernels. These are
// the ground truth the OpenMP paths are tested against (bit-for-bit: every
// output element accumulates in the same order in both paths) and the
// baseline the benchmark compares with.

LossOutput coco_forward(const Batch& batch, const CentroidBank& bank,
                        const ScaleConfig& cfg);

GradientBundle coco_backward(const Batch& batch, const CentroidBank& bank,
                             const ScaleConfig& cfg, const LossOutput& out);

SoftmaxLossResult softmax_loss(const Batch& batch, const LinearClassifier& clf);

} // namespace coco::reference
