#pragma once

#include <cstdint>
#include <vector>

#include "coco/matrix.hpp"

namespace coco {

// Cosine statistics of sampled same-class and cross-class pairs.
struct PairStats {
    Vec positive_cosines;
    Vec negative_cosines;
    Vec bin_edges;                // bins+1 edges spanning [-1, 1]
    std::vector<long> pos_hist;   // per-bin counts
    std::vector<long> neg_hist;
    double mean_pos = 0.0;
    double mean_neg = 0.0;
    double separation = 0.0;      // mean_pos - mean_neg
};

// Samples up to max_pairs positive and max_pairs negative pairs uniformly
// (all pairs when fewer exist), seeded. Throws InsufficientDataError when
// either kind of pair is impossible.
PairStats pair_stats(const Matrix& features, const std::vector<int>& labels,
                     std::size_t max_pairs, std::uint64_t seed, int bins = 50);

struct RocPoint {
    double threshold = 0.0;
    double fpr = 0.0;
    double tpr = 0.0;
};

struct VerificationResult {
    double best_threshold = 0.0;
    double accuracy = 0.0;  // at the best threshold
    std::vector<RocPoint> roc;
    double auc = 0.0;  // trapezoidal
};

// Threshold sweep over pair scores (score >= threshold declares "same").
// Candidate thresholds are midpoints between consecutive distinct sorted
// scores plus sentinels beyond both ends: exact optimum for step-constant
// accuracy.
VerificationResult verify_scores(const Vec& scores,
                                 const std::vector<std::uint8_t>& same);

// Cosine scores of explicit feature pairs, then verify_scores.
VerificationResult verify(const Matrix& first, const Matrix& second,
                          const std::vector<std::uint8_t>& same);

struct IdentificationResult {
    std::vector<int> distractor_counts;
    Vec top1_accuracy;  // averaged over trials and probes
};

// Per trial, distractors are drawn from the pool once at the largest count
// and smaller counts use prefixes of that draw, so accuracy is
// non-increasing in the count within every trial. A probe scores a hit iff
// the nearest entry (gallery plus distractors, cosine similarity, ties to
// the lowest gallery index) is a gallery mate of its identity.
IdentificationResult identify(const Matrix& probes,
                              const std::vector<int>& probe_ids,
                              const Matrix& gallery,
                              const std::vector<int>& gallery_ids,
                              const Matrix& distractor_pool,
                              const std::vector<int>& distractor_counts,
                              int trials, std::uint64_t seed);

// Unit-norm Gaussian directions, e.g. as an identification distractor pool.
Matrix random_unit_features(std::size_t count, std::size_t dim,
                            std::uint64_t seed);

} // namespace coco
