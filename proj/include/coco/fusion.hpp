#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "coco/matrix.hpp"

namespace coco {

// Logistic calibration s -> sigmoid(beta0 + beta1 * s) of one region's raw
// cosine scores.
struct Calibration {
    double beta0 = 0.0;
    double beta1 = 0.0;
    bool separable = false;  // fit hit the |beta| cap (perfect separation)
    bool converged = false;
    int iterations = 0;
};

// Betas are capped at this magnitude under perfect separation so the
// sigmoid stays far from the rounding cliff.
inline constexpr double kBetaCap = 50.0;

// Maximum-likelihood fit by damped Newton iterations; converged when the
// gradient infinity-norm drops below tol. Throws DegenerateLabelsError
// when only one class is present.
Calibration fit_logistic(const Vec& scores, const std::vector<std::uint8_t>& same,
                         int max_iters = 100, double tol = 1e-10);

double calibrate(double score, const Calibration& cal);

// Raw per-region score tables. NaN marks a missing observation (absent
// body region for that pair).
struct RegionScores {
    std::vector<std::string> region_names;
    std::vector<Matrix> scores;  // per region: N1 x N0
    Vec weights;                 // nonnegative, summing to 1

    std::size_t num_regions() const { return scores.size(); }
    void validate() const;
};

// S_ij = sum_r gamma_r * calibrate(s_r_ij); pairs with missing regions
// renormalize the weights over the present ones. Throws
// AllRegionsMissingError when a pair has no observation at all.
Matrix merge_scores(const RegionScores& rs, const std::vector<Calibration>& cals);

// Per probe row, the reference label of the highest merged score; ties go
// to the lowest reference index. NaN entries are ignored; a row of all-NaN
// throws.
std::vector<int> assign_identity(const Matrix& merged,
                                 const std::vector<int>& reference_labels);

// Grid search over the weight simplex (given step) maximizing top-1
// accuracy of merge+assign on a validation table. Ties resolve to the
// first grid point visited (lexicographic enumeration).
Vec fit_region_weights(const RegionScores& validation,
                       const std::vector<Calibration>& cals,
                       const std::vector<int>& validation_probe_labels,
                       const std::vector<int>& reference_labels,
                       double step = 0.05);

} // namespace coco
