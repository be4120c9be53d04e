#include "coco/fusion.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <functional>
#include <limits>

#include "coco/errors.hpp"

namespace coco {

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double log_likelihood(const Vec& scores, const std::vector<std::uint8_t>& same,
                      double b0, double b1) {
    double ll = 0.0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        const double z = b0 + b1 * scores[i];
        // log p for y=1 is -log(1+e^-z); for y=0 it is -z - log(1+e^-z).
        const double log1pexp =
            z > 0.0 ? std::log1p(std::exp(-z)) : -z + std::log1p(std::exp(z));
        ll += same[i] ? -log1pexp : -z - log1pexp;
    }
    return ll;
}

} // namespace

Calibration fit_logistic(const Vec& scores, const std::vector<std::uint8_t>& same,
                         int max_iters, double tol) {
    if (scores.size() != same.size())
        throw DimMismatchError("fit_logistic: size mismatch");
    if (scores.empty())
        throw DegenerateLabelsError("fit_logistic: empty input");
    bool has_pos = false, has_neg = false;
    for (auto s : same) (s ? has_pos : has_neg) = true;
    if (!has_pos || !has_neg)
        throw DegenerateLabelsError("fit_logistic: one class only");

    Calibration cal;
    double b0 = 0.0, b1 = 0.0;
    double ll = log_likelihood(scores, same, b0, b1);

    for (int iter = 0; iter < max_iters; ++iter) {
        cal.iterations = iter + 1;
        // Gradient and Hessian of the log-likelihood.
        double g0 = 0.0, g1 = 0.0;
        double h00 = 0.0, h01 = 0.0, h11 = 0.0;
        for (std::size_t i = 0; i < scores.size(); ++i) {
            const double s = scores[i];
            const double p = sigmoid(b0 + b1 * s);
            const double r = (same[i] ? 1.0 : 0.0) - p;
            g0 += r;
            g1 += r * s;
            const double w = p * (1.0 - p);
            h00 += w;
            h01 += w * s;
            h11 += w * s * s;
        }
        if (std::max(std::fabs(g0), std::fabs(g1)) < tol) {
            cal.converged = true;
            break;
        }

        const double det = h00 * h11 - h01 * h01;
        double step0, step1;
        if (det > 1e-12 * std::max(1.0, h00 * h11)) {
            step0 = (h11 * g0 - h01 * g1) / det;
            step1 = (h00 * g1 - h01 * g0) / det;
        } else {
            // Hessian numerically singular (weights collapsed under
            // separation); fall back to a gradient step.
            step0 = g0;
            step1 = g1;
        }

        // Damping: halve until the likelihood does not decrease.
        double scale = 1.0;
        double nb0 = b0, nb1 = b1, nll = ll;
        for (int halving = 0; halving < 40; ++halving) {
            nb0 = b0 + scale * step0;
            nb1 = b1 + scale * step1;
            nll = log_likelihood(scores, same, nb0, nb1);
            if (nll >= ll) break;
            scale *= 0.5;
        }
        b0 = nb0;
        b1 = nb1;
        ll = nll;

        if (std::fabs(b0) > kBetaCap || std::fabs(b1) > kBetaCap) {
            b0 = std::clamp(b0, -kBetaCap, kBetaCap);
            b1 = std::clamp(b1, -kBetaCap, kBetaCap);
            cal.separable = true;
            break;
        }
    }

    cal.beta0 = b0;
    cal.beta1 = b1;
    return cal;
}

double calibrate(double score, const Calibration& cal) {
    return sigmoid(cal.beta0 + cal.beta1 * score);
}

void RegionScores::validate() const {
    if (scores.empty())
        throw Error("region scores: no regions");
    if (region_names.size() != scores.size() || weights.size() != scores.size())
        throw DimMismatchError("region scores: name/weight/table count mismatch");
    for (const auto& m : scores)
        if (m.rows != scores.front().rows || m.cols != scores.front().cols)
            throw DimMismatchError("region scores: table shapes differ");
    double sum = 0.0;
    for (double w : weights) {
        if (w < 0.0)
            throw Error("region scores: negative weight");
        sum += w;
    }
    if (std::fabs(sum - 1.0) > 1e-9)
        throw Error("region scores: weights must sum to 1");
}

Matrix merge_scores(const RegionScores& rs, const std::vector<Calibration>& cals) {
    rs.validate();
    if (cals.size() != rs.num_regions())
        throw DimMismatchError("merge_scores: calibration count mismatch");

    const std::size_t R = rs.num_regions();
    const std::size_t rows = rs.scores.front().rows;
    const std::size_t cols = rs.scores.front().cols;
    Matrix merged(rows, cols);
    std::atomic<bool> all_missing{false};

#pragma omp parallel for schedule(static) if (rows * cols * R > 4096)
    for (std::size_t i = 0; i < rows; ++i) {
        for (std::size_t j = 0; j < cols; ++j) {
            double acc = 0.0, wsum = 0.0;
            double plain = 0.0;
            int present = 0;
            for (std::size_t r = 0; r < R; ++r) {
                const double s = rs.scores[r](i, j);
                if (std::isnan(s)) continue;
                const double cs = calibrate(s, cals[r]);
                acc += rs.weights[r] * cs;
                wsum += rs.weights[r];
                plain += cs;
                ++present;
            }
            if (present == 0) {
                all_missing.store(true, std::memory_order_relaxed);
                merged(i, j) = std::numeric_limits<double>::quiet_NaN();
            } else if (wsum > 0.0) {
                merged(i, j) = acc / wsum;
            } else {
                // Present regions all carry zero weight; the renormalized
                // limit is their plain mean.
                merged(i, j) = plain / present;
            }
        }
    }
    if (all_missing.load())
        throw AllRegionsMissingError("merge_scores: a pair has no region score");
    return merged;
}

std::vector<int> assign_identity(const Matrix& merged,
                                 const std::vector<int>& reference_labels) {
    if (reference_labels.size() != merged.cols)
        throw DimMismatchError("assign_identity: reference label count mismatch");
    std::vector<int> out(merged.rows);
    for (std::size_t i = 0; i < merged.rows; ++i) {
        double best = -HUGE_VAL;
        std::size_t best_j = merged.cols;
        for (std::size_t j = 0; j < merged.cols; ++j) {
            const double s = merged(i, j);
            if (std::isnan(s)) continue;
            if (s > best) {  // strict: ties keep the lowest index
                best = s;
                best_j = j;
            }
        }
        if (best_j == merged.cols)
            throw Error("assign_identity: probe row " + std::to_string(i) +
                        " has no finite score");
        out[i] = reference_labels[best_j];
    }
    return out;
}

namespace {

void enumerate_simplex(std::size_t regions, int steps, Vec& current,
                       std::size_t at, int remaining,
                       const std::function<void(const Vec&)>& visit) {
    if (at + 1 == regions) {
        current[at] = static_cast<double>(remaining) / steps;
        visit(current);
        return;
    }
    for (int take = 0; take <= remaining; ++take) {
        current[at] = static_cast<double>(take) / steps;
        enumerate_simplex(regions, steps, current, at + 1, remaining - take,
                          visit);
    }
}

} // namespace

Vec fit_region_weights(const RegionScores& validation,
                       const std::vector<Calibration>& cals,
                       const std::vector<int>& validation_probe_labels,
                       const std::vector<int>& reference_labels,
                       double step) {
    if (validation_probe_labels.size() != validation.scores.front().rows)
        throw DimMismatchError("fit_region_weights: probe label count mismatch");
    if (!(step > 0.0) || step > 1.0)
        throw Error("fit_region_weights: step must be in (0, 1]");

    const auto R = validation.num_regions();
    const int steps = static_cast<int>(std::lround(1.0 / step));

    RegionScores trial = validation;
    Vec best_weights(R, 0.0);
    double best_acc = -1.0;
    Vec current(R, 0.0);
    enumerate_simplex(R, steps, current, 0, steps, [&](const Vec& w) {
        trial.weights = w;
        const Matrix merged = merge_scores(trial, cals);
        const auto assigned = assign_identity(merged, reference_labels);
        std::size_t hits = 0;
        for (std::size_t i = 0; i < assigned.size(); ++i)
            if (assigned[i] == validation_probe_labels[i]) ++hits;
        const double acc =
            static_cast<double>(hits) / static_cast<double>(assigned.size());
        if (acc > best_acc) {  // strict: first grid point wins ties
            best_acc = acc;
            best_weights = w;
        }
    });
    return best_weights;
}

} // namespace coco
