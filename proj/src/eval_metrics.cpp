#include "coco/eval_metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "coco/core_math.hpp"
#include "coco/errors.hpp"
#include "coco/rng.hpp"

namespace coco {

namespace {

// Unranks the p-th pair (i < j) of an m-element set, block by block.
std::pair<std::size_t, std::size_t> unrank_pair(std::size_t p, std::size_t m) {
    std::size_t i = 0;
    while (p >= m - 1 - i) {
        p -= m - 1 - i;
        ++i;
    }
    return {i, i + 1 + p};
}

} // namespace

PairStats pair_stats(const Matrix& features, const std::vector<int>& labels,
                     std::size_t max_pairs, std::uint64_t seed, int bins) {
    const std::size_t N = features.rows;
    if (labels.size() != N)
        throw DimMismatchError("pair_stats: label count mismatch");
    if (N < 2)
        throw InsufficientDataError("pair_stats: need at least 2 samples");
    if (bins < 1)
        throw Error("pair_stats: bins must be >= 1");
    if (max_pairs == 0)
        throw Error("pair_stats: max_pairs must be >= 1");

    int max_label = 0;
    for (int l : labels) max_label = std::max(max_label, l);
    std::vector<std::vector<std::size_t>> by_class(
        static_cast<std::size_t>(max_label));
    for (std::size_t i = 0; i < N; ++i)
        by_class[static_cast<std::size_t>(labels[i] - 1)].push_back(i);

    std::size_t total_pos = 0;
    std::size_t classes_present = 0;
    for (const auto& idx : by_class) {
        if (!idx.empty()) ++classes_present;
        total_pos += idx.size() * (idx.size() - 1) / 2;
    }
    const std::size_t total_all = N * (N - 1) / 2;
    const std::size_t total_neg = total_all - total_pos;
    if (classes_present < 2)
        throw InsufficientDataError("pair_stats: need at least 2 classes");
    if (total_pos == 0)
        throw InsufficientDataError("pair_stats: no same-class pair exists");

    Rng rng(seed);
    using IndexPair = std::pair<std::size_t, std::size_t>;
    std::vector<IndexPair> pos_pairs, neg_pairs;

    if (total_pos <= max_pairs) {
        for (const auto& idx : by_class)
            for (std::size_t a = 0; a < idx.size(); ++a)
                for (std::size_t b = a + 1; b < idx.size(); ++b)
                    pos_pairs.emplace_back(idx[a], idx[b]);
    } else {
        for (std::size_t n = 0; n < max_pairs; ++n) {
            std::size_t t = rng.uniform_index(total_pos);
            for (const auto& idx : by_class) {
                const std::size_t c = idx.size() * (idx.size() - 1) / 2;
                if (t < c) {
                    const auto [a, b] = unrank_pair(t, idx.size());
                    pos_pairs.emplace_back(idx[a], idx[b]);
                    break;
                }
                t -= c;
            }
        }
    }

    if (total_neg <= max_pairs) {
        for (std::size_t i = 0; i < N; ++i)
            for (std::size_t j = i + 1; j < N; ++j)
                if (labels[i] != labels[j]) neg_pairs.emplace_back(i, j);
    } else {
        while (neg_pairs.size() < max_pairs) {
            const auto [i, j] = unrank_pair(rng.uniform_index(total_all), N);
            if (labels[i] != labels[j]) neg_pairs.emplace_back(i, j);
        }
    }

    PairStats stats;
    stats.positive_cosines.resize(pos_pairs.size());
    stats.negative_cosines.resize(neg_pairs.size());
    const std::size_t D = features.cols;

    // Cosines are independent per pair; zero-norm rows are rejected first
    // so the parallel loops cannot throw.
    for (std::size_t i = 0; i < N; ++i)
        if (l2_norm({features.row(i), D}) < kZeroNormThreshold)
            throw ZeroNormError("pair_stats: zero-norm feature row " +
                                std::to_string(i));

#pragma omp parallel for schedule(static) if (pos_pairs.size() > 256)
    for (std::size_t n = 0; n < pos_pairs.size(); ++n)
        stats.positive_cosines[n] =
            cosine_similarity({features.row(pos_pairs[n].first), D},
                              {features.row(pos_pairs[n].second), D});
#pragma omp parallel for schedule(static) if (neg_pairs.size() > 256)
    for (std::size_t n = 0; n < neg_pairs.size(); ++n)
        stats.negative_cosines[n] =
            cosine_similarity({features.row(neg_pairs[n].first), D},
                              {features.row(neg_pairs[n].second), D});

    stats.bin_edges.resize(static_cast<std::size_t>(bins) + 1);
    for (int b = 0; b <= bins; ++b)
        stats.bin_edges[static_cast<std::size_t>(b)] = -1.0 + 2.0 * b / bins;
    stats.pos_hist.assign(static_cast<std::size_t>(bins), 0);
    stats.neg_hist.assign(static_cast<std::size_t>(bins), 0);
    auto bin_of = [bins](double c) {
        const int b = static_cast<int>((c + 1.0) * 0.5 * bins);
        return static_cast<std::size_t>(std::clamp(b, 0, bins - 1));
    };
    for (double c : stats.positive_cosines) ++stats.pos_hist[bin_of(c)];
    for (double c : stats.negative_cosines) ++stats.neg_hist[bin_of(c)];

    stats.mean_pos =
        std::accumulate(stats.positive_cosines.begin(),
                        stats.positive_cosines.end(), 0.0) /
        static_cast<double>(stats.positive_cosines.size());
    stats.mean_neg =
        std::accumulate(stats.negative_cosines.begin(),
                        stats.negative_cosines.end(), 0.0) /
        static_cast<double>(stats.negative_cosines.size());
    stats.separation = stats.mean_pos - stats.mean_neg;
    return stats;
}

VerificationResult verify_scores(const Vec& scores,
                                 const std::vector<std::uint8_t>& same) {
    const std::size_t n = scores.size();
    if (same.size() != n)
        throw DimMismatchError("verify: label count mismatch");
    std::size_t num_pos = 0;
    for (auto s : same) num_pos += s ? 1 : 0;
    const std::size_t num_neg = n - num_pos;
    if (num_pos == 0 || num_neg == 0)
        throw InsufficientDataError("verify: need both pair kinds");

    // Sort scores descending; sweeping the threshold down turns pairs
    // positive one group at a time.
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return scores[a] > scores[b];
    });

    std::vector<double> thresholds;
    thresholds.push_back(scores[order.front()] + 1.0);
    for (std::size_t i = 0; i + 1 < n; ++i) {
        const double hi = scores[order[i]];
        const double lo = scores[order[i + 1]];
        if (hi > lo) thresholds.push_back(0.5 * (hi + lo));
    }
    thresholds.push_back(scores[order.back()] - 1.0);

    VerificationResult res;
    res.accuracy = -1.0;
    std::size_t tp = 0, fp = 0, consumed = 0;
    for (double t : thresholds) {
        while (consumed < n && scores[order[consumed]] >= t) {
            if (same[order[consumed]])
                ++tp;
            else
                ++fp;
            ++consumed;
        }
        RocPoint pt;
        pt.threshold = t;
        pt.tpr = static_cast<double>(tp) / static_cast<double>(num_pos);
        pt.fpr = static_cast<double>(fp) / static_cast<double>(num_neg);
        res.roc.push_back(pt);

        const std::size_t tn = num_neg - fp;
        const double acc =
            static_cast<double>(tp + tn) / static_cast<double>(n);
        if (acc > res.accuracy) {
            res.accuracy = acc;
            res.best_threshold = t;
        }
    }

    double auc = 0.0;
    for (std::size_t i = 0; i + 1 < res.roc.size(); ++i)
        auc += (res.roc[i + 1].fpr - res.roc[i].fpr) *
               (res.roc[i].tpr + res.roc[i + 1].tpr) * 0.5;
    res.auc = auc;
    return res;
}

VerificationResult verify(const Matrix& first, const Matrix& second,
                          const std::vector<std::uint8_t>& same) {
    if (first.rows != second.rows || first.cols != second.cols)
        throw DimMismatchError("verify: pair matrices disagree");
    Vec scores(first.rows);
    for (std::size_t i = 0; i < first.rows; ++i)
        scores[i] = cosine_similarity({first.row(i), first.cols},
                                      {second.row(i), second.cols});
    return verify_scores(scores, same);
}

IdentificationResult identify(const Matrix& probes,
                              const std::vector<int>& probe_ids,
                              const Matrix& gallery,
                              const std::vector<int>& gallery_ids,
                              const Matrix& distractor_pool,
                              const std::vector<int>& distractor_counts,
                              int trials, std::uint64_t seed) {
    const std::size_t P = probes.rows;
    const std::size_t G = gallery.rows;
    const std::size_t D = probes.cols;
    if (probe_ids.size() != P || gallery_ids.size() != G)
        throw DimMismatchError("identify: id count mismatch");
    if (gallery.cols != D ||
        (distractor_pool.rows > 0 && distractor_pool.cols != D))
        throw DimMismatchError("identify: feature dim mismatch");
    if (P == 0 || G == 0)
        throw InsufficientDataError("identify: empty probe or gallery set");
    if (trials < 1)
        throw Error("identify: trials must be >= 1");
    for (std::size_t i = 0; i < P; ++i) {
        bool has_mate = false;
        for (std::size_t j = 0; j < G && !has_mate; ++j)
            has_mate = gallery_ids[j] == probe_ids[i];
        if (!has_mate)
            throw MissingMateError("identify: probe identity " +
                                   std::to_string(probe_ids[i]) +
                                   " has no gallery mate");
    }
    int max_count = 0;
    for (int c : distractor_counts) {
        if (c < 0)
            throw Error("identify: negative distractor count");
        max_count = std::max(max_count, c);
    }
    if (static_cast<std::size_t>(max_count) > distractor_pool.rows)
        throw InsufficientDataError("identify: distractor pool too small");

    // Reject zero-norm rows up front; the parallel loops must not throw.
    auto check_rows = [D](const Matrix& m, const char* what) {
        for (std::size_t i = 0; i < m.rows; ++i)
            if (l2_norm({m.row(i), D}) < kZeroNormThreshold)
                throw ZeroNormError(std::string("identify: zero-norm ") + what);
    };
    check_rows(probes, "probe");
    check_rows(gallery, "gallery entry");
    check_rows(distractor_pool, "distractor");

    // Gallery ranking is trial-independent: cache the best gallery score
    // per probe and whether that entry is a mate (ties to lowest index).
    std::vector<double> best_gal(P);
    std::vector<std::uint8_t> best_is_mate(P);
#pragma omp parallel for schedule(static) if (P * G * D > 8192)
    for (std::size_t i = 0; i < P; ++i) {
        double best = -HUGE_VAL;
        std::size_t best_j = 0;
        for (std::size_t j = 0; j < G; ++j) {
            const double c = cosine_similarity({probes.row(i), D},
                                               {gallery.row(j), D});
            if (c > best) {
                best = c;
                best_j = j;
            }
        }
        best_gal[i] = best;
        best_is_mate[i] = gallery_ids[best_j] == probe_ids[i] ? 1 : 0;
    }

    Matrix pool_cos(P, distractor_pool.rows);
#pragma omp parallel for schedule(static) if (P * distractor_pool.rows > 1024)
    for (std::size_t i = 0; i < P; ++i)
        for (std::size_t q = 0; q < distractor_pool.rows; ++q)
            pool_cos(i, q) = cosine_similarity({probes.row(i), D},
                                               {distractor_pool.row(q), D});

    // Counts evaluated ascending so each trial walks one prefix.
    std::vector<std::size_t> count_order(distractor_counts.size());
    std::iota(count_order.begin(), count_order.end(), 0);
    std::sort(count_order.begin(), count_order.end(),
              [&](std::size_t a, std::size_t b) {
                  return distractor_counts[a] < distractor_counts[b];
              });

    Matrix hits(static_cast<std::size_t>(trials), distractor_counts.size());
    const Rng root(seed);
#pragma omp parallel for schedule(static)
    for (int t = 0; t < trials; ++t) {
        Rng rng = root.derive(static_cast<std::uint64_t>(t) + 1);
        std::vector<std::size_t> perm(distractor_pool.rows);
        std::iota(perm.begin(), perm.end(), 0);
        rng.shuffle(perm);

        for (std::size_t i = 0; i < P; ++i) {
            double worst_distractor = -HUGE_VAL;
            std::size_t consumed = 0;
            for (std::size_t ci : count_order) {
                const auto want =
                    static_cast<std::size_t>(distractor_counts[ci]);
                for (; consumed < want; ++consumed)
                    worst_distractor =
                        std::max(worst_distractor, pool_cos(i, perm[consumed]));
                // Gallery wins ties: it precedes distractors in index order.
                const bool hit =
                    best_is_mate[i] && best_gal[i] >= worst_distractor;
                if (hit)
                    hits(static_cast<std::size_t>(t), ci) += 1.0;
            }
        }
    }

    IdentificationResult res;
    res.distractor_counts = distractor_counts;
    res.top1_accuracy.assign(distractor_counts.size(), 0.0);
    for (int t = 0; t < trials; ++t)
        for (std::size_t c = 0; c < distractor_counts.size(); ++c)
            res.top1_accuracy[c] += hits(static_cast<std::size_t>(t), c);
    const double denom = static_cast<double>(trials) * static_cast<double>(P);
    for (auto& a : res.top1_accuracy) a /= denom;
    return res;
}

Matrix random_unit_features(std::size_t count, std::size_t dim,
                            std::uint64_t seed) {
    if (dim == 0)
        throw Error("random_unit_features: dim must be >= 1");
    Rng rng(seed);
    Matrix out(count, dim);
    Vec v(dim);
    for (std::size_t i = 0; i < count; ++i) {
        double sq = 0.0;
        do {
            sq = 0.0;
            for (auto& x : v) {
                x = rng.normal();
                sq += x * x;
            }
        } while (sq < 1e-12);
        const Vec u = normalize_scale(v, 1.0);
        std::copy(u.begin(), u.end(), out.row(i));
    }
    return out;
}

} // namespace coco
