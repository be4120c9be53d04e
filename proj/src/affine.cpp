#include "coco/affine.hpp"

#include <cmath>

#include "coco/errors.hpp"

namespace coco {

AffineMap fit_affine(const std::vector<Point2>& p, const std::vector<Point2>& q) {
    if (p.size() != q.size())
        throw DimMismatchError("fit_affine: point count mismatch");
    const std::size_t z = p.size();
    if (z < 3)
        throw DegenerateGeometryError("fit_affine: need at least 3 points");

    // Centered normal equations: A = S_qp * S_pp^-1, b = q_mean - A p_mean.
    double pmx = 0.0, pmy = 0.0, qmx = 0.0, qmy = 0.0;
    for (std::size_t k = 0; k < z; ++k) {
        pmx += p[k].x;
        pmy += p[k].y;
        qmx += q[k].x;
        qmy += q[k].y;
    }
    pmx /= z; pmy /= z; qmx /= z; qmy /= z;

    double sxx = 0.0, sxy = 0.0, syy = 0.0;           // S_pp
    double qxx = 0.0, qxy = 0.0, qyx = 0.0, qyy = 0.0; // S_qp
    for (std::size_t k = 0; k < z; ++k) {
        const double dx = p[k].x - pmx;
        const double dy = p[k].y - pmy;
        const double ex = q[k].x - qmx;
        const double ey = q[k].y - qmy;
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
        qxx += ex * dx;
        qxy += ex * dy;
        qyx += ey * dx;
        qyy += ey * dy;
    }

    // Collinear (or coincident) source points make S_pp singular. The
    // smaller eigenvalue relative to the larger one is the rank test.
    const double tr = sxx + syy;
    const double det = sxx * syy - sxy * sxy;
    const double disc = std::sqrt(std::max(0.0, tr * tr / 4.0 - det));
    const double lam_max = tr / 2.0 + disc;
    const double lam_min = tr / 2.0 - disc;
    if (!(lam_max > 0.0) || lam_min <= 1e-12 * lam_max)
        throw DegenerateGeometryError("fit_affine: collinear or coincident points");

    const double inv_det = 1.0 / det;
    AffineMap map;
    map.a[0][0] = (qxx * syy - qxy * sxy) * inv_det;
    map.a[0][1] = (qxy * sxx - qxx * sxy) * inv_det;
    map.a[1][0] = (qyx * syy - qyy * sxy) * inv_det;
    map.a[1][1] = (qyy * sxx - qyx * sxy) * inv_det;
    map.b[0] = qmx - map.a[0][0] * pmx - map.a[0][1] * pmy;
    map.b[1] = qmy - map.a[1][0] * pmx - map.a[1][1] * pmy;
    return map;
}

Point2 apply_affine(const AffineMap& map, const Point2& point) {
    return {map.a[0][0] * point.x + map.a[0][1] * point.y + map.b[0],
            map.a[1][0] * point.x + map.a[1][1] * point.y + map.b[1]};
}

std::vector<Point2> apply_affine(const AffineMap& map,
                                 const std::vector<Point2>& points) {
    std::vector<Point2> out;
    out.reserve(points.size());
    for (const auto& pt : points) out.push_back(apply_affine(map, pt));
    return out;
}

AffineMap compose(const AffineMap& outer, const AffineMap& inner) {
    AffineMap m;
    for (int i = 0; i < 2; ++i) {
        for (int j = 0; j < 2; ++j)
            m.a[i][j] = outer.a[i][0] * inner.a[0][j] +
                        outer.a[i][1] * inner.a[1][j];
        m.b[i] = outer.a[i][0] * inner.b[0] + outer.a[i][1] * inner.b[1] +
                 outer.b[i];
    }
    return m;
}

AffineMap invert(const AffineMap& map) {
    const double det = map.a[0][0] * map.a[1][1] - map.a[0][1] * map.a[1][0];
    const double scale = std::fabs(map.a[0][0]) + std::fabs(map.a[0][1]) +
                         std::fabs(map.a[1][0]) + std::fabs(map.a[1][1]);
    if (std::fabs(det) <= 1e-14 * std::max(1.0, scale * scale))
        throw DegenerateGeometryError("invert: singular linear part");
    AffineMap inv;
    inv.a[0][0] = map.a[1][1] / det;
    inv.a[0][1] = -map.a[0][1] / det;
    inv.a[1][0] = -map.a[1][0] / det;
    inv.a[1][1] = map.a[0][0] / det;
    inv.b[0] = -(inv.a[0][0] * map.b[0] + inv.a[0][1] * map.b[1]);
    inv.b[1] = -(inv.a[1][0] * map.b[0] + inv.a[1][1] * map.b[1]);
    return inv;
}

double affine_rms_residual(const AffineMap& map, const std::vector<Point2>& p,
                           const std::vector<Point2>& q) {
    if (p.size() != q.size() || p.empty())
        throw DimMismatchError("affine_rms_residual: point count mismatch");
    double acc = 0.0;
    for (std::size_t k = 0; k < p.size(); ++k) {
        const Point2 m = apply_affine(map, p[k]);
        const double dx = m.x - q[k].x;
        const double dy = m.y - q[k].y;
        acc += dx * dx + dy * dy;
    }
    return std::sqrt(acc / static_cast<double>(p.size()));
}

} // namespace coco
