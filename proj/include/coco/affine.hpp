#pragma once

#include <array>
#include <vector>

namespace coco {

struct Point2 {
    double x = 0.0;
    double y = 0.0;
};

// Planar affine map p -> A p + b.
struct AffineMap {
    std::array<std::array<double, 2>, 2> a{{{1.0, 0.0}, {0.0, 1.0}}};
    std::array<double, 2> b{0.0, 0.0};
};

// Least-squares fit of q ~= A p + b over z >= 3 correspondences. Exact
// (zero residual) when the points are related by a true affine map.
// Throws DegenerateGeometryError for collinear or coincident inputs.
AffineMap fit_affine(const std::vector<Point2>& p, const std::vector<Point2>& q);

std::vector<Point2> apply_affine(const AffineMap& map,
                                 const std::vector<Point2>& points);
Point2 apply_affine(const AffineMap& map, const Point2& point);

// outer(inner(p)) as a single map.
AffineMap compose(const AffineMap& outer, const AffineMap& inner);

// Throws DegenerateGeometryError when the linear part is singular.
AffineMap invert(const AffineMap& map);

// Root-mean-square of ||A p_k + b - q_k|| over the correspondences.
double affine_rms_residual(const AffineMap& map, const std::vector<Point2>& p,
                           const std::vector<Point2>& q);

} // namespace coco
