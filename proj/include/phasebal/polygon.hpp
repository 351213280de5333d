#pragma once

#include <array>
#include <vector>

namespace phasebal {

struct Point2 {
  double x = 0.0;
  double y = 0.0;
};

// Small convex polygon in the (u+, u-) plane, vertices counter-clockwise.
// May degenerate to a segment or a single point.
class ConvexPolygon {
 public:
  explicit ConvexPolygon(std::vector<Point2> vertices) : vertices_(std::move(vertices)) {}

  // Feasible set of split storage variables: [0, u_max]^2 intersected with
  // lo <= u+ - u- <= hi.
  static ConvexPolygon storage_set(double u_max, double net_lo, double net_hi);

  const std::vector<Point2>& vertices() const { return vertices_; }
  bool contains(Point2 p, double tol = 0.0) const;
  Point2 project(Point2 p) const;

 private:
  std::vector<Point2> vertices_;
};

// Convex quadratic q(x) = 0.5 x'Hx + g'x in two variables.
struct Quadratic2 {
  std::array<double, 3> h{};  // h00, h01, h11
  std::array<double, 2> g{};

  double operator()(Point2 p) const {
    return 0.5 * (h[0] * p.x * p.x + 2.0 * h[1] * p.x * p.y + h[2] * p.y * p.y) + g[0] * p.x +
           g[1] * p.y;
  }
};

// Exact minimizer over the polygon by face enumeration: the unconstrained
// stationary point (when H is positive definite and it lies inside), then
// the minimizer on every edge. `preferred` is tried first and only replaced
// by a strictly better candidate, which fixes the choice among ties.
Point2 minimize_over(const Quadratic2& q, const ConvexPolygon& poly, Point2 preferred);

}  // namespace phasebal
