#include "phasebal/polygon.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace phasebal {

namespace {

// Keeps the part of `poly` where a*x + b*y <= c (Sutherland-Hodgman).
std::vector<Point2> clip(const std::vector<Point2>& poly, double a, double b, double c) {
  std::vector<Point2> out;
  const std::size_t n = poly.size();
  for (std::size_t k = 0; k < n; ++k) {
    const Point2 cur = poly[k];
    const Point2 nxt = poly[(k + 1) % n];
    const double dc = a * cur.x + b * cur.y - c;
    const double dn = a * nxt.x + b * nxt.y - c;
    if (dc <= 0.0) out.push_back(cur);
    if ((dc < 0.0 && dn > 0.0) || (dc > 0.0 && dn < 0.0)) {
      const double t = dc / (dc - dn);
      out.push_back({cur.x + t * (nxt.x - cur.x), cur.y + t * (nxt.y - cur.y)});
    }
  }
  // drop repeated vertices so degenerate shapes stay well formed
  std::vector<Point2> dedup;
  for (const auto& p : out) {
    if (dedup.empty() || std::abs(p.x - dedup.back().x) > 0.0 || std::abs(p.y - dedup.back().y) > 0.0) {
      dedup.push_back(p);
    }
  }
  while (dedup.size() > 1 && dedup.front().x == dedup.back().x && dedup.front().y == dedup.back().y) {
    dedup.pop_back();
  }
  return dedup;
}

Point2 project_segment(Point2 p, Point2 a, Point2 b) {
  const double dx = b.x - a.x;
  const double dy = b.y - a.y;
  const double len2 = dx * dx + dy * dy;
  if (len2 == 0.0) return a;
  const double t = std::clamp(((p.x - a.x) * dx + (p.y - a.y) * dy) / len2, 0.0, 1.0);
  return {a.x + t * dx, a.y + t * dy};
}

double dist2(Point2 a, Point2 b) {
  return (a.x - b.x) * (a.x - b.x) + (a.y - b.y) * (a.y - b.y);
}

}  // namespace

ConvexPolygon ConvexPolygon::storage_set(double u_max, double net_lo, double net_hi) {
  std::vector<Point2> square{{0.0, 0.0}, {u_max, 0.0}, {u_max, u_max}, {0.0, u_max}};
  auto poly = clip(square, 1.0, -1.0, net_hi);   // u+ - u- <= hi
  poly = clip(poly, -1.0, 1.0, -net_lo);          // u+ - u- >= lo
  return ConvexPolygon(std::move(poly));
}

bool ConvexPolygon::contains(Point2 p, double tol) const {
  const std::size_t n = vertices_.size();
  if (n == 0) return false;
  if (n == 1) return dist2(p, vertices_[0]) <= tol * tol;
  if (n == 2) return dist2(p, project_segment(p, vertices_[0], vertices_[1])) <= tol * tol;
  for (std::size_t k = 0; k < n; ++k) {
    const Point2 a = vertices_[k];
    const Point2 b = vertices_[(k + 1) % n];
    const double ex = b.x - a.x;
    const double ey = b.y - a.y;
    const double len = std::hypot(ex, ey);
    if (len == 0.0) continue;
    const double cross = (ex * (p.y - a.y) - ey * (p.x - a.x)) / len;
    if (cross < -tol) return false;
  }
  return true;
}

Point2 ConvexPolygon::project(Point2 p) const {
  if (contains(p)) return p;
  const std::size_t n = vertices_.size();
  Point2 best = vertices_[0];
  double best_d = dist2(p, best);
  for (std::size_t k = 0; k < n; ++k) {
    const Point2 q = project_segment(p, vertices_[k], vertices_[(k + 1) % n]);
    const double d = dist2(p, q);
    if (d < best_d) {
      best_d = d;
      best = q;
    }
  }
  return best;
}

Point2 minimize_over(const Quadratic2& q, const ConvexPolygon& poly, Point2 preferred) {
  const auto& v = poly.vertices();
  Point2 best = poly.contains(preferred, 1e-15) ? preferred : v[0];
  double best_val = q(best);

  auto offer = [&](Point2 cand) {
    const double val = q(cand);
    if (val < best_val - 1e-14 * (1.0 + std::abs(best_val))) {
      best = cand;
      best_val = val;
    }
  };

  const double det = q.h[0] * q.h[2] - q.h[1] * q.h[1];
  if (q.h[0] > 0.0 && det > 0.0) {
    const Point2 stat{(-q.g[0] * q.h[2] + q.g[1] * q.h[1]) / det,
                      (q.g[0] * q.h[1] - q.g[1] * q.h[0]) / det};
    if (poly.contains(stat)) offer(stat);
  }

  const std::size_t n = v.size();
  for (std::size_t k = 0; k < n; ++k) {
    const Point2 a = v[k];
    const Point2 b = v[(k + 1) % n];
    const double dx = b.x - a.x;
    const double dy = b.y - a.y;
    // q(a + t d): slope at t = 0 and curvature along d
    const double slope = dx * (q.h[0] * a.x + q.h[1] * a.y + q.g[0]) +
                         dy * (q.h[1] * a.x + q.h[2] * a.y + q.g[1]);
    const double curv = q.h[0] * dx * dx + 2.0 * q.h[1] * dx * dy + q.h[2] * dy * dy;
    double t;
    if (curv > 0.0) {
      t = std::clamp(-slope / curv, 0.0, 1.0);
    } else {
      t = slope < 0.0 ? 1.0 : 0.0;
    }
    offer({a.x + t * dx, a.y + t * dy});
    offer(a);
  }
  return best;
}

}  // namespace phasebal
