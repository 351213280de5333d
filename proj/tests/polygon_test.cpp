#include <gtest/gtest.h>

#include <cmath>

#include "phasebal/polygon.hpp"
#include "test_support.hpp"

using namespace phasebal;
using phasebal::testing::Gen;

TEST(StoragePolygon, FullSquareWhenNetBoundsLoose) {
  const auto p = ConvexPolygon::storage_set(1.0, -1.0, 1.0);
  EXPECT_TRUE(p.contains({0.0, 0.0}));
  EXPECT_TRUE(p.contains({1.0, 1.0}));
  EXPECT_TRUE(p.contains({1.0, 0.0}));
  EXPECT_TRUE(p.contains({0.0, 1.0}));
  EXPECT_FALSE(p.contains({1.1, 0.0}));
}

TEST(StoragePolygon, NetBoundsCutCorners) {
  // charging only: u+ - u- in [0, 1]
  const auto p = ConvexPolygon::storage_set(1.0, 0.0, 1.0);
  EXPECT_TRUE(p.contains({0.5, 0.5}, 1e-12));
  EXPECT_TRUE(p.contains({1.0, 0.2}));
  EXPECT_FALSE(p.contains({0.2, 0.6}, 1e-9));
}

TEST(StoragePolygon, DegeneratesToSegment) {
  const auto p = ConvexPolygon::storage_set(1.0, 0.0, 0.0);
  EXPECT_TRUE(p.contains({0.3, 0.3}, 1e-12));
  EXPECT_FALSE(p.contains({0.3, 0.2}, 1e-9));
}

TEST(StoragePolygon, ProjectionIsIdempotentAndNearest) {
  Gen g(8);
  for (int k = 0; k < 300; ++k) {
    const double lo = g.uniform(-1.0, 0.5);
    const double hi = g.uniform(lo, 1.0);
    const auto poly = ConvexPolygon::storage_set(1.0, lo, hi);
    const Point2 x{g.uniform(-2.0, 3.0), g.uniform(-2.0, 3.0)};
    const Point2 p = poly.project(x);
    ASSERT_TRUE(poly.contains(p, 1e-12));
    const Point2 pp = poly.project(p);
    EXPECT_NEAR(pp.x, p.x, 1e-12);
    EXPECT_NEAR(pp.y, p.y, 1e-12);
    // no grid point of the set is closer
    const double d = std::hypot(x.x - p.x, x.y - p.y);
    for (int i = 0; i <= 40; ++i) {
      for (int j = 0; j <= 40; ++j) {
        const Point2 q{i / 40.0, j / 40.0};
        if (!poly.contains(q)) continue;
        EXPECT_GE(std::hypot(x.x - q.x, x.y - q.y), d - 1e-12);
      }
    }
  }
}

TEST(Quadratic2, MinimizerBeatsEveryGridPoint) {
  Gen g(9);
  for (int k = 0; k < 200; ++k) {
    const double lo = g.uniform(-1.0, 0.5);
    const double hi = g.uniform(lo, 1.0);
    const auto poly = ConvexPolygon::storage_set(1.0, lo, hi);
    // PSD Hessian from a random 2x2 factor, sometimes rank one
    const double a = g.uniform(-2, 2), b = g.uniform(-2, 2);
    const double c = g.coin() ? 0.0 : g.uniform(-2, 2), d = g.coin() ? 0.0 : g.uniform(-2, 2);
    Quadratic2 q;
    q.h = {a * a + c * c, a * b + c * d, b * b + d * d};
    q.g = {g.uniform(-5, 5), g.uniform(-5, 5)};
    const Point2 x = minimize_over(q, poly, {0.0, 0.0});
    ASSERT_TRUE(poly.contains(x, 1e-12));
    const double fx = q(x);
    for (int i = 0; i <= 100; ++i) {
      for (int j = 0; j <= 100; ++j) {
        const Point2 y{i / 100.0, j / 100.0};
        if (poly.contains(y)) EXPECT_LE(fx, q(y) + 1e-12);
      }
    }
  }
}

TEST(Quadratic2, PreferredPointWinsTies) {
  Quadratic2 flat;
  const auto poly = ConvexPolygon::storage_set(1.0, -1.0, 1.0);
  const Point2 x = minimize_over(flat, poly, {0.0, 0.0});
  EXPECT_EQ(x.x, 0.0);
  EXPECT_EQ(x.y, 0.0);
}
