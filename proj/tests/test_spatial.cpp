#include <gtest/gtest.h>

#include "headsynth/rng.hpp"
#include "headsynth/spatial.hpp"
#include "test_helpers.hpp"

using namespace headsynth;

namespace {

// Dense barycentric sampling of the solid triangle.
double brute_distance(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c) {
  double best = std::numeric_limits<double>::infinity();
  const int n = 400;
  for (int i = 0; i <= n; ++i) {
    for (int j = 0; i + j <= n; ++j) {
      const double u = double(i) / n, v = double(j) / n;
      best = std::min(best, (p - ((1 - u - v) * a + u * b + v * c)).norm());
    }
  }
  return best;
}

}  // namespace

TEST(ClosestPointOnTriangle, MatchesDenseSamplingInEveryRegion) {
  const Vec3 a(0, 0, 0), b(1, 0, 0), c(0.3, 0.8, 0.1);
  Rng rng(5);
  for (int k = 0; k < 60; ++k) {
    const Vec3 p(rng.uniform(-1, 2), rng.uniform(-1, 2), rng.uniform(-1, 1));
    const TrianglePoint q = closest_point_on_triangle(p, a, b, c);
    EXPECT_NEAR((p - q.point).norm(), brute_distance(p, a, b, c), 4e-3);
    EXPECT_NEAR(q.barycentric.sum(), 1.0, 1e-12);
    EXPECT_GE(q.barycentric.minCoeff(), -1e-12);
    EXPECT_LT((q.barycentric[0] * a + q.barycentric[1] * b + q.barycentric[2] * c - q.point).norm(), 1e-12);
  }
}

TEST(ClosestPointOnTriangle, VertexRegions) {
  const Vec3 a(0, 0, 0), b(1, 0, 0), c(0, 1, 0);
  EXPECT_LT((closest_point_on_triangle(Vec3(-1, -1, 0.5), a, b, c).point - a).norm(), 1e-15);
  EXPECT_LT((closest_point_on_triangle(Vec3(3, -0.5, 0), a, b, c).point - b).norm(), 1e-15);
  EXPECT_LT((closest_point_on_triangle(Vec3(-0.2, 4, 0), a, b, c).point - c).norm(), 1e-15);
}

TEST(PlaneBarycentric, ReconstructsTheProjection) {
  const Vec3 a(0.1, 0.2, 0.3), b(1.0, 0.1, -0.2), c(0.2, 0.9, 0.4);
  const Vec3 n = (b - a).cross(c - a).normalized();
  const Vec3 inplane = 0.2 * a - 0.5 * b + 1.3 * c;
  const Vec3 w = plane_barycentric(inplane + 0.7 * n, a, b, c);
  EXPECT_NEAR(w[0], 0.2, 1e-12);
  EXPECT_NEAR(w[1], -0.5, 1e-12);
  EXPECT_NEAR(w[2], 1.3, 1e-12);
}

TEST(TriangleBvh, AgreesWithExhaustiveSearch) {
  const Mesh m = test::rest_mesh();
  const TriangleBvh bvh(m);
  Rng rng(11);
  for (int k = 0; k < 500; ++k) {
    const Vec3 x(rng.uniform(-0.4, 0.4), rng.uniform(-0.5, 0.4), rng.uniform(-0.4, 0.4));
    const SurfaceHit h = bvh.closest(x), e = closest_point_exhaustive(m, x);
    EXPECT_EQ(h.triangle, e.triangle);
    EXPECT_EQ(h.squared_distance, e.squared_distance);
  }
}

TEST(TriangleBvh, TiesResolveToLowestIndex) {
  // Two coincident triangles: every query is a tie.
  Mesh m;
  m.vertices = {Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0)};
  m.triangles = {Triangle{0, 1, 2}, Triangle{0, 2, 1}, Triangle{1, 2, 0}};
  const TriangleBvh bvh(m);
  EXPECT_EQ(bvh.closest(Vec3(0.2, 0.2, 1.0)).triangle, 0);
  EXPECT_EQ(closest_point_exhaustive(m, Vec3(0.2, 0.2, 1.0)).triangle, 0);
}

TEST(PointKdTree, AgreesWithExhaustiveSearch) {
  Rng rng(2);
  std::vector<Vec3> pts;
  for (int i = 0; i < 700; ++i) pts.emplace_back(rng.uniform(), rng.uniform(), rng.uniform());
  pts.push_back(pts[10]);  // duplicate: the lower index must win
  const PointKdTree tree(pts);
  for (int k = 0; k < 300; ++k) {
    const Vec3 x(rng.uniform(-0.2, 1.2), rng.uniform(-0.2, 1.2), rng.uniform(-0.2, 1.2));
    EXPECT_EQ(tree.nearest(x), nearest_point_exhaustive(pts, x));
  }
  EXPECT_EQ(tree.nearest(pts[10]), 10);
}

TEST(Aabb, DistanceAndInflation) {
  Aabb box{Vec3(0, 0, 0), Vec3(1, 2, 3)};
  EXPECT_DOUBLE_EQ(box.squared_distance(Vec3(0.5, 1, 1)), 0.0);
  EXPECT_DOUBLE_EQ(box.squared_distance(Vec3(2, 1, 1)), 1.0);
  const Aabb big = box.inflated(2.0);
  EXPECT_EQ(big.lo, Vec3(-0.5, -1, -1.5));
  EXPECT_EQ(big.hi, Vec3(1.5, 3, 4.5));
}
