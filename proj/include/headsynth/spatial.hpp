#pragma once

#include <array>
#include <limits>
#include <vector>

#include "headsynth/common.hpp"
#include "headsynth/headmodel.hpp"

namespace headsynth {

struct Aabb {
  Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
  Vec3 hi = Vec3::Constant(-std::numeric_limits<double>::infinity());

  void extend(const Vec3& p) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  void extend(const Aabb& b) {
    lo = lo.cwiseMin(b.lo);
    hi = hi.cwiseMax(b.hi);
  }
  bool contains(const Vec3& p) const {
    return (p.array() >= lo.array()).all() && (p.array() <= hi.array()).all();
  }
  Vec3 center() const { return 0.5 * (lo + hi); }
  Vec3 extent() const { return hi - lo; }
  double squared_distance(const Vec3& p) const {
    const Vec3 d = (lo - p).cwiseMax(p - hi).cwiseMax(0.0);
    return d.squaredNorm();
  }
  // Scaled about its centre by `factor` per axis.
  Aabb inflated(double factor) const {
    const Vec3 c = center();
    const Vec3 h = 0.5 * factor * extent();
    return {c - h, c + h};
  }
};

Aabb bounds_of(const std::vector<Vec3>& points);

struct TrianglePoint {
  Vec3 point;
  Vec3 barycentric;  // weights of (a, b, c), clamped to the triangle
};

// Closest point of the solid triangle (Voronoi-region walk).
TrianglePoint closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c);

// Barycentric coordinates of the orthogonal projection of p onto the
// triangle's supporting plane. Not clamped; coordinates may be negative.
Vec3 plane_barycentric(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c);

struct SurfaceHit {
  int triangle = -1;
  Vec3 barycentric = Vec3::Zero();
  Vec3 point = Vec3::Zero();
  Vec3 normal = Vec3::Zero();
  double squared_distance = 0.0;
};

// O(T) reference search. Ties resolve to the lowest triangle index.
SurfaceHit closest_point_exhaustive(const Mesh& mesh, const Vec3& x);

class TriangleBvh {
 public:
  explicit TriangleBvh(const Mesh& mesh);

  // Same result as closest_point_exhaustive, including tie-breaking.
  SurfaceHit closest(const Vec3& x) const;
  const Mesh& mesh() const { return *mesh_; }

 private:
  struct Node {
    Aabb box;
    int left = -1;  // child index, or -1 for a leaf
    int right = -1;
    int begin = 0;  // leaf range into order_
    int end = 0;
  };
  int build(int begin, int end, const std::vector<Vec3>& centroids);

  const Mesh* mesh_;
  std::vector<Node> nodes_;
  std::vector<int> order_;
  std::vector<Aabb> tri_boxes_;
};

// Convenience wrapper that builds a BVH for one query.
SurfaceHit closest_point_on_mesh(const Mesh& mesh, const Vec3& x);

// Nearest point lookup with lowest-index tie-breaking.
class PointKdTree {
 public:
  explicit PointKdTree(std::vector<Vec3> points);
  int nearest(const Vec3& x) const;
  std::size_t size() const { return points_.size(); }

 private:
  struct Node {
    int point = -1;
    int axis = 0;
    int left = -1;
    int right = -1;
  };
  int build(std::vector<int>& idx, int begin, int end, int depth);
  void search(int node, const Vec3& x, int& best, double& best_d2) const;

  std::vector<Vec3> points_;
  std::vector<Node> nodes_;
  int root_ = -1;
};

int nearest_point_exhaustive(const std::vector<Vec3>& points, const Vec3& x);

}  // namespace headsynth
