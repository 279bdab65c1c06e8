#include "headsynth/spatial.hpp"

#include <algorithm>
#include <numeric>

namespace headsynth {

Aabb bounds_of(const std::vector<Vec3>& points) {
  Aabb box;
  for (const auto& p : points) box.extend(p);
  return box;
}

TrianglePoint closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c) {
  const Vec3 ab = b - a, ac = c - a, ap = p - a;
  const double d1 = ab.dot(ap), d2 = ac.dot(ap);
  if (d1 <= 0.0 && d2 <= 0.0) return {a, Vec3(1, 0, 0)};

  const Vec3 bp = p - b;
  const double d3 = ab.dot(bp), d4 = ac.dot(bp);
  if (d3 >= 0.0 && d4 <= d3) return {b, Vec3(0, 1, 0)};

  const double vc = d1 * d4 - d3 * d2;
  if (vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0) {
    const double v = d1 / (d1 - d3);
    return {a + v * ab, Vec3(1.0 - v, v, 0.0)};
  }

  const Vec3 cp = p - c;
  const double d5 = ab.dot(cp), d6 = ac.dot(cp);
  if (d6 >= 0.0 && d5 <= d6) return {c, Vec3(0, 0, 1)};

  const double vb = d5 * d2 - d1 * d6;
  if (vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0) {
    const double w = d2 / (d2 - d6);
    return {a + w * ac, Vec3(1.0 - w, 0.0, w)};
  }

  const double va = d3 * d6 - d5 * d4;
  if (va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0) {
    const double w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
    return {b + w * (c - b), Vec3(0.0, 1.0 - w, w)};
  }

  const double denom = 1.0 / (va + vb + vc);
  const double v = vb * denom, w = vc * denom;
  return {a + ab * v + ac * w, Vec3(1.0 - v - w, v, w)};
}

Vec3 plane_barycentric(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c) {
  const Vec3 e0 = b - a, e1 = c - a, d = p - a;
  const double d00 = e0.dot(e0), d01 = e0.dot(e1), d11 = e1.dot(e1);
  const double d20 = d.dot(e0), d21 = d.dot(e1);
  const double denom = d00 * d11 - d01 * d01;
  if (denom <= 0.0) return closest_point_on_triangle(p, a, b, c).barycentric;
  const double v = (d11 * d20 - d01 * d21) / denom;
  const double w = (d00 * d21 - d01 * d20) / denom;
  return {1.0 - v - w, v, w};
}

namespace {

SurfaceHit make_hit(const Mesh& mesh, int t, const TrianglePoint& tp, double d2) {
  SurfaceHit hit;
  hit.triangle = t;
  hit.barycentric = tp.barycentric;
  hit.point = tp.point;
  hit.normal = face_normal(mesh, t);
  hit.squared_distance = d2;
  return hit;
}

TrianglePoint triangle_query(const Mesh& mesh, int t, const Vec3& x) {
  const auto& tri = mesh.triangles[static_cast<std::size_t>(t)];
  return closest_point_on_triangle(x, mesh.vertices[tri[0]], mesh.vertices[tri[1]], mesh.vertices[tri[2]]);
}

}  // namespace

SurfaceHit closest_point_exhaustive(const Mesh& mesh, const Vec3& x) {
  require(!mesh.triangles.empty(), "closest_point_on_mesh: mesh has no triangles");
  int best = -1;
  double best_d2 = std::numeric_limits<double>::infinity();
  TrianglePoint best_tp{};
  for (int t = 0; t < static_cast<int>(mesh.triangles.size()); ++t) {
    const TrianglePoint tp = triangle_query(mesh, t, x);
    const double d2 = (tp.point - x).squaredNorm();
    if (d2 < best_d2) {
      best = t;
      best_d2 = d2;
      best_tp = tp;
    }
  }
  return make_hit(mesh, best, best_tp, best_d2);
}

TriangleBvh::TriangleBvh(const Mesh& mesh) : mesh_(&mesh) {
  require(!mesh.triangles.empty(), "TriangleBvh: mesh has no triangles");
  const int n = static_cast<int>(mesh.triangles.size());
  tri_boxes_.resize(static_cast<std::size_t>(n));
  std::vector<Vec3> centroids(static_cast<std::size_t>(n));
  for (int t = 0; t < n; ++t) {
    const auto& tri = mesh.triangles[t];
    for (int k : tri) tri_boxes_[t].extend(mesh.vertices[k]);
    centroids[t] = (mesh.vertices[tri[0]] + mesh.vertices[tri[1]] + mesh.vertices[tri[2]]) / 3.0;
  }
  order_.resize(static_cast<std::size_t>(n));
  std::iota(order_.begin(), order_.end(), 0);
  nodes_.reserve(static_cast<std::size_t>(2 * n));
  build(0, n, centroids);
}

int TriangleBvh::build(int begin, int end, const std::vector<Vec3>& centroids) {
  const int index = static_cast<int>(nodes_.size());
  nodes_.emplace_back();
  Aabb box, cbox;
  for (int i = begin; i < end; ++i) {
    box.extend(tri_boxes_[order_[i]]);
    cbox.extend(centroids[order_[i]]);
  }
  nodes_[index].box = box;
  if (end - begin <= 4) {
    nodes_[index].begin = begin;
    nodes_[index].end = end;
    return index;
  }
  int axis = 0;
  cbox.extent().maxCoeff(&axis);
  const int mid = (begin + end) / 2;
  std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end, [&](int a, int b) {
    const double ca = centroids[a][axis], cb = centroids[b][axis];
    return ca < cb || (ca == cb && a < b);
  });
  const int left = build(begin, mid, centroids);
  const int right = build(mid, end, centroids);
  nodes_[index].left = left;
  nodes_[index].right = right;
  return index;
}

SurfaceHit TriangleBvh::closest(const Vec3& x) const {
  int best = -1;
  double best_d2 = std::numeric_limits<double>::infinity();
  TrianglePoint best_tp{};

  std::array<int, 128> stack{};
  int top = 0;
  stack[top++] = 0;
  while (top > 0) {
    const Node& node = nodes_[stack[--top]];
    // Equal-distance boxes must still be visited so lower indices can win ties.
    if (node.box.squared_distance(x) > best_d2) continue;
    if (node.left < 0) {
      for (int i = node.begin; i < node.end; ++i) {
        const int t = order_[i];
        if (tri_boxes_[t].squared_distance(x) > best_d2) continue;
        const TrianglePoint tp = triangle_query(*mesh_, t, x);
        const double d2 = (tp.point - x).squaredNorm();
        if (d2 < best_d2 || (d2 == best_d2 && t < best)) {
          best = t;
          best_d2 = d2;
          best_tp = tp;
        }
      }
      continue;
    }
    const double dl = nodes_[node.left].box.squared_distance(x);
    const double dr = nodes_[node.right].box.squared_distance(x);
    // Push the farther child first so the nearer one is popped next.
    if (dl <= dr) {
      stack[top++] = node.right;
      stack[top++] = node.left;
    } else {
      stack[top++] = node.left;
      stack[top++] = node.right;
    }
  }
  return make_hit(*mesh_, best, best_tp, best_d2);
}

SurfaceHit closest_point_on_mesh(const Mesh& mesh, const Vec3& x) { return TriangleBvh(mesh).closest(x); }

PointKdTree::PointKdTree(std::vector<Vec3> points) : points_(std::move(points)) {
  require(!points_.empty(), "PointKdTree: no points");
  std::vector<int> idx(points_.size());
  std::iota(idx.begin(), idx.end(), 0);
  nodes_.reserve(points_.size());
  root_ = build(idx, 0, static_cast<int>(idx.size()), 0);
}

int PointKdTree::build(std::vector<int>& idx, int begin, int end, int depth) {
  if (begin >= end) return -1;
  Aabb box;
  for (int i = begin; i < end; ++i) box.extend(points_[idx[i]]);
  int axis = 0;
  box.extent().maxCoeff(&axis);
  (void)depth;
  const int mid = (begin + end) / 2;
  std::nth_element(idx.begin() + begin, idx.begin() + mid, idx.begin() + end, [&](int a, int b) {
    const double pa = points_[a][axis], pb = points_[b][axis];
    return pa < pb || (pa == pb && a < b);
  });
  const int node = static_cast<int>(nodes_.size());
  nodes_.push_back({idx[mid], axis, -1, -1});
  const int left = build(idx, begin, mid, depth + 1);
  const int right = build(idx, mid + 1, end, depth + 1);
  nodes_[node].left = left;
  nodes_[node].right = right;
  return node;
}

void PointKdTree::search(int node, const Vec3& x, int& best, double& best_d2) const {
  if (node < 0) return;
  const Node& n = nodes_[node];
  const Vec3& p = points_[n.point];
  const double d2 = (p - x).squaredNorm();
  if (d2 < best_d2 || (d2 == best_d2 && n.point < best)) {
    best = n.point;
    best_d2 = d2;
  }
  const double diff = x[n.axis] - p[n.axis];
  const int near = diff < 0.0 ? n.left : n.right;
  const int far = diff < 0.0 ? n.right : n.left;
  search(near, x, best, best_d2);
  if (diff * diff <= best_d2) search(far, x, best, best_d2);
}

int PointKdTree::nearest(const Vec3& x) const {
  int best = -1;
  double best_d2 = std::numeric_limits<double>::infinity();
  search(root_, x, best, best_d2);
  return best;
}

int nearest_point_exhaustive(const std::vector<Vec3>& points, const Vec3& x) {
  require(!points.empty(), "nearest_point_exhaustive: no points");
  int best = 0;
  double best_d2 = (points[0] - x).squaredNorm();
  for (int i = 1; i < static_cast<int>(points.size()); ++i) {
    const double d2 = (points[i] - x).squaredNorm();
    if (d2 < best_d2) {
      best = i;
      best_d2 = d2;
    }
  }
  return best;
}

}  // namespace headsynth
