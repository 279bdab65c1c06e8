#pragma once

#include <array>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>

#include "headsynth/headmodel.hpp"
#include "headsynth/parallel.hpp"
#include "headsynth/spatial.hpp"

namespace headsynth {

// Mesh-relative coordinate transfer between two meshes of equal topology:
// project onto the nearest triangle of `posed`, carry the barycentric
// coordinates of the plane projection and the signed normal offset over to
// the same triangle of `target`.
class SurfaceField {
 public:
  SurfaceField(const Mesh& posed, const Mesh& target);
  Vec3 operator()(const Vec3& x) const;

 private:
  const Mesh* posed_;
  const Mesh* target_;
  TriangleBvh bvh_;
};

Vec3 transfer_point(const Vec3& x, const SurfaceHit& hit, const Mesh& posed, const Mesh& target);

// One-shot version. Builds the acceleration structure per call.
Vec3 surface_field(const Vec3& x, const Mesh& posed, const Mesh& neck_canonical);

struct GridResolution {
  int nx = 32, ny = 32, nz = 32;

  static GridResolution cube(int n) { return {n, n, n}; }
  std::int64_t node_count() const { return std::int64_t{nx} * ny * nz; }
  bool operator==(const GridResolution&) const = default;
};

// Lattice of canonicalized positions. Node (i, j, k) sits at
// lo + (i, j, k) * (hi - lo) / (res - 1); storage index i + nx * (j + ny * k).
struct VoxelGrid {
  Aabb bounds;
  GridResolution res;
  std::vector<Vec3> values;

  Vec3 node_position(int i, int j, int k) const;
  std::int64_t node_index(int i, int j, int k) const {
    return i + std::int64_t{res.nx} * (j + std::int64_t{res.ny} * k);
  }
  const Vec3& node(int i, int j, int k) const { return values[static_cast<std::size_t>(node_index(i, j, k))]; }
};

// Mesh AABB grown by `margin` times its extent on every side.
Aabb padded_bounds(const std::vector<Vec3>& vertices, double margin = 0.1);

VoxelGrid build_grid(const Aabb& bounds, GridResolution res, const std::function<Vec3(const Vec3&)>& node_fn,
                     ExecPolicy policy = ExecPolicy::parallel);

PoseCode neck_canonical_pose(const PoseCode& pose);

// Nodes store surface_field(node, m(a, b, g), m(a, b, g with neck zeroed)).
VoxelGrid build_sf_grid(const HeadRig& rig, const ShapeCode& shape, const ExpressionCode& expression,
                        const PoseCode& pose, GridResolution res, ExecPolicy policy = ExecPolicy::parallel);

// Trilinear interpolation; points outside the bounds are clamped onto them.
Vec3 apply_grid(const VoxelGrid& grid, const Vec3& x);
// Same inside the bounds; outside, the displacement at the clamped point is
// carried over, so an identity grid stays the identity everywhere.
Vec3 apply_grid_extended(const VoxelGrid& grid, const Vec3& x);

// Interpolation inside one explicit cell with local coordinates in [0,1]^3.
Vec3 interpolate_cell(const VoxelGrid& grid, int i, int j, int k, const Vec3& frac);

void save_grid(const VoxelGrid& grid, const std::filesystem::path& path);
VoxelGrid load_grid(const std::filesystem::path& path);

inline constexpr double kOneRingEpsilon = 1e-6;

// Inverse-distance weighted vertex offsets over the one-ring (plus the
// vertex itself) of the nearest source vertex.
class OneRingDeformer {
 public:
  OneRingDeformer(const Mesh& src, const Mesh& dst);
  Vec3 offset(const Vec3& x) const;
  bool empty() const { return !tree_; }

 private:
  std::vector<Vec3> src_;
  std::vector<Vec3> delta_;
  std::unique_ptr<VertexAdjacency> adjacency_;
  std::unique_ptr<PointKdTree> tree_;
};

Vec3 one_ring_deform(const Vec3& x, const Mesh& src, const Mesh& dst, const HeadRig& rig);

struct DeformationPair {
  Vec3 dx_head = Vec3::Zero();
  Vec3 dx_part = Vec3::Zero();
};

// Observation-to-canonical warp queried per sample point.
class WarpField {
 public:
  virtual ~WarpField() = default;
  virtual DeformationPair operator()(const Vec3& x) const = 0;
};

class IdentityWarp final : public WarpField {
 public:
  DeformationPair operator()(const Vec3&) const override { return {}; }
};

// Neck canonicalization only; both offsets equal x_n - x.
class NeckField final : public WarpField {
 public:
  explicit NeckField(VoxelGrid grid) : grid_(std::move(grid)) {}
  DeformationPair operator()(const Vec3& x) const override;
  const VoxelGrid& grid() const { return grid_; }

 private:
  VoxelGrid grid_;
};

struct DeformationOptions {
  GridResolution grid = GridResolution::cube(32);
  double canonical_jaw_open = kDefaultJawOpen;
  double eye_box_inflation = 1.2;
  ExecPolicy policy = ExecPolicy::parallel;
};

class DeformationField final : public WarpField {
 public:
  DeformationField(const HeadRig& rig, const ShapeCode& shape, const ExpressionCode& expression,
                   const PoseCode& pose, const DeformationOptions& options = {});

  DeformationPair operator()(const Vec3& x) const override;

  Vec3 neck_canonicalize(const Vec3& x) const { return apply_grid_extended(grid_, x); }
  bool in_eye_box(const Vec3& x_n) const;
  const VoxelGrid& grid() const { return grid_; }
  const std::array<Aabb, 2>& eye_boxes() const { return eye_boxes_; }

 private:
  VoxelGrid grid_;
  Mesh head_src_, head_dst_, eye_src_, eye_dst_, lip_src_, lip_dst_;
  std::unique_ptr<OneRingDeformer> head_;
  std::unique_ptr<OneRingDeformer> eyes_;
  std::unique_ptr<OneRingDeformer> lips_;
  std::array<Aabb, 2> eye_boxes_{};
};

std::unique_ptr<DeformationField> deformation_field(const HeadRig& rig, const ShapeCode& shape,
                                                    const ExpressionCode& expression, const PoseCode& pose,
                                                    const DeformationOptions& options = {});

// Surface-field neck canonicalization between m(a, 0, [0, 0, neck]) and m(a, 0, 0).
std::unique_ptr<NeckField> neck_only_field(const HeadRig& rig, const ShapeCode& shape, const Vec3& neck_pose,
                                           GridResolution res = GridResolution::cube(32),
                                           ExecPolicy policy = ExecPolicy::parallel);

}  // namespace headsynth
