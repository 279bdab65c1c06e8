#include "headsynth/deform.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "headsynth/binary_io.hpp"

namespace headsynth {

namespace {

void require_same_topology(const Mesh& a, const Mesh& b, const char* where) {
  require(a.vertices.size() == b.vertices.size() && a.triangles == b.triangles,
          std::string(where) + ": meshes do not share topology");
}

}  // namespace

Vec3 transfer_point(const Vec3& x, const SurfaceHit& hit, const Mesh& posed, const Mesh& target) {
  const auto& tri = posed.triangles[static_cast<std::size_t>(hit.triangle)];
  const Vec3& a = posed.vertices[tri[0]];
  const Vec3& b = posed.vertices[tri[1]];
  const Vec3& c = posed.vertices[tri[2]];
  const Vec3 bary = plane_barycentric(x, a, b, c);
  const Vec3 projection = bary[0] * a + bary[1] * b + bary[2] * c;
  const double offset = (x - projection).dot(hit.normal);

  const Vec3& ta = target.vertices[tri[0]];
  const Vec3& tb = target.vertices[tri[1]];
  const Vec3& tc = target.vertices[tri[2]];
  return bary[0] * ta + bary[1] * tb + bary[2] * tc + offset * face_normal(target, hit.triangle);
}

SurfaceField::SurfaceField(const Mesh& posed, const Mesh& target)
    : posed_(&posed), target_(&target), bvh_(posed) {
  require_same_topology(posed, target, "surface_field");
}

Vec3 SurfaceField::operator()(const Vec3& x) const {
  return transfer_point(x, bvh_.closest(x), *posed_, *target_);
}

Vec3 surface_field(const Vec3& x, const Mesh& posed, const Mesh& neck_canonical) {
  return SurfaceField(posed, neck_canonical)(x);
}

Vec3 VoxelGrid::node_position(int i, int j, int k) const {
  const Vec3 ext = bounds.extent();
  // Interpolating the endpoints keeps the last node exactly on `hi`.
  auto coord = [&](int n, int count, int axis) {
    const double t = static_cast<double>(n) / (count - 1);
    return n == count - 1 ? bounds.hi[axis] : bounds.lo[axis] + t * ext[axis];
  };
  return {coord(i, res.nx, 0), coord(j, res.ny, 1), coord(k, res.nz, 2)};
}

Aabb padded_bounds(const std::vector<Vec3>& vertices, double margin) {
  Aabb box = bounds_of(vertices);
  const Vec3 pad = margin * box.extent();
  return {box.lo - pad, box.hi + pad};
}

VoxelGrid build_grid(const Aabb& bounds, GridResolution res, const std::function<Vec3(const Vec3&)>& node_fn,
                     ExecPolicy policy) {
  require(res.nx >= 2 && res.ny >= 2 && res.nz >= 2, "build_sf_grid: resolution must be >= 2 per axis");
  require((bounds.hi.array() > bounds.lo.array()).all(), "build_sf_grid: bounds must have positive extent");
  VoxelGrid grid;
  grid.bounds = bounds;
  grid.res = res;
  grid.values.resize(static_cast<std::size_t>(res.node_count()));
  for_each_index(policy, res.node_count(), [&](std::int64_t n) {
    const int i = static_cast<int>(n % res.nx);
    const int j = static_cast<int>((n / res.nx) % res.ny);
    const int k = static_cast<int>(n / (std::int64_t{res.nx} * res.ny));
    grid.values[static_cast<std::size_t>(n)] = node_fn(grid.node_position(i, j, k));
  });
  return grid;
}

PoseCode neck_canonical_pose(const PoseCode& pose) { return without_neck(pose); }

VoxelGrid build_sf_grid(const HeadRig& rig, const ShapeCode& shape, const ExpressionCode& expression,
                        const PoseCode& pose, GridResolution res, ExecPolicy policy) {
  const Mesh posed = evaluate_mesh(rig, shape, expression, pose);
  const Mesh canonical = evaluate_mesh(rig, shape, expression, neck_canonical_pose(pose));
  const SurfaceField field(posed, canonical);
  return build_grid(padded_bounds(posed.vertices), res, [&](const Vec3& p) { return field(p); }, policy);
}

Vec3 interpolate_cell(const VoxelGrid& grid, int i, int j, int k, const Vec3& f) {
  auto lerp = [](const Vec3& a, const Vec3& b, double t) -> Vec3 { return a * (1.0 - t) + b * t; };
  const Vec3 c00 = lerp(grid.node(i, j, k), grid.node(i + 1, j, k), f.x());
  const Vec3 c10 = lerp(grid.node(i, j + 1, k), grid.node(i + 1, j + 1, k), f.x());
  const Vec3 c01 = lerp(grid.node(i, j, k + 1), grid.node(i + 1, j, k + 1), f.x());
  const Vec3 c11 = lerp(grid.node(i, j + 1, k + 1), grid.node(i + 1, j + 1, k + 1), f.x());
  return lerp(lerp(c00, c10, f.y()), lerp(c01, c11, f.y()), f.z());
}

Vec3 apply_grid(const VoxelGrid& grid, const Vec3& x) {
  const std::array<int, 3> res{grid.res.nx, grid.res.ny, grid.res.nz};
  std::array<int, 3> cell{};
  Vec3 frac;
  for (int a = 0; a < 3; ++a) {
    const double lo = grid.bounds.lo[a], hi = grid.bounds.hi[a];
    const double clamped = std::clamp(x[a], lo, hi);
    const double g = (clamped - lo) / (hi - lo) * (res[a] - 1);
    const int c = std::clamp(static_cast<int>(std::floor(g)), 0, res[a] - 2);
    cell[a] = c;
    frac[a] = std::clamp(g - c, 0.0, 1.0);
  }
  return interpolate_cell(grid, cell[0], cell[1], cell[2], frac);
}

Vec3 apply_grid_extended(const VoxelGrid& grid, const Vec3& x) {
  const Vec3 clamped = x.cwiseMax(grid.bounds.lo).cwiseMin(grid.bounds.hi);
  if (clamped == x) return apply_grid(grid, x);
  return x + (apply_grid(grid, clamped) - clamped);
}

void save_grid(const VoxelGrid& grid, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  binio::write_magic(os, "SFG1");
  binio::write_u32(os, static_cast<std::uint32_t>(grid.res.nx));
  binio::write_u32(os, static_cast<std::uint32_t>(grid.res.ny));
  binio::write_u32(os, static_cast<std::uint32_t>(grid.res.nz));
  for (int a = 0; a < 3; ++a) binio::write_f32(os, static_cast<float>(grid.bounds.lo[a]));
  for (int a = 0; a < 3; ++a) binio::write_f32(os, static_cast<float>(grid.bounds.hi[a]));
  std::vector<float> data;
  data.reserve(grid.values.size() * 3);
  for (const auto& v : grid.values)
    for (int a = 0; a < 3; ++a) data.push_back(static_cast<float>(v[a]));
  binio::write_f32s(os, data);
  if (!os) throw IoError("failed writing " + path.string());
}

VoxelGrid load_grid(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  const std::string what = "grid file " + path.string();
  binio::expect_magic(is, "SFG1", what);
  VoxelGrid grid;
  grid.res.nx = static_cast<int>(binio::read_u32(is, what));
  grid.res.ny = static_cast<int>(binio::read_u32(is, what));
  grid.res.nz = static_cast<int>(binio::read_u32(is, what));
  if (grid.res.nx < 2 || grid.res.ny < 2 || grid.res.nz < 2 || grid.res.node_count() > (1 << 26))
    throw ParseError(what + ": implausible resolution in header");
  for (int a = 0; a < 3; ++a) grid.bounds.lo[a] = binio::read_f32(is, what);
  for (int a = 0; a < 3; ++a) grid.bounds.hi[a] = binio::read_f32(is, what);
  std::vector<float> data(static_cast<std::size_t>(grid.res.node_count()) * 3);
  binio::read_f32s(is, data, what);
  grid.values.resize(static_cast<std::size_t>(grid.res.node_count()));
  for (std::size_t n = 0; n < grid.values.size(); ++n)
    grid.values[n] = Vec3(data[3 * n], data[3 * n + 1], data[3 * n + 2]);
  return grid;
}

OneRingDeformer::OneRingDeformer(const Mesh& src, const Mesh& dst) {
  require_same_topology(src, dst, "one_ring_deform");
  if (src.vertices.empty()) return;
  src_ = src.vertices;
  delta_.resize(src_.size());
  for (std::size_t v = 0; v < src_.size(); ++v) delta_[v] = dst.vertices[v] - src_[v];
  adjacency_ = std::make_unique<VertexAdjacency>(static_cast<int>(src_.size()), src.triangles);
  tree_ = std::make_unique<PointKdTree>(src_);
}

Vec3 OneRingDeformer::offset(const Vec3& x) const {
  if (!tree_) return Vec3::Zero();
  const int nearest = tree_->nearest(x);
  double z = 0.0;
  Vec3 sum = Vec3::Zero();
  auto accumulate = [&](int v) {
    const double w = 1.0 / std::max((x - src_[v]).norm(), kOneRingEpsilon);
    z += w;
    sum += w * delta_[v];
  };
  accumulate(nearest);
  for (int v : adjacency_->neighbors(nearest)) accumulate(v);
  return sum / z;
}

Vec3 one_ring_deform(const Vec3& x, const Mesh& src, const Mesh& dst, const HeadRig& rig) {
  require(static_cast<int>(src.vertices.size()) == rig.vertex_count() && src.triangles == rig.triangles,
          "one_ring_deform: source mesh does not share the rig topology");
  return OneRingDeformer(src, dst).offset(x);
}

DeformationPair NeckField::operator()(const Vec3& x) const {
  const Vec3 d = apply_grid_extended(grid_, x) - x;
  return {d, d};
}

DeformationField::DeformationField(const HeadRig& rig, const ShapeCode& shape, const ExpressionCode& expression,
                                   const PoseCode& pose, const DeformationOptions& options) {
  const PoseCode pose_n = neck_canonical_pose(pose);
  const PoseCode pose_ca = canonical_pose(options.canonical_jaw_open);
  const ShapeCode zero_shape = ShapeCode::zero(rig.shape_dim());
  const ExpressionCode zero_expr = ExpressionCode::zero(rig.expression_dim());

  grid_ = build_sf_grid(rig, shape, expression, pose, options.grid, options.policy);

  const Mesh mesh_n = evaluate_mesh(rig, shape, expression, pose_n);
  const Mesh mesh_ca = evaluate_mesh(rig, zero_shape, zero_expr, pose_ca);

  // Head branch ignores eye gaze.
  PoseCode head_pose = pose_n;
  head_pose.eye = Vec3::Zero();
  head_src_ = evaluate_mesh(rig, shape, expression, head_pose);
  head_dst_ = mesh_ca;
  head_ = std::make_unique<OneRingDeformer>(head_src_, head_dst_);

  std::vector<int> eye_vertices = rig.eyeball_left;
  eye_vertices.insert(eye_vertices.end(), rig.eyeball_right.begin(), rig.eyeball_right.end());
  eye_src_ = submesh(mesh_n, eye_vertices);
  eye_dst_ = submesh(mesh_ca, eye_vertices);
  eyes_ = std::make_unique<OneRingDeformer>(eye_src_, eye_dst_);

  // Lip motion follows the jaw only: expressionless source.
  const Mesh lip_n = evaluate_mesh(rig, shape, zero_expr, pose_n);
  lip_src_ = part_submesh(rig, lip_n, Part::lip_region);
  lip_dst_ = part_submesh(rig, mesh_ca, Part::lip_region);
  lips_ = std::make_unique<OneRingDeformer>(lip_src_, lip_dst_);

  const std::array<const std::vector<int>*, 2> eyeballs{&rig.eyeball_left, &rig.eyeball_right};
  for (int e = 0; e < 2; ++e) {
    Aabb box;
    for (int v : *eyeballs[e]) box.extend(mesh_n.vertices[v]);
    eye_boxes_[e] = eyeballs[e]->empty() ? Aabb{} : box.inflated(options.eye_box_inflation);
  }
}

bool DeformationField::in_eye_box(const Vec3& x_n) const {
  return eye_boxes_[0].contains(x_n) || eye_boxes_[1].contains(x_n);
}

DeformationPair DeformationField::operator()(const Vec3& x) const {
  const Vec3 x_n = apply_grid_extended(grid_, x);
  DeformationPair out;
  out.dx_head = x_n + head_->offset(x_n) - x;
  const Vec3 part = in_eye_box(x_n) ? eyes_->offset(x_n) : lips_->offset(x_n);
  out.dx_part = x_n + part - x;
  return out;
}

std::unique_ptr<DeformationField> deformation_field(const HeadRig& rig, const ShapeCode& shape,
                                                    const ExpressionCode& expression, const PoseCode& pose,
                                                    const DeformationOptions& options) {
  return std::make_unique<DeformationField>(rig, shape, expression, pose, options);
}

std::unique_ptr<NeckField> neck_only_field(const HeadRig& rig, const ShapeCode& shape, const Vec3& neck_pose,
                                           GridResolution res, ExecPolicy policy) {
  PoseCode pose;
  pose.neck = neck_pose;
  return std::make_unique<NeckField>(
      build_sf_grid(rig, shape, ExpressionCode::zero(rig.expression_dim()), pose, res, policy));
}

}  // namespace headsynth
