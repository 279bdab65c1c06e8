#include <gtest/gtest.h>

#include "headsynth/deform.hpp"
#include "headsynth/rng.hpp"
#include "headsynth/verify.hpp"
#include "test_helpers.hpp"

using namespace headsynth;
using headsynth::test::rig;

namespace {

ShapeCode zero_shape() { return ShapeCode::zero(rig().shape_dim()); }
ExpressionCode zero_expression() { return ExpressionCode::zero(rig().expression_dim()); }

}  // namespace

TEST(SurfaceField, IdentityOnTheSurfaceWithoutNeckRotation) {
  PoseCode pose;
  pose.jaw = Vec3(0.1, 0, 0);
  const Mesh m = test::rest_mesh(pose);
  const SurfaceField sf(m, m);
  for (const Vec3& x : near_surface_points(m, 300, 0.0, 3)) EXPECT_LT((sf(x) - x).norm(), 1e-12);
}

TEST(SurfaceField, CarriesTheNormalOffset) {
  Mesh posed;
  posed.vertices = {Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0)};
  posed.triangles = {Triangle{0, 1, 2}};
  Mesh target = posed;
  for (Vec3& v : target.vertices) v = Vec3(v.x() + 2.0, v.y(), v.z());
  const SurfaceField sf(posed, target);
  EXPECT_LT((sf(Vec3(0.2, 0.3, 0.4)) - Vec3(2.2, 0.3, 0.4)).norm(), 1e-15);
}

TEST(SurfaceField, BvhEqualsExhaustiveOracle) {
  PoseCode pose;
  pose.neck = Vec3(0.2, -0.3, 0.05);
  const Mesh posed = test::rest_mesh(pose), canonical = test::rest_mesh();
  const SurfaceField sf(posed, canonical);
  for (const Vec3& x : near_surface_points(posed, 200, 0.1, 4)) {
    EXPECT_EQ(sf(x), surface_field_exhaustive(x, posed, canonical));
  }
}

TEST(VoxelGrid, NodeLayoutAndAffineReproduction) {
  const Aabb box{Vec3(-1, -1, -1), Vec3(1, 2, 3)};
  const VoxelGrid g = build_grid(box, {3, 4, 5}, [](const Vec3& x) { return Vec3(2 * x.x() - x.z(), x.y() + 1, 3 * x.z()); });
  EXPECT_EQ(g.node_position(0, 0, 0), box.lo);
  EXPECT_EQ(g.node_position(2, 3, 4), box.hi);
  EXPECT_EQ(g.node_index(1, 2, 3), 1 + 3 * (2 + 4 * 3));
  const Vec3 x(0.3, 0.7, 1.9);
  EXPECT_LT((apply_grid(g, x) - Vec3(2 * x.x() - x.z(), x.y() + 1, 3 * x.z())).norm(), 1e-13);
  // Outside points clamp to the box.
  EXPECT_LT((apply_grid(g, Vec3(5, 0.7, 1.9)) - apply_grid(g, Vec3(1, 0.7, 1.9))).norm(), 1e-15);
  // The extended form carries the boundary displacement instead.
  const VoxelGrid id = build_grid(box, {3, 4, 5}, [](const Vec3& p) { return p; });
  EXPECT_LT((apply_grid_extended(id, Vec3(5, -3, 9)) - Vec3(5, -3, 9)).norm(), 1e-14);
  EXPECT_EQ(apply_grid_extended(g, x), apply_grid(g, x));
}

TEST(VoxelGrid, SerialAndParallelBuildsAgreeBitwise) {
  PoseCode pose;
  pose.neck = Vec3(0.1, 0.2, 0.0);
  const VoxelGrid s = build_sf_grid(rig(), zero_shape(), zero_expression(), pose, GridResolution::cube(8),
                                    ExecPolicy::serial);
  const VoxelGrid p = build_sf_grid(rig(), zero_shape(), zero_expression(), pose, GridResolution::cube(8),
                                    ExecPolicy::parallel);
  EXPECT_EQ(s.values, p.values);
}

TEST(VoxelGrid, FileRoundTripAndCorruption) {
  test::TempDir dir("grid");
  const VoxelGrid g = build_grid({Vec3(0, 0, 0), Vec3(1, 1, 1)}, {2, 3, 2}, [](const Vec3& x) { return 2.0 * x; });
  save_grid(g, dir / "g.sfg");
  const VoxelGrid back = load_grid(dir / "g.sfg");
  EXPECT_EQ(back.values, g.values);
  EXPECT_EQ(back.res, g.res);
  std::string bytes = test::read_bytes(dir / "g.sfg");
  test::write_bytes(dir / "short.sfg", bytes.substr(0, bytes.size() - 5));
  EXPECT_THROW(load_grid(dir / "short.sfg"), ParseError);
  bytes[0] = 'X';
  test::write_bytes(dir / "magic.sfg", bytes);
  EXPECT_THROW(load_grid(dir / "magic.sfg"), ParseError);
}

TEST(OneRingDeformer, ZeroForIdenticalMeshesAndExactForTranslations) {
  const Mesh m = test::rest_mesh();
  const OneRingDeformer same(m, m);
  Mesh shifted = m;
  for (Vec3& v : shifted.vertices) v += Vec3(0.01, 0.02, -0.03);
  const OneRingDeformer moved(m, shifted);
  for (const Vec3& x : near_surface_points(m, 100, 0.05, 8)) {
    EXPECT_EQ(same.offset(x), Vec3::Zero());
    EXPECT_LT((moved.offset(x) - Vec3(0.01, 0.02, -0.03)).norm(), 1e-14);
  }
}

TEST(OneRingDeformer, AtAVertexReturnsThatVertexOffset) {
  const Mesh m = test::rest_mesh();
  Mesh dst = m;
  dst.vertices[42] += Vec3(0.0, 0.05, 0.0);
  const OneRingDeformer d(m, dst);
  // The vertex itself carries weight 1 / kOneRingEpsilon against its ring.
  EXPECT_LT((d.offset(m.vertices[42]) - Vec3(0.0, 0.05, 0.0)).norm(), 1e-4);
}

TEST(DeformationField, NullCaseIsIdentity) {
  const auto field = deformation_field(rig(), zero_shape(), zero_expression(), canonical_pose());
  for (const Vec3& x : near_surface_points(test::rest_mesh(canonical_pose()), 200, 0.05, 9)) {
    const DeformationPair d = (*field)(x);
    EXPECT_LT(d.dx_head.norm(), 1e-9);
    EXPECT_LT(d.dx_part.norm(), 1e-9);
  }
}

TEST(DeformationField, EyeBoxesContainTheEyeballs) {
  PoseCode pose;
  pose.eye = Vec3(0.1, 0.2, 0);
  const auto field = deformation_field(rig(), zero_shape(), zero_expression(), pose);
  const Mesh m = test::rest_mesh(pose);
  for (int v : rig().eyeball_left) EXPECT_TRUE(field->in_eye_box(m.vertices[v]));
  EXPECT_FALSE(field->in_eye_box(head_layout().neck_center));
}

TEST(DeformationField, NeckOnlyFieldUndoesRigidNeck) {
  RigSpec spec;
  spec.rigid_neck = true;
  const HeadRig r = procedural_rig(spec, 1);
  const Vec3 neck(0.0, 0.25, 0.0);
  const auto field = neck_only_field(r, ShapeCode::zero(r.shape_dim()), neck, GridResolution::cube(16));
  const Mat3 rot = rotation_from_axis_angle(neck);
  const Vec3 c = r.joints[static_cast<int>(Joint::neck)];
  const Vec3 x = rot * (head_layout().head_center + Vec3(0, 0, head_layout().head_radii.z()) - c) + c;
  const DeformationPair d = (*field)(x);
  EXPECT_LT((x + d.dx_head - (rot.transpose() * (x - c) + c)).norm(), 5e-3);
  EXPECT_EQ(d.dx_head, d.dx_part);
}
