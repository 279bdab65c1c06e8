#include <gtest/gtest.h>

#include <set>

#include "headsynth/headmodel.hpp"
#include "test_helpers.hpp"

using namespace headsynth;
using headsynth::test::rig;
using headsynth::test::rest_mesh;

TEST(ProceduralRig, PassesValidationWithConvexSkinWeights) {
  const HeadRig& r = rig();
  EXPECT_NO_THROW(r.validate());
  EXPECT_EQ(r.vertex_count(), 1520);
  EXPECT_EQ(r.shape_dim(), 300);
  EXPECT_EQ(r.expression_dim(), 100);
  for (Eigen::Index v = 0; v < r.skin_weights.rows(); ++v) {
    EXPECT_NEAR(r.skin_weights.row(v).sum(), 1.0, 1e-12);
    EXPECT_GE(r.skin_weights.row(v).minCoeff(), 0.0);
  }
}

TEST(ProceduralRig, SameSeedSameRig) {
  EXPECT_TRUE(procedural_rig(RigSpec{}, 1) == rig());
  EXPECT_FALSE(procedural_rig(RigSpec{}, 2) == rig());
}

TEST(ProceduralRig, PartSetsAreDisjointEyeballs) {
  const HeadRig& r = rig();
  std::set<int> left(r.eyeball_left.begin(), r.eyeball_left.end());
  for (int v : r.eyeball_right) EXPECT_EQ(left.count(v), 0u);
  EXPECT_FALSE(r.eye_region.empty());
  EXPECT_FALSE(r.lip_region.empty());
  EXPECT_FALSE(r.inner_mouth_faces.empty());
}

TEST(EvaluateMesh, ZeroPoseEqualsShapedVertices) {
  const HeadRig& r = rig();
  ShapeCode a = ShapeCode::zero(r.shape_dim());
  ExpressionCode b = ExpressionCode::zero(r.expression_dim());
  a.values[0] = 1.5;
  b.values[3] = -0.7;
  const Mesh m = evaluate_mesh(r, a, b, PoseCode{});
  const std::vector<Vec3> s = shaped_vertices(r, a, b);
  ASSERT_EQ(m.vertices.size(), s.size());
  for (std::size_t i = 0; i < s.size(); ++i) EXPECT_LT((m.vertices[i] - s[i]).norm(), 1e-14);
}

TEST(EvaluateMesh, BlendshapesAreLinear) {
  const HeadRig& r = rig();
  ShapeCode a1 = ShapeCode::zero(r.shape_dim()), a2 = a1, sum = a1;
  a1.values[2] = 0.8;
  a2.values[7] = -1.1;
  sum.values = a1.values + a2.values;
  const ExpressionCode b = ExpressionCode::zero(r.expression_dim());
  const auto v0 = shaped_vertices(r, ShapeCode::zero(r.shape_dim()), b);
  const auto v1 = shaped_vertices(r, a1, b), v2 = shaped_vertices(r, a2, b), v12 = shaped_vertices(r, sum, b);
  for (std::size_t i = 0; i < v0.size(); ++i) EXPECT_LT((v12[i] - v1[i] - v2[i] + v0[i]).norm(), 1e-13);
}

TEST(EvaluateMesh, EyeRotationMovesOnlyEyeballs) {
  const HeadRig& r = rig();
  PoseCode pose;
  pose.eye = Vec3(0.2, -0.1, 0.0);
  const Mesh rest = rest_mesh(), moved = rest_mesh(pose);
  std::set<int> eyes(r.eyeball_left.begin(), r.eyeball_left.end());
  eyes.insert(r.eyeball_right.begin(), r.eyeball_right.end());
  int moved_eye = 0;
  for (int v = 0; v < r.vertex_count(); ++v) {
    const double d = (moved.vertices[v] - rest.vertices[v]).norm();
    if (eyes.count(v)) {
      moved_eye += d > 1e-6;
    } else {
      EXPECT_LT(d, 1e-14) << "vertex " << v;
    }
  }
  EXPECT_GT(moved_eye, 0);
}

TEST(EvaluateMesh, EyeballRotatesRigidlyAboutItsPivot) {
  const HeadRig& r = rig();
  PoseCode pose;
  pose.eye = Vec3(0.15, 0.25, 0.0);
  const Mesh rest = rest_mesh(), moved = rest_mesh(pose);
  const Mat3 rot = rotation_from_axis_angle(pose.eye);
  const Vec3 c = r.joints[static_cast<int>(Joint::eye_left)];
  for (int v : r.eyeball_left) EXPECT_LT((moved.vertices[v] - (rot * (rest.vertices[v] - c) + c)).norm(), 1e-12);
}

TEST(EvaluateMesh, RigidNeckRotatesEveryVertex) {
  RigSpec spec;
  spec.rigid_neck = true;
  const HeadRig r = procedural_rig(spec, 1);
  PoseCode pose;
  pose.neck = Vec3(0.1, -0.3, 0.05);
  const ShapeCode a = ShapeCode::zero(r.shape_dim());
  const ExpressionCode b = ExpressionCode::zero(r.expression_dim());
  const Mesh rest = evaluate_mesh(r, a, b, PoseCode{}), moved = evaluate_mesh(r, a, b, pose);
  const Mat3 rot = rotation_from_axis_angle(pose.neck);
  const Vec3 c = r.joints[static_cast<int>(Joint::neck)];
  for (int v = 0; v < r.vertex_count(); ++v) {
    EXPECT_LT((moved.vertices[v] - (rot * (rest.vertices[v] - c) + c)).norm(), 1e-12);
  }
}

TEST(EvaluateMesh, RejectsWrongCodeDimension) {
  const HeadRig& r = rig();
  EXPECT_THROW(evaluate_mesh(r, ShapeCode::zero(3), ExpressionCode::zero(r.expression_dim()), PoseCode{}),
               ContractViolation);
}

TEST(CanonicalPose, OpensOnlyTheJaw) {
  const PoseCode p = canonical_pose();
  EXPECT_EQ(p.eye, Vec3::Zero());
  EXPECT_EQ(p.neck, Vec3::Zero());
  EXPECT_DOUBLE_EQ(p.jaw.x(), kDefaultJawOpen);
  EXPECT_EQ(without_neck(PoseCode{Vec3(1, 2, 3), Vec3(4, 5, 6), Vec3(7, 8, 9)}).neck, Vec3::Zero());
}

TEST(OneRing, SortedNeighboursWithoutSelf) {
  const std::vector<int> ring = one_ring(rig(), 100);
  ASSERT_FALSE(ring.empty());
  EXPECT_TRUE(std::is_sorted(ring.begin(), ring.end()));
  EXPECT_EQ(std::count(ring.begin(), ring.end(), 100), 0);
  const VertexAdjacency adj(rig().vertex_count(), rig().triangles);
  const auto n = adj.neighbors(100);
  EXPECT_EQ(std::vector<int>(n.begin(), n.end()), ring);
}

TEST(PartSubmesh, TrianglesStayInsideThePart) {
  const Mesh posed = rest_mesh();
  const Mesh eye = part_submesh(rig(), posed, Part::eyeball_left);
  EXPECT_EQ(eye.vertices.size(), rig().eyeball_left.size());
  for (const Triangle& t : eye.triangles) {
    for (int v : t) EXPECT_LT(v, static_cast<int>(eye.vertices.size()));
  }
  EXPECT_EQ(part_from_name(part_name(Part::lip_region)), Part::lip_region);
  EXPECT_THROW(part_from_name("nose"), ContractViolation);
}

TEST(RigJson, RoundTripIsExact) {
  const std::string text = rig_to_json_string(rig());
  const HeadRig back = rig_from_json_string(text);
  EXPECT_TRUE(back == rig());
  EXPECT_EQ(rig_to_json_string(back), text);
}

TEST(RigJson, MalformedDocumentsAreRejected) {
  EXPECT_THROW(rig_from_json_string("{not json"), ParseError);
  EXPECT_THROW(rig_from_json_string("{\"format_version\": 99}"), ParseError);
}

TEST(RigJson, InvariantViolationsAreReported) {
  HeadRig broken = rig();
  broken.skin_weights(5, 0) += 0.5;
  EXPECT_THROW(broken.validate(), ValidationError);
  EXPECT_THROW(rig_from_json_string(rig_to_json_string(broken)), ValidationError);
  HeadRig bad_index = rig();
  bad_index.triangles[0][1] = 1'000'000;
  EXPECT_THROW(bad_index.validate(), ValidationError);
}

TEST(VertexNormals, PointOutwardOnTheHead) {
  const Mesh m = rest_mesh();
  const auto n = vertex_normals(m);
  const Vec3 c = head_layout().head_center;
  int outward = 0, total = 0;
  for (int v : rig().full_head) {
    outward += n[v].dot(m.vertices[v] - c) > 0.0;
    ++total;
  }
  EXPECT_GT(outward, total * 9 / 10);
}
