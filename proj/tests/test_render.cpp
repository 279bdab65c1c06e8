#include <gtest/gtest.h>

#include <cstring>

#include "headsynth/render.hpp"
#include "headsynth/rng.hpp"
#include "test_helpers.hpp"

using namespace headsynth;

namespace {

bool bitwise_equal(const Image& a, const Image& b) {
  return a.same_shape(b) && std::memcmp(a.data().data(), b.data().data(), a.data().size_bytes()) == 0;
}

}  // namespace

TEST(Camera, ProjectInvertsPixelRays) {
  const Camera cam = camera_from_angles(0.3, -0.5, 0.1, 4.2, Vec3(0.01, 0.0, 0.03), 12.0, 40, 30);
  for (double px : {0.5, 13.25, 39.5}) {
    for (double py : {0.5, 17.0}) {
      const Ray r = cam.ray(px, py);
      EXPECT_NEAR(r.direction.norm(), 1.0, 1e-14);
      const Vec3 p = cam.project(r.origin + 3.7 * r.direction);
      EXPECT_NEAR(p.x(), px, 1e-9);
      EXPECT_NEAR(p.y(), py, 1e-9);
      EXPECT_GT(p.z(), 0.0);
    }
  }
}

TEST(Camera, LooksAtTheTargetFromTheRadius) {
  const Camera cam = camera_from_angles(0.2, 0.7, 0.0, 4.0, Vec3(0, 0, 0.03));
  EXPECT_NEAR((cam.position - Vec3(0, 0, 0.03)).norm(), 4.0, 1e-12);
  const Vec3 centre = cam.project(Vec3(0, 0, 0.03));
  EXPECT_NEAR(centre.x(), 32.0, 1e-9);
  EXPECT_NEAR(centre.y(), 32.0, 1e-9);
  EXPECT_GT(camera_from_angles(0.3, 0, 0, 4, Vec3::Zero()).position.y(), 0.0);  // positive pitch raises
}

TEST(Samples, TerminalDeltaIsMedianOfPrecedingDeltas) {
  const RaySamples s = make_ray_samples({1.0, 1.1, 1.4, 1.5, 2.0});
  ASSERT_EQ(s.delta.size(), 5u);
  EXPECT_NEAR(s.delta[0], 0.1, 1e-15);
  EXPECT_NEAR(s.delta[4], 0.2, 1e-15);  // median of {0.1, 0.3, 0.1, 0.5}
}

TEST(Samples, StratifiedHasOneSamplePerBin) {
  Rng rng(1);
  const RaySamples s = stratified_samples(2.0, 4.0, 10, rng);
  for (int i = 0; i < 10; ++i) {
    EXPECT_GE(s.t[i], 2.0 + 0.2 * i);
    EXPECT_LT(s.t[i], 2.0 + 0.2 * (i + 1));
  }
}

TEST(Samples, HierarchicalConcentratesOnHeavyBins) {
  Rng rng(2);
  const RaySamples coarse = stratified_samples(0.0, 1.0, 10, rng);
  std::vector<double> w(10, 0.0);
  w[6] = 1.0;
  const std::vector<double> fine = hierarchical_resample(coarse, w, 0.0, 1.0, 50, rng);
  const double lo = 0.5 * (coarse.t[5] + coarse.t[6]), hi = 0.5 * (coarse.t[6] + coarse.t[7]);
  EXPECT_TRUE(std::is_sorted(fine.begin(), fine.end()));
  for (double t : fine) {
    EXPECT_GE(t, lo);
    EXPECT_LE(t, hi);
  }
  const std::vector<double> zeros(10, 0.0);
  const std::vector<double> uniform = hierarchical_resample(coarse, zeros, 0.0, 1.0, 50, rng);
  EXPECT_LT(uniform.front(), 0.2);
  EXPECT_GT(uniform.back(), 0.8);
}

TEST(Samples, MergeKeepsStrictOrder) {
  const RaySamples m = merge_samples({1.0, 2.0, 3.0}, {2.0, 2.5});
  ASSERT_EQ(m.size(), 5u);
  for (std::size_t i = 1; i < m.size(); ++i) EXPECT_GT(m.t[i], m.t[i - 1]);
}

TEST(Integrate, ConstantMediumMatchesClosedForm) {
  for (int n : {2, 48, 256}) {
    std::vector<double> depths(n);
    for (int i = 0; i < n; ++i) depths[i] = 1.0 + i * (2.0 / n);
    const RaySamples s = make_ray_samples(depths);
    Radiance r;
    r.sigma = 1.3;
    r.color.fill(0.25);
    const PixelValue px = integrate(s, std::vector<Radiance>(n, r));
    EXPECT_NEAR(px.opacity, 1.0 - std::exp(-2.6), 1e-13);
    EXPECT_NEAR(px.feature[5], 0.25 * (1.0 - std::exp(-2.6)), 1e-13);
  }
}

TEST(Integrate, WeightsAreTransmittanceTimesAlpha) {
  const RaySamples s = make_ray_samples({0.0, 0.5, 1.0});
  const std::vector<double> sigma{1.0, 2.0, 0.5};
  const auto w = compositing_weights(s, sigma);
  EXPECT_NEAR(w[0], 1 - std::exp(-0.5), 1e-15);
  EXPECT_NEAR(w[1], std::exp(-0.5) * (1 - std::exp(-1.0)), 1e-15);
  EXPECT_NEAR(w[2], std::exp(-1.5) * (1 - std::exp(-0.25)), 1e-15);
}

TEST(Rasterize, DepthTestKeepsTheNearerTriangle) {
  const Camera cam = camera_from_angles(0, 0, 0, 4.0, Vec3::Zero(), 12.0, 32, 32);
  Mesh m;
  m.vertices = {Vec3(-0.3, -0.3, 0.0), Vec3(0.3, -0.3, 0.0), Vec3(0.0, 0.3, 0.0),
                Vec3(-0.3, -0.3, 0.2), Vec3(0.3, -0.3, 0.2), Vec3(0.0, 0.3, 0.2)};
  m.triangles = {Triangle{0, 1, 2}, Triangle{3, 4, 5}};
  const std::vector<int> faces{0, 1};
  const MaskMap mm = rasterize(m, faces, cam, {});
  EXPECT_EQ(mm.face[16 * 32 + 16], 1);  // z = 0.2 is nearer to a camera on +z
  EXPECT_EQ(mm.face[0], -1);
  EXPECT_EQ(mm.mask.at(16, 16), 1.0f);
  EXPECT_EQ(mm.mask.at(0, 0), 0.0f);
}

TEST(Rasterize, PartMaskCoversTheEyes) {
  const Mesh m = test::rest_mesh();
  const Camera cam = camera_from_angles(0, 0, 0, 4.0, Vec3(0, 0, 0.03));
  const std::vector<int> faces = part_mask_faces(test::rig());
  const MaskMap mm = rasterize(m, faces, cam, {});
  const Vec3 eye = cam.project(head_layout().eye_left_center + Vec3(0, 0, head_layout().eye_radius));
  EXPECT_EQ(mm.mask.at(static_cast<int>(eye.x()), static_cast<int>(eye.y())), 1.0f);
  const auto colors = correspondence_colors(test::rig());
  for (const Vec3& c : colors) {
    EXPECT_GE(c.minCoeff(), 0.0);
    EXPECT_LE(c.maxCoeff(), 1.0);
  }
}

TEST(BlendFuse, BinaryMasksSelectBitwise) {
  Rng rng(3);
  RenderOut h(6, 4), p(6, 4);
  for (auto* img : {&h.feature, &h.opacity, &h.depth, &p.feature, &p.opacity, &p.depth}) {
    for (float& v : img->data()) v = static_cast<float>(rng.uniform());
  }
  EXPECT_EQ(blend(h, p, Image(6, 4, 1, 0.0f)), h);
  EXPECT_EQ(blend(h, p, Image(6, 4, 1, 1.0f)), p);
  Image bg(6, 4, 32, 0.7f);
  std::fill(h.opacity.data().begin(), h.opacity.data().end(), 1.0f);
  EXPECT_TRUE(bitwise_equal(fuse(h, bg), h.feature));
  std::fill(h.opacity.data().begin(), h.opacity.data().end(), 0.0f);
  EXPECT_TRUE(bitwise_equal(fuse(h, bg), bg));
  EXPECT_THROW(fuse(h, Image(5, 4, 32)), ContractViolation);
}

TEST(RenderSingle, EmptyFieldIsTransparentAndSchedulesAgree) {
  const BakedField zero = bake_analytic(make_analytic_spec("zero", 1), 8, 32);
  DecoderParams d = DecoderParams::zeros(32);
  d.b3[0] = -50.0;  // sigma ~ 2e-22
  const Camera cam = camera_from_angles(0, 0, 0, 4.0, Vec3::Zero(), 12.0, 12, 12);
  RenderSettings settings;
  settings.policy = ExecPolicy::serial;
  const RenderOut a = render_single(zero.planes, d, IdentityWarp{}, cam, BoundingSphere{Vec3::Zero(), 0.4}, settings);
  for (float v : a.opacity.data()) EXPECT_LT(v, 1e-15f);
  settings.policy = ExecPolicy::parallel;
  const RenderOut b = render_single(zero.planes, d, IdentityWarp{}, cam, BoundingSphere{Vec3::Zero(), 0.4}, settings);
  EXPECT_EQ(a, b);
}

TEST(RenderFull, ProducesConsistentMaps) {
  const HeadAppearance app = bake_head_appearance(2, 32, 32);
  FullRenderInputs in;
  in.head_planes = &app.head;
  in.part_planes = &app.part;
  in.decoder = &app.decoder;
  in.rig = &test::rig();
  in.shape = ShapeCode::zero(test::rig().shape_dim());
  in.expression = ExpressionCode::zero(test::rig().expression_dim());
  in.deformation.grid = GridResolution::cube(8);
  const Camera cam = camera_from_angles(0.1, 0.2, 0, 4.0, Vec3(0, 0, 0.03), 12.0, 16, 16);
  const Image bg(16, 16, 32, 0.25f);
  RenderSettings settings;
  settings.coarse_samples = 16;
  settings.fine_samples = 16;
  const FullRender full = render_full(in, cam, bg, settings);
  EXPECT_EQ(full.lr.channels(), 32);
  EXPECT_GT(full.foreground.opacity.at(8, 8), 0.9f);
  EXPECT_LT(full.foreground.opacity.at(0, 0), 0.1f);
  for (float v : full.mask.mask.data()) EXPECT_TRUE(v == 0.0f || v == 1.0f);
}
