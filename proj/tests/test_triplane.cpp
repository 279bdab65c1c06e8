#include <gtest/gtest.h>

#include <sstream>

#include "headsynth/rng.hpp"
#include "headsynth/triplane.hpp"
#include "test_helpers.hpp"

using namespace headsynth;

namespace {

TriPlane random_planes(int r, int c, std::uint64_t seed) {
  TriPlane p(r, c);
  Rng rng(seed);
  for (float& v : p.data()) v = static_cast<float>(rng.uniform(-1, 1));
  return p;
}

}  // namespace

TEST(TriPlane, SampleAtTexelCentresAveragesTheThreeTexels) {
  const int r = 8;
  const TriPlane p = random_planes(r, 4, 1);
  const int ix = 2, iy = 5, iz = 7;
  const Vec3 x(TriPlane::texel_center(ix, r), TriPlane::texel_center(iy, r), TriPlane::texel_center(iz, r));
  const Eigen::VectorXd f = sample(p, x);
  for (int c = 0; c < 4; ++c) {
    const double expect = (double(p.at(PlaneId::xy, iy, ix, c)) + p.at(PlaneId::xz, iz, ix, c) + p.at(PlaneId::yz, iz, iy, c)) / 3.0;
    EXPECT_NEAR(f[c], expect, 1e-12);
  }
}

TEST(TriPlane, SamplingClampsToTheCube) {
  const TriPlane p = random_planes(6, 3, 2);
  EXPECT_EQ(sample(p, Vec3(3.0, -0.2, 0.4)), sample(p, Vec3(1.0, -0.2, 0.4)));
  EXPECT_EQ(sample(p, Vec3(0.1, -9.0, 0.4)), sample(p, Vec3(0.1, -1.0, 0.4)));
}

TEST(TriPlane, BilinearBetweenTexels) {
  TriPlane p(4, 1);
  // Linear ramp in x on every plane that sees x; constant elsewhere.
  for (int row = 0; row < 4; ++row) {
    for (int col = 0; col < 4; ++col) {
      p.at(PlaneId::xy, row, col, 0) = static_cast<float>(col);
      p.at(PlaneId::xz, row, col, 0) = static_cast<float>(col);
    }
  }
  const double x = 0.5 * (TriPlane::texel_center(1, 4) + TriPlane::texel_center(2, 4));
  EXPECT_NEAR(sample(p, Vec3(x, 0.0, 0.0))[0], (1.5 + 1.5 + 0.0) / 3.0, 1e-12);
}

TEST(TriPlaneFile, RoundTripIsBitExact) {
  const TriPlane p = random_planes(5, 7, 3);
  std::stringstream ss;
  write_triplane(p, ss);
  const TriPlane back = read_triplane(ss, "memory");
  EXPECT_TRUE(back == p);
}

TEST(TriPlaneFile, HeaderLayout) {
  std::stringstream ss;
  write_triplane(TriPlane(2, 3), ss);
  const std::string bytes = ss.str();
  EXPECT_EQ(bytes.substr(0, 4), "TPL1");
  EXPECT_EQ(bytes.size(), 4u + 4u + 4u + 3u * 2 * 2 * 3 * 4);
}

TEST(TriPlaneFile, TruncationAndBadMagicAreParseErrors) {
  std::stringstream ss;
  write_triplane(random_planes(3, 2, 4), ss);
  std::string bytes = ss.str();
  std::stringstream shortened(bytes.substr(0, bytes.size() - 1));
  EXPECT_THROW(read_triplane(shortened, "short"), ParseError);
  bytes[1] = 'Q';
  std::stringstream bad(bytes);
  EXPECT_THROW(read_triplane(bad, "bad"), ParseError);
}

TEST(Decoder, ZeroWeightsGiveSoftplusAndSigmoidOfZero) {
  const DecoderParams p = DecoderParams::zeros(32);
  const std::vector<double> f(32, 0.3);
  const Radiance r = decode(p, f);
  EXPECT_NEAR(r.sigma, std::log(2.0), 1e-15);
  for (int c = 0; c < 3; ++c) EXPECT_DOUBLE_EQ(r.color[c], 0.5);
  for (int c = 3; c < 32; ++c) EXPECT_DOUBLE_EQ(r.color[c], 0.0);
}

TEST(Decoder, RejectsWrongFeatureWidth) {
  const DecoderParams p = DecoderParams::zeros(32);
  const std::vector<double> f(31, 0.0);
  EXPECT_THROW(decode(p, f), ContractViolation);
}

TEST(AnalyticSpec, KnownAndUnknownKinds) {
  for (std::string_view k : kAnalyticKinds) EXPECT_EQ(make_analytic_spec(k, 1).kind, k);
  EXPECT_THROW(make_analytic_spec("teapot", 1), ContractViolation);
}

TEST(AnalyticBake, ZeroSpecBakesZeroPlanes) {
  const BakedField b = bake_analytic(make_analytic_spec("zero", 1), 8, 32);
  for (float v : b.planes.data()) EXPECT_EQ(v, 0.0f);
}

TEST(AnalyticBake, SeparableSpecIsExactAtTexelCentres) {
  const AnalyticSpec spec = make_analytic_spec("separable-waves", 3);
  const int r = 32;
  const BakedField b = bake_analytic(spec, r, 32);
  Rng rng(4);
  for (int k = 0; k < 100; ++k) {
    const Vec3 x(TriPlane::texel_center(int(rng.index(r)), r), TriPlane::texel_center(int(rng.index(r)), r),
                 TriPlane::texel_center(int(rng.index(r)), r));
    const Eigen::VectorXd f = sample(b.planes, x);
    std::vector<double> exact(32);
    analytic_features(spec, false, x, exact);
    for (int c = 0; c < 32; ++c) EXPECT_NEAR(f[c], exact[c], 1e-6);
  }
}

TEST(AnalyticBake, EllipsoidHeadIsDenseInsideAndEmptyFarAway) {
  const AnalyticSpec spec = make_analytic_spec("ellipsoid-head", 5);
  const BakedField b = bake_analytic(spec, 64, 32);
  const Radiance inside = analytic_radiance(spec, b.decoder, false, head_layout().head_center);
  const Radiance outside = analytic_radiance(spec, b.decoder, false, Vec3(0.0, 0.0, 0.9));
  EXPECT_GT(inside.sigma, 100.0);
  EXPECT_LT(outside.sigma, 1e-6);
}

TEST(AnalyticField, NegligibleDensityMatchesDecodedSigma) {
  const AnalyticSpec spec = make_analytic_spec("ellipsoid-head", 6);
  const BakedField b = bake_analytic(spec, 16, 32);
  const AnalyticField field(spec, false, 32);
  Rng rng(6);
  std::vector<double> f(32);
  for (int k = 0; k < 400; ++k) {
    const Vec3 x(rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5));
    if (!field.density_negligible_at(x)) continue;
    field.features(x, f);
    EXPECT_LT(decode(b.decoder, f).sigma, 1e-12);
  }
}

TEST(HeadAppearance, HeadAndPartPlanesShareOneDecoder) {
  const HeadAppearance a = bake_head_appearance(3, 16, 32);
  EXPECT_EQ(a.head.resolution(), 16);
  EXPECT_EQ(a.part.resolution(), 16);
  EXPECT_FALSE(a.head == a.part);
  const HeadAppearance again = bake_head_appearance(3, 16, 32);
  EXPECT_TRUE(again.head == a.head);
  EXPECT_TRUE(again.decoder == a.decoder);
}
