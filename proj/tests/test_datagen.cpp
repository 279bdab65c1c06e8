#include <gtest/gtest.h>

#include <set>

#include "headsynth/datagen.hpp"
#include "test_helpers.hpp"

using namespace headsynth;

namespace {

DatasetConfig small_config() {
  DatasetConfig c;
  c.identities = 2;
  c.motions = 2;
  c.views = 1;
  c.resolution = 16;
  c.coarse_samples = 12;
  c.fine_samples = 12;
  c.points = 64;
  c.triplane_resolution = 32;
  c.grid_resolution = 8;
  c.seed = 21;
  return c;
}

}  // namespace

TEST(Samplers, StayInsideTheirBoxes) {
  Rng rng(1);
  for (int k = 0; k < 2000; ++k) {
    const CameraParams c = sample_camera(rng);
    EXPECT_TRUE(kCameraBox.pitch.contains(c.pitch) && kCameraBox.yaw.contains(c.yaw) &&
                kCameraBox.roll.contains(c.roll) && kCameraBox.radius.contains(c.radius));
    EXPECT_TRUE(kCameraBox.look_z.contains(c.look_at.z()));
    EXPECT_EQ(c.fov_deg, 12.0);
    const Vec3 n = sample_neck_pose(rng);
    EXPECT_TRUE(kNeckBox.pitch.contains(n.x()) && kNeckBox.yaw.contains(n.y()) && kNeckBox.roll.contains(n.z()));
  }
}

TEST(Rebalance, FactorsDoubleEveryFifteenDegrees) {
  EXPECT_EQ(rebalance_factor(0.0), 1);
  EXPECT_EQ(rebalance_factor(14.9), 1);
  EXPECT_EQ(rebalance_factor(15.0), 2);
  EXPECT_EQ(rebalance_factor(-31.0), 4);
  EXPECT_EQ(rebalance_factor(45.0), 8);
  EXPECT_EQ(rebalance_factor(60.0), 16);
  EXPECT_EQ(rebalance_factor(-89.0), 16);
}

TEST(Background, DeterministicAndRgbInRange) {
  const Image a = make_background(7, 12, 10), b = make_background(7, 12, 10), c = make_background(8, 12, 10);
  EXPECT_EQ(a, b);
  EXPECT_NE(a, c);
  EXPECT_EQ(a.channels(), 32);
  for (std::size_t p = 0; p < a.pixel_count(); ++p) {
    for (int ch = 0; ch < 3; ++ch) {
      EXPECT_GE(a.pixel(p)[ch], 0.0f);
      EXPECT_LE(a.pixel(p)[ch], 1.0f);
    }
  }
}

TEST(ExpressionPool, SegmentsStayInsideOneClip) {
  const ExpressionPool pool = make_expression_pool(20, 5, 8, 1.0, 3);
  EXPECT_EQ(pool.clips(), 5);
  Rng rng(4);
  for (int k = 0; k < 200; ++k) {
    const std::vector<int> seg = draw_clip_segment(pool, 5, rng);
    ASSERT_EQ(seg.size(), 5u);
    for (std::size_t i = 1; i < seg.size(); ++i) EXPECT_EQ(seg[i], seg[i - 1] + 1);
    EXPECT_EQ(seg.front() / 8, seg.back() / 8);
  }
}

TEST(Points, FileRoundTripIsExact) {
  test::TempDir dir("points");
  PointFeatures p;
  Rng rng(5);
  p.features = Eigen::MatrixXd(3, 4);
  for (int i = 0; i < 3; ++i) p.points.emplace_back(rng.normal(), rng.normal(), rng.normal());
  for (Eigen::Index i = 0; i < p.features.size(); ++i) p.features.data()[i] = rng.normal();
  save_points(p, dir / "p.pts");
  const PointFeatures back = load_points(dir / "p.pts");
  EXPECT_EQ(back.points, p.points);
  EXPECT_EQ(back.features, p.features);
  const std::string bytes = test::read_bytes(dir / "p.pts");
  EXPECT_EQ(bytes.size(), 12u + 3u * 7u * 8u);
  test::write_bytes(dir / "short.pts", bytes.substr(0, bytes.size() - 8));
  EXPECT_THROW(load_points(dir / "short.pts"), ParseError);
}

TEST(Points, ChosenWithoutReplacement) {
  CoarseRecord rec;
  for (int i = 0; i < 50; ++i) {
    rec.observed.emplace_back(i * 0.01, 0, 0);
    rec.head_canonical.emplace_back(i * 0.01, 0, 0);
  }
  const TriPlane planes(4, 32);
  Rng rng(6);
  const PointFeatures p = record_point_features(rec, planes, 30, rng);
  std::set<double> xs;
  for (const Vec3& x : p.points) xs.insert(x.x());
  EXPECT_EQ(xs.size(), 30u);
  EXPECT_EQ(p.features.rows(), 30);
  EXPECT_EQ(p.features.cols(), 32);
}

TEST(Config, ValidationRejectsNonsense) {
  DatasetConfig c = small_config();
  c.views = 0;
  EXPECT_THROW(c.validate(), ContractViolation);
  DatasetConfig s = small_config();
  s.kind = DatasetKind::static_set;
  EXPECT_DOUBLE_EQ(effective_shape_scale(s), kStaticShapeFactor);
}

TEST(Dataset, GeneratesValidatesAndRoundTripsTheManifest) {
  test::TempDir dir("dataset");
  const DatasetManifest m = make_dynamic_set(small_config(), dir.path());
  EXPECT_EQ(m.records.size(), 4u);
  const ValidationReport report = validate_dataset(dir.path());
  EXPECT_TRUE(report.ok()) << (report.failures.empty() ? "" : report.failures.front());
  EXPECT_LE(point_feature_error(dir.path()), 1e-6);

  const DatasetManifest loaded = load_manifest(dir.path());
  EXPECT_EQ(manifest_to_json(loaded), manifest_to_json(m));
  EXPECT_EQ(loaded.records[1].files, m.records[1].files);

  // Damage one map and one point file; validation must notice both.
  write_pfm(Image(8, 8, 1), dir.path() / m.records[0].files.at("opacity"));
  std::filesystem::remove(dir.path() / m.records[1].files.at("points"));
  const ValidationReport broken = validate_dataset(dir.path());
  EXPECT_GE(broken.failures.size(), 2u);
}

TEST(Dataset, StaticSetHasOneMotion) {
  test::TempDir dir("static");
  DatasetConfig c = small_config();
  c.identities = 1;
  c.motions = 4;
  c.views = 2;
  const DatasetManifest m = make_static_set(c, dir.path());
  EXPECT_EQ(m.records.size(), 2u);
  for (const RecordEntry& r : m.records) EXPECT_EQ(r.motion, 0);
  EXPECT_TRUE(validate_dataset(dir.path()).ok());
}

TEST(Manifest, MalformedJsonIsAParseError) {
  EXPECT_THROW(manifest_from_json("{", "x"), ParseError);
  EXPECT_THROW(manifest_from_json("{\"format_version\": 1}", "x"), ParseError);
}
