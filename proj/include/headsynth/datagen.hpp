#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "headsynth/headmodel.hpp"
#include "headsynth/image.hpp"
#include "headsynth/parallel.hpp"
#include "headsynth/render.hpp"
#include "headsynth/rng.hpp"
#include "headsynth/triplane.hpp"

namespace headsynth {

// Closed interval.
struct Interval {
  double lo = 0.0;
  double hi = 0.0;

  bool contains(double x) const { return x >= lo && x <= hi; }
  bool operator==(const Interval&) const = default;
};

struct CameraBox {
  Interval pitch{-0.25, 0.65};
  Interval yaw{-0.78, 0.78};
  Interval roll{-0.25, 0.25};
  Interval radius{3.65, 4.45};
  Interval look_x{-0.01, 0.01};
  Interval look_y{-0.01, 0.01};
  Interval look_z{0.02, 0.04};
  double fov_deg = 12.0;
};

// Neck rotation box; the axis-angle components are (pitch, yaw, roll) about
// (x, y, z).
struct NeckBox {
  Interval pitch{-0.2, 0.2};
  Interval yaw{-0.5, 0.5};
  Interval roll{-0.1, 0.1};
};

inline constexpr CameraBox kCameraBox{};
inline constexpr NeckBox kNeckBox{};
inline constexpr int kDefaultPointCount = 4000;
inline constexpr int kDefaultClipLength = 16;
inline constexpr double kStaticShapeFactor = 1.5;

CameraParams sample_camera(Rng& rng);
Vec3 sample_neck_pose(Rng& rng);

// Duplication factor for a yaw in degrees: |yaw| < 15 -> 1, [15, 30) -> 2,
// [30, 45) -> 4, [45, 60) -> 8, >= 60 -> 16.
int rebalance_factor(double yaw_deg);

// Eye gaze and jaw opening drawn per motion.
struct MotionBox {
  Interval eye_pitch{-0.2, 0.2};
  Interval eye_yaw{-0.3, 0.3};
  Interval jaw_open{0.0, 0.35};
};

struct IdentitySpec {
  int index = 0;
  std::uint64_t seed = 0;  // drives shape and appearance
  ShapeCode shape;
  std::uint64_t background_seed = 0;
};

std::uint64_t background_seed_for(std::uint64_t identity_seed);

// Smooth gradient plus a few low-frequency waves per channel. Channels 0..2
// stay inside [0, 1] so the fused RGB preview is a valid colour.
Image make_background(std::uint64_t background_seed, int width, int height, int channels = 32);

// Expression codes grouped in contiguous clips of `clip_length`; frames inside
// a clip drift smoothly from a per-clip base code.
struct ExpressionPool {
  int clip_length = kDefaultClipLength;
  std::vector<ExpressionCode> entries;

  int clips() const { return clip_length > 0 ? static_cast<int>(entries.size()) / clip_length : 0; }
};

ExpressionPool make_expression_pool(int expression_dim, int clips, int clip_length, double scale, std::uint64_t seed);

// `count` consecutive pool indices starting inside one randomly drawn clip;
// the segment stays inside that clip whenever count <= clip_length.
std::vector<int> draw_clip_segment(const ExpressionPool& pool, int count, Rng& rng);

struct PointFeatures {
  std::vector<Vec3> points;   // observation-space coarse sample positions
  Eigen::MatrixXd features;   // count x C, head tri-plane at x + dx_head
};

// Uniform choice without replacement among the recorded coarse samples.
PointFeatures record_point_features(const CoarseRecord& coarse, const TriPlane& head_planes, int count, Rng& rng);

// "PTS1": magic, u32 count, u32 channels, then per point 3 coordinates and
// `channels` features as little-endian f64.
void save_points(const PointFeatures& points, const std::filesystem::path& path);
PointFeatures load_points(const std::filesystem::path& path);

enum class DatasetKind { dynamic, static_set };

struct DatasetConfig {
  DatasetKind kind = DatasetKind::dynamic;
  int identities = 2;
  int motions = 3;  // forced to 1 for the static set
  int views = 2;
  std::uint64_t seed = 0;
  int resolution = kDefaultRenderResolution;
  int coarse_samples = kDefaultCoarseSamples;
  int fine_samples = kDefaultFineSamples;
  int points = kDefaultPointCount;
  int triplane_resolution = 256;
  int grid_resolution = 32;
  double shape_scale = 1.0;  // static set multiplies by kStaticShapeFactor
  double expression_scale = 1.0;
  int clip_length = kDefaultClipLength;
  int pool_clips = 8;
  RigSpec rig;
  std::uint64_t rig_seed = 0;
  ExecPolicy policy = ExecPolicy::parallel;

  void validate() const;
};

// The shape code scale actually used for the configured kind.
double effective_shape_scale(const DatasetConfig& config);

IdentitySpec make_identity(const DatasetConfig& config, const HeadRig& rig, int index);

struct RecordEntry {
  std::string id;  // "i<identity>_m<motion>_v<view>"
  int identity = 0;
  int motion = 0;
  int view = 0;
  CameraParams camera;
  PoseCode pose;
  int expression_index = 0;  // into the expression pool
  int rebalance = 1;
  std::map<std::string, std::string> files;  // label -> path relative to the dataset root
};

struct DatasetManifest {
  int format_version = 1;
  DatasetConfig config;
  std::vector<IdentitySpec> identities;
  std::vector<RecordEntry> records;
};

inline constexpr const char* kManifestName = "manifest.json";

// Renders and writes every record plus manifest.json under out_dir.
DatasetManifest make_dataset(const DatasetConfig& config, const std::filesystem::path& out_dir);
DatasetManifest make_dynamic_set(DatasetConfig config, const std::filesystem::path& out_dir);
DatasetManifest make_static_set(DatasetConfig config, const std::filesystem::path& out_dir);

std::string manifest_to_json(const DatasetManifest& manifest);
DatasetManifest manifest_from_json(const std::string& text, const std::string& source);
DatasetManifest load_manifest(const std::filesystem::path& dataset_dir);

struct ValidationReport {
  int checks = 0;
  std::vector<std::string> failures;

  bool ok() const { return failures.empty(); }
};

// File existence, format versions, map resolutions and channel counts, point
// counts, and per-identity background constancy. Problems are reported, not
// thrown.
ValidationReport validate_dataset(const std::filesystem::path& dataset_dir);

// Largest |recorded - recomputed| over the point features of the first
// `max_records` records (all when negative), recomputing sample(T_h, x + dx_head).
double point_feature_error(const std::filesystem::path& dataset_dir, int max_records = -1);

}  // namespace headsynth
