#pragma once

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <iosfwd>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "headsynth/common.hpp"

namespace headsynth {

enum class PlaneId : int { xy = 0, xz = 1, yz = 2 };

// Three R x R x C feature planes over the cube [-1, 1]^3. Plane XY is indexed
// (row = y, col = x), XZ (row = z, col = x), YZ (row = z, col = y). Texel i
// is centred at -1 + (2i + 1) / R.
class TriPlane {
 public:
  TriPlane() = default;
  TriPlane(int resolution, int channels);

  int resolution() const { return resolution_; }
  int channels() const { return channels_; }

  float& at(PlaneId plane, int row, int col, int channel) { return data_[offset(plane, row, col) + channel]; }
  float at(PlaneId plane, int row, int col, int channel) const { return data_[offset(plane, row, col) + channel]; }
  std::span<float> texel(PlaneId plane, int row, int col) {
    return {data_.data() + offset(plane, row, col), static_cast<std::size_t>(channels_)};
  }

  // Plane-major, row-major, channel-last.
  std::span<const float> data() const { return data_; }
  std::span<float> data() { return data_; }

  static double texel_center(int index, int resolution) { return -1.0 + (2.0 * index + 1.0) / resolution; }

  bool operator==(const TriPlane& other) const = default;

 private:
  std::size_t offset(PlaneId plane, int row, int col) const {
    return ((static_cast<std::size_t>(plane) * resolution_ + row) * resolution_ + col) * channels_;
  }

  int resolution_ = 0;
  int channels_ = 0;
  std::vector<float> data_;
};

// Mean of the three bilinear plane samples; coordinates clamp to the cube.
void sample_into(const TriPlane& planes, const Vec3& x, std::span<double> out);
Eigen::VectorXd sample(const TriPlane& planes, const Vec3& x);

enum class HiddenActivation { softplus, identity };

// Two hidden layers of width 64, output [sigma_raw, color_0 .. color_31].
struct DecoderParams {
  static constexpr int kHidden = 64;
  static constexpr int kColorChannels = 32;
  static constexpr int kOutputs = 1 + kColorChannels;

  int input_dim = 32;
  HiddenActivation activation = HiddenActivation::softplus;
  Eigen::MatrixXd w1, w2, w3;  // (64 x C), (64 x 64), (33 x 64)
  Eigen::VectorXd b1, b2, b3;

  static DecoderParams zeros(int input_dim, HiddenActivation activation = HiddenActivation::softplus);
  bool operator==(const DecoderParams& other) const;
};

struct Radiance {
  double sigma = 0.0;
  std::array<double, DecoderParams::kColorChannels> color{};  // 0..2 are RGB in [0,1]
};

// sigma = softplus(raw), RGB = sigmoid, the remaining color channels raw.
Radiance decode(const DecoderParams& params, std::span<const double> feature);

// Per-thread scratch so decoding inside render loops does not allocate.
struct DecodeScratch {
  Eigen::VectorXd h1 = Eigen::VectorXd(DecoderParams::kHidden);
  Eigen::VectorXd h2 = Eigen::VectorXd(DecoderParams::kHidden);
  Eigen::VectorXd out = Eigen::VectorXd(DecoderParams::kOutputs);
};
Radiance decode(const DecoderParams& params, std::span<const double> feature, DecodeScratch& scratch);

// Oriented soft ellipsoid {x : (x - c)^T A (x - c) <= 1}, optionally kept
// only on the side n.x >= d of a plane.
struct AnalyticBlob {
  std::string name;
  Vec3 center = Vec3::Zero();
  Mat3 shape = Mat3::Identity();
  double density_weight = 1.0;          // 0 for colour-only blobs
  bool in_head = true;                  // present in the head planes
  bool in_part = true;                  // present in the part planes
  bool clipped = false;
  Vec3 clip_normal = Vec3::UnitY();
  double clip_offset = 0.0;
  std::array<double, 3> rgb_logit{};    // colour contribution once inside
};

// Analytic radiance spec. Kinds: "zero", "separable-waves",
// "ellipsoid-head" and "ellipsoid-parts" (the same geometry; the latter
// bakes the part planes). Field functions are sums of per-plane terms so the
// bake is exact up to bilinear interpolation of the quadratic terms.
struct AnalyticSpec {
  std::string kind;
  std::uint64_t seed = 0;
  std::vector<AnalyticBlob> blobs;
  // Separable kind: per-channel wave parameters (amplitude, frequencies, phases).
  Eigen::MatrixXd waves;
  Eigen::MatrixXd feature_mix;  // 29 x blobs, higher colour channels
};

inline constexpr std::array<std::string_view, 4> kAnalyticKinds{"zero", "separable-waves", "ellipsoid-head",
                                                                 "ellipsoid-parts"};

// Throws ContractViolation for unknown kinds.
AnalyticSpec make_analytic_spec(std::string_view kind, std::uint64_t seed);

// Constants of the ellipsoid decoder construction.
struct EllipsoidDecoderConstants {
  static constexpr double surface_gradient = 1000.0;  // |grad q| at the surface, per model unit
  static constexpr double inner_shift = 10.0;
  static constexpr double color_ramp = 3.0;
  static constexpr double density_gain = 50.0;
  static constexpr double density_bias = 50.0;
  static constexpr double clip_gain = 1000.0;
  static constexpr double clip_suppression = 20.0;
  static constexpr double absent_value = -100.0;
};

// Field c0 + l.x + x^T Q x (Q symmetric) split into per-plane shares:
// XY takes the constant, x, y, xx, yy, xy terms; XZ the z, zz, xz terms;
// YZ the yz term. The three shares sum to eval().
struct PlaneQuadratic {
  double c0 = 0.0;
  Vec3 lin = Vec3::Zero();
  Mat3 quad = Mat3::Zero();

  double eval(const Vec3& x) const { return c0 + lin.dot(x) + x.dot(quad * x); }
  double plane_share(PlaneId plane, double a, double b) const;
};

// Precompiled per-channel plane terms of a spec. features(x) is the exact
// feature vector the baked planes approximate (no texels involved).
class AnalyticField {
 public:
  AnalyticField(const AnalyticSpec& spec, bool part_planes, int channels);

  double plane_share(int channel, PlaneId plane, double a, double b) const;
  void features(const Vec3& x, std::span<double> out) const;
  // True when every density blob is far outside (sigma below 1e-20).
  bool density_negligible(std::span<const double> features) const;
  // Same test evaluating only the density channels at x.
  bool density_negligible_at(const Vec3& x) const;
  int channels() const { return static_cast<int>(terms_.size()); }

 private:
  enum class TermKind { zero, absent, quadratic, wave };
  struct Term {
    TermKind kind = TermKind::zero;
    PlaneQuadratic q;
    Eigen::Matrix<double, 1, 13> wave = Eigen::Matrix<double, 1, 13>::Zero();
  };
  std::vector<Term> terms_;
  std::vector<int> density_channels_;
};

void analytic_features(const AnalyticSpec& spec, bool part_planes, const Vec3& x, std::span<double> out);

struct BakedField {
  TriPlane planes;
  DecoderParams decoder;
};

BakedField bake_analytic(const AnalyticSpec& spec, int resolution = 256, int channels = 32);

// Exact radiance of the spec: decoder applied to analytic_features.
Radiance analytic_radiance(const AnalyticSpec& spec, const DecoderParams& decoder, bool part_planes, const Vec3& x);

// Head and part planes sharing one decoder.
struct HeadAppearance {
  AnalyticSpec spec;
  TriPlane head;
  TriPlane part;
  DecoderParams decoder;
};

HeadAppearance bake_head_appearance(std::uint64_t identity_seed, int resolution = 256, int channels = 32);

void save_triplane(const TriPlane& planes, const std::filesystem::path& path);
TriPlane load_triplane(const std::filesystem::path& path);
void write_triplane(const TriPlane& planes, std::ostream& os);
TriPlane read_triplane(std::istream& is, const std::string& source);

}  // namespace headsynth
