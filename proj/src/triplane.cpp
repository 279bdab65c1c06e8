#include "headsynth/triplane.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>

#include "headsynth/binary_io.hpp"
#include "headsynth/headmodel.hpp"
#include "headsynth/rng.hpp"

namespace headsynth {

TriPlane::TriPlane(int resolution, int channels) : resolution_(resolution), channels_(channels) {
  require(resolution >= 2, "TriPlane: resolution must be >= 2");
  require(channels >= 1, "TriPlane: channels must be >= 1");
  data_.assign(3 * static_cast<std::size_t>(resolution) * resolution * channels, 0.0f);
}

namespace {

struct Lerp1 {
  int i0;
  double f;
};

Lerp1 texel_coord(double u, int resolution) {
  const double s = std::clamp((std::clamp(u, -1.0, 1.0) + 1.0) * 0.5 * resolution - 0.5, 0.0,
                              static_cast<double>(resolution - 1));
  const int i0 = std::min(static_cast<int>(std::floor(s)), resolution - 2);
  return {i0, s - i0};
}

void accumulate_plane(const TriPlane& planes, PlaneId plane, double col_coord, double row_coord,
                      std::span<double> out) {
  const int r = planes.resolution();
  const int c = planes.channels();
  const Lerp1 col = texel_coord(col_coord, r);
  const Lerp1 row = texel_coord(row_coord, r);
  const double w00 = (1.0 - row.f) * (1.0 - col.f), w01 = (1.0 - row.f) * col.f;
  const double w10 = row.f * (1.0 - col.f), w11 = row.f * col.f;
  const std::span<const float> data = planes.data();
  const std::size_t base = static_cast<std::size_t>(plane) * r * r;
  const float* t00 = data.data() + (base + static_cast<std::size_t>(row.i0) * r + col.i0) * c;
  const float* t01 = t00 + c;
  const float* t10 = t00 + static_cast<std::size_t>(r) * c;
  const float* t11 = t10 + c;
  for (int k = 0; k < c; ++k) {
    out[k] += w00 * t00[k] + w01 * t01[k] + w10 * t10[k] + w11 * t11[k];
  }
}

}  // namespace

void sample_into(const TriPlane& planes, const Vec3& x, std::span<double> out) {
  require(static_cast<int>(out.size()) == planes.channels(), "sample: output size does not match channels");
  std::fill(out.begin(), out.end(), 0.0);
  accumulate_plane(planes, PlaneId::xy, x.x(), x.y(), out);
  accumulate_plane(planes, PlaneId::xz, x.x(), x.z(), out);
  accumulate_plane(planes, PlaneId::yz, x.y(), x.z(), out);
  for (auto& v : out) v /= 3.0;
}

Eigen::VectorXd sample(const TriPlane& planes, const Vec3& x) {
  Eigen::VectorXd out(planes.channels());
  sample_into(planes, x, {out.data(), static_cast<std::size_t>(out.size())});
  return out;
}

DecoderParams DecoderParams::zeros(int input_dim, HiddenActivation activation) {
  require(input_dim >= 1, "DecoderParams: input dimension must be positive");
  DecoderParams p;
  p.input_dim = input_dim;
  p.activation = activation;
  p.w1 = Eigen::MatrixXd::Zero(kHidden, input_dim);
  p.w2 = Eigen::MatrixXd::Zero(kHidden, kHidden);
  p.w3 = Eigen::MatrixXd::Zero(kOutputs, kHidden);
  p.b1 = Eigen::VectorXd::Zero(kHidden);
  p.b2 = Eigen::VectorXd::Zero(kHidden);
  p.b3 = Eigen::VectorXd::Zero(kOutputs);
  return p;
}

bool DecoderParams::operator==(const DecoderParams& o) const {
  return input_dim == o.input_dim && activation == o.activation && w1 == o.w1 && w2 == o.w2 && w3 == o.w3 &&
         b1 == o.b1 && b2 == o.b2 && b3 == o.b3;
}

Radiance decode(const DecoderParams& params, std::span<const double> feature, DecodeScratch& s) {
  require(static_cast<int>(feature.size()) == params.input_dim,
          "decode: feature has dimension " + std::to_string(feature.size()) + ", decoder expects " +
              std::to_string(params.input_dim));
  const Eigen::Map<const Eigen::VectorXd> f(feature.data(), static_cast<Eigen::Index>(feature.size()));
  auto activate = [&](Eigen::VectorXd& h) {
    if (params.activation == HiddenActivation::softplus) {
      for (Eigen::Index i = 0; i < h.size(); ++i) h[i] = softplus(h[i]);
    }
  };
  s.h1.noalias() = params.w1 * f;
  s.h1 += params.b1;
  activate(s.h1);
  s.h2.noalias() = params.w2 * s.h1;
  s.h2 += params.b2;
  activate(s.h2);
  s.out.noalias() = params.w3 * s.h2;
  s.out += params.b3;

  Radiance r;
  r.sigma = softplus(s.out[0]);
  for (int j = 0; j < DecoderParams::kColorChannels; ++j) {
    const double raw = s.out[1 + j];
    r.color[j] = j < 3 ? sigmoid(raw) : raw;
  }
  return r;
}

Radiance decode(const DecoderParams& params, std::span<const double> feature) {
  DecodeScratch scratch;
  return decode(params, feature, scratch);
}

namespace {

using K = EllipsoidDecoderConstants;

constexpr int kWaveParams = 13;

// Inside-positive ellipsoid potential with |grad| ~ surface_gradient at the
// surface, shifted so the decoder's inner shift cancels.
PlaneQuadratic blob_potential(const AnalyticBlob& blob) {
  const double mean_radius = std::cbrt(1.0 / std::sqrt(std::max(blob.shape.determinant(), 1e-300)));
  const double s = 0.5 * K::surface_gradient * mean_radius;
  PlaneQuadratic q;
  // s * (1 - (x - c)^T A (x - c)) + shift
  q.quad = -s * blob.shape;
  q.lin = 2.0 * s * (blob.shape * blob.center);
  q.c0 = s * (1.0 - blob.center.dot(blob.shape * blob.center)) + K::inner_shift;
  return q;
}

PlaneQuadratic clip_potential(const AnalyticBlob& blob) {
  PlaneQuadratic q;
  q.lin = K::clip_gain * blob.clip_normal;
  q.c0 = -K::clip_gain * blob.clip_offset;
  return q;
}

bool is_ellipsoid(const AnalyticSpec& spec) { return spec.kind == "ellipsoid-head" || spec.kind == "ellipsoid-parts"; }

struct ChannelLayout {
  std::vector<int> clip_channel;  // per blob, -1 if unclipped
  int used = 0;
};

ChannelLayout ellipsoid_layout(const AnalyticSpec& spec) {
  ChannelLayout layout;
  const int blobs = static_cast<int>(spec.blobs.size());
  layout.clip_channel.assign(spec.blobs.size(), -1);
  int next = blobs;
  for (int b = 0; b < blobs; ++b) {
    if (spec.blobs[b].clipped) layout.clip_channel[b] = next++;
  }
  layout.used = next;
  return layout;
}

double wave_term(const Eigen::Matrix<double, 1, kWaveParams>& w, PlaneId plane, double a, double b) {
  switch (plane) {
    case PlaneId::xy: return w[0] * std::sin(w[1] * a + w[2]) * std::cos(w[3] * b + w[4]) + w[12];
    case PlaneId::xz: return w[0] * std::sin(w[5] * a + w[6]) * std::sin(w[7] * b + w[8]);
    case PlaneId::yz: return w[0] * std::cos(w[9] * a + w[10]) * std::sin(w[11] * b);
  }
  return 0.0;
}

std::array<double, 2> plane_coords(PlaneId plane, const Vec3& x) {
  switch (plane) {
    case PlaneId::xy: return {x.x(), x.y()};
    case PlaneId::xz: return {x.x(), x.z()};
    case PlaneId::yz: return {x.y(), x.z()};
  }
  return {0.0, 0.0};
}

DecoderParams passthrough_decoder(int channels) {
  require(channels <= DecoderParams::kHidden, "bake_analytic: pass-through decoder needs channels <= 64");
  DecoderParams p = DecoderParams::zeros(channels, HiddenActivation::identity);
  for (int c = 0; c < channels; ++c) p.w1(c, c) = 1.0;
  p.w2.setIdentity();
  for (int o = 0; o < std::min(channels, DecoderParams::kOutputs); ++o) p.w3(o, o) = 1.0;
  return p;
}

DecoderParams ellipsoid_decoder(const AnalyticSpec& spec, int channels) {
  const ChannelLayout layout = ellipsoid_layout(spec);
  const int blobs = static_cast<int>(spec.blobs.size());
  require(layout.used <= channels, "bake_analytic: ellipsoid spec needs " + std::to_string(layout.used) +
                                       " channels, planes have " + std::to_string(channels));
  require(2 * blobs <= DecoderParams::kHidden, "bake_analytic: too many blobs for the decoder width");
  DecoderParams p = DecoderParams::zeros(channels, HiddenActivation::softplus);
  // Layer 1: u_b = softplus(f_b); w_b = softplus(-g_b) for clipped blobs.
  for (int b = 0; b < blobs; ++b) {
    p.w1(b, b) = 1.0;
    if (layout.clip_channel[b] >= 0) p.w1(blobs + b, layout.clip_channel[b]) = -1.0;
  }
  // Layer 2: e_b = softplus(u_b - M w_b - shift), e'_b the same shifted by the colour ramp.
  for (int b = 0; b < blobs; ++b) {
    for (int unit : {b, blobs + b}) {
      p.w2(unit, b) = 1.0;
      if (layout.clip_channel[b] >= 0) p.w2(unit, blobs + b) = -K::clip_suppression;
    }
    p.b2(b) = -K::inner_shift;
    p.b2(blobs + b) = -K::inner_shift - K::color_ramp;
  }
  // Output: density from e_b; colours from the saturating (e_b - e'_b) / ramp.
  p.b3(0) = -K::density_bias;
  for (int b = 0; b < blobs; ++b) {
    const AnalyticBlob& blob = spec.blobs[b];
    p.w3(0, b) = K::density_gain * blob.density_weight;
    for (int j = 0; j < DecoderParams::kColorChannels; ++j) {
      const double weight = j < 3 ? blob.rgb_logit[j] : spec.feature_mix(j - 3, b);
      p.w3(1 + j, b) += weight / K::color_ramp;
      p.w3(1 + j, blobs + b) -= weight / K::color_ramp;
    }
  }
  return p;
}

AnalyticBlob axis_blob(std::string name, const Vec3& center, const Vec3& radii, double density,
                       std::array<double, 3> rgb) {
  AnalyticBlob b;
  b.name = std::move(name);
  b.center = center;
  b.shape = radii.cwiseInverse().cwiseAbs2().asDiagonal();
  b.density_weight = density;
  b.rgb_logit = rgb;
  return b;
}

}  // namespace

AnalyticSpec make_analytic_spec(std::string_view kind, std::uint64_t seed) {
  if (std::find(kAnalyticKinds.begin(), kAnalyticKinds.end(), kind) == kAnalyticKinds.end()) {
    throw ContractViolation("bake_analytic: unknown analytic spec '" + std::string(kind) + "'");
  }
  AnalyticSpec spec;
  spec.kind = std::string(kind);
  spec.seed = seed;
  Rng rng(derive_seed(seed, {0x42414B45ull}));

  if (kind == "separable-waves") {
    spec.waves.resize(DecoderParams::kHidden, kWaveParams);
    for (int c = 0; c < spec.waves.rows(); ++c) {
      spec.waves(c, 0) = c == 0 ? 1.5 : rng.uniform(0.2, 1.0);
      for (int k = 1; k < 12; ++k) spec.waves(c, k) = (k % 2 == 1) ? rng.uniform(0.5, 4.0) : rng.uniform(0.0, 6.0);
      spec.waves(c, 11) = rng.uniform(0.5, 4.0);
      spec.waves(c, 12) = c == 0 ? -1.0 : 0.0;
    }
  }
  if (!is_ellipsoid(spec)) return spec;

  const HeadLayout& L = head_layout();
  const std::array<double, 3> skin{1.1 + 0.25 * rng.normal(), 0.25 + 0.25 * rng.normal(),
                                   -0.15 + 0.25 * rng.normal()};
  const std::array<double, 3> neck_skin{skin[0] - 0.2, skin[1] - 0.2, skin[2] - 0.1};

  spec.blobs.push_back(axis_blob("head", L.head_center, L.head_radii, 1.0, skin));
  spec.blobs.push_back(axis_blob("neck", L.neck_center, L.neck_radii, 1.0, neck_skin));

  // Canonical lower face: the head ellipsoid rotated open about the jaw
  // pivot, kept below the jaw line.
  {
    const Mat3 rot = rotation_from_axis_angle(Vec3(kDefaultJawOpen, 0.0, 0.0));
    AnalyticBlob jaw = axis_blob("jaw", L.head_center, L.head_radii, 1.0, skin);
    jaw.center = rot * (L.head_center - L.jaw_pivot) + L.jaw_pivot;
    jaw.shape = rot * jaw.shape * rot.transpose();
    jaw.clipped = true;
    const Vec3 line_point = rot * (Vec3(0.0, L.mouth_center.y() - 0.01, 0.0) - L.jaw_pivot) + L.jaw_pivot;
    jaw.clip_normal = rot * Vec3(0.0, -1.0, 0.0);
    jaw.clip_offset = jaw.clip_normal.dot(line_point);
    spec.blobs.push_back(jaw);
  }

  const std::array<double, 3> sclera{2.2, 2.1, 2.0};
  const Vec3 eye_r = Vec3::Constant(L.eye_radius);
  spec.blobs.push_back(axis_blob("eye_left", L.eye_left_center, eye_r, 1.0, sclera));
  spec.blobs.push_back(axis_blob("eye_right", L.eye_right_center, eye_r, 1.0, sclera));

  const std::array<double, 3> iris{-4.0 + 0.5 * rng.normal(), -4.4 + 0.5 * rng.normal(), -4.6 + 0.5 * rng.normal()};
  const Vec3 iris_radii(0.5 * L.eye_radius, 0.5 * L.eye_radius, 0.35 * L.eye_radius);
  const Vec3 iris_offset(0.0, 0.0, 0.85 * L.eye_radius);
  spec.blobs.push_back(axis_blob("iris_left", L.eye_left_center + iris_offset, iris_radii, 0.0, iris));
  spec.blobs.push_back(axis_blob("iris_right", L.eye_right_center + iris_offset, iris_radii, 0.0, iris));

  AnalyticBlob lips = axis_blob("lips", L.mouth_center, Vec3(0.05, 0.028, 0.035), 0.0, {0.6, -0.7, -0.4});
  spec.blobs.push_back(lips);

  AnalyticBlob mouth = axis_blob("mouth_interior", L.mouth_center - Vec3(0.0, 0.012, 0.0),
                                 Vec3(0.04, 0.022, 0.04), 0.0, {-1.0, -2.6, -2.2});
  mouth.in_head = false;
  spec.blobs.push_back(mouth);

  spec.feature_mix.resize(DecoderParams::kColorChannels - 3, static_cast<Eigen::Index>(spec.blobs.size()));
  for (Eigen::Index i = 0; i < spec.feature_mix.size(); ++i) spec.feature_mix.data()[i] = rng.uniform(-1.0, 1.0);
  return spec;
}

double PlaneQuadratic::plane_share(PlaneId plane, double a, double b) const {
  switch (plane) {
    case PlaneId::xy:
      return c0 + lin.x() * a + lin.y() * b + quad(0, 0) * a * a + quad(1, 1) * b * b + 2.0 * quad(0, 1) * a * b;
    case PlaneId::xz:
      return lin.z() * b + quad(2, 2) * b * b + 2.0 * quad(0, 2) * a * b;
    case PlaneId::yz:
      return 2.0 * quad(1, 2) * a * b;
  }
  return 0.0;
}

AnalyticField::AnalyticField(const AnalyticSpec& spec, bool part_planes, int channels) {
  require(channels >= 1, "AnalyticField: channels must be positive");
  terms_.resize(static_cast<std::size_t>(channels));
  if (spec.kind == "separable-waves") {
    for (int c = 0; c < channels && c < spec.waves.rows(); ++c) {
      terms_[c].kind = TermKind::wave;
      terms_[c].wave = spec.waves.row(c);
    }
    return;
  }
  if (!is_ellipsoid(spec)) return;
  const ChannelLayout layout = ellipsoid_layout(spec);
  for (int b = 0; b < static_cast<int>(spec.blobs.size()); ++b) {
    const AnalyticBlob& blob = spec.blobs[b];
    const bool present = part_planes ? blob.in_part : blob.in_head;
    if (b < channels) {
      terms_[b].kind = present ? TermKind::quadratic : TermKind::absent;
      if (present) terms_[b].q = blob_potential(blob);
      if (present && blob.density_weight > 0.0) density_channels_.push_back(b);
    }
    const int clip = layout.clip_channel[b];
    if (clip >= 0 && clip < channels) {
      terms_[clip].kind = TermKind::quadratic;
      terms_[clip].q = clip_potential(blob);
    }
  }
}

double AnalyticField::plane_share(int channel, PlaneId plane, double a, double b) const {
  const Term& t = terms_[static_cast<std::size_t>(channel)];
  switch (t.kind) {
    case TermKind::zero: return 0.0;
    case TermKind::absent: return plane == PlaneId::xy ? K::absent_value : 0.0;
    case TermKind::quadratic: return t.q.plane_share(plane, a, b);
    case TermKind::wave: return wave_term(t.wave, plane, a, b);
  }
  return 0.0;
}

void AnalyticField::features(const Vec3& x, std::span<double> out) const {
  require(out.size() == terms_.size(), "AnalyticField: output size does not match channels");
  const Vec3 xc = x.cwiseMax(Vec3::Constant(-1.0)).cwiseMin(Vec3::Constant(1.0));
  for (std::size_t c = 0; c < terms_.size(); ++c) {
    const Term& t = terms_[c];
    switch (t.kind) {
      case TermKind::zero: out[c] = 0.0; break;
      case TermKind::absent: out[c] = K::absent_value; break;
      case TermKind::quadratic: out[c] = t.q.eval(xc); break;
      case TermKind::wave: {
        double sum = 0.0;
        for (PlaneId plane : {PlaneId::xy, PlaneId::xz, PlaneId::yz}) {
          const auto ab = plane_coords(plane, xc);
          sum += wave_term(t.wave, plane, ab[0], ab[1]);
        }
        out[c] = sum;
        break;
      }
    }
  }
}

bool AnalyticField::density_negligible(std::span<const double> features) const {
  // With every density potential negative, softplus(f) < log 2 and the
  // hidden units sit near exp(log 2 - inner_shift); sigma_raw is about
  // -density_bias.
  if (density_channels_.empty()) return false;
  for (int c : density_channels_) {
    if (features[static_cast<std::size_t>(c)] >= 0.0) return false;
  }
  return true;
}

bool AnalyticField::density_negligible_at(const Vec3& x) const {
  if (density_channels_.empty()) return false;
  const Vec3 xc = x.cwiseMax(Vec3::Constant(-1.0)).cwiseMin(Vec3::Constant(1.0));
  for (int c : density_channels_) {
    if (terms_[static_cast<std::size_t>(c)].q.eval(xc) >= 0.0) return false;
  }
  return true;
}

void analytic_features(const AnalyticSpec& spec, bool part_planes, const Vec3& x, std::span<double> out) {
  AnalyticField(spec, part_planes, static_cast<int>(out.size())).features(x, out);
}

BakedField bake_analytic(const AnalyticSpec& spec, int resolution, int channels) {
  if (std::find(kAnalyticKinds.begin(), kAnalyticKinds.end(), spec.kind) == kAnalyticKinds.end()) {
    throw ContractViolation("bake_analytic: unknown analytic spec '" + spec.kind + "'");
  }
  const bool part_planes = spec.kind == "ellipsoid-parts";
  BakedField out;
  out.planes = TriPlane(resolution, channels);
  out.decoder = is_ellipsoid(spec) ? ellipsoid_decoder(spec, channels) : passthrough_decoder(channels);
  const AnalyticField field(spec, part_planes, channels);
  for (PlaneId plane : {PlaneId::xy, PlaneId::xz, PlaneId::yz}) {
    for (int row = 0; row < resolution; ++row) {
      const double b = TriPlane::texel_center(row, resolution);
      for (int col = 0; col < resolution; ++col) {
        const double a = TriPlane::texel_center(col, resolution);
        auto texel = out.planes.texel(plane, row, col);
        for (int c = 0; c < channels; ++c) {
          // Mean aggregation divides by three; store three times the share.
          texel[c] = static_cast<float>(3.0 * field.plane_share(c, plane, a, b));
        }
      }
    }
  }
  return out;
}

Radiance analytic_radiance(const AnalyticSpec& spec, const DecoderParams& decoder, bool part_planes, const Vec3& x) {
  std::vector<double> f(static_cast<std::size_t>(decoder.input_dim));
  analytic_features(spec, part_planes, x, f);
  return decode(decoder, f);
}

HeadAppearance bake_head_appearance(std::uint64_t identity_seed, int resolution, int channels) {
  HeadAppearance app;
  app.spec = make_analytic_spec("ellipsoid-head", identity_seed);
  BakedField head = bake_analytic(app.spec, resolution, channels);
  AnalyticSpec part_spec = app.spec;
  part_spec.kind = "ellipsoid-parts";
  BakedField part = bake_analytic(part_spec, resolution, channels);
  app.head = std::move(head.planes);
  app.part = std::move(part.planes);
  app.decoder = std::move(head.decoder);
  return app;
}

void write_triplane(const TriPlane& planes, std::ostream& os) {
  binio::write_magic(os, "TPL1");
  binio::write_u32(os, static_cast<std::uint32_t>(planes.resolution()));
  binio::write_u32(os, static_cast<std::uint32_t>(planes.channels()));
  binio::write_f32s(os, planes.data());
}

TriPlane read_triplane(std::istream& is, const std::string& source) {
  const std::string what = "tri-plane file " + source;
  binio::expect_magic(is, "TPL1", what);
  const std::uint32_t r = binio::read_u32(is, what);
  const std::uint32_t c = binio::read_u32(is, what);
  if (r < 2 || c < 1 || r > 8192 || c > 4096) {
    throw ParseError(what + ": implausible header (R=" + std::to_string(r) + ", C=" + std::to_string(c) + ")");
  }
  TriPlane planes(static_cast<int>(r), static_cast<int>(c));
  binio::read_f32s(is, planes.data(), what);
  return planes;
}

void save_triplane(const TriPlane& planes, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  write_triplane(planes, os);
  if (!os) throw IoError("failed writing " + path.string());
}

TriPlane load_triplane(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  return read_triplane(is, path.string());
}

}  // namespace headsynth
