#include "headsynth/verify.hpp"

#include <boost/math/distributions/chi_squared.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>

#include "headsynth/datagen.hpp"
#include "headsynth/deform.hpp"
#include "headsynth/losses.hpp"
#include "headsynth/motionnet.hpp"
#include "headsynth/rng.hpp"

namespace headsynth {

Image analytic_march_rgb(const AnalyticSpec& spec, const DecoderParams& decoder, bool part_planes,
                         const Camera& camera, const BoundingSphere& bounds, int steps, ExecPolicy policy) {
  require(steps >= 1, "analytic_march_rgb: steps must be positive");
  const AnalyticField field(spec, part_planes, decoder.input_dim);
  Image out(camera.width, camera.height, 3);
  for_each_index(policy, static_cast<std::int64_t>(camera.width) * camera.height, [&](std::int64_t p) {
    const int i = static_cast<int>(p % camera.width), j = static_cast<int>(p / camera.width);
    const Ray ray = camera.pixel_ray(i, j);
    double near = 0.0, far = 0.0;
    if (!intersect_sphere(ray, bounds, near, far)) return;
    const double dt = (far - near) / steps;
    std::vector<double> f(static_cast<std::size_t>(decoder.input_dim));
    DecodeScratch scratch;
    double transmittance = 1.0;
    std::array<double, 3> color{};
    for (int s = 0; s < steps && transmittance > 1e-9; ++s) {
      const Vec3 x = ray.origin + (near + (s + 0.5) * dt) * ray.direction;
      if (field.density_negligible_at(x)) continue;
      field.features(x, f);
      const Radiance r = decode(decoder, f, scratch);
      const double alpha = -std::expm1(-r.sigma * dt);
      for (int k = 0; k < 3; ++k) color[k] += transmittance * alpha * r.color[k];
      transmittance *= std::exp(-r.sigma * dt);
    }
    for (int k = 0; k < 3; ++k) out.at(i, j, k) = static_cast<float>(color[k]);
  });
  return out;
}

double psnr(const Image& a, const Image& b) {
  require(a.same_shape(b), "psnr: image shape mismatch");
  double mse = 0.0;
  for (std::size_t i = 0; i < a.data().size(); ++i) {
    const double d = static_cast<double>(a.data()[i]) - b.data()[i];
    mse += d * d;
  }
  mse /= static_cast<double>(a.data().size());
  return mse > 0.0 ? 10.0 * std::log10(1.0 / mse) : std::numeric_limits<double>::infinity();
}

double ks_uniform(std::vector<double> samples, double lo, double hi) {
  require(!samples.empty() && hi > lo, "ks_uniform: need samples and a non-empty interval");
  std::sort(samples.begin(), samples.end());
  const double n = static_cast<double>(samples.size());
  double d = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const double cdf = std::clamp((samples[i] - lo) / (hi - lo), 0.0, 1.0);
    d = std::max({d, (i + 1) / n - cdf, cdf - i / n});
  }
  return d;
}

double chi_square_uniform_pvalue(std::span<const double> samples, double lo, double hi, int bins) {
  require(bins >= 2 && !samples.empty() && hi > lo, "chi_square_uniform_pvalue: invalid arguments");
  std::vector<double> counts(static_cast<std::size_t>(bins), 0.0);
  for (double s : samples) {
    const int b = std::clamp(static_cast<int>((s - lo) / (hi - lo) * bins), 0, bins - 1);
    counts[static_cast<std::size_t>(b)] += 1.0;
  }
  const double expected = static_cast<double>(samples.size()) / bins;
  double stat = 0.0;
  for (double c : counts) stat += (c - expected) * (c - expected) / expected;
  const boost::math::chi_squared dist(bins - 1);
  return boost::math::cdf(boost::math::complement(dist, stat));
}

Vec3 surface_field_exhaustive(const Vec3& x, const Mesh& posed, const Mesh& target) {
  return transfer_point(x, closest_point_exhaustive(posed, x), posed, target);
}

std::vector<Vec3> near_surface_points(const Mesh& mesh, int count, double offset, std::uint64_t seed) {
  require(!mesh.empty(), "near_surface_points: empty mesh");
  Rng rng(seed);
  std::vector<Vec3> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int k = 0; k < count; ++k) {
    const int t = static_cast<int>(rng.index(mesh.triangles.size()));
    double u = rng.uniform(), v = rng.uniform();
    if (u + v > 1.0) {
      u = 1.0 - u;
      v = 1.0 - v;
    }
    const Triangle& tri = mesh.triangles[static_cast<std::size_t>(t)];
    const Vec3 p = (1.0 - u - v) * mesh.vertices[tri[0]] + u * mesh.vertices[tri[1]] + v * mesh.vertices[tri[2]];
    const double d = offset > 0.0 ? rng.uniform(-offset, offset) : 0.0;
    out.push_back(p + d * face_normal(mesh, t));
  }
  return out;
}

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* format, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, format, args...);
  return buf;
}

CheckResult result(bool passed, std::string detail) {
  CheckResult r;
  r.passed = passed;
  r.detail = std::move(detail);
  return r;
}

const HeadRig& default_rig() {
  static const HeadRig rig = procedural_rig(RigSpec{}, 1);
  return rig;
}

const HeadRig& rigid_neck_rig() {
  static const HeadRig rig = [] {
    RigSpec spec;
    spec.rigid_neck = true;
    return procedural_rig(spec, 1);
  }();
  return rig;
}

ShapeCode zero_shape(const HeadRig& rig) { return ShapeCode::zero(rig.shape_dim()); }
ExpressionCode zero_expression(const HeadRig& rig) { return ExpressionCode::zero(rig.expression_dim()); }

Vec3 neck_rotation_03() { return Vec3(0.3, 0.2, 0.0).normalized() * 0.3; }

// ---- Acceptance criteria -------------------------------------------------

CheckResult surface_field_identity(const VerifyOptions& o) {
  const HeadRig& rig = default_rig();
  Rng rng(derive_seed(o.seed, {1}));
  ShapeCode a = zero_shape(rig);
  ExpressionCode b = zero_expression(rig);
  for (int k = 0; k < 10; ++k) a.values[k] = rng.normal(0.0, 1.0);
  for (int k = 0; k < 10; ++k) b.values[k] = rng.normal(0.0, 1.0);
  PoseCode pose;
  pose.eye = Vec3(0.1, -0.05, 0.0);
  pose.jaw = Vec3(0.15, 0.0, 0.0);

  const auto t0 = Clock::now();
  const Mesh posed = evaluate_mesh(rig, a, b, pose);
  const Mesh canonical = evaluate_mesh(rig, a, b, without_neck(pose));
  const SurfaceField field(posed, canonical);
  double worst = 0.0;
  for (const Vec3& x : near_surface_points(posed, 1000, 0.0, derive_seed(o.seed, {2}))) {
    worst = std::max(worst, (field(x) - x).norm());
  }
  const double elapsed = seconds_since(t0);
  return result(worst < 1e-9 && elapsed < 1.0,
                fmt("max |SF(x) - x| = %.3e over 1000 surface points (< 1e-9), %.3f s (< 1 s)", worst, elapsed));
}

CheckResult surface_field_rigid_inversion(const VerifyOptions& o) {
  const HeadRig& rig = rigid_neck_rig();
  PoseCode pose;
  pose.neck = neck_rotation_03();
  const Mesh canonical = evaluate_mesh(rig, zero_shape(rig), zero_expression(rig), PoseCode{});
  const Mesh posed = evaluate_mesh(rig, zero_shape(rig), zero_expression(rig), pose);
  const SurfaceField field(posed, canonical);
  const Mat3 rot = rotation_from_axis_angle(pose.neck);
  const Vec3 pivot = rig.joints[static_cast<int>(Joint::neck)];
  double worst = 0.0;
  for (const Vec3& x : near_surface_points(posed, 1000, 0.0, derive_seed(o.seed, {3}))) {
    const Vec3 expected = rot.transpose() * (x - pivot) + pivot;
    worst = std::max(worst, (field(x) - expected).norm());
  }
  return result(worst < 1e-6,
                fmt("neck rotated 0.3 rad: max |SF(x) - R^T(x - c) + c| = %.3e over 1000 surface points (< 1e-6)",
                    worst));
}

CheckResult grid_convergence(const VerifyOptions& o) {
  const HeadRig& rig = default_rig();
  PoseCode pose;
  pose.neck = neck_rotation_03();
  const ShapeCode a = zero_shape(rig);
  const ExpressionCode b = zero_expression(rig);
  const Mesh posed = evaluate_mesh(rig, a, b, pose);
  const Mesh canonical = evaluate_mesh(rig, a, b, without_neck(pose));
  const SurfaceField field(posed, canonical);
  const std::vector<Vec3> probes = near_surface_points(posed, 500, 0.02, derive_seed(o.seed, {4}));
  std::vector<Vec3> exact;
  for (const Vec3& x : probes) exact.push_back(field(x));
  std::vector<double> errors;
  for (int res : {8, 16, 32}) {
    const VoxelGrid grid = build_sf_grid(rig, a, b, pose, GridResolution::cube(res));
    double worst = 0.0;
    for (std::size_t i = 0; i < probes.size(); ++i) worst = std::max(worst, (apply_grid(grid, probes[i]) - exact[i]).norm());
    errors.push_back(worst);
  }
  const bool monotone = errors[0] > errors[1] && errors[1] > errors[2];
  return result(monotone, fmt("max error over 500 probes: 8^3 %.3e, 16^3 %.3e, 32^3 %.3e (strictly decreasing)",
                              errors[0], errors[1], errors[2]));
}

CheckResult deformation_null_case(const VerifyOptions& o) {
  const HeadRig& rig = default_rig();
  const PoseCode pose = canonical_pose();
  const auto field = deformation_field(rig, zero_shape(rig), zero_expression(rig), pose);
  const Mesh mesh = evaluate_mesh(rig, zero_shape(rig), zero_expression(rig), pose);
  std::vector<Vec3> probes = near_surface_points(mesh, 300, 0.03, derive_seed(o.seed, {5}));
  const Aabb box = padded_bounds(mesh.vertices);
  Rng rng(derive_seed(o.seed, {6}));
  for (int k = 0; k < 300; ++k) {
    probes.emplace_back(rng.uniform(box.lo.x(), box.hi.x()), rng.uniform(box.lo.y(), box.hi.y()),
                        rng.uniform(box.lo.z(), box.hi.z()));
  }
  // Beyond the grid bounds as well.
  const Aabb wide = box.inflated(1.6);
  for (int k = 0; k < 100; ++k) {
    probes.emplace_back(rng.uniform(wide.lo.x(), wide.hi.x()), rng.uniform(wide.lo.y(), wide.hi.y()),
                        rng.uniform(wide.lo.z(), wide.hi.z()));
  }
  double head = 0.0, part = 0.0;
  for (const Vec3& x : probes) {
    const DeformationPair d = (*field)(x);
    head = std::max(head, d.dx_head.norm());
    part = std::max(part, d.dx_part.norm());
  }
  const double bound = 1e-6 * head_layout().head_radii.maxCoeff();
  return result(head < bound && part < bound,
                fmt("max |dx_head| = %.3e, max |dx_part| = %.3e over %zu probes (< %.2e)", head, part, probes.size(),
                    bound));
}

CheckResult render_closed_form(const VerifyOptions&) {
  double worst = 0.0;
  const double length = 1.7, near = 2.3;
  for (int n : {2, 48, 256}) {
    for (double sigma : {0.05, 0.8, 3.0, 25.0}) {
      std::vector<double> depths(static_cast<std::size_t>(n));
      for (int i = 0; i < n; ++i) depths[i] = near + i * (length / n);
      const RaySamples samples = make_ray_samples(depths);
      Radiance r;
      r.sigma = sigma;
      r.color.fill(0.37);
      const std::vector<Radiance> rad(static_cast<std::size_t>(n), r);
      const PixelValue px = integrate(samples, rad);
      const double closed = -std::expm1(-sigma * length);
      worst = std::max({worst, std::abs(px.opacity - closed), std::abs(px.feature[0] - 0.37 * closed)});
    }
  }
  constexpr double kTolerance = 1e-13;
  return result(worst < kTolerance,
                fmt("max |discrete - (1 - exp(-sigma L))| = %.3e for N in {2, 48, 256} (< %.0e)", worst, kTolerance));
}

CheckResult baked_field_psnr(const VerifyOptions& o) {
  const AnalyticSpec spec = make_analytic_spec("ellipsoid-head", derive_seed(o.seed, {7}));
  const Camera camera = camera_from_angles(0.2, 0.4, 0.05, 4.0, Vec3(0.0, 0.0, 0.03));
  const HeadRig& rig = default_rig();
  const BoundingSphere bounds =
      bounding_sphere(evaluate_mesh(rig, zero_shape(rig), zero_expression(rig), canonical_pose()).vertices);
  const auto t0 = Clock::now();
  const BakedField baked = bake_analytic(spec, 128, 32);
  RenderSettings settings;
  settings.policy = ExecPolicy::serial;
  settings.seed = derive_seed(o.seed, {8});
  const RenderOut out = render_single(baked.planes, baked.decoder, IdentityWarp{}, camera, bounds, settings);
  const double elapsed = seconds_since(t0);
  const Image oracle = analytic_march_rgb(spec, baked.decoder, false, camera, bounds);
  const double db = psnr(out.rgb(), oracle);
  return result(db > 30.0 && elapsed < 30.0,
                fmt("PSNR %.2f dB vs 4096-step analytic march (> 30), bake + render %.2f s single-threaded (< 30 s)",
                    db, elapsed));
}

bool same_bits(const Image& a, const Image& b) {
  return a.same_shape(b) && std::memcmp(a.data().data(), b.data().data(), a.data().size_bytes()) == 0;
}

bool same_bits(const RenderOut& a, const RenderOut& b) {
  return same_bits(a.feature, b.feature) && same_bits(a.opacity, b.opacity) && same_bits(a.depth, b.depth);
}

RenderOut random_render(Rng& rng, int w, int h) {
  RenderOut r(w, h);
  for (auto& v : r.feature.data()) v = static_cast<float>(rng.uniform(-2.0, 2.0));
  for (auto& v : r.opacity.data()) v = static_cast<float>(rng.uniform(0.0, 1.0));
  for (auto& v : r.depth.data()) v = static_cast<float>(rng.uniform(3.0, 5.0));
  return r;
}

CheckResult blend_fuse_identities(const VerifyOptions& o) {
  Rng rng(derive_seed(o.seed, {9}));
  const int w = 37, h = 23;
  const RenderOut head = random_render(rng, w, h), part = random_render(rng, w, h);
  const bool blend0 = same_bits(blend(head, part, Image(w, h, 1, 0.0f)), head);
  const bool blend1 = same_bits(blend(head, part, Image(w, h, 1, 1.0f)), part);
  Image background(w, h, 32);
  for (auto& v : background.data()) v = static_cast<float>(rng.uniform(-1.0, 1.0));
  RenderOut fg = head;
  std::fill(fg.opacity.data().begin(), fg.opacity.data().end(), 1.0f);
  const bool fuse1 = same_bits(fuse(fg, background), fg.feature);
  std::fill(fg.opacity.data().begin(), fg.opacity.data().end(), 0.0f);
  const bool fuse0 = same_bits(fuse(fg, background), background);
  return result(blend0 && blend1 && fuse0 && fuse1,
                fmt("M_p=0 -> I_h %s, M_p=1 -> I_p %s, I_opa=1 -> I_f %s, I_opa=0 -> I_bg %s (bitwise)",
                    blend0 ? "ok" : "FAIL", blend1 ? "ok" : "FAIL", fuse1 ? "ok" : "FAIL", fuse0 ? "ok" : "FAIL"));
}

MotionVector random_motion(Rng& rng) {
  MotionVector v;
  for (Eigen::Index i = 0; i < v.values.size(); ++i) v.values[i] = rng.normal(0.0, 1.0);
  return v;
}

void perturb_cross_outputs(PhiParams& p, Rng& rng, double scale) {
  for (const std::string& name : phi_tensor_names(p)) {
    if (name.find(".cross.o.") == std::string::npos) continue;
    for (double& x : phi_tensor(p, name)) x = rng.uniform(-scale, scale);
  }
}

CheckResult phi_gating(const VerifyOptions& o) {
  Rng rng(derive_seed(o.seed, {10}));
  const PhiDims dims;
  const PhiParams init = init_phi(dims, derive_seed(o.seed, {11}));
  FeatureGrid grid{Eigen::MatrixXd(dims.tokens, dims.width)};
  for (Eigen::Index i = 0; i < grid.tokens.size(); ++i) grid.tokens.data()[i] = rng.normal(0.0, 1.0);

  // Gate off: bitwise independent of the motion vectors, even with live
  // cross-attention weights.
  PhiParams live = init;
  perturb_cross_outputs(live, rng, 0.1);
  const FeatureGrid reference = phi_forward(live, grid, random_motion(rng), random_motion(rng), {false});
  bool gate_off_independent = true;
  for (int k = 0; k < 100; ++k) {
    const FeatureGrid out = phi_forward(live, grid, random_motion(rng), random_motion(rng), {false});
    gate_off_independent = gate_off_independent && out.tokens == reference.tokens;
  }
  const MotionVector vs = random_motion(rng), vd = random_motion(rng);
  const bool live_differs = phi_forward(live, grid, vs, vd, {true}).tokens != reference.tokens;

  const bool zero_init_equal =
      phi_forward(init, grid, vs, vd, {true}).tokens == phi_forward(init, grid, vs, vd, {false}).tokens;

  double row_error = 0.0;
  const Eigen::MatrixXd motion = expand_motion(init.de, dims, vs);
  for (const auto& weights : {attention_weights(grid.tokens, motion, init.de.blocks[0].cross, dims.heads),
                              attention_weights(grid.tokens, grid.tokens, init.re.blocks[1].self, dims.heads)}) {
    for (const Eigen::MatrixXd& w : weights) row_error = std::max(row_error, (w.rowwise().sum().array() - 1.0).abs().maxCoeff());
  }

  PhiDims tiny;
  tiny.tokens = 4;
  tiny.width = 8;
  tiny.heads = 4;
  tiny.motion_tokens = 3;
  tiny.expand_hidden = 16;
  PhiParams small = init_phi(tiny, derive_seed(o.seed, {12}));
  perturb_cross_outputs(small, rng, 0.3);
  FeatureGrid small_grid{Eigen::MatrixXd(tiny.tokens, tiny.width)};
  for (Eigen::Index i = 0; i < small_grid.tokens.size(); ++i) small_grid.tokens.data()[i] = rng.normal(0.0, 1.0);
  Eigen::MatrixXd probe(tiny.tokens, tiny.width);
  for (Eigen::Index i = 0; i < probe.size(); ++i) probe.data()[i] = rng.normal(0.0, 1.0);
  double jac_error = 0.0;
  int jac_count = 0, zero_count = 0;
  bool zero_ok = true;
  for (const std::string& name : phi_tensor_names(small)) {
    const std::size_t n = phi_tensor(small, name).size();
    std::vector<double> dir(n);
    double norm = 0.0;
    for (double& d : dir) {
      d = rng.normal(0.0, 1.0);
      norm += d * d;
    }
    for (double& d : dir) d /= std::sqrt(norm);
    const JacobianCheck c = finite_diff_jacobian_check(small, small_grid, vs, vd, {true}, name, dir, probe, 1e-4);
    // Softmax is invariant to a shift shared by all logits of a row, so key
    // biases have an exactly zero Jacobian; compare those absolutely.
    if (name.ends_with(".k.b")) {
      zero_ok = zero_ok && std::abs(c.analytic) < 1e-9 && std::abs(c.numeric) < 1e-9;
      ++zero_count;
      continue;
    }
    jac_error = std::max(jac_error, c.relative_error);
    ++jac_count;
  }
  const bool ok = gate_off_independent && live_differs && zero_init_equal && row_error <= 1e-6 && jac_error < 1e-4 && zero_ok;
  return result(ok, fmt("gate-off independent over 100 pairs: %s; gate-on differs once cross-attention is live: %s; "
                        "zero-init gate-on == gate-off: %s; max |row sum - 1| = %.2e (<= 1e-6); "
                        "finite-difference Jacobian max rel. error %.2e over %d tensors (< 1e-4), "
                        "%d key-bias tensors with zero Jacobian: %s",
                        gate_off_independent ? "yes" : "NO", live_differs ? "yes" : "NO",
                        zero_init_equal ? "yes" : "NO", row_error, jac_error, jac_count, zero_count, zero_ok ? "yes" : "NO"));
}

CheckResult pipeline_constants(const VerifyOptions& o) {
  std::vector<std::string> failures;
  auto expect = [&](bool ok, const std::string& what) {
    if (!ok) failures.push_back(what);
  };
  expect(kDefaultFovDegrees == 12.0 && kCameraBox.fov_deg == 12.0, "FoV 12 deg");
  expect(kCameraBox.pitch == Interval{-0.25, 0.65} && kCameraBox.yaw == Interval{-0.78, 0.78} &&
             kCameraBox.roll == Interval{-0.25, 0.25} && kCameraBox.radius == Interval{3.65, 4.45},
         "camera box");
  expect(kNeckBox.pitch == Interval{-0.2, 0.2} && kNeckBox.yaw == Interval{-0.5, 0.5} &&
             kNeckBox.roll == Interval{-0.1, 0.1},
         "neck box");
  Rng rng(derive_seed(o.seed, {13}));
  bool cameras_inside = true, necks_inside = true;
  for (int k = 0; k < 10000; ++k) {
    const CameraParams c = sample_camera(rng);
    cameras_inside = cameras_inside && kCameraBox.pitch.contains(c.pitch) && kCameraBox.yaw.contains(c.yaw) &&
                     kCameraBox.roll.contains(c.roll) && kCameraBox.radius.contains(c.radius) &&
                     kCameraBox.look_x.contains(c.look_at.x()) && kCameraBox.look_y.contains(c.look_at.y()) &&
                     kCameraBox.look_z.contains(c.look_at.z()) && c.fov_deg == 12.0;
    const Vec3 n = sample_neck_pose(rng);
    necks_inside = necks_inside && kNeckBox.pitch.contains(n.x()) && kNeckBox.yaw.contains(n.y()) &&
                   kNeckBox.roll.contains(n.z());
  }
  expect(cameras_inside, "10^4 camera draws inside the box with FoV 12");
  expect(necks_inside, "10^4 neck draws inside the box");
  expect(kDefaultCoarseSamples == 48 && kDefaultFineSamples == 48 && RenderSettings{}.coarse_samples == 48 &&
             RenderSettings{}.fine_samples == 48,
         "48 coarse + 48 fine samples");
  expect(kDefaultPointCount == 4000 && DatasetConfig{}.points == 4000, "4000 recorded points");
  expect(kMotionDim == 548 && kMotionExpressionDim == 30 && kMotionLipDim == 512 && kMotionEyeDim == 6 &&
             MotionVector{}.values.size() == 548 && PhiDims{}.motion_dim == 548,
         "motion vector 548 = 30 + 512 + 6");
  const LossWeights w;
  expect(w.re == 1.0 && w.f == 1.0 && w.tri == 0.1 && w.depth == 1.0 && w.opa == 0.3 && w.id == 1.0 && w.adv == 0.01,
         "loss weights (1, 1, 0.1, 1, 0.3, 1, 0.01)");
  const LossTerms ones{1.0, 1.0, 1.0, 1.0, 1.0};
  LossHooks hooks;
  hooks.identity = [] { return 1.0; };
  hooks.adversarial = [] { return 1.0; };
  const double all_ones = total_loss(ones, w, hooks).total;
  const double no_hooks = total_loss(ones, w).total;
  expect(std::abs(all_ones - 4.41) < 1e-12, fmt("total loss 4.41 (got %.17g)", all_ones));
  expect(std::abs(no_hooks - 3.4) < 1e-12, fmt("total loss without hooks 3.4 (got %.17g)", no_hooks));
  const std::vector<std::pair<double, int>> bins{{0.0, 1},   {5.0, 1},   {14.999, 1}, {15.0, 2},  {20.0, 2},
                                                 {29.999, 2}, {30.0, 4},  {44.999, 4}, {45.0, 8},  {59.999, 8},
                                                 {60.0, 16}, {70.0, 16}, {-20.0, 2},  {-70.0, 16}};
  bool rebalance_ok = true;
  for (const auto& [yaw, factor] : bins) rebalance_ok = rebalance_ok && rebalance_factor(yaw) == factor;
  expect(rebalance_ok, "rebalance factors {1, 2, 4, 8, 16} at 15/30/45/60 deg");

  std::string detail = "FoV 12, camera and neck boxes, 48+48 samples, 4000 points, 548-dim motion, loss weights "
                       "(total 4.41, hooks off 3.4), rebalance thresholds";
  if (!failures.empty()) {
    detail = "failed:";
    for (const auto& f : failures) detail += " [" + f + "]";
  }
  return result(failures.empty(), detail);
}

std::map<std::string, std::string> tree_bytes(const std::filesystem::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& entry : std::filesystem::recursive_directory_iterator(root)) {
    if (!entry.is_regular_file()) continue;
    std::ifstream is(entry.path(), std::ios::binary);
    std::ostringstream ss;
    ss << is.rdbuf();
    out[std::filesystem::relative(entry.path(), root).generic_string()] = ss.str();
  }
  return out;
}

CheckResult dataset_determinism(const VerifyOptions& o) {
  const std::filesystem::path base =
      o.scratch_dir.empty() ? std::filesystem::temp_directory_path() / "headsynth_verify" : o.scratch_dir;
  const std::filesystem::path dir_a = base / "dataset_a", dir_b = base / "dataset_b";
  std::filesystem::remove_all(dir_a);
  std::filesystem::remove_all(dir_b);
  DatasetConfig config;
  config.identities = 4;
  config.motions = 3;
  config.views = 2;
  config.resolution = 64;
  config.seed = derive_seed(o.seed, {14});
  const auto t0 = Clock::now();
  const DatasetManifest manifest = make_dynamic_set(config, dir_a);
  const double elapsed = seconds_since(t0);
  make_dynamic_set(config, dir_b);
  const auto tree_a = tree_bytes(dir_a), tree_b = tree_bytes(dir_b);
  const bool identical = tree_a == tree_b;

  bool background_constant = true;
  std::map<int, std::string> first;
  for (const RecordEntry& rec : manifest.records) {
    const std::string& bytes = tree_a.at(rec.files.at("background"));
    auto [it, inserted] = first.emplace(rec.identity, bytes);
    if (!inserted) background_constant = background_constant && it->second == bytes;
  }
  const ValidationReport report = validate_dataset(dir_a);
  const double feature_error = point_feature_error(dir_a);
  const bool ok = identical && background_constant && report.ok() && feature_error <= 1e-6 &&
                  manifest.records.size() == 24 && elapsed < 300.0;
  std::filesystem::remove_all(dir_a);
  std::filesystem::remove_all(dir_b);
  return result(ok, fmt("two runs byte-identical (%zu files): %s; per-identity background constant: %s; "
                        "validation %d checks, %zu failures; max point-feature recomputation error %.2e (<= 1e-6); "
                        "4x3x2 at 64^2 generated in %.1f s (< 300 s)",
                        tree_a.size(), identical ? "yes" : "NO", background_constant ? "yes" : "NO", report.checks,
                        report.failures.size(), feature_error, elapsed));
}

// ---- Additional properties -----------------------------------------------

CheckResult bvh_matches_exhaustive(const VerifyOptions& o) {
  const HeadRig& rig = default_rig();
  PoseCode pose;
  pose.neck = neck_rotation_03();
  pose.jaw = Vec3(0.2, 0.0, 0.0);
  const Mesh mesh = evaluate_mesh(rig, zero_shape(rig), zero_expression(rig), pose);
  const TriangleBvh bvh(mesh);
  const Aabb box = padded_bounds(mesh.vertices, 0.3);
  Rng rng(derive_seed(o.seed, {20}));
  int mismatches = 0;
  for (int k = 0; k < 1000; ++k) {
    const Vec3 x(rng.uniform(box.lo.x(), box.hi.x()), rng.uniform(box.lo.y(), box.hi.y()),
                 rng.uniform(box.lo.z(), box.hi.z()));
    const SurfaceHit a = bvh.closest(x), b = closest_point_exhaustive(mesh, x);
    if (a.triangle != b.triangle && std::abs(a.squared_distance - b.squared_distance) > 1e-12) ++mismatches;
  }
  return result(mismatches == 0, fmt("%d of 1000 random queries disagree with exhaustive search", mismatches));
}

CheckResult surface_field_matches_oracle(const VerifyOptions& o) {
  const HeadRig& rig = default_rig();
  PoseCode pose;
  pose.neck = neck_rotation_03();
  const Mesh posed = evaluate_mesh(rig, zero_shape(rig), zero_expression(rig), pose);
  const Mesh canonical = evaluate_mesh(rig, zero_shape(rig), zero_expression(rig), without_neck(pose));
  const SurfaceField field(posed, canonical);
  double worst = 0.0;
  for (const Vec3& x : near_surface_points(posed, 300, 0.05, derive_seed(o.seed, {21}))) {
    worst = std::max(worst, (field(x) - surface_field_exhaustive(x, posed, canonical)).norm());
  }
  return result(worst <= 1e-12, fmt("max |SF_bvh - SF_exhaustive| = %.3e over 300 free-space points", worst));
}

CheckResult grid_reproduces_affine(const VerifyOptions& o) {
  Mat3 a;
  a << 1.2, -0.3, 0.1, 0.4, 0.9, -0.2, 0.05, 0.3, 1.1;
  const Vec3 t(0.1, -0.2, 0.3);
  const Aabb box{Vec3(-0.3, -0.4, -0.2), Vec3(0.35, 0.3, 0.25)};
  const VoxelGrid grid = build_grid(box, {5, 7, 6}, [&](const Vec3& x) { return Vec3(a * x + t); });
  Rng rng(derive_seed(o.seed, {22}));
  double worst = 0.0;
  for (int k = 0; k < 1000; ++k) {
    const Vec3 x(rng.uniform(box.lo.x(), box.hi.x()), rng.uniform(box.lo.y(), box.hi.y()),
                 rng.uniform(box.lo.z(), box.hi.z()));
    worst = std::max(worst, (apply_grid(grid, x) - (a * x + t)).norm());
  }
  return result(worst < 1e-12, fmt("max error reproducing an affine field: %.3e", worst));
}

CheckResult one_ring_translation(const VerifyOptions& o) {
  const HeadRig& rig = default_rig();
  const Mesh src = evaluate_mesh(rig, zero_shape(rig), zero_expression(rig), PoseCode{});
  Mesh dst = src;
  const Vec3 shift(0.013, -0.021, 0.008);
  for (Vec3& v : dst.vertices) v += shift;
  const OneRingDeformer deformer(src, dst);
  double worst = 0.0;
  for (const Vec3& x : near_surface_points(src, 500, 0.05, derive_seed(o.seed, {23}))) {
    worst = std::max(worst, (deformer.offset(x) - shift).norm());
  }
  return result(worst < 1e-12, fmt("translated target: max |offset - t| = %.3e", worst));
}

CheckResult decoder_matches_loops(const VerifyOptions& o) {
  Rng rng(derive_seed(o.seed, {24}));
  DecoderParams p = DecoderParams::zeros(32);
  for (Eigen::MatrixXd* m : {&p.w1, &p.w2, &p.w3}) {
    for (Eigen::Index i = 0; i < m->size(); ++i) m->data()[i] = rng.uniform(-0.3, 0.3);
  }
  for (Eigen::VectorXd* b : {&p.b1, &p.b2, &p.b3}) {
    for (Eigen::Index i = 0; i < b->size(); ++i) (*b)[i] = rng.uniform(-0.3, 0.3);
  }
  auto layer = [](const Eigen::MatrixXd& w, const Eigen::VectorXd& b, const std::vector<double>& in, bool act) {
    std::vector<double> out(static_cast<std::size_t>(w.rows()));
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
      double s = b[r];
      for (Eigen::Index c = 0; c < w.cols(); ++c) s += w(r, c) * in[static_cast<std::size_t>(c)];
      out[static_cast<std::size_t>(r)] = act ? std::log1p(std::exp(s)) : s;
    }
    return out;
  };
  double worst = 0.0;
  for (int k = 0; k < 100; ++k) {
    std::vector<double> f(32);
    for (double& v : f) v = rng.uniform(-2.0, 2.0);
    const auto out = layer(p.w3, p.b3, layer(p.w2, p.b2, layer(p.w1, p.b1, f, true), true), false);
    const Radiance r = decode(p, f);
    worst = std::max(worst, std::abs(r.sigma - std::log1p(std::exp(out[0]))));
    for (int j = 0; j < 32; ++j) {
      const double expect = j < 3 ? 1.0 / (1.0 + std::exp(-out[1 + j])) : out[1 + j];
      worst = std::max(worst, std::abs(r.color[j] - expect));
    }
  }
  return result(worst < 1e-6, fmt("max |decode - loop oracle| = %.3e over 100 inputs", worst));
}

CheckResult fine_samples_uniform(const VerifyOptions& o) {
  Rng rng(derive_seed(o.seed, {25}));
  const double near = 1.0, far = 3.0;
  const RaySamples coarse = stratified_samples(near, far, 48, rng);
  const std::vector<double> weights(coarse.size(), 1.0);
  // Midpoint bins are unequal near the ends; the expected CDF follows them.
  std::vector<double> edges{near};
  for (std::size_t i = 0; i + 1 < coarse.size(); ++i) edges.push_back(0.5 * (coarse.t[i] + coarse.t[i + 1]));
  edges.push_back(far);
  const std::vector<double> fine = hierarchical_resample(coarse, weights, near, far, 10000, rng);
  // Map each draw through the piecewise-linear CDF of equal-mass bins.
  std::vector<double> u;
  const double bins = static_cast<double>(edges.size() - 1);
  for (double t : fine) {
    const auto it = std::upper_bound(edges.begin(), edges.end(), t);
    const std::size_t b = std::clamp<std::size_t>(static_cast<std::size_t>(it - edges.begin()), 1, edges.size() - 1) - 1;
    u.push_back((b + (t - edges[b]) / (edges[b + 1] - edges[b])) / bins);
  }
  const double d = ks_uniform(u, 0.0, 1.0);
  return result(d < 0.1, fmt("uniform weights: KS distance %.4f over 10^4 fine draws (< 0.1)", d));
}

CheckResult sampler_uniformity(const VerifyOptions& o) {
  Rng rng(derive_seed(o.seed, {26}));
  std::array<std::vector<double>, 10> axes;
  for (int k = 0; k < 10000; ++k) {
    const CameraParams c = sample_camera(rng);
    const Vec3 n = sample_neck_pose(rng);
    const double values[] = {c.pitch, c.yaw, c.roll, c.radius, c.look_at.x(), c.look_at.y(), c.look_at.z(),
                             n.x(), n.y(), n.z()};
    for (int a = 0; a < 10; ++a) axes[a].push_back(values[a]);
  }
  const Interval boxes[] = {kCameraBox.pitch, kCameraBox.yaw, kCameraBox.roll, kCameraBox.radius, kCameraBox.look_x,
                            kCameraBox.look_y, kCameraBox.look_z, kNeckBox.pitch, kNeckBox.yaw, kNeckBox.roll};
  double worst = 1.0;
  for (int a = 0; a < 10; ++a) worst = std::min(worst, chi_square_uniform_pvalue(axes[a], boxes[a].lo, boxes[a].hi));
  return result(worst > 0.01, fmt("smallest chi-square p-value over 10 sampled axes: %.4f (> 0.01)", worst));
}

CheckResult rasterize_halfspace(const VerifyOptions&) {
  const Camera camera = camera_from_angles(0.0, 0.0, 0.0, 4.0, Vec3::Zero(), 12.0, 48, 40);
  Mesh mesh;
  mesh.vertices = {Vec3(-0.25, -0.2, 0.05), Vec3(0.3, -0.1, -0.05), Vec3(-0.05, 0.28, 0.0)};
  mesh.triangles = {Triangle{0, 1, 2}};
  const std::vector<int> faces{0};
  const MaskMap mm = rasterize(mesh, faces, camera, {});
  std::array<Vec3, 3> s;
  for (int k = 0; k < 3; ++k) s[k] = camera.project(mesh.vertices[k]);
  auto edge = [](const Vec3& a, const Vec3& b, double x, double y) {
    return (b.x() - a.x()) * (y - a.y()) - (b.y() - a.y()) * (x - a.x());
  };
  int mismatches = 0, covered = 0;
  for (int j = 0; j < camera.height; ++j) {
    for (int i = 0; i < camera.width; ++i) {
      const double x = i + 0.5, y = j + 0.5;
      const double e0 = edge(s[0], s[1], x, y), e1 = edge(s[1], s[2], x, y), e2 = edge(s[2], s[0], x, y);
      const bool inside = (e0 >= 0 && e1 >= 0 && e2 >= 0) || (e0 <= 0 && e1 <= 0 && e2 <= 0);
      covered += inside;
      const bool drawn = mm.face[static_cast<std::size_t>(j) * camera.width + i] == 0;
      mismatches += inside != drawn;
      mismatches += (mm.mask.at(i, j) > 0.5f) != inside;
    }
  }
  return result(mismatches == 0 && covered > 0,
                fmt("%d covered pixels, %d mismatches against the half-space oracle", covered, mismatches));
}

CheckResult separable_bake_exact(const VerifyOptions& o) {
  const AnalyticSpec spec = make_analytic_spec("separable-waves", derive_seed(o.seed, {27}));
  const int r = 64;
  const BakedField baked = bake_analytic(spec, r, 32);
  Rng rng(derive_seed(o.seed, {28}));
  double worst = 0.0;
  for (int k = 0; k < 500; ++k) {
    const Vec3 x(TriPlane::texel_center(static_cast<int>(rng.index(r)), r),
                 TriPlane::texel_center(static_cast<int>(rng.index(r)), r),
                 TriPlane::texel_center(static_cast<int>(rng.index(r)), r));
    const Eigen::VectorXd f = sample(baked.planes, x);
    const Radiance got = decode(baked.decoder, {f.data(), static_cast<std::size_t>(f.size())});
    const Radiance expect = analytic_radiance(spec, baked.decoder, false, x);
    worst = std::max(worst, std::abs(got.sigma - expect.sigma));
  }
  return result(worst < 1e-5, fmt("texel-aligned |sigma_baked - sigma_analytic| max %.3e (< 1e-5)", worst));
}

CheckResult render_schedule_independent(const VerifyOptions& o) {
  const AnalyticSpec spec = make_analytic_spec("ellipsoid-head", derive_seed(o.seed, {29}));
  const BakedField baked = bake_analytic(spec, 64, 32);
  const HeadRig& rig = default_rig();
  const BoundingSphere bounds =
      bounding_sphere(evaluate_mesh(rig, zero_shape(rig), zero_expression(rig), canonical_pose()).vertices);
  const Camera camera = camera_from_angles(0.1, -0.3, 0.0, 4.0, Vec3(0.0, 0.0, 0.03), 12.0, 24, 24);
  RenderSettings settings;
  settings.seed = 5;
  settings.policy = ExecPolicy::serial;
  const RenderOut serial = render_single(baked.planes, baked.decoder, IdentityWarp{}, camera, bounds, settings);
  settings.policy = ExecPolicy::parallel;
  const RenderOut parallel = render_single(baked.planes, baked.decoder, IdentityWarp{}, camera, bounds, settings);
  const RenderOut again = render_single(baked.planes, baked.decoder, IdentityWarp{}, camera, bounds, settings);
  const bool ok = same_bits(serial, parallel) && same_bits(parallel, again);
  return result(ok, ok ? "serial, parallel and repeated renders bitwise equal" : "renders differ");
}

CheckResult motion_embedding_injective(const VerifyOptions& o) {
  Rng rng(derive_seed(o.seed, {30}));
  const MotionEmbedding e = make_motion_embedding(100, derive_seed(o.seed, {31}));
  double closest = std::numeric_limits<double>::infinity();
  for (int k = 0; k < 100; ++k) {
    Eigen::VectorXd b1(100), b2(100);
    for (Eigen::Index i = 0; i < 100; ++i) {
      b1[i] = rng.normal(0.0, 1.0);
      b2[i] = rng.normal(0.0, 1.0);
    }
    const Vec3 eye(rng.uniform(-0.2, 0.2), rng.uniform(-0.2, 0.2), 0.0), jaw(rng.uniform(0.0, 0.3), 0.0, 0.0);
    closest = std::min(closest, (embed_motion(e, b1, eye, jaw).values - embed_motion(e, b2, eye, jaw).values).norm());
  }
  return result(closest > 0.0, fmt("smallest distance between embeddings of 100 distinct pairs: %.3e", closest));
}

}  // namespace

const std::vector<NamedCheck>& acceptance_checks() {
  static const std::vector<NamedCheck> checks{
      {"surface field identity", surface_field_identity},
      {"surface field rigid inversion", surface_field_rigid_inversion},
      {"grid convergence", grid_convergence},
      {"deformation null case", deformation_null_case},
      {"volume rendering closed form", render_closed_form},
      {"baked field PSNR", baked_field_psnr},
      {"blend and fuse identities", blend_fuse_identities},
      {"gated cross-attention", phi_gating},
      {"pipeline constants", pipeline_constants},
      {"dataset determinism", dataset_determinism},
  };
  return checks;
}

const std::vector<NamedCheck>& property_checks() {
  static const std::vector<NamedCheck> checks{
      {"BVH equals exhaustive search", bvh_matches_exhaustive},
      {"surface field equals exhaustive oracle", surface_field_matches_oracle},
      {"grid reproduces affine fields", grid_reproduces_affine},
      {"one-ring offset of a translation", one_ring_translation},
      {"decoder equals loop oracle", decoder_matches_loops},
      {"fine samples uniform under uniform weights", fine_samples_uniform},
      {"camera and neck samplers uniform", sampler_uniformity},
      {"rasterizer equals half-space oracle", rasterize_halfspace},
      {"separable bake exact at texels", separable_bake_exact},
      {"render independent of schedule", render_schedule_independent},
      {"motion embedding injective", motion_embedding_injective},
  };
  return checks;
}

CheckResult run_check(const NamedCheck& check, const VerifyOptions& options) {
  const auto t0 = Clock::now();
  CheckResult r;
  try {
    r = check.run(options);
  } catch (const std::exception& e) {
    r = result(false, std::string("exception: ") + e.what());
  }
  r.name = check.name;
  r.seconds = seconds_since(t0);
  return r;
}

}  // namespace headsynth
