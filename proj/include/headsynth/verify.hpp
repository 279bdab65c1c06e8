#pragma once

#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "headsynth/headmodel.hpp"
#include "headsynth/image.hpp"
#include "headsynth/parallel.hpp"
#include "headsynth/render.hpp"
#include "headsynth/triplane.hpp"

namespace headsynth {

// ---- Independent oracles -------------------------------------------------

// Midpoint march of the exact analytic field with `steps` equal steps between
// the bounding-sphere hits; stops once transmittance drops below 1e-9.
// Returns the three RGB channels.
Image analytic_march_rgb(const AnalyticSpec& spec, const DecoderParams& decoder, bool part_planes,
                         const Camera& camera, const BoundingSphere& bounds, int steps = 4096,
                         ExecPolicy policy = ExecPolicy::parallel);

// Peak signal-to-noise ratio over all channels, peak 1.
double psnr(const Image& a, const Image& b);

// Kolmogorov-Smirnov distance between the samples and U[lo, hi].
double ks_uniform(std::vector<double> samples, double lo, double hi);

// Pearson chi-square p-value of the samples against U[lo, hi] with equal bins.
double chi_square_uniform_pvalue(std::span<const double> samples, double lo, double hi, int bins = 20);

// Surface field by exhaustive nearest-triangle search.
Vec3 surface_field_exhaustive(const Vec3& x, const Mesh& posed, const Mesh& target);

// Points on random triangles of `mesh`, pushed along the face normal by a
// uniform offset in [-offset, offset].
std::vector<Vec3> near_surface_points(const Mesh& mesh, int count, double offset, std::uint64_t seed);

// ---- Checks --------------------------------------------------------------

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
  double seconds = 0.0;
};

struct VerifyOptions {
  std::filesystem::path scratch_dir;  // dataset determinism writes here; a temp dir when empty
  std::uint64_t seed = 0;
};

struct NamedCheck {
  std::string name;
  std::function<CheckResult(const VerifyOptions&)> run;
};

// One entry per acceptance criterion, in order 1..10.
const std::vector<NamedCheck>& acceptance_checks();

// Additional invariants exercised by `verify`.
const std::vector<NamedCheck>& property_checks();

// Runs `check`, filling `name` and `seconds`; exceptions become failures.
CheckResult run_check(const NamedCheck& check, const VerifyOptions& options);

}  // namespace headsynth
