#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "headsynth/deform.hpp"
#include "headsynth/headmodel.hpp"
#include "headsynth/image.hpp"
#include "headsynth/parallel.hpp"
#include "headsynth/rng.hpp"
#include "headsynth/triplane.hpp"

namespace headsynth {

inline constexpr double kDefaultFovDegrees = 12.0;
inline constexpr int kDefaultCoarseSamples = 48;
inline constexpr int kDefaultFineSamples = 48;
inline constexpr int kDefaultRenderResolution = 64;
inline constexpr double kDepthOpacityFloor = 1e-4;

struct CameraParams {
  double pitch = 0.0;
  double yaw = 0.0;
  double roll = 0.0;
  double radius = 4.0;
  Vec3 look_at = Vec3::Zero();
  double fov_deg = kDefaultFovDegrees;

  bool operator==(const CameraParams&) const = default;
};

struct Ray {
  Vec3 origin;
  Vec3 direction;  // unit
};

// Orbit camera. Camera-to-world rotation R = Ry(yaw) Rx(-pitch) Rz(roll);
// position = look_at + R (0, 0, radius); the camera looks down its -z axis
// with +y up. Positive pitch raises the camera. Pixel (i, j) has its centre
// at (i + 0.5, j + 0.5) with j growing downwards. fov is vertical.
struct Camera {
  CameraParams params;
  int width = kDefaultRenderResolution;
  int height = kDefaultRenderResolution;
  Mat3 rotation = Mat3::Identity();
  Vec3 position = Vec3::Zero();
  double focal = 0.0;  // pixels

  Ray ray(double px, double py) const;  // continuous pixel coordinates
  Ray pixel_ray(int i, int j) const { return ray(i + 0.5, j + 0.5); }
  // Continuous pixel coordinates and view depth (> 0 in front of the camera).
  Vec3 project(const Vec3& world) const;
};

Camera camera_from_angles(double pitch, double yaw, double roll, double radius, const Vec3& look_at,
                          double fov_deg = kDefaultFovDegrees, int width = kDefaultRenderResolution,
                          int height = kDefaultRenderResolution);
Camera make_camera(const CameraParams& params, int width, int height);

struct BoundingSphere {
  Vec3 center = Vec3::Zero();
  double radius = 1.0;
};

// Smallest sphere about the AABB centre containing the points, scaled by `margin`.
BoundingSphere bounding_sphere(const std::vector<Vec3>& points, double margin = 1.1);

// Entry/exit depths; false when the ray misses.
bool intersect_sphere(const Ray& ray, const BoundingSphere& sphere, double& near, double& far);

// Strictly increasing depths with deltas; the last delta is the median of
// the preceding ones.
struct RaySamples {
  std::vector<double> t;
  std::vector<double> delta;

  std::size_t size() const { return t.size(); }
};

RaySamples make_ray_samples(std::vector<double> sorted_depths);

// One jittered depth per equal bin of [near, far].
RaySamples stratified_samples(double near, double far, int count, Rng& rng);

// Inverse-CDF draws from the piecewise-constant density whose bins are
// delimited by the coarse midpoints (near and far at the ends) and carry the
// coarse weights. All-zero weights fall back to uniform in depth. Returns
// sorted depths.
std::vector<double> hierarchical_resample(const RaySamples& coarse, std::span<const double> weights, double near,
                                          double far, int count, Rng& rng);

// Union of two sorted depth lists, with exact duplicates nudged upwards.
RaySamples merge_samples(const std::vector<double>& a, const std::vector<double>& b);

// w_i = T_i (1 - exp(-sigma_i delta_i)), T_i = prod_{j<i} exp(-sigma_j delta_j).
std::vector<double> compositing_weights(const RaySamples& samples, std::span<const double> sigma);

struct PixelValue {
  std::array<double, DecoderParams::kColorChannels> feature{};
  double opacity = 0.0;
  double depth = 0.0;
};

PixelValue integrate(const RaySamples& samples, std::span<const Radiance> radiance);

struct RenderOut {
  Image feature;  // 32 channels, first three RGB
  Image opacity;  // 1 channel
  Image depth;    // 1 channel

  RenderOut() = default;
  RenderOut(int width, int height);
  int width() const { return feature.width(); }
  int height() const { return feature.height(); }
  Image rgb() const { return feature.channel_slice(0, 3); }
  bool operator==(const RenderOut&) const = default;
};

// Coarse sample positions retained for point-feature recording, in ray order.
struct CoarseRecord {
  std::vector<Vec3> observed;
  std::vector<Vec3> head_canonical;  // x + dx_head
};

struct RenderSettings {
  int coarse_samples = kDefaultCoarseSamples;
  int fine_samples = kDefaultFineSamples;
  std::uint64_t seed = 0;
  ExecPolicy policy = ExecPolicy::parallel;
  bool record_coarse = false;
};

// Which warp offset a branch uses before sampling its planes.
enum class Branch { head, part };

struct BranchInput {
  const TriPlane* planes = nullptr;
  Branch branch = Branch::head;
};

struct BranchRender {
  std::vector<RenderOut> outputs;  // one per branch
  CoarseRecord coarse;
};

// Shared jittered coarse pass; each branch resamples its own fine depths from
// its coarse weights and integrates coarse + fine samples.
BranchRender render_branches(std::span<const BranchInput> branches, const DecoderParams& decoder,
                             const WarpField& field, const Camera& camera, const BoundingSphere& bounds,
                             const RenderSettings& settings);

struct GenHeadRender {
  RenderOut head;
  RenderOut part;
  CoarseRecord coarse;
};

GenHeadRender render_genhead(const TriPlane& head_planes, const TriPlane& part_planes, const DecoderParams& decoder,
                             const WarpField& field, const Camera& camera, const BoundingSphere& bounds,
                             const RenderSettings& settings);

RenderOut render_single(const TriPlane& planes, const DecoderParams& decoder, const WarpField& field,
                        const Camera& camera, const BoundingSphere& bounds, const RenderSettings& settings);

struct MaskMap {
  Image mask;            // 1 channel, {0, 1}
  Image correspondence;  // 3 channels, template coordinates in [0, 1]^3
  std::vector<int> face; // front-most triangle per pixel, -1 on background
};

// Z-buffered rasterization at pixel centres (edge functions inclusive, nearer
// strictly wins). `attributes` are per-vertex values interpolated
// perspective-correctly into `correspondence`.
MaskMap rasterize(const Mesh& mesh, std::span<const int> face_set, const Camera& camera,
                  std::span<const Vec3> attributes);

// Template coordinates normalized by the template bounding box.
std::vector<Vec3> correspondence_colors(const HeadRig& rig);

// Inner-mouth faces plus every face of both eyeballs, ascending.
std::vector<int> part_mask_faces(const HeadRig& rig);

// I_f = I_h (1 - M) + I_p M per pixel on features, opacity and depth.
RenderOut blend(const RenderOut& head, const RenderOut& part, const Image& mask);

// I_lr = I_f * opacity + I_bg * (1 - opacity).
Image fuse(const RenderOut& foreground, const Image& background);

struct FullRender {
  RenderOut head;
  RenderOut part;
  RenderOut foreground;  // blended I_f
  Image lr;              // fused I_lr
  MaskMap mask;
  CoarseRecord coarse;
  BoundingSphere bounds;
};

struct FullRenderInputs {
  const TriPlane* head_planes = nullptr;
  const TriPlane* part_planes = nullptr;
  const DecoderParams* decoder = nullptr;
  const HeadRig* rig = nullptr;
  ShapeCode shape;
  ExpressionCode expression;
  PoseCode pose;
  DeformationOptions deformation;
  // Prebuilt field for these codes; built from them when null.
  const WarpField* field = nullptr;
};

// deformation_field -> render_genhead -> rasterize -> blend -> fuse.
FullRender render_full(const FullRenderInputs& inputs, const Camera& camera, const Image& background,
                       const RenderSettings& settings);

}  // namespace headsynth
