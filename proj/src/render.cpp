#include "headsynth/render.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace headsynth {

Ray Camera::ray(double px, double py) const {
  const Vec3 dir_cam((px - 0.5 * width) / focal, -(py - 0.5 * height) / focal, -1.0);
  return {position, (rotation * dir_cam).normalized()};
}

Vec3 Camera::project(const Vec3& world) const {
  const Vec3 p = rotation.transpose() * (world - position);
  const double depth = -p.z();
  return {focal * p.x() / depth + 0.5 * width, -focal * p.y() / depth + 0.5 * height, depth};
}

Camera make_camera(const CameraParams& params, int width, int height) {
  require(params.fov_deg > 0.0 && params.fov_deg < 60.0, "camera: field of view must lie in (0, 60) degrees");
  require(params.radius > 0.0, "camera: radius must be positive");
  require(width > 0 && height > 0, "camera: resolution must be positive");
  Camera cam;
  cam.params = params;
  cam.width = width;
  cam.height = height;
  const Mat3 ry = rotation_from_axis_angle(Vec3(0.0, params.yaw, 0.0));
  const Mat3 rx = rotation_from_axis_angle(Vec3(-params.pitch, 0.0, 0.0));
  const Mat3 rz = rotation_from_axis_angle(Vec3(0.0, 0.0, params.roll));
  cam.rotation = ry * rx * rz;
  cam.position = params.look_at + cam.rotation * Vec3(0.0, 0.0, params.radius);
  const double half_fov = 0.5 * params.fov_deg * std::numbers::pi / 180.0;
  cam.focal = 0.5 * height / std::tan(half_fov);
  return cam;
}

Camera camera_from_angles(double pitch, double yaw, double roll, double radius, const Vec3& look_at,
                          double fov_deg, int width, int height) {
  return make_camera({pitch, yaw, roll, radius, look_at, fov_deg}, width, height);
}

BoundingSphere bounding_sphere(const std::vector<Vec3>& points, double margin) {
  require(!points.empty(), "bounding_sphere: no points");
  const Vec3 center = bounds_of(points).center();
  double r = 0.0;
  for (const auto& p : points) r = std::max(r, (p - center).norm());
  return {center, r * margin};
}

bool intersect_sphere(const Ray& ray, const BoundingSphere& sphere, double& near, double& far) {
  const Vec3 oc = ray.origin - sphere.center;
  const double b = oc.dot(ray.direction);
  const double c = oc.squaredNorm() - sphere.radius * sphere.radius;
  const double disc = b * b - c;
  if (disc <= 0.0) return false;
  const double s = std::sqrt(disc);
  near = std::max(-b - s, 0.0);
  far = -b + s;
  return far > near;
}

RaySamples make_ray_samples(std::vector<double> depths) {
  require(depths.size() >= 2, "ray samples: need at least two depths");
  for (std::size_t i = 1; i < depths.size(); ++i) {
    if (!(depths[i] > depths[i - 1])) depths[i] = std::nextafter(depths[i - 1], std::numeric_limits<double>::infinity());
  }
  RaySamples s;
  s.t = std::move(depths);
  const std::size_t n = s.t.size();
  s.delta.resize(n);
  for (std::size_t i = 0; i + 1 < n; ++i) s.delta[i] = s.t[i + 1] - s.t[i];
  std::vector<double> preceding(s.delta.begin(), s.delta.end() - 1);
  const std::size_t m = preceding.size();
  std::nth_element(preceding.begin(), preceding.begin() + m / 2, preceding.end());
  double median = preceding[m / 2];
  if (m % 2 == 0) {
    const double lower = *std::max_element(preceding.begin(), preceding.begin() + m / 2);
    median = 0.5 * (median + lower);
  }
  s.delta[n - 1] = median;
  return s;
}

RaySamples stratified_samples(double near, double far, int count, Rng& rng) {
  require(near < far, "stratified_samples: near must be < far");
  require(count >= 2, "stratified_samples: need at least two samples");
  const double step = (far - near) / count;
  std::vector<double> t(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) t[i] = near + (i + rng.uniform()) * step;
  return make_ray_samples(std::move(t));
}

std::vector<double> hierarchical_resample(const RaySamples& coarse, std::span<const double> weights, double near,
                                          double far, int count, Rng& rng) {
  const std::size_t n = coarse.size();
  require(weights.size() == n, "hierarchical_resample: weights and samples differ in length");
  require(near < far && count >= 1, "hierarchical_resample: invalid range or count");
  std::vector<double> edges(n + 1);
  edges[0] = near;
  for (std::size_t i = 1; i < n; ++i) edges[i] = 0.5 * (coarse.t[i - 1] + coarse.t[i]);
  edges[n] = far;

  std::vector<double> mass(n);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    require(weights[i] >= 0.0, "hierarchical_resample: negative weight");
    mass[i] = weights[i];
    total += weights[i];
  }
  if (!(total > 0.0) || !std::isfinite(total)) {
    total = 0.0;
    for (std::size_t i = 0; i < n; ++i) total += mass[i] = std::max(edges[i + 1] - edges[i], 0.0);
  }
  std::vector<double> cdf(n + 1, 0.0);
  for (std::size_t i = 0; i < n; ++i) cdf[i + 1] = cdf[i] + mass[i] / total;
  cdf[n] = 1.0;

  std::vector<double> out(static_cast<std::size_t>(count));
  for (int k = 0; k < count; ++k) {
    const double u = (k + rng.uniform()) / count;
    auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
    const std::size_t bin = std::min<std::size_t>(static_cast<std::size_t>(std::max<std::ptrdiff_t>(it - cdf.begin() - 1, 0)), n - 1);
    const double width = cdf[bin + 1] - cdf[bin];
    const double frac = width > 0.0 ? std::clamp((u - cdf[bin]) / width, 0.0, 1.0) : 0.0;
    out[k] = edges[bin] + frac * (edges[bin + 1] - edges[bin]);
  }
  return out;
}

RaySamples merge_samples(const std::vector<double>& a, const std::vector<double>& b) {
  std::vector<double> all(a.size() + b.size());
  std::merge(a.begin(), a.end(), b.begin(), b.end(), all.begin());
  return make_ray_samples(std::move(all));
}

std::vector<double> compositing_weights(const RaySamples& samples, std::span<const double> sigma) {
  require(sigma.size() == samples.size(), "compositing_weights: length mismatch");
  std::vector<double> w(samples.size());
  double transmittance = 1.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const double tau = sigma[i] * samples.delta[i];
    w[i] = transmittance * -std::expm1(-tau);
    transmittance *= std::exp(-tau);
  }
  return w;
}

PixelValue integrate(const RaySamples& samples, std::span<const Radiance> radiance) {
  require(radiance.size() == samples.size(), "integrate: samples and radiances differ in length");
  PixelValue out;
  double transmittance = 1.0;
  double weighted_depth = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const double tau = radiance[i].sigma * samples.delta[i];
    const double w = transmittance * -std::expm1(-tau);
    transmittance *= std::exp(-tau);
    for (int c = 0; c < DecoderParams::kColorChannels; ++c) out.feature[c] += w * radiance[i].color[c];
    out.opacity += w;
    weighted_depth += w * samples.t[i];
  }
  out.opacity = std::clamp(out.opacity, 0.0, 1.0);
  out.depth = out.opacity > kDepthOpacityFloor ? weighted_depth / out.opacity : 0.0;
  return out;
}

RenderOut::RenderOut(int width, int height)
    : feature(width, height, DecoderParams::kColorChannels), opacity(width, height, 1), depth(width, height, 1) {}

namespace {

void store_pixel(RenderOut& out, std::size_t p, const PixelValue& v) {
  auto f = out.feature.pixel(p);
  for (int c = 0; c < DecoderParams::kColorChannels; ++c) f[c] = static_cast<float>(v.feature[c]);
  out.opacity.pixel(p)[0] = static_cast<float>(v.opacity);
  out.depth.pixel(p)[0] = static_cast<float>(v.depth);
}

struct SampleEval {
  const DecoderParams& decoder;
  std::vector<double> feature;
  DecodeScratch scratch;

  explicit SampleEval(const DecoderParams& d) : decoder(d), feature(static_cast<std::size_t>(d.input_dim)) {}

  Radiance operator()(const TriPlane& planes, const Vec3& x) {
    sample_into(planes, x, feature);
    return decode(decoder, feature, scratch);
  }
};

Vec3 branch_point(const Vec3& x, const DeformationPair& d, Branch branch) {
  return x + (branch == Branch::head ? d.dx_head : d.dx_part);
}

}  // namespace

BranchRender render_branches(std::span<const BranchInput> branches, const DecoderParams& decoder,
                             const WarpField& field, const Camera& camera, const BoundingSphere& bounds,
                             const RenderSettings& settings) {
  require(!branches.empty(), "render: no branches");
  require(settings.coarse_samples >= 2 && settings.fine_samples >= 0, "render: invalid sample counts");
  for (const auto& b : branches) {
    require(b.planes != nullptr && b.planes->channels() == decoder.input_dim,
            "render: tri-plane channels do not match the decoder input");
  }
  const int w = camera.width, h = camera.height;
  const int nc = settings.coarse_samples, nf = settings.fine_samples;
  const std::size_t nb = branches.size();

  BranchRender result;
  result.outputs.assign(nb, RenderOut(w, h));
  std::vector<Vec3> coarse_obs, coarse_head;
  std::vector<char> coarse_valid;
  if (settings.record_coarse) {
    const std::size_t slots = static_cast<std::size_t>(w) * h * nc;
    coarse_obs.resize(slots);
    coarse_head.resize(slots);
    coarse_valid.assign(static_cast<std::size_t>(w) * h, 0);
  }

  for_each_index(settings.policy, std::int64_t{w} * h, [&](std::int64_t p) {
    const int i = static_cast<int>(p % w), j = static_cast<int>(p / w);
    const Ray ray = camera.pixel_ray(i, j);
    double near = 0.0, far = 0.0;
    if (!intersect_sphere(ray, bounds, near, far)) return;  // outputs stay zero

    Rng rng(derive_seed(settings.seed, {static_cast<std::uint64_t>(p)}));
    SampleEval eval(decoder);
    const RaySamples coarse = stratified_samples(near, far, nc, rng);

    std::vector<DeformationPair> coarse_def(static_cast<std::size_t>(nc));
    for (int s = 0; s < nc; ++s) coarse_def[s] = field(ray.origin + coarse.t[s] * ray.direction);
    if (settings.record_coarse) {
      const std::size_t base = static_cast<std::size_t>(p) * nc;
      for (int s = 0; s < nc; ++s) {
        const Vec3 x = ray.origin + coarse.t[s] * ray.direction;
        coarse_obs[base + s] = x;
        coarse_head[base + s] = x + coarse_def[s].dx_head;
      }
      coarse_valid[static_cast<std::size_t>(p)] = 1;
    }

    std::vector<Radiance> coarse_rad(static_cast<std::size_t>(nc));
    std::vector<double> sigma(static_cast<std::size_t>(nc));
    for (std::size_t b = 0; b < nb; ++b) {
      const BranchInput& br = branches[b];
      for (int s = 0; s < nc; ++s) {
        const Vec3 x = ray.origin + coarse.t[s] * ray.direction;
        coarse_rad[s] = eval(*br.planes, branch_point(x, coarse_def[s], br.branch));
        sigma[s] = coarse_rad[s].sigma;
      }
      PixelValue value;
      if (nf == 0) {
        value = integrate(coarse, coarse_rad);
      } else {
        const std::vector<double> weights = compositing_weights(coarse, sigma);
        const std::vector<double> fine_t = hierarchical_resample(coarse, weights, near, far, nf, rng);
        std::vector<Radiance> fine_rad(fine_t.size());
        for (std::size_t s = 0; s < fine_t.size(); ++s) {
          const Vec3 x = ray.origin + fine_t[s] * ray.direction;
          fine_rad[s] = eval(*br.planes, branch_point(x, field(x), br.branch));
        }
        // Merge both sorted lists, keeping radiance aligned with depth.
        std::vector<double> t_all;
        std::vector<Radiance> rad_all;
        t_all.reserve(coarse.size() + fine_t.size());
        rad_all.reserve(t_all.capacity());
        std::size_t a = 0, c = 0;
        while (a < coarse.size() || c < fine_t.size()) {
          const bool take_coarse = c >= fine_t.size() || (a < coarse.size() && coarse.t[a] <= fine_t[c]);
          if (take_coarse) {
            t_all.push_back(coarse.t[a]);
            rad_all.push_back(coarse_rad[a++]);
          } else {
            t_all.push_back(fine_t[c]);
            rad_all.push_back(fine_rad[c++]);
          }
        }
        value = integrate(make_ray_samples(std::move(t_all)), rad_all);
      }
      store_pixel(result.outputs[b], static_cast<std::size_t>(p), value);
    }
  });

  if (settings.record_coarse) {
    for (std::size_t p = 0; p < coarse_valid.size(); ++p) {
      if (!coarse_valid[p]) continue;
      const std::size_t base = p * nc;
      result.coarse.observed.insert(result.coarse.observed.end(), coarse_obs.begin() + base,
                                    coarse_obs.begin() + base + nc);
      result.coarse.head_canonical.insert(result.coarse.head_canonical.end(), coarse_head.begin() + base,
                                          coarse_head.begin() + base + nc);
    }
  }
  return result;
}

GenHeadRender render_genhead(const TriPlane& head_planes, const TriPlane& part_planes, const DecoderParams& decoder,
                             const WarpField& field, const Camera& camera, const BoundingSphere& bounds,
                             const RenderSettings& settings) {
  const std::array<BranchInput, 2> branches{BranchInput{&head_planes, Branch::head},
                                            BranchInput{&part_planes, Branch::part}};
  BranchRender r = render_branches(branches, decoder, field, camera, bounds, settings);
  return {std::move(r.outputs[0]), std::move(r.outputs[1]), std::move(r.coarse)};
}

RenderOut render_single(const TriPlane& planes, const DecoderParams& decoder, const WarpField& field,
                        const Camera& camera, const BoundingSphere& bounds, const RenderSettings& settings) {
  const std::array<BranchInput, 1> branches{BranchInput{&planes, Branch::head}};
  return std::move(render_branches(branches, decoder, field, camera, bounds, settings).outputs[0]);
}

MaskMap rasterize(const Mesh& mesh, std::span<const int> face_set, const Camera& camera,
                  std::span<const Vec3> attributes) {
  require(attributes.empty() || attributes.size() == mesh.vertices.size(),
          "rasterize: attribute count does not match vertices");
  const int w = camera.width, h = camera.height;
  MaskMap out{Image(w, h, 1), Image(w, h, 3), std::vector<int>(static_cast<std::size_t>(w) * h, -1)};
  std::vector<double> zbuf(static_cast<std::size_t>(w) * h, std::numeric_limits<double>::infinity());
  std::vector<Vec3> proj(mesh.vertices.size());
  for (std::size_t v = 0; v < mesh.vertices.size(); ++v) proj[v] = camera.project(mesh.vertices[v]);

  auto edge = [](const Vec3& a, const Vec3& b, double px, double py) {
    return (b.x() - a.x()) * (py - a.y()) - (b.y() - a.y()) * (px - a.x());
  };
  for (int t = 0; t < static_cast<int>(mesh.triangles.size()); ++t) {
    const auto& tri = mesh.triangles[t];
    const Vec3& a = proj[tri[0]];
    const Vec3& b = proj[tri[1]];
    const Vec3& c = proj[tri[2]];
    if (a.z() <= 1e-9 || b.z() <= 1e-9 || c.z() <= 1e-9) continue;
    const double area = edge(a, b, c.x(), c.y());
    if (area == 0.0 || !std::isfinite(area)) continue;
    const int x0 = std::max(0, static_cast<int>(std::floor(std::min({a.x(), b.x(), c.x()}) - 0.5)));
    const int x1 = std::min(w - 1, static_cast<int>(std::ceil(std::max({a.x(), b.x(), c.x()}) - 0.5)));
    const int y0 = std::max(0, static_cast<int>(std::floor(std::min({a.y(), b.y(), c.y()}) - 0.5)));
    const int y1 = std::min(h - 1, static_cast<int>(std::ceil(std::max({a.y(), b.y(), c.y()}) - 0.5)));
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        const double px = x + 0.5, py = y + 0.5;
        double w0 = edge(b, c, px, py), w1 = edge(c, a, px, py), w2 = edge(a, b, px, py);
        if (area < 0.0) {
          w0 = -w0;
          w1 = -w1;
          w2 = -w2;
        }
        if (w0 < 0.0 || w1 < 0.0 || w2 < 0.0) continue;
        const double l0 = w0 / std::abs(area), l1 = w1 / std::abs(area), l2 = w2 / std::abs(area);
        const double inv_z = l0 / a.z() + l1 / b.z() + l2 / c.z();
        const double z = 1.0 / inv_z;
        const std::size_t p = static_cast<std::size_t>(y) * w + x;
        if (!(z < zbuf[p])) continue;
        zbuf[p] = z;
        out.face[p] = t;
        if (!attributes.empty()) {
          const Vec3 attr = z * (l0 / a.z() * attributes[tri[0]] + l1 / b.z() * attributes[tri[1]] +
                                 l2 / c.z() * attributes[tri[2]]);
          for (int k = 0; k < 3; ++k) out.correspondence.at(x, y, k) = static_cast<float>(attr[k]);
        }
      }
    }
  }
  std::vector<char> in_set(mesh.triangles.size(), 0);
  for (int f : face_set) {
    require(f >= 0 && f < static_cast<int>(mesh.triangles.size()), "rasterize: face set index out of range");
    in_set[f] = 1;
  }
  for (std::size_t p = 0; p < out.face.size(); ++p) {
    if (out.face[p] >= 0 && in_set[out.face[p]]) out.mask.data()[p] = 1.0f;
  }
  return out;
}

std::vector<Vec3> correspondence_colors(const HeadRig& rig) {
  const Aabb box = bounds_of(rig.template_vertices);
  std::vector<Vec3> out(rig.template_vertices.size());
  for (std::size_t v = 0; v < out.size(); ++v) {
    for (int a = 0; a < 3; ++a) {
      const double ext = box.hi[a] - box.lo[a];
      out[v][a] = ext > 0.0 ? (rig.template_vertices[v][a] - box.lo[a]) / ext : 0.5;
    }
  }
  return out;
}

std::vector<int> part_mask_faces(const HeadRig& rig) {
  std::vector<char> eyeball(static_cast<std::size_t>(rig.vertex_count()), 0);
  for (int v : rig.eyeball_left) eyeball[v] = 1;
  for (int v : rig.eyeball_right) eyeball[v] = 1;
  std::vector<int> faces = rig.inner_mouth_faces;
  for (int t = 0; t < static_cast<int>(rig.triangles.size()); ++t) {
    const auto& tri = rig.triangles[t];
    if (eyeball[tri[0]] && eyeball[tri[1]] && eyeball[tri[2]]) faces.push_back(t);
  }
  std::sort(faces.begin(), faces.end());
  faces.erase(std::unique(faces.begin(), faces.end()), faces.end());
  return faces;
}

RenderOut blend(const RenderOut& head, const RenderOut& part, const Image& mask) {
  require(head.feature.same_shape(part.feature) && head.width() == mask.width() && head.height() == mask.height() &&
              mask.channels() == 1,
          "blend: resolution mismatch");
  RenderOut out(head.width(), head.height());
  for (std::size_t p = 0; p < mask.pixel_count(); ++p) {
    const float m = mask.data()[p];
    const float keep = 1.0f - m;
    auto f = out.feature.pixel(p);
    const auto fh = head.feature.pixel(p);
    const auto fp = part.feature.pixel(p);
    for (std::size_t c = 0; c < f.size(); ++c) f[c] = fh[c] * keep + fp[c] * m;
    out.opacity.data()[p] = head.opacity.data()[p] * keep + part.opacity.data()[p] * m;
    out.depth.data()[p] = head.depth.data()[p] * keep + part.depth.data()[p] * m;
  }
  return out;
}

Image fuse(const RenderOut& foreground, const Image& background) {
  require(foreground.feature.same_shape(background), "fuse: resolution mismatch");
  Image out(background.width(), background.height(), background.channels());
  for (std::size_t p = 0; p < background.pixel_count(); ++p) {
    const float a = foreground.opacity.data()[p];
    const float rest = 1.0f - a;
    auto o = out.pixel(p);
    const auto f = foreground.feature.pixel(p);
    const auto b = background.pixel(p);
    for (std::size_t c = 0; c < o.size(); ++c) o[c] = f[c] * a + b[c] * rest;
  }
  return out;
}

FullRender render_full(const FullRenderInputs& in, const Camera& camera, const Image& background,
                       const RenderSettings& settings) {
  require(in.head_planes && in.part_planes && in.decoder && in.rig, "render_full: missing inputs");
  FullRender out;
  DeformationOptions def_options = in.deformation;
  def_options.policy = settings.policy;
  std::unique_ptr<DeformationField> owned;
  if (!in.field) owned = deformation_field(*in.rig, in.shape, in.expression, in.pose, def_options);
  const WarpField& field = in.field ? *in.field : *owned;
  const Mesh posed = evaluate_mesh(*in.rig, in.shape, in.expression, in.pose);
  out.bounds = bounding_sphere(posed.vertices);

  GenHeadRender gen = render_genhead(*in.head_planes, *in.part_planes, *in.decoder, field, camera, out.bounds, settings);
  out.head = std::move(gen.head);
  out.part = std::move(gen.part);
  out.coarse = std::move(gen.coarse);

  const std::vector<int> faces = part_mask_faces(*in.rig);
  const std::vector<Vec3> colors = correspondence_colors(*in.rig);
  out.mask = rasterize(posed, faces, camera, colors);
  out.foreground = blend(out.head, out.part, out.mask.mask);
  out.lr = fuse(out.foreground, background);
  return out;
}

}  // namespace headsynth
