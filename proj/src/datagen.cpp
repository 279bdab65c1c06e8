#include "headsynth/datagen.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <set>
#include <sstream>
#include <tuple>

#include "headsynth/binary_io.hpp"
#include "headsynth/deform.hpp"

namespace headsynth {

using nlohmann::json;

namespace {

enum SeedTag : std::uint64_t {
  kTagIdentity = 0x1D,
  kTagShape = 0x5A,
  kTagBackground = 0xB6,
  kTagMotion = 0x30,
  kTagView = 0x40,
  kTagRender = 0x50,
  kTagPoints = 0x60,
  kTagPool = 0x900,
};

double draw(Rng& rng, const Interval& box) { return rng.uniform(box.lo, box.hi); }

}  // namespace

CameraParams sample_camera(Rng& rng) {
  const CameraBox& box = kCameraBox;
  CameraParams c;
  c.pitch = draw(rng, box.pitch);
  c.yaw = draw(rng, box.yaw);
  c.roll = draw(rng, box.roll);
  c.radius = draw(rng, box.radius);
  const double lx = draw(rng, box.look_x);
  const double ly = draw(rng, box.look_y);
  const double lz = draw(rng, box.look_z);
  c.look_at = Vec3(lx, ly, lz);
  c.fov_deg = box.fov_deg;
  return c;
}

Vec3 sample_neck_pose(Rng& rng) {
  const double pitch = draw(rng, kNeckBox.pitch);
  const double yaw = draw(rng, kNeckBox.yaw);
  const double roll = draw(rng, kNeckBox.roll);
  return {pitch, yaw, roll};
}

int rebalance_factor(double yaw_deg) {
  const double a = std::abs(yaw_deg);
  if (a < 15.0) return 1;
  if (a < 30.0) return 2;
  if (a < 45.0) return 4;
  if (a < 60.0) return 8;
  return 16;
}

std::uint64_t background_seed_for(std::uint64_t identity_seed) {
  return derive_seed(identity_seed, {kTagBackground});
}

Image make_background(std::uint64_t background_seed, int width, int height, int channels) {
  require(channels >= 3, "make_background: need at least 3 channels");
  Rng rng(background_seed);
  Image out(width, height, channels);
  constexpr int kWaves = 3;
  for (int c = 0; c < channels; ++c) {
    const bool color = c < 3;
    const double base = color ? rng.uniform(0.2, 0.8) : rng.normal(0.0, 1.0);
    const double slope = color ? rng.uniform(-0.2, 0.2) : rng.normal(0.0, 0.5);
    const double angle = rng.uniform(0.0, 2.0 * std::numbers::pi);
    std::array<double, kWaves> amp{}, fu{}, fv{}, phase{};
    for (int k = 0; k < kWaves; ++k) {
      amp[k] = color ? rng.uniform(0.0, 0.05) : rng.uniform(0.0, 0.3);
      fu[k] = rng.uniform(-6.0, 6.0);
      fv[k] = rng.uniform(-6.0, 6.0);
      phase[k] = rng.uniform(0.0, 2.0 * std::numbers::pi);
    }
    for (int y = 0; y < height; ++y) {
      const double v = (y + 0.5) / height;
      for (int x = 0; x < width; ++x) {
        const double u = (x + 0.5) / width;
        double value = base + slope * (u * std::cos(angle) + v * std::sin(angle) - 0.5);
        for (int k = 0; k < kWaves; ++k) value += amp[k] * std::sin(fu[k] * u + fv[k] * v + phase[k]);
        if (color) value = std::clamp(value, 0.0, 1.0);
        out.at(x, y, c) = static_cast<float>(value);
      }
    }
  }
  return out;
}

ExpressionPool make_expression_pool(int expression_dim, int clips, int clip_length, double scale, std::uint64_t seed) {
  require(expression_dim >= 1 && clips >= 1 && clip_length >= 1, "make_expression_pool: sizes must be positive");
  Rng rng(seed);
  ExpressionPool pool;
  pool.clip_length = clip_length;
  pool.entries.reserve(static_cast<std::size_t>(clips) * clip_length);
  for (int c = 0; c < clips; ++c) {
    Eigen::VectorXd base(expression_dim), amp(expression_dim), freq(expression_dim), phase(expression_dim);
    for (int k = 0; k < expression_dim; ++k) {
      base[k] = rng.normal(0.0, scale);
      amp[k] = rng.uniform(0.0, 0.5 * scale);
      freq[k] = rng.uniform(0.1, 0.6);
      phase[k] = rng.uniform(0.0, 2.0 * std::numbers::pi);
    }
    for (int t = 0; t < clip_length; ++t) {
      ExpressionCode code{Eigen::VectorXd(expression_dim)};
      for (int k = 0; k < expression_dim; ++k) code.values[k] = base[k] + amp[k] * std::sin(freq[k] * t + phase[k]);
      pool.entries.push_back(std::move(code));
    }
  }
  return pool;
}

std::vector<int> draw_clip_segment(const ExpressionPool& pool, int count, Rng& rng) {
  require(count >= 1, "draw_clip_segment: count must be positive");
  require(pool.clips() >= 1, "draw_clip_segment: empty pool");
  const int length = pool.clip_length;
  const int clip = static_cast<int>(rng.index(static_cast<std::uint64_t>(pool.clips())));
  int start = clip * length;
  if (count <= length) start += static_cast<int>(rng.index(static_cast<std::uint64_t>(length - count + 1)));
  std::vector<int> out(static_cast<std::size_t>(count));
  const int size = static_cast<int>(pool.entries.size());
  for (int j = 0; j < count; ++j) out[j] = (start + j) % size;
  return out;
}

PointFeatures record_point_features(const CoarseRecord& coarse, const TriPlane& head_planes, int count, Rng& rng) {
  require(coarse.observed.size() == coarse.head_canonical.size(), "record_point_features: inconsistent record");
  require(count >= 0 && static_cast<std::size_t>(count) <= coarse.observed.size(),
          "record_point_features: " + std::to_string(coarse.observed.size()) + " coarse samples, " +
              std::to_string(count) + " requested");
  std::vector<std::size_t> all(coarse.observed.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  std::vector<std::size_t> chosen;
  chosen.reserve(static_cast<std::size_t>(count));
  std::sample(all.begin(), all.end(), std::back_inserter(chosen), count, rng.engine());
  PointFeatures out;
  out.features.resize(count, head_planes.channels());
  std::vector<double> f(static_cast<std::size_t>(head_planes.channels()));
  for (int i = 0; i < count; ++i) {
    const std::size_t s = chosen[static_cast<std::size_t>(i)];
    out.points.push_back(coarse.observed[s]);
    sample_into(head_planes, coarse.head_canonical[s], f);
    for (int c = 0; c < head_planes.channels(); ++c) out.features(i, c) = f[static_cast<std::size_t>(c)];
  }
  return out;
}

void save_points(const PointFeatures& points, const std::filesystem::path& path) {
  require(static_cast<Eigen::Index>(points.points.size()) == points.features.rows(),
          "save_points: point and feature counts differ");
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  binio::write_magic(os, "PTS1");
  binio::write_u32(os, static_cast<std::uint32_t>(points.points.size()));
  binio::write_u32(os, static_cast<std::uint32_t>(points.features.cols()));
  std::vector<double> row(static_cast<std::size_t>(3 + points.features.cols()));
  for (std::size_t i = 0; i < points.points.size(); ++i) {
    for (int k = 0; k < 3; ++k) row[k] = points.points[i][k];
    for (Eigen::Index c = 0; c < points.features.cols(); ++c)
      row[3 + c] = points.features(static_cast<Eigen::Index>(i), c);
    binio::write_f64s(os, row);
  }
  if (!os) throw IoError("failed writing " + path.string());
}

PointFeatures load_points(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  const std::string what = "point file " + path.string();
  binio::expect_magic(is, "PTS1", what);
  const std::uint32_t count = binio::read_u32(is, what);
  const std::uint32_t channels = binio::read_u32(is, what);
  if (channels > 4096 || count > (1u << 26)) throw ParseError(what + ": implausible header");
  const std::uintmax_t expected = 12 + static_cast<std::uintmax_t>(count) * (3 + channels) * 8;
  if (std::filesystem::file_size(path) != expected) {
    throw ParseError(what + ": header announces " + std::to_string(count) + " points (" + std::to_string(expected) +
                     " bytes), file has " + std::to_string(std::filesystem::file_size(path)) + " bytes");
  }
  PointFeatures out;
  out.features.resize(count, channels);
  std::vector<double> row(3 + static_cast<std::size_t>(channels));
  for (std::uint32_t i = 0; i < count; ++i) {
    binio::read_f64s(is, row, what);
    out.points.emplace_back(row[0], row[1], row[2]);
    for (std::uint32_t c = 0; c < channels; ++c) out.features(i, c) = row[3 + c];
  }
  return out;
}

void DatasetConfig::validate() const {
  require(identities >= 1 && motions >= 1 && views >= 1, "dataset: counts must be positive");
  require(resolution >= 1 && coarse_samples >= 2 && fine_samples >= 0, "dataset: invalid render settings");
  require(points >= 0, "dataset: point count must be non-negative");
  require(triplane_resolution >= 2 && grid_resolution >= 2, "dataset: invalid tri-plane or grid resolution");
  require(shape_scale >= 0.0 && expression_scale >= 0.0, "dataset: scales must be non-negative");
  require(clip_length >= 1 && pool_clips >= 1, "dataset: invalid expression pool size");
}

double effective_shape_scale(const DatasetConfig& config) {
  return config.kind == DatasetKind::static_set ? kStaticShapeFactor * config.shape_scale : config.shape_scale;
}

IdentitySpec make_identity(const DatasetConfig& config, const HeadRig& rig, int index) {
  IdentitySpec id;
  id.index = index;
  id.seed = derive_seed(config.seed, {kTagIdentity, static_cast<std::uint64_t>(index)});
  id.background_seed = background_seed_for(id.seed);
  Rng rng(derive_seed(id.seed, {kTagShape}));
  const double scale = effective_shape_scale(config);
  id.shape.values.resize(rig.shape_basis.cols());
  for (Eigen::Index k = 0; k < id.shape.values.size(); ++k) id.shape.values[k] = rng.normal(0.0, scale);
  return id;
}

namespace {

json vec_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }
Vec3 vec_from(const json& j) { return {j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>()}; }

json interval_json(const Interval& i) { return json::array({i.lo, i.hi}); }

json rig_spec_json(const RigSpec& s) {
  return {{"head_rings", s.head_rings},   {"head_segments", s.head_segments}, {"eye_rings", s.eye_rings},
          {"eye_segments", s.eye_segments}, {"neck_rings", s.neck_rings},     {"neck_segments", s.neck_segments},
          {"shape_dim", s.shape_dim},     {"expression_dim", s.expression_dim}, {"rigid_neck", s.rigid_neck}};
}

RigSpec rig_spec_from(const json& j) {
  RigSpec s;
  s.head_rings = j.at("head_rings");
  s.head_segments = j.at("head_segments");
  s.eye_rings = j.at("eye_rings");
  s.eye_segments = j.at("eye_segments");
  s.neck_rings = j.at("neck_rings");
  s.neck_segments = j.at("neck_segments");
  s.shape_dim = j.at("shape_dim");
  s.expression_dim = j.at("expression_dim");
  s.rigid_neck = j.at("rigid_neck");
  return s;
}

json camera_json(const CameraParams& c) {
  return {{"pitch", c.pitch}, {"yaw", c.yaw},   {"roll", c.roll},
          {"radius", c.radius}, {"look_at", vec_json(c.look_at)}, {"fov_deg", c.fov_deg}};
}

CameraParams camera_from(const json& j) {
  CameraParams c;
  c.pitch = j.at("pitch");
  c.yaw = j.at("yaw");
  c.roll = j.at("roll");
  c.radius = j.at("radius");
  c.look_at = vec_from(j.at("look_at"));
  c.fov_deg = j.at("fov_deg");
  return c;
}

std::string record_id(int i, int m, int v) {
  return "i" + std::to_string(i) + "_m" + std::to_string(m) + "_v" + std::to_string(v);
}

// Label -> (file name, channels); channels 0 marks the PNG preview and -1 the
// point file.
const std::vector<std::tuple<std::string, std::string, int>>& record_files() {
  static const std::vector<std::tuple<std::string, std::string, int>> files{
      {"preview", "preview.png", 0},   {"lr", "lr.pfm", 32},          {"foreground", "fg.pfm", 32},
      {"background", "bg.pfm", 32},    {"opacity", "opacity.pfm", 1}, {"depth", "depth.pfm", 1},
      {"mask", "mask.pfm", 1},         {"correspondence", "corr.pfm", 3}, {"points", "points.pts", -1}};
  return files;
}

ExpressionPool pool_for(const DatasetConfig& config, int expression_dim) {
  return make_expression_pool(expression_dim, config.pool_clips, config.clip_length, config.expression_scale,
                              derive_seed(config.seed, {kTagPool}));
}

PoseCode sample_motion_pose(Rng& rng) {
  const MotionBox box;
  PoseCode pose;
  pose.neck = sample_neck_pose(rng);
  pose.eye = Vec3(draw(rng, box.eye_pitch), draw(rng, box.eye_yaw), 0.0);
  pose.jaw = Vec3(draw(rng, box.jaw_open), 0.0, 0.0);
  return pose;
}

DeformationOptions deformation_options(const DatasetConfig& config) {
  DeformationOptions o;
  o.grid = GridResolution::cube(config.grid_resolution);
  o.policy = config.policy;
  return o;
}

std::string read_bytes(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

}  // namespace

DatasetManifest make_dataset(const DatasetConfig& input, const std::filesystem::path& out_dir) {
  DatasetConfig config = input;
  if (config.kind == DatasetKind::static_set) config.motions = 1;
  config.validate();

  const HeadRig rig = procedural_rig(config.rig, config.rig_seed);
  const ExpressionPool pool = pool_for(config, static_cast<int>(rig.expression_basis.cols()));
  DatasetManifest manifest;
  manifest.config = config;

  std::error_code ec;
  std::filesystem::create_directories(out_dir / "records", ec);
  if (ec) throw IoError("cannot create " + (out_dir / "records").string() + ": " + ec.message());

  for (int i = 0; i < config.identities; ++i) {
    IdentitySpec identity = make_identity(config, rig, i);
    const HeadAppearance app = bake_head_appearance(identity.seed, config.triplane_resolution, 32);
    const Image background = make_background(identity.background_seed, config.resolution, config.resolution);

    Rng motion_rng(derive_seed(config.seed, {kTagMotion, static_cast<std::uint64_t>(i)}));
    const std::vector<int> segment = draw_clip_segment(pool, config.motions, motion_rng);
    for (int m = 0; m < config.motions; ++m) {
      const ExpressionCode& expression = pool.entries[static_cast<std::size_t>(segment[m])];
      const PoseCode pose = sample_motion_pose(motion_rng);
      const auto field = deformation_field(rig, identity.shape, expression, pose, deformation_options(config));

      Rng view_rng(derive_seed(config.seed, {kTagView, static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(m)}));
      for (int v = 0; v < config.views; ++v) {
        RecordEntry rec;
        rec.id = record_id(i, m, v);
        rec.identity = i;
        rec.motion = m;
        rec.view = v;
        rec.camera = sample_camera(view_rng);
        rec.pose = pose;
        rec.expression_index = segment[m];
        rec.rebalance = rebalance_factor(rec.camera.yaw * 180.0 / std::numbers::pi);

        const std::uint64_t key[] = {static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(m),
                                     static_cast<std::uint64_t>(v)};
        RenderSettings settings;
        settings.coarse_samples = config.coarse_samples;
        settings.fine_samples = config.fine_samples;
        settings.seed = derive_seed(config.seed, {kTagRender, key[0], key[1], key[2]});
        settings.policy = config.policy;
        settings.record_coarse = true;

        FullRenderInputs in;
        in.head_planes = &app.head;
        in.part_planes = &app.part;
        in.decoder = &app.decoder;
        in.rig = &rig;
        in.shape = identity.shape;
        in.expression = expression;
        in.pose = pose;
        in.deformation = deformation_options(config);
        in.field = field.get();
        const Camera camera = make_camera(rec.camera, config.resolution, config.resolution);
        const FullRender full = render_full(in, camera, background, settings);

        Rng point_rng(derive_seed(config.seed, {kTagPoints, key[0], key[1], key[2]}));
        const PointFeatures points = record_point_features(full.coarse, app.head, config.points, point_rng);

        const std::filesystem::path rel = std::filesystem::path("records") / rec.id;
        std::filesystem::create_directories(out_dir / rel, ec);
        if (ec) throw IoError("cannot create " + (out_dir / rel).string() + ": " + ec.message());
        for (const auto& [label, name, channels] : record_files()) {
          rec.files[label] = (rel / name).generic_string();
        }
        auto path = [&](const std::string& label) { return out_dir / rec.files.at(label); };
        write_png(full.lr.channel_slice(0, 3), path("preview"));
        write_pfm(full.lr, path("lr"));
        write_pfm(full.foreground.feature, path("foreground"));
        write_pfm(background, path("background"));
        write_pfm(full.foreground.opacity, path("opacity"));
        write_pfm(full.foreground.depth, path("depth"));
        write_pfm(full.mask.mask, path("mask"));
        write_pfm(full.mask.correspondence, path("correspondence"));
        save_points(points, path("points"));
        manifest.records.push_back(std::move(rec));
      }
    }
    manifest.identities.push_back(std::move(identity));
  }

  const std::filesystem::path manifest_path = out_dir / kManifestName;
  std::ofstream os(manifest_path, std::ios::binary);
  if (!os) throw IoError("cannot open " + manifest_path.string() + " for writing");
  os << manifest_to_json(manifest);
  if (!os) throw IoError("failed writing " + manifest_path.string());
  return manifest;
}

DatasetManifest make_dynamic_set(DatasetConfig config, const std::filesystem::path& out_dir) {
  config.kind = DatasetKind::dynamic;
  return make_dataset(config, out_dir);
}

DatasetManifest make_static_set(DatasetConfig config, const std::filesystem::path& out_dir) {
  config.kind = DatasetKind::static_set;
  config.motions = 1;
  return make_dataset(config, out_dir);
}

std::string manifest_to_json(const DatasetManifest& m) {
  const DatasetConfig& c = m.config;
  json j;
  j["format_version"] = m.format_version;
  j["kind"] = "headsynth-dataset";
  j["set"] = c.kind == DatasetKind::dynamic ? "dynamic" : "static";
  j["seed"] = c.seed;
  j["rig"] = {{"generator", "procedural"}, {"seed", c.rig_seed}, {"spec", rig_spec_json(c.rig)}};
  j["bake"] = {{"spec", "ellipsoid-head"}, {"resolution", c.triplane_resolution}, {"channels", 32}};
  j["counts"] = {{"identities", c.identities}, {"motions_per_identity", c.motions}, {"views_per_motion", c.views}};
  j["render"] = {{"resolution", c.resolution},
                 {"coarse_samples", c.coarse_samples},
                 {"fine_samples", c.fine_samples},
                 {"grid_resolution", c.grid_resolution},
                 {"points", c.points}};
  const CameraBox& cb = kCameraBox;
  const NeckBox& nb = kNeckBox;
  const MotionBox mb;
  j["sampling"] = {
      {"camera",
       {{"pitch", interval_json(cb.pitch)},
        {"yaw", interval_json(cb.yaw)},
        {"roll", interval_json(cb.roll)},
        {"radius", interval_json(cb.radius)},
        {"look_at", json::array({interval_json(cb.look_x), interval_json(cb.look_y), interval_json(cb.look_z)})},
        {"fov_deg", cb.fov_deg}}},
      {"neck", {{"pitch", interval_json(nb.pitch)}, {"yaw", interval_json(nb.yaw)}, {"roll", interval_json(nb.roll)}}},
      {"motion",
       {{"eye_pitch", interval_json(mb.eye_pitch)},
        {"eye_yaw", interval_json(mb.eye_yaw)},
        {"jaw_open", interval_json(mb.jaw_open)}}},
      {"shape_scale", c.shape_scale},
      {"static_shape_factor", kStaticShapeFactor},
      {"expression_scale", c.expression_scale},
      {"clip_length", c.clip_length},
      {"pool_clips", c.pool_clips}};
  json ids = json::array();
  for (const IdentitySpec& id : m.identities) {
    ids.push_back({{"index", id.index},
                   {"seed", id.seed},
                   {"background_seed", id.background_seed},
                   {"shape", std::vector<double>(id.shape.values.data(), id.shape.values.data() + id.shape.values.size())}});
  }
  j["identities"] = std::move(ids);
  json recs = json::array();
  for (const RecordEntry& r : m.records) {
    recs.push_back({{"id", r.id},
                    {"identity", r.identity},
                    {"motion", r.motion},
                    {"view", r.view},
                    {"camera", camera_json(r.camera)},
                    {"pose", {{"eye", vec_json(r.pose.eye)}, {"jaw", vec_json(r.pose.jaw)}, {"neck", vec_json(r.pose.neck)}}},
                    {"expression_index", r.expression_index},
                    {"rebalance", r.rebalance},
                    {"files", r.files}});
  }
  j["records"] = std::move(recs);
  return j.dump(2) + "\n";
}

DatasetManifest manifest_from_json(const std::string& text, const std::string& source) {
  const std::string what = "manifest " + source;
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(what + ": " + e.what());
  }
  try {
    DatasetManifest m;
    m.format_version = j.at("format_version");
    if (m.format_version != 1) {
      throw ValidationError(what + ": unsupported format_version " + std::to_string(m.format_version));
    }
    DatasetConfig& c = m.config;
    c.kind = j.at("set").get<std::string>() == "static" ? DatasetKind::static_set : DatasetKind::dynamic;
    c.seed = j.at("seed");
    c.rig_seed = j.at("rig").at("seed");
    c.rig = rig_spec_from(j.at("rig").at("spec"));
    c.triplane_resolution = j.at("bake").at("resolution");
    c.identities = j.at("counts").at("identities");
    c.motions = j.at("counts").at("motions_per_identity");
    c.views = j.at("counts").at("views_per_motion");
    const json& r = j.at("render");
    c.resolution = r.at("resolution");
    c.coarse_samples = r.at("coarse_samples");
    c.fine_samples = r.at("fine_samples");
    c.grid_resolution = r.at("grid_resolution");
    c.points = r.at("points");
    const json& s = j.at("sampling");
    c.shape_scale = s.at("shape_scale");
    c.expression_scale = s.at("expression_scale");
    c.clip_length = s.at("clip_length");
    c.pool_clips = s.at("pool_clips");
    for (const json& e : j.at("identities")) {
      IdentitySpec id;
      id.index = e.at("index");
      id.seed = e.at("seed");
      id.background_seed = e.at("background_seed");
      const auto shape = e.at("shape").get<std::vector<double>>();
      id.shape.values = Eigen::Map<const Eigen::VectorXd>(shape.data(), static_cast<Eigen::Index>(shape.size()));
      m.identities.push_back(std::move(id));
    }
    for (const json& e : j.at("records")) {
      RecordEntry rec;
      rec.id = e.at("id");
      rec.identity = e.at("identity");
      rec.motion = e.at("motion");
      rec.view = e.at("view");
      rec.camera = camera_from(e.at("camera"));
      rec.pose.eye = vec_from(e.at("pose").at("eye"));
      rec.pose.jaw = vec_from(e.at("pose").at("jaw"));
      rec.pose.neck = vec_from(e.at("pose").at("neck"));
      rec.expression_index = e.at("expression_index");
      rec.rebalance = e.at("rebalance");
      rec.files = e.at("files").get<std::map<std::string, std::string>>();
      m.records.push_back(std::move(rec));
    }
    return m;
  } catch (const json::exception& e) {
    throw ParseError(what + ": " + e.what());
  }
}

DatasetManifest load_manifest(const std::filesystem::path& dataset_dir) {
  const std::filesystem::path path = dataset_dir / kManifestName;
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return manifest_from_json(ss.str(), path.string());
}

ValidationReport validate_dataset(const std::filesystem::path& dir) {
  ValidationReport report;
  auto check = [&](bool ok, const std::string& message) {
    ++report.checks;
    if (!ok) report.failures.push_back(message);
    return ok;
  };
  DatasetManifest m;
  try {
    m = load_manifest(dir);
  } catch (const std::exception& e) {
    check(false, e.what());
    return report;
  }
  ++report.checks;  // manifest parsed with a supported format_version
  const DatasetConfig& c = m.config;
  const int expected = c.identities * c.motions * c.views;
  check(static_cast<int>(m.records.size()) == expected,
        "manifest lists " + std::to_string(m.records.size()) + " records, counts imply " + std::to_string(expected));
  check(static_cast<int>(m.identities.size()) == c.identities, "manifest identity list does not match counts");

  std::map<int, std::string> background_bytes;
  std::map<int, std::set<int>> motions_per_identity;
  for (const RecordEntry& rec : m.records) {
    motions_per_identity[rec.identity].insert(rec.motion);
    for (const auto& [label, name, channels] : record_files()) {
      const auto it = rec.files.find(label);
      if (!check(it != rec.files.end(), "record " + rec.id + ": no '" + label + "' entry")) continue;
      const std::filesystem::path path = dir / it->second;
      if (!check(std::filesystem::exists(path), "record " + rec.id + ": missing file " + it->second)) continue;
      try {
        if (channels == 0) {
          const Image png = read_png(path);
          check(png.width() == c.resolution && png.height() == c.resolution,
                "record " + rec.id + ": " + it->second + " has the wrong resolution");
        } else if (channels > 0) {
          const Image map = read_pfm(path, channels);
          check(map.width() == c.resolution && map.height() == c.resolution && map.channels() == channels,
                "record " + rec.id + ": " + it->second + " is " + std::to_string(map.width()) + "x" +
                    std::to_string(map.height()) + "x" + std::to_string(map.channels()) + ", expected " +
                    std::to_string(c.resolution) + "x" + std::to_string(c.resolution) + "x" +
                    std::to_string(channels));
        } else {
          const PointFeatures pts = load_points(path);
          check(static_cast<int>(pts.points.size()) == c.points && pts.features.cols() == 32,
                "record " + rec.id + ": point file holds " + std::to_string(pts.points.size()) + " points with " +
                    std::to_string(pts.features.cols()) + " channels, expected " + std::to_string(c.points) +
                    " with 32");
        }
      } catch (const std::exception& e) {
        check(false, "record " + rec.id + ": " + e.what());
      }
    }
    const auto bg = rec.files.find("background");
    if (bg != rec.files.end() && std::filesystem::exists(dir / bg->second)) {
      const std::string bytes = read_bytes(dir / bg->second);
      auto [it, inserted] = background_bytes.emplace(rec.identity, bytes);
      if (!inserted) {
        check(it->second == bytes, "record " + rec.id + ": background differs from identity " +
                                       std::to_string(rec.identity) + "'s other records");
      }
    }
  }
  for (const auto& [identity, motions] : motions_per_identity) {
    check(static_cast<int>(motions.size()) == c.motions,
          "identity " + std::to_string(identity) + " has " + std::to_string(motions.size()) + " motions, expected " +
              std::to_string(c.motions));
  }
  return report;
}

double point_feature_error(const std::filesystem::path& dir, int max_records) {
  const DatasetManifest m = load_manifest(dir);
  DatasetConfig config = m.config;
  const HeadRig rig = procedural_rig(config.rig, config.rig_seed);
  const ExpressionPool pool = pool_for(config, static_cast<int>(rig.expression_basis.cols()));
  double worst = 0.0;
  int done = 0;
  std::map<int, HeadAppearance> appearance;
  std::map<std::pair<int, int>, std::unique_ptr<DeformationField>> fields;
  for (const RecordEntry& rec : m.records) {
    if (max_records >= 0 && done >= max_records) break;
    ++done;
    const IdentitySpec& id = m.identities.at(static_cast<std::size_t>(rec.identity));
    auto app = appearance.find(rec.identity);
    if (app == appearance.end()) {
      app = appearance.emplace(rec.identity, bake_head_appearance(id.seed, config.triplane_resolution, 32)).first;
    }
    auto& field = fields[{rec.identity, rec.motion}];
    if (!field) {
      field = deformation_field(rig, id.shape, pool.entries.at(static_cast<std::size_t>(rec.expression_index)),
                                rec.pose, deformation_options(config));
    }
    const PointFeatures pts = load_points(dir / rec.files.at("points"));
    std::vector<double> f(32);
    for (std::size_t i = 0; i < pts.points.size(); ++i) {
      const Vec3& x = pts.points[i];
      sample_into(app->second.head, x + (*field)(x).dx_head, f);
      for (int c = 0; c < 32; ++c) {
        worst = std::max(worst, std::abs(f[static_cast<std::size_t>(c)] - pts.features(static_cast<Eigen::Index>(i), c)));
      }
    }
  }
  return worst;
}

}  // namespace headsynth
