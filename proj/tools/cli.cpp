#include "cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "headsynth/datagen.hpp"
#include "headsynth/deform.hpp"
#include "headsynth/common.hpp"
#include "headsynth/headmodel.hpp"
#include "headsynth/parallel.hpp"
#include "headsynth/render.hpp"
#include "headsynth/spatial.hpp"
#include "headsynth/triplane.hpp"
#include "headsynth/verify.hpp"

namespace headsynth::cli {
namespace {

using json = nlohmann::ordered_json;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct RenderOptions {
  int resolution = kDefaultRenderResolution;
  int coarse = kDefaultCoarseSamples;
  int fine = kDefaultFineSamples;
  int triplane_resolution = 128;
  double pitch = 0.1;
  double yaw = 0.3;
  double roll = 0.0;
  double radius = 4.0;
  std::vector<double> neck{0.0, 0.0, 0.0};
  double jaw = 0.1;
  std::uint64_t identity_seed = 1;
};

struct DatasetOptions {
  int identities = 2;
  int motions = 3;
  int views = 2;
  int resolution = kDefaultRenderResolution;
  int points = kDefaultPointCount;
  int triplane_resolution = 256;
  int grid_resolution = 32;
};

// Everything a run can be configured with; JSON overlay first, flags last.
struct Settings {
  std::uint64_t seed = 0;
  int threads = 0;  // 0 keeps the OpenMP default
  bool serial = false;
  std::uint64_t rig_seed = 0;
  bool rigid_neck = false;
  RenderOptions render;
  DatasetOptions dataset;
};

template <class T>
void take(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw UsageError(where + "." + key + ": " + e.what());
  }
}

void reject_unknown(const json& j, std::initializer_list<const char*> keys, const std::string& where) {
  if (!j.is_object()) throw UsageError(where + ": expected a JSON object");
  for (const auto& [k, v] : j.items()) {
    if (std::find_if(keys.begin(), keys.end(), [&](const char* x) { return k == x; }) == keys.end()) {
      throw UsageError(where + ": unknown key \"" + k + "\"");
    }
  }
}

void apply_config(const json& j, Settings& s) {
  reject_unknown(j, {"seed", "threads", "serial", "rig", "render", "dataset"}, "config");
  take(j, "seed", s.seed, "config");
  take(j, "threads", s.threads, "config");
  take(j, "serial", s.serial, "config");
  if (j.contains("rig")) {
    const json& r = j["rig"];
    reject_unknown(r, {"seed", "rigid_neck"}, "config.rig");
    take(r, "seed", s.rig_seed, "config.rig");
    take(r, "rigid_neck", s.rigid_neck, "config.rig");
  }
  if (j.contains("render")) {
    const json& r = j["render"];
    reject_unknown(r, {"resolution", "coarse", "fine", "triplane_resolution", "pitch", "yaw", "roll", "radius", "neck",
                       "jaw", "identity_seed"},
                   "config.render");
    RenderOptions& o = s.render;
    take(r, "resolution", o.resolution, "config.render");
    take(r, "coarse", o.coarse, "config.render");
    take(r, "fine", o.fine, "config.render");
    take(r, "triplane_resolution", o.triplane_resolution, "config.render");
    take(r, "pitch", o.pitch, "config.render");
    take(r, "yaw", o.yaw, "config.render");
    take(r, "roll", o.roll, "config.render");
    take(r, "radius", o.radius, "config.render");
    take(r, "neck", o.neck, "config.render");
    take(r, "jaw", o.jaw, "config.render");
    take(r, "identity_seed", o.identity_seed, "config.render");
  }
  if (j.contains("dataset")) {
    const json& d = j["dataset"];
    reject_unknown(d, {"identities", "motions", "views", "resolution", "points", "triplane_resolution",
                       "grid_resolution"},
                   "config.dataset");
    DatasetOptions& o = s.dataset;
    take(d, "identities", o.identities, "config.dataset");
    take(d, "motions", o.motions, "config.dataset");
    take(d, "views", o.views, "config.dataset");
    take(d, "resolution", o.resolution, "config.dataset");
    take(d, "points", o.points, "config.dataset");
    take(d, "triplane_resolution", o.triplane_resolution, "config.dataset");
    take(d, "grid_resolution", o.grid_resolution, "config.dataset");
  }
}

json settings_json(const Settings& s) {
  const RenderOptions& r = s.render;
  const DatasetOptions& d = s.dataset;
  return {{"seed", s.seed},
          {"threads", s.threads > 0 ? s.threads : max_threads()},
          {"serial", s.serial},
          {"rig", {{"seed", s.rig_seed}, {"rigid_neck", s.rigid_neck}}},
          {"render",
           {{"resolution", r.resolution}, {"coarse", r.coarse}, {"fine", r.fine},
            {"triplane_resolution", r.triplane_resolution}, {"pitch", r.pitch}, {"yaw", r.yaw}, {"roll", r.roll},
            {"radius", r.radius}, {"neck", r.neck}, {"jaw", r.jaw}, {"identity_seed", r.identity_seed}}},
          {"dataset",
           {{"identities", d.identities}, {"motions", d.motions}, {"views", d.views}, {"resolution", d.resolution},
            {"points", d.points}, {"triplane_resolution", d.triplane_resolution},
            {"grid_resolution", d.grid_resolution}}}};
}

// The config path has to be known before the flags are bound so that flags
// can override values from the file.
std::optional<std::string> find_config_path(int argc, const char* const* argv) {
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--config") {
      if (i + 1 >= argc) throw UsageError("--config needs a file argument");
      return std::string(argv[i + 1]);
    }
    if (a.starts_with("--config=")) return a.substr(9);
  }
  return std::nullopt;
}

json read_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw UsageError("cannot open config file " + path);
  try {
    return json::parse(is);
  } catch (const json::parse_error& e) {
    throw UsageError("config file " + path + ": " + e.what());
  }
}

RigSpec rig_spec(const Settings& s) {
  RigSpec spec;
  spec.rigid_neck = s.rigid_neck;
  return spec;
}

ExecPolicy policy(const Settings& s) { return s.serial ? ExecPolicy::serial : ExecPolicy::parallel; }

int cmd_rig_gen(const Settings& s, const std::string& out_path, std::ostream& out) {
  const HeadRig rig = procedural_rig(rig_spec(s), s.rig_seed);
  save_rig(rig, out_path);
  out << "wrote " << out_path << " (" << rig.template_vertices.size() << " vertices, "
      << rig.triangles.size() << " triangles)\n";
  return kExitOk;
}

int cmd_render(const Settings& s, const std::string& out_dir, std::ostream& out) {
  const RenderOptions& o = s.render;
  if (o.neck.size() != 3) throw UsageError("render: neck needs three components");
  const HeadRig rig = procedural_rig(rig_spec(s), s.rig_seed);
  const HeadAppearance app = bake_head_appearance(o.identity_seed, o.triplane_resolution, 32);

  FullRenderInputs in;
  in.head_planes = &app.head;
  in.part_planes = &app.part;
  in.decoder = &app.decoder;
  in.rig = &rig;
  in.shape = ShapeCode::zero(rig.shape_dim());
  in.expression = ExpressionCode::zero(rig.expression_dim());
  in.pose.neck = Vec3(o.neck[0], o.neck[1], o.neck[2]);
  in.pose.jaw = Vec3(o.jaw, 0.0, 0.0);
  in.deformation.policy = policy(s);

  RenderSettings settings;
  settings.coarse_samples = o.coarse;
  settings.fine_samples = o.fine;
  settings.seed = s.seed;
  settings.policy = policy(s);
  const Camera camera = camera_from_angles(o.pitch, o.yaw, o.roll, o.radius, Vec3(0.0, 0.0, 0.03),
                                           kDefaultFovDegrees, o.resolution, o.resolution);
  const Image background = make_background(background_seed_for(o.identity_seed), o.resolution, o.resolution);
  const FullRender full = render_full(in, camera, background, settings);

  const std::filesystem::path dir(out_dir);
  std::filesystem::create_directories(dir);
  write_png(full.lr.channel_slice(0, 3), dir / "preview.png");
  write_pfm(full.lr, dir / "lr.pfm");
  write_pfm(full.foreground.feature, dir / "fg.pfm");
  write_pfm(full.foreground.opacity, dir / "opacity.pfm");
  write_pfm(full.foreground.depth, dir / "depth.pfm");
  write_pfm(full.mask.mask, dir / "mask.pfm");
  out << "wrote " << dir.string() << " (" << o.resolution << "x" << o.resolution << ")\n";
  return kExitOk;
}

int cmd_dataset_gen(const Settings& s, bool is_static, const std::string& out_dir, std::ostream& out) {
  DatasetConfig config;
  config.kind = is_static ? DatasetKind::static_set : DatasetKind::dynamic;
  config.identities = s.dataset.identities;
  config.motions = s.dataset.motions;
  config.views = s.dataset.views;
  config.resolution = s.dataset.resolution;
  config.points = s.dataset.points;
  config.triplane_resolution = s.dataset.triplane_resolution;
  config.grid_resolution = s.dataset.grid_resolution;
  config.seed = s.seed;
  config.rig = rig_spec(s);
  config.rig_seed = s.rig_seed;
  config.policy = policy(s);
  const DatasetManifest m = make_dataset(config, out_dir);
  out << "wrote " << m.records.size() << " records to " << out_dir << "\n";
  return kExitOk;
}

int cmd_dataset_validate(const std::string& dir, int recompute, std::ostream& out) {
  const ValidationReport report = validate_dataset(dir);
  for (const std::string& f : report.failures) out << "FAIL " << f << "\n";
  bool ok = report.ok();
  out << report.checks << " checks, " << report.failures.size() << " failures\n";
  if (ok && recompute != 0) {
    const double error = point_feature_error(dir, recompute);
    ok = error <= 1e-6;
    char buf[128];
    std::snprintf(buf, sizeof buf, "point-feature recomputation: max error %.3e (%s)\n", error, ok ? "ok" : "FAIL");
    out << buf;
  }
  return ok ? kExitOk : kExitValidation;
}

int cmd_verify(const Settings& s, bool acceptance, bool properties, const std::string& scratch, std::ostream& out) {
  VerifyOptions options;
  options.seed = s.seed;
  options.scratch_dir = scratch.empty() ? std::filesystem::temp_directory_path() / "headsynth_verify"
                                        : std::filesystem::path(scratch);
  std::filesystem::create_directories(options.scratch_dir);
  if (!acceptance && !properties) acceptance = properties = true;
  int failed = 0, total = 0;
  auto run_all = [&](const std::vector<NamedCheck>& checks, const char* label) {
    for (const NamedCheck& c : checks) {
      const CheckResult r = run_check(c, options);
      char buf[160];
      std::snprintf(buf, sizeof buf, "[%s] %s %-44s %7.2fs  ", r.passed ? "PASS" : "FAIL", label, r.name.c_str(),
                    r.seconds);
      out << buf << r.detail << "\n" << std::flush;
      failed += !r.passed;
      ++total;
    }
  };
  if (acceptance) run_all(acceptance_checks(), "acceptance");
  if (properties) run_all(property_checks(), "property  ");
  out << total - failed << " of " << total << " checks passed\n";
  return failed == 0 ? kExitOk : kExitValidation;
}

template <class Fn>
double best_seconds(int repeat, Fn&& fn) {
  double best = std::numeric_limits<double>::infinity();
  for (int r = 0; r < repeat; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    fn();
    best = std::min(best, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  }
  return best;
}

int cmd_bench(const Settings& s, int repeat, std::ostream& out) {
  const HeadRig rig = procedural_rig(rig_spec(s), s.rig_seed);
  PoseCode pose;
  pose.neck = Vec3(0.1, 0.3, 0.0);
  const ShapeCode shape = ShapeCode::zero(rig.shape_dim());
  const ExpressionCode expression = ExpressionCode::zero(rig.expression_dim());
  const Mesh posed = evaluate_mesh(rig, shape, expression, pose);
  const std::vector<Vec3> probes = near_surface_points(posed, 2000, 0.05, s.seed);
  const TriangleBvh bvh(posed);
  double sink = 0.0;
  auto row = [&](const char* name, double seconds) {
    char buf[128];
    std::snprintf(buf, sizeof buf, "%-40s %10.4f s\n", name, seconds);
    out << buf;
  };
  out << "threads: " << max_threads() << "\n";
  row("closest point, BVH (2000 queries)", best_seconds(repeat, [&] {
        for (const Vec3& x : probes) sink += bvh.closest(x).squared_distance;
      }));
  row("closest point, exhaustive (2000 queries)", best_seconds(repeat, [&] {
        for (const Vec3& x : probes) sink += closest_point_exhaustive(posed, x).squared_distance;
      }));
  for (ExecPolicy p : {ExecPolicy::serial, ExecPolicy::parallel}) {
    row(p == ExecPolicy::serial ? "SF grid 32^3, serial" : "SF grid 32^3, parallel", best_seconds(repeat, [&] {
          sink += build_sf_grid(rig, shape, expression, pose, GridResolution::cube(32), p).values.size();
        }));
  }
  const AnalyticSpec spec = make_analytic_spec("ellipsoid-head", s.seed);
  const BakedField baked = bake_analytic(spec, 128, 32);
  const BoundingSphere bounds = bounding_sphere(posed.vertices);
  const Camera camera = camera_from_angles(0.1, 0.3, 0.0, 4.0, Vec3(0.0, 0.0, 0.03));
  for (ExecPolicy p : {ExecPolicy::serial, ExecPolicy::parallel}) {
    RenderSettings settings;
    settings.policy = p;
    row(p == ExecPolicy::serial ? "render 64^2 48+48, serial" : "render 64^2 48+48, parallel",
        best_seconds(repeat, [&] {
          sink += render_single(baked.planes, baked.decoder, IdentityWarp{}, camera, bounds, settings)
                      .opacity.data()[0];
        }));
  }
  if (sink == -1.0) out << "";
  return kExitOk;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  Settings s;
  CLI::App app{"Procedural head model, deformation fields, tri-plane rendering and dataset synthesis"};
  app.name("headsynth");
  app.require_subcommand(1);
  app.fallthrough();  // global options may follow the subcommand
  try {
    if (const auto path = find_config_path(argc, argv)) apply_config(read_config(*path), s);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n" << app.help();
    return kExitUsage;
  }

  std::string config_path;
  app.add_option("--config", config_path, "JSON file with settings; flags override it");
  app.add_option("--threads", s.threads, "OpenMP thread count (0 = default)")->check(CLI::NonNegativeNumber);
  app.add_option("--seed", s.seed, "Base seed");
  app.add_flag("--serial", s.serial, "Use the serial reference kernels");

  auto* rig = app.add_subcommand("rig", "Procedural rig tools")->require_subcommand(1);
  auto* rig_gen = rig->add_subcommand("gen", "Write the procedural rig as JSON");
  std::string rig_out;
  rig_gen->add_option("--out", rig_out, "Output JSON path")->required();
  rig_gen->add_option("--rig-seed", s.rig_seed, "Rig generator seed");
  rig_gen->add_flag("--rigid-neck", s.rigid_neck, "Every vertex follows the neck joint");

  auto* render = app.add_subcommand("render", "Render one full frame of the analytic head");
  std::string render_out;
  render->add_option("--out", render_out, "Output directory")->required();
  render->add_option("--resolution", s.render.resolution, "Image width and height")->check(CLI::PositiveNumber);
  render->add_option("--coarse", s.render.coarse, "Coarse samples per ray")->check(CLI::Range(2, 4096));
  render->add_option("--fine", s.render.fine, "Fine samples per ray")->check(CLI::Range(0, 4096));
  render->add_option("--triplane-resolution", s.render.triplane_resolution, "Baked plane resolution")
      ->check(CLI::Range(2, 4096));
  render->add_option("--pitch", s.render.pitch, "Camera pitch (rad)");
  render->add_option("--yaw", s.render.yaw, "Camera yaw (rad)");
  render->add_option("--roll", s.render.roll, "Camera roll (rad)");
  render->add_option("--radius", s.render.radius, "Camera distance")->check(CLI::PositiveNumber);
  render->add_option("--neck", s.render.neck, "Neck axis-angle (3 values)")->expected(3);
  render->add_option("--jaw", s.render.jaw, "Jaw opening (rad)");
  render->add_option("--identity-seed", s.render.identity_seed, "Appearance seed");

  auto* dataset = app.add_subcommand("dataset", "Dataset generation and validation")->require_subcommand(1);
  auto* gen = dataset->add_subcommand("gen", "Generate a dataset");
  bool dynamic = false, is_static = false;
  std::string gen_out;
  auto* dyn_flag = gen->add_flag("--dynamic", dynamic, "Dynamic set (several motions per identity)");
  auto* static_flag = gen->add_flag("--static", is_static, "Static set (one motion, wider shape spread)");
  dyn_flag->excludes(static_flag);
  gen->add_option("--ids", s.dataset.identities, "Identities")->check(CLI::PositiveNumber);
  gen->add_option("--motions", s.dataset.motions, "Motions per identity")->check(CLI::PositiveNumber);
  gen->add_option("--views", s.dataset.views, "Views per motion")->check(CLI::PositiveNumber);
  gen->add_option("--resolution", s.dataset.resolution, "Image width and height")->check(CLI::PositiveNumber);
  gen->add_option("--points", s.dataset.points, "Recorded points per record")->check(CLI::NonNegativeNumber);
  gen->add_option("--triplane-resolution", s.dataset.triplane_resolution, "Baked plane resolution")
      ->check(CLI::Range(2, 4096));
  gen->add_option("--grid-resolution", s.dataset.grid_resolution, "Deformation grid resolution")
      ->check(CLI::Range(2, 512));
  gen->add_option("--out", gen_out, "Output directory")->required();
  auto* validate = dataset->add_subcommand("validate", "Check a generated dataset");
  std::string validate_dir;
  int recompute = -1;
  validate->add_option("dir", validate_dir, "Dataset directory")->required();
  validate->add_option("--recompute", recompute, "Records whose point features are recomputed (-1 all, 0 none)");

  auto* verify = app.add_subcommand("verify", "Run the acceptance and property checks");
  bool acceptance_only = false, properties_only = false;
  std::string scratch;
  verify->add_flag("--acceptance", acceptance_only, "Only the acceptance criteria");
  verify->add_flag("--properties", properties_only, "Only the property checks");
  verify->add_option("--scratch", scratch, "Scratch directory for generated datasets");

  auto* bench = app.add_subcommand("bench", "Time the main kernels, serial against parallel");
  int repeat = 3;
  bench->add_option("--repeat", repeat, "Repetitions; the best time is reported")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    // Report against the deepest subcommand that was selected.
    const CLI::App* where = &app;
    while (!where->get_subcommands().empty()) where = where->get_subcommands().front();
    err << "error: " << e.what() << "\n" << where->help();
    return kExitUsage;
  }
  if (gen->parsed() && !dynamic && !is_static) {
    err << "error: dataset gen needs --dynamic or --static\n" << gen->help();
    return kExitUsage;
  }

  set_thread_count(s.threads);
  err << "resolved config: " << settings_json(s).dump() << "\n";
  try {
    if (rig_gen->parsed()) return cmd_rig_gen(s, rig_out, out);
    if (render->parsed()) return cmd_render(s, render_out, out);
    if (gen->parsed()) return cmd_dataset_gen(s, is_static, gen_out, out);
    if (validate->parsed()) return cmd_dataset_validate(validate_dir, recompute, out);
    if (verify->parsed()) return cmd_verify(s, acceptance_only, properties_only, scratch, out);
    if (bench->parsed()) return cmd_bench(s, repeat, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitValidation;
  }
  err << app.help();
  return kExitUsage;
}

}  // namespace headsynth::cli
