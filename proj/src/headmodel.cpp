#include "headsynth/headmodel.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include <json.hpp>

#include "headsynth/rng.hpp"

namespace headsynth {

namespace {

using nlohmann::json;

struct Rigid {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  Vec3 apply(const Vec3& x) const { return rotation * x + translation; }
  Rigid then(const Rigid& inner) const {  // this ∘ inner
    return {rotation * inner.rotation, rotation * inner.translation + translation};
  }
};

Rigid rotation_about(const Vec3& axis_angle, const Vec3& pivot) {
  Rigid r;
  r.rotation = rotation_from_axis_angle(axis_angle);
  r.translation = pivot - r.rotation * pivot;
  return r;
}

double smoothstep(double edge0, double edge1, double x) {
  const double t = std::clamp((x - edge0) / (edge1 - edge0), 0.0, 1.0);
  return t * t * (3.0 - 2.0 * t);
}

bool all_finite(const Eigen::MatrixXd& m) { return m.allFinite(); }

// UV ellipsoid with poles on +/-y. Outward-facing, counter-clockwise triangles.
// Returns the index of the first appended vertex.
int append_ellipsoid(Mesh& mesh, const Vec3& center, const Vec3& radii, int rings, int segments) {
  const int base = static_cast<int>(mesh.vertices.size());
  const double pi = std::numbers::pi;
  mesh.vertices.push_back(center + Vec3(0.0, radii.y(), 0.0));
  for (int r = 1; r < rings; ++r) {
    const double theta = pi * r / rings;
    for (int s = 0; s < segments; ++s) {
      const double phi = 2.0 * pi * s / segments;
      const Vec3 unit(std::sin(theta) * std::sin(phi), std::cos(theta), std::sin(theta) * std::cos(phi));
      mesh.vertices.push_back(center + unit.cwiseProduct(radii));
    }
  }
  mesh.vertices.push_back(center - Vec3(0.0, radii.y(), 0.0));
  const int south = static_cast<int>(mesh.vertices.size()) - 1;

  auto ring_vertex = [&](int r, int s) { return base + 1 + (r - 1) * segments + (s % segments); };
  for (int s = 0; s < segments; ++s) {
    mesh.triangles.push_back({base, ring_vertex(1, s), ring_vertex(1, s + 1)});
  }
  for (int r = 1; r < rings - 1; ++r) {
    for (int s = 0; s < segments; ++s) {
      const int a = ring_vertex(r, s), b = ring_vertex(r, s + 1);
      const int c = ring_vertex(r + 1, s), d = ring_vertex(r + 1, s + 1);
      mesh.triangles.push_back({a, c, d});
      mesh.triangles.push_back({a, d, b});
    }
  }
  for (int s = 0; s < segments; ++s) {
    mesh.triangles.push_back({south, ring_vertex(rings - 1, s + 1), ring_vertex(rings - 1, s)});
  }
  return base;
}

Vec3 random_unit(Rng& rng) {
  Vec3 v(rng.normal(), rng.normal(), rng.normal());
  while (v.norm() < 1e-9) v = Vec3(rng.normal(), rng.normal(), rng.normal());
  return v.normalized();
}

json matrix_to_json(const Eigen::MatrixXd& m) {
  json data = json::array();
  data.get_ref<json::array_t&>().reserve(static_cast<std::size_t>(m.size()));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) data.push_back(m(r, c));
  return json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::move(data)}};
}

Eigen::MatrixXd matrix_from_json(const json& j, const std::string& key) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const auto& data = j.at("data");
  if (rows < 0 || cols < 0 || data.size() != static_cast<std::size_t>(rows * cols)) {
    throw ParseError("rig: '" + key + "' has " + std::to_string(data.size()) +
                     " entries, expected rows*cols = " + std::to_string(rows * cols));
  }
  Eigen::MatrixXd m(rows, cols);
  std::size_t i = 0;
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = data[i++].get<double>();
  return m;
}

json vec3_to_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

Vec3 vec3_from_json(const json& j) {
  if (!j.is_array() || j.size() != 3) throw ParseError("rig: expected a 3-vector");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

constexpr int kRigFormatVersion = 1;

}  // namespace

PoseCode canonical_pose(double jaw_open) {
  require(jaw_open >= 0.0 && jaw_open <= 0.5, "canonical_pose: jaw_open must lie in [0, 0.5] rad");
  PoseCode pose;
  pose.jaw = Vec3(jaw_open, 0.0, 0.0);
  return pose;
}

std::string_view joint_name(Joint joint) {
  switch (joint) {
    case Joint::root: return "root";
    case Joint::neck: return "neck";
    case Joint::jaw: return "jaw";
    case Joint::eye_left: return "eye_left";
    case Joint::eye_right: return "eye_right";
  }
  throw ContractViolation("joint_name: unknown joint");
}

std::string_view part_name(Part part) {
  switch (part) {
    case Part::eyeball_left: return "eyeball_left";
    case Part::eyeball_right: return "eyeball_right";
    case Part::eye_region: return "eye_region";
    case Part::lip_region: return "lip_region";
  }
  throw ContractViolation("part_name: unknown part id " + std::to_string(static_cast<int>(part)));
}

Part part_from_name(std::string_view name) {
  for (int i = 0; i < 4; ++i) {
    if (part_name(static_cast<Part>(i)) == name) return static_cast<Part>(i);
  }
  throw ContractViolation("unknown part id '" + std::string(name) + "'");
}

const std::vector<int>& HeadRig::part_vertices(Part part) const {
  switch (part) {
    case Part::eyeball_left: return eyeball_left;
    case Part::eyeball_right: return eyeball_right;
    case Part::eye_region: return eye_region;
    case Part::lip_region: return lip_region;
  }
  throw ContractViolation("unknown part id " + std::to_string(static_cast<int>(part)));
}

Vec3 face_normal(const Mesh& mesh, int triangle) {
  const auto& t = mesh.triangles[static_cast<std::size_t>(triangle)];
  const Vec3& a = mesh.vertices[t[0]];
  const Vec3 n = (mesh.vertices[t[1]] - a).cross(mesh.vertices[t[2]] - a);
  const double len = n.norm();
  return len > 0.0 ? Vec3(n / len) : Vec3::Zero();
}

std::vector<Vec3> vertex_normals(const Mesh& mesh) {
  std::vector<Vec3> normals(mesh.vertices.size(), Vec3::Zero());
  for (const auto& t : mesh.triangles) {
    const Vec3& a = mesh.vertices[t[0]];
    const Vec3 n = (mesh.vertices[t[1]] - a).cross(mesh.vertices[t[2]] - a);
    for (int k : t) normals[k] += n;
  }
  for (auto& n : normals) {
    const double len = n.norm();
    if (len > 0.0) n /= len;
  }
  return normals;
}

void HeadRig::validate() const {
  const int v_count = vertex_count();
  for (std::size_t i = 0; i < template_vertices.size(); ++i) {
    if (!template_vertices[i].allFinite())
      throw ValidationError("rig: template vertex " + std::to_string(i) + " is not finite");
  }
  for (std::size_t t = 0; t < triangles.size(); ++t) {
    for (int k : triangles[t]) {
      if (k < 0 || k >= v_count)
        throw ValidationError("rig: triangle " + std::to_string(t) + " references invalid vertex " +
                              std::to_string(k));
    }
  }
  if (shape_basis.rows() != 3 * v_count)
    throw ValidationError("rig: shape basis has " + std::to_string(shape_basis.rows()) +
                          " rows, expected 3*V = " + std::to_string(3 * v_count));
  if (expression_basis.rows() != 3 * v_count)
    throw ValidationError("rig: expression basis has " + std::to_string(expression_basis.rows()) +
                          " rows, expected 3*V = " + std::to_string(3 * v_count));
  if (joint_shape_basis.rows() != 3 * kJointCount || joint_shape_basis.cols() != shape_basis.cols())
    throw ValidationError("rig: joint shape basis must be (3*J) x S");
  if (!all_finite(shape_basis) || !all_finite(expression_basis) || !all_finite(joint_shape_basis))
    throw ValidationError("rig: basis matrices contain non-finite values");
  for (int j = 0; j < kJointCount; ++j) {
    if (!joints[j].allFinite())
      throw ValidationError("rig: joint " + std::string(joint_name(static_cast<Joint>(j))) +
                            " is not finite");
  }
  if (skin_weights.rows() != v_count || skin_weights.cols() != kJointCount)
    throw ValidationError("rig: skinning weights must be V x " + std::to_string(kJointCount));
  for (int v = 0; v < v_count; ++v) {
    double sum = 0.0;
    for (int j = 0; j < kJointCount; ++j) {
      const double w = skin_weights(v, j);
      if (!std::isfinite(w) || w < 0.0)
        throw ValidationError("rig: skinning row of vertex " + std::to_string(v) +
                              " has a negative or non-finite weight");
      sum += w;
    }
    if (std::abs(sum - 1.0) > 1e-9) {
      std::ostringstream msg;
      msg.precision(17);
      msg << "rig: skinning row of vertex " << v << " is not convex (sum = " << sum << ")";
      throw ValidationError(msg.str());
    }
  }
  auto check_set = [&](const std::vector<int>& set, int limit, const char* name) {
    for (int i : set) {
      if (i < 0 || i >= limit)
        throw ValidationError(std::string("rig: part set '") + name + "' has out-of-range index " +
                              std::to_string(i));
    }
  };
  check_set(eyeball_left, v_count, "eyeball_left");
  check_set(eyeball_right, v_count, "eyeball_right");
  check_set(eye_region, v_count, "eye_region");
  check_set(lip_region, v_count, "lip_region");
  check_set(full_head, v_count, "full_head");
  check_set(inner_mouth_faces, static_cast<int>(triangles.size()), "inner_mouth_faces");
}

bool HeadRig::operator==(const HeadRig& o) const {
  return template_vertices == o.template_vertices && triangles == o.triangles &&
         shape_basis == o.shape_basis && expression_basis == o.expression_basis &&
         joints == o.joints && joint_shape_basis == o.joint_shape_basis &&
         skin_weights == o.skin_weights && eyeball_left == o.eyeball_left &&
         eyeball_right == o.eyeball_right && eye_region == o.eye_region &&
         lip_region == o.lip_region && full_head == o.full_head &&
         inner_mouth_faces == o.inner_mouth_faces;
}

std::vector<Vec3> shaped_vertices(const HeadRig& rig, const ShapeCode& shape,
                                  const ExpressionCode& expression) {
  require(shape.values.size() == rig.shape_dim(),
          "evaluate_mesh: shape code has dimension " + std::to_string(shape.values.size()) +
              ", rig expects " + std::to_string(rig.shape_dim()));
  require(expression.values.size() == rig.expression_dim(),
          "evaluate_mesh: expression code has dimension " + std::to_string(expression.values.size()) +
              ", rig expects " + std::to_string(rig.expression_dim()));
  const Eigen::VectorXd offsets = rig.shape_basis * shape.values + rig.expression_basis * expression.values;
  std::vector<Vec3> out(rig.template_vertices.size());
  for (std::size_t v = 0; v < out.size(); ++v) {
    out[v] = rig.template_vertices[v] + offsets.segment<3>(static_cast<Eigen::Index>(3 * v));
  }
  return out;
}

Mesh evaluate_mesh(const HeadRig& rig, const ShapeCode& shape, const ExpressionCode& expression,
                   const PoseCode& pose) {
  Mesh mesh;
  mesh.vertices = shaped_vertices(rig, shape, expression);
  mesh.triangles = rig.triangles;

  std::array<Vec3, kJointCount> pivots{};
  const Eigen::VectorXd joint_offsets = rig.joint_shape_basis * shape.values;
  for (int j = 0; j < kJointCount; ++j) pivots[j] = rig.joints[j] + joint_offsets.segment<3>(3 * j);

  std::array<Rigid, kJointCount> world{};
  world[static_cast<int>(Joint::neck)] = rotation_about(pose.neck, pivots[static_cast<int>(Joint::neck)]);
  const Rigid& neck = world[static_cast<int>(Joint::neck)];
  world[static_cast<int>(Joint::jaw)] = neck.then(rotation_about(pose.jaw, pivots[static_cast<int>(Joint::jaw)]));
  world[static_cast<int>(Joint::eye_left)] =
      neck.then(rotation_about(pose.eye, pivots[static_cast<int>(Joint::eye_left)]));
  world[static_cast<int>(Joint::eye_right)] =
      neck.then(rotation_about(pose.eye, pivots[static_cast<int>(Joint::eye_right)]));

  for (int v = 0; v < rig.vertex_count(); ++v) {
    Mat3 blend_r = Mat3::Zero();
    Vec3 blend_t = Vec3::Zero();
    for (int j = 0; j < kJointCount; ++j) {
      const double w = rig.skin_weights(v, j);
      if (w == 0.0) continue;
      blend_r += w * world[j].rotation;
      blend_t += w * world[j].translation;
    }
    mesh.vertices[v] = blend_r * mesh.vertices[v] + blend_t;
  }
  return mesh;
}

Mesh submesh(const Mesh& mesh, std::span<const int> vertex_indices) {
  std::vector<int> sorted(vertex_indices.begin(), vertex_indices.end());
  std::sort(sorted.begin(), sorted.end());
  sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());

  std::vector<int> remap(mesh.vertices.size(), -1);
  Mesh out;
  out.vertices.reserve(sorted.size());
  for (int v : sorted) {
    require(v >= 0 && v < static_cast<int>(mesh.vertices.size()), "submesh: vertex index out of range");
    remap[v] = static_cast<int>(out.vertices.size());
    out.vertices.push_back(mesh.vertices[v]);
    if (!mesh.normals.empty()) out.normals.push_back(mesh.normals[v]);
  }
  for (const auto& t : mesh.triangles) {
    if (remap[t[0]] >= 0 && remap[t[1]] >= 0 && remap[t[2]] >= 0) {
      out.triangles.push_back({remap[t[0]], remap[t[1]], remap[t[2]]});
    }
  }
  return out;
}

Mesh part_submesh(const HeadRig& rig, const Mesh& posed, Part part) {
  require(static_cast<int>(part) >= 0 && static_cast<int>(part) <= 3,
          "part_submesh: unknown part id " + std::to_string(static_cast<int>(part)));
  require(posed.vertices.size() == rig.template_vertices.size(),
          "part_submesh: posed mesh does not match rig vertex count");
  return submesh(posed, rig.part_vertices(part));
}

std::vector<int> one_ring(const HeadRig& rig, int vertex) {
  require(vertex >= 0 && vertex < rig.vertex_count(),
          "one_ring: invalid vertex index " + std::to_string(vertex));
  std::vector<int> out;
  for (const auto& t : rig.triangles) {
    if (t[0] != vertex && t[1] != vertex && t[2] != vertex) continue;
    for (int k : t)
      if (k != vertex) out.push_back(k);
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

VertexAdjacency::VertexAdjacency(int vertex_count, std::span<const Triangle> triangles) {
  std::vector<std::vector<int>> lists(static_cast<std::size_t>(vertex_count));
  for (const auto& t : triangles) {
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b)
        if (a != b) lists[t[a]].push_back(t[b]);
  }
  offsets_.assign(static_cast<std::size_t>(vertex_count) + 1, 0);
  for (int v = 0; v < vertex_count; ++v) {
    auto& l = lists[v];
    std::sort(l.begin(), l.end());
    l.erase(std::unique(l.begin(), l.end()), l.end());
    offsets_[v + 1] = offsets_[v] + static_cast<int>(l.size());
  }
  indices_.reserve(static_cast<std::size_t>(offsets_.back()));
  for (auto& l : lists) indices_.insert(indices_.end(), l.begin(), l.end());
}

std::span<const int> VertexAdjacency::neighbors(int vertex) const {
  return {indices_.data() + offsets_[vertex], static_cast<std::size_t>(offsets_[vertex + 1] - offsets_[vertex])};
}

const HeadLayout& head_layout() {
  static const HeadLayout layout{};
  return layout;
}

HeadRig procedural_rig(const RigSpec& spec, std::uint64_t seed) {
  require(spec.head_rings >= 3 && spec.head_segments >= 3 && spec.eye_rings >= 3 &&
              spec.eye_segments >= 3 && spec.neck_rings >= 3 && spec.neck_segments >= 3,
          "procedural_rig: tessellation parameters must be >= 3");
  require(spec.shape_dim >= 4 && spec.expression_dim >= 4,
          "procedural_rig: need at least 4 shape and 4 expression components");
  const HeadLayout& L = head_layout();

  Mesh mesh;
  const int head_begin = append_ellipsoid(mesh, L.head_center, L.head_radii, spec.head_rings, spec.head_segments);
  const int head_end = static_cast<int>(mesh.vertices.size());
  const int head_tri_end = static_cast<int>(mesh.triangles.size());
  const Vec3 eye_radii = Vec3::Constant(L.eye_radius);
  const int eye_l_begin = append_ellipsoid(mesh, L.eye_left_center, eye_radii, spec.eye_rings, spec.eye_segments);
  const int eye_r_begin = append_ellipsoid(mesh, L.eye_right_center, eye_radii, spec.eye_rings, spec.eye_segments);
  const int neck_begin = append_ellipsoid(mesh, L.neck_center, L.neck_radii, spec.neck_rings, spec.neck_segments);
  const int v_count = static_cast<int>(mesh.vertices.size());

  HeadRig rig;
  rig.template_vertices = mesh.vertices;
  rig.triangles = mesh.triangles;

  for (int v = head_begin; v < head_end; ++v) rig.full_head.push_back(v);
  for (int v = eye_l_begin; v < eye_r_begin; ++v) rig.eyeball_left.push_back(v);
  for (int v = eye_r_begin; v < neck_begin; ++v) rig.eyeball_right.push_back(v);
  for (int v = head_begin; v < head_end; ++v) {
    const Vec3& p = mesh.vertices[v];
    const double lx = (p.x() - L.mouth_center.x()) / 0.07;
    const double ly = (p.y() - L.mouth_center.y()) / 0.045;
    if (p.z() > 0.0 && lx * lx + ly * ly <= 1.0) rig.lip_region.push_back(v);
    if ((p - L.eye_left_center).norm() < 0.065 || (p - L.eye_right_center).norm() < 0.065)
      rig.eye_region.push_back(v);
  }
  for (int t = 0; t < head_tri_end; ++t) {
    const auto& tri = mesh.triangles[t];
    const Vec3 c = (mesh.vertices[tri[0]] + mesh.vertices[tri[1]] + mesh.vertices[tri[2]]) / 3.0;
    const double mx = c.x() / 0.045;
    const double my = (c.y() - L.mouth_center.y()) / 0.02;
    if (c.z() > 0.0 && mx * mx + my * my <= 1.0) rig.inner_mouth_faces.push_back(t);
  }

  rig.joints[static_cast<int>(Joint::root)] = Vec3(0.0, L.root_blend_bottom - 0.04, L.neck_center.z());
  rig.joints[static_cast<int>(Joint::neck)] = L.neck_pivot;
  rig.joints[static_cast<int>(Joint::jaw)] = L.jaw_pivot;
  rig.joints[static_cast<int>(Joint::eye_left)] = L.eye_left_center;
  rig.joints[static_cast<int>(Joint::eye_right)] = L.eye_right_center;

  rig.skin_weights = Eigen::MatrixXd::Zero(v_count, kJointCount);
  for (int v = 0; v < v_count; ++v) {
    const Vec3& p = mesh.vertices[v];
    if (v < head_end) {
      const double below_mouth = smoothstep(0.0, 0.03, (L.mouth_center.y() + 0.005) - p.y());
      const double in_front = smoothstep(-0.05, 0.05, p.z());
      const double jaw = below_mouth * in_front;
      rig.skin_weights(v, static_cast<int>(Joint::jaw)) = jaw;
      rig.skin_weights(v, static_cast<int>(Joint::neck)) = 1.0 - jaw;
    } else if (v < eye_r_begin) {
      rig.skin_weights(v, static_cast<int>(Joint::eye_left)) = 1.0;
    } else if (v < neck_begin) {
      rig.skin_weights(v, static_cast<int>(Joint::eye_right)) = 1.0;
    } else {
      const double root = spec.rigid_neck
                              ? 0.0
                              : smoothstep(0.0, 1.0, (L.root_blend_top - p.y()) /
                                                         (L.root_blend_top - L.root_blend_bottom));
      rig.skin_weights(v, static_cast<int>(Joint::root)) = root;
      rig.skin_weights(v, static_cast<int>(Joint::neck)) = 1.0 - root;
    }
  }

  // Shape: smooth global sinusoidal displacement fields with decaying
  // amplitude. Eyeballs translate rigidly with the field at their centre.
  Rng shape_rng(derive_seed(seed, {0x5348415045ull}));
  rig.shape_basis = Eigen::MatrixXd::Zero(3 * v_count, spec.shape_dim);
  rig.joint_shape_basis = Eigen::MatrixXd::Zero(3 * kJointCount, spec.shape_dim);
  for (int k = 0; k < spec.shape_dim; ++k) {
    const Vec3 omega = random_unit(shape_rng) * shape_rng.uniform(2.0, 8.0);
    const double phase = shape_rng.uniform(0.0, 2.0 * std::numbers::pi);
    const Vec3 dir = random_unit(shape_rng);
    const double amp = 0.006 / (1.0 + k / 15.0);
    auto field = [&](const Vec3& p) -> Vec3 { return amp * std::sin(omega.dot(p) + phase) * dir; };
    for (int v = 0; v < v_count; ++v) {
      Vec3 anchor = mesh.vertices[v];
      if (v >= eye_l_begin && v < eye_r_begin) anchor = L.eye_left_center;
      if (v >= eye_r_begin && v < neck_begin) anchor = L.eye_right_center;
      rig.shape_basis.block<3, 1>(3 * v, k) = field(anchor);
    }
    for (int j = 0; j < kJointCount; ++j) rig.joint_shape_basis.block<3, 1>(3 * j, k) = field(rig.joints[j]);
  }

  // Expression: localized Gaussian bumps on the face; the first four act on
  // the mouth so that low-order codes move the lips.
  Rng expr_rng(derive_seed(seed, {0x45585052ull}));
  std::vector<int> face_vertices;
  for (int v = head_begin; v < head_end; ++v) {
    const Vec3& p = mesh.vertices[v];
    if (p.z() > 0.08 && p.y() < 0.12) face_vertices.push_back(v);
  }
  rig.expression_basis = Eigen::MatrixXd::Zero(3 * v_count, spec.expression_dim);
  const std::array<Vec3, 4> mouth_dirs{Vec3(0, 1, 0), Vec3(0, -1, 0), Vec3(1, 0, 0), Vec3(0, 0, 1)};
  for (int k = 0; k < spec.expression_dim; ++k) {
    Vec3 center, dir;
    double radius;
    if (k < 4) {
      center = L.mouth_center;
      dir = mouth_dirs[k];
      radius = 0.04;
    } else {
      center = mesh.vertices[face_vertices[expr_rng.index(face_vertices.size())]];
      dir = random_unit(expr_rng);
      radius = expr_rng.uniform(0.03, 0.07);
    }
    const double amp = 0.008 / (1.0 + k / 10.0);
    for (int v = head_begin; v < head_end; ++v) {
      const double d2 = (mesh.vertices[v] - center).squaredNorm();
      rig.expression_basis.block<3, 1>(3 * v, k) = amp * std::exp(-d2 / (radius * radius)) * dir;
    }
  }
  return rig;
}

std::string rig_to_json_string(const HeadRig& rig) {
  json doc;
  doc["format_version"] = kRigFormatVersion;
  doc["kind"] = "headsynth-rig";
  json verts = json::array();
  for (const auto& v : rig.template_vertices) verts.push_back(vec3_to_json(v));
  doc["template_vertices"] = std::move(verts);
  json tris = json::array();
  for (const auto& t : rig.triangles) tris.push_back(json::array({t[0], t[1], t[2]}));
  doc["triangles"] = std::move(tris);
  doc["shape_basis"] = matrix_to_json(rig.shape_basis);
  doc["expression_basis"] = matrix_to_json(rig.expression_basis);
  doc["joint_shape_basis"] = matrix_to_json(rig.joint_shape_basis);
  json joints;
  for (int j = 0; j < kJointCount; ++j) joints[std::string(joint_name(static_cast<Joint>(j)))] = vec3_to_json(rig.joints[j]);
  doc["joints"] = std::move(joints);
  json names = json::array();
  for (int j = 0; j < kJointCount; ++j) names.push_back(joint_name(static_cast<Joint>(j)));
  json rows = json::array();
  for (Eigen::Index v = 0; v < rig.skin_weights.rows(); ++v) {
    json row = json::array();
    for (Eigen::Index j = 0; j < rig.skin_weights.cols(); ++j) row.push_back(rig.skin_weights(v, j));
    rows.push_back(std::move(row));
  }
  doc["skin_weights"] = {{"joints", std::move(names)}, {"rows", std::move(rows)}};
  doc["parts"] = {{"eyeball_left", rig.eyeball_left},   {"eyeball_right", rig.eyeball_right},
                  {"eye_region", rig.eye_region},       {"lip_region", rig.lip_region},
                  {"full_head", rig.full_head},         {"inner_mouth_faces", rig.inner_mouth_faces}};
  return doc.dump();
}

HeadRig rig_from_json_string(const std::string& text, const std::string& source) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError("rig file " + source + ": " + e.what());
  }
  HeadRig rig;
  try {
    const int version = doc.at("format_version").get<int>();
    if (version != kRigFormatVersion)
      throw ParseError("rig file " + source + ": unsupported format_version " + std::to_string(version));
    for (const auto& v : doc.at("template_vertices")) rig.template_vertices.push_back(vec3_from_json(v));
    for (const auto& t : doc.at("triangles")) {
      if (!t.is_array() || t.size() != 3) throw ParseError("rig file " + source + ": triangle is not an index triple");
      rig.triangles.push_back({t[0].get<int>(), t[1].get<int>(), t[2].get<int>()});
    }
    rig.shape_basis = matrix_from_json(doc.at("shape_basis"), "shape_basis");
    rig.expression_basis = matrix_from_json(doc.at("expression_basis"), "expression_basis");
    rig.joint_shape_basis = matrix_from_json(doc.at("joint_shape_basis"), "joint_shape_basis");
    const auto& joints = doc.at("joints");
    for (int j = 0; j < kJointCount; ++j)
      rig.joints[j] = vec3_from_json(joints.at(std::string(joint_name(static_cast<Joint>(j)))));
    const auto& skin = doc.at("skin_weights");
    const auto& names = skin.at("joints");
    if (names.size() != kJointCount) throw ParseError("rig file " + source + ": skin_weights must name 5 joints");
    for (int j = 0; j < kJointCount; ++j) {
      if (names[j].get<std::string>() != joint_name(static_cast<Joint>(j)))
        throw ParseError("rig file " + source + ": skin_weights joint order mismatch at column " + std::to_string(j));
    }
    const auto& rows = skin.at("rows");
    rig.skin_weights.resize(static_cast<Eigen::Index>(rows.size()), kJointCount);
    for (std::size_t v = 0; v < rows.size(); ++v) {
      if (rows[v].size() != kJointCount)
        throw ParseError("rig file " + source + ": skin_weights row " + std::to_string(v) + " has wrong length");
      for (int j = 0; j < kJointCount; ++j) rig.skin_weights(static_cast<Eigen::Index>(v), j) = rows[v][j].get<double>();
    }
    const auto& parts = doc.at("parts");
    rig.eyeball_left = parts.at("eyeball_left").get<std::vector<int>>();
    rig.eyeball_right = parts.at("eyeball_right").get<std::vector<int>>();
    rig.eye_region = parts.at("eye_region").get<std::vector<int>>();
    rig.lip_region = parts.at("lip_region").get<std::vector<int>>();
    rig.full_head = parts.at("full_head").get<std::vector<int>>();
    rig.inner_mouth_faces = parts.at("inner_mouth_faces").get<std::vector<int>>();
  } catch (const json::exception& e) {
    throw ParseError("rig file " + source + ": " + e.what());
  }
  rig.validate();
  return rig;
}

void save_rig(const HeadRig& rig, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  os << rig_to_json_string(rig);
  if (!os) throw IoError("failed writing " + path.string());
}

HeadRig load_rig(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  std::stringstream buffer;
  buffer << is.rdbuf();
  return rig_from_json_string(buffer.str(), path.string());
}

}  // namespace headsynth
