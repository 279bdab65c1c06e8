#pragma once

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "headsynth/common.hpp"

namespace headsynth {

struct ShapeCode {
  Eigen::VectorXd values;

  static ShapeCode zero(int dim) { return {Eigen::VectorXd::Zero(dim)}; }
};

struct ExpressionCode {
  Eigen::VectorXd values;

  static ExpressionCode zero(int dim) { return {Eigen::VectorXd::Zero(dim)}; }
};

// Axis-angle rotations in radians. Both eyes share `eye`.
struct PoseCode {
  Vec3 eye = Vec3::Zero();
  Vec3 jaw = Vec3::Zero();
  Vec3 neck = Vec3::Zero();

  bool operator==(const PoseCode&) const = default;
};

inline constexpr double kDefaultJawOpen = 0.2;

// Canonical pose: only the jaw is opened, about the jaw x-axis.
PoseCode canonical_pose(double jaw_open = kDefaultJawOpen);

// Pose with the neck rotation removed (the neck-canonical pose).
inline PoseCode without_neck(PoseCode pose) {
  pose.neck = Vec3::Zero();
  return pose;
}

// Joint order used by the skinning weight columns. `root` never moves; it
// anchors the lower neck so a neck rotation bends rather than rigidly swings
// the whole rig.
enum class Joint : int { root = 0, neck = 1, jaw = 2, eye_left = 3, eye_right = 4 };
inline constexpr int kJointCount = 5;
std::string_view joint_name(Joint joint);

enum class Part : int { eyeball_left = 0, eyeball_right = 1, eye_region = 2, lip_region = 3 };
std::string_view part_name(Part part);
// Throws ContractViolation for unknown names.
Part part_from_name(std::string_view name);

struct Mesh {
  std::vector<Vec3> vertices;
  std::vector<Triangle> triangles;
  std::vector<Vec3> normals;  // optional, per vertex

  bool empty() const { return triangles.empty(); }
};

// Area-weighted unit vertex normals.
std::vector<Vec3> vertex_normals(const Mesh& mesh);
Vec3 face_normal(const Mesh& mesh, int triangle);

struct HeadRig {
  std::vector<Vec3> template_vertices;
  std::vector<Triangle> triangles;
  Eigen::MatrixXd shape_basis;       // (3V) x S, row 3*v + axis
  Eigen::MatrixXd expression_basis;  // (3V) x E
  std::array<Vec3, kJointCount> joints{};
  Eigen::MatrixXd joint_shape_basis;  // (3J) x S, moves joint pivots with shape
  Eigen::MatrixXd skin_weights;       // V x J, convex rows

  std::vector<int> eyeball_left;
  std::vector<int> eyeball_right;
  std::vector<int> eye_region;
  std::vector<int> lip_region;
  std::vector<int> full_head;
  std::vector<int> inner_mouth_faces;

  int vertex_count() const { return static_cast<int>(template_vertices.size()); }
  int shape_dim() const { return static_cast<int>(shape_basis.cols()); }
  int expression_dim() const { return static_cast<int>(expression_basis.cols()); }
  const std::vector<int>& part_vertices(Part part) const;

  // Throws ValidationError naming the first offending element.
  void validate() const;

  bool operator==(const HeadRig& other) const;
};

// Template + linear blendshapes, before any joint rotation.
std::vector<Vec3> shaped_vertices(const HeadRig& rig, const ShapeCode& shape,
                                  const ExpressionCode& expression);

// Linear blend skinning over the neck -> {jaw, eyes} chain.
Mesh evaluate_mesh(const HeadRig& rig, const ShapeCode& shape, const ExpressionCode& expression,
                   const PoseCode& pose);

// Vertices of one part with triangles fully inside it, re-indexed in ascending
// vertex order. An empty set yields an empty mesh.
Mesh part_submesh(const HeadRig& rig, const Mesh& posed, Part part);
Mesh submesh(const Mesh& mesh, std::span<const int> vertex_indices);

// Vertices sharing a triangle with `vertex`, ascending, excluding itself.
std::vector<int> one_ring(const HeadRig& rig, int vertex);

// Precomputed one-ring lists for every vertex of a triangle soup.
class VertexAdjacency {
 public:
  VertexAdjacency(int vertex_count, std::span<const Triangle> triangles);
  std::span<const int> neighbors(int vertex) const;
  int vertex_count() const { return static_cast<int>(offsets_.size()) - 1; }

 private:
  std::vector<int> offsets_;
  std::vector<int> indices_;
};

// Dimensions of the procedural rig. Tessellation counts are rings x segments
// of UV spheres.
struct RigSpec {
  int head_rings = 28;
  int head_segments = 40;
  int eye_rings = 10;
  int eye_segments = 14;
  int neck_rings = 10;
  int neck_segments = 20;
  int shape_dim = 300;
  int expression_dim = 100;
  // Every vertex fully follows the neck joint (no root anchoring).
  bool rigid_neck = false;

  bool operator==(const RigSpec&) const = default;
};

// Geometry constants of the procedural head, shared with the analytic
// appearance bake so that densities line up with the mesh.
struct HeadLayout {
  Vec3 head_center{0.0, 0.02, 0.0};
  Vec3 head_radii{0.16, 0.21, 0.19};
  Vec3 neck_center{0.0, -0.20, -0.02};
  Vec3 neck_radii{0.075, 0.16, 0.075};
  double eye_radius = 0.032;
  Vec3 eye_left_center{0.058, 0.05, 0.16};
  Vec3 eye_right_center{-0.058, 0.05, 0.16};
  Vec3 mouth_center{0.0, -0.07, 0.1717};
  Vec3 jaw_pivot{0.0, -0.04, 0.02};
  Vec3 neck_pivot{0.0, -0.14, -0.02};
  // Neck-stump height band over which skinning blends neck -> root.
  double root_blend_top = -0.13;
  double root_blend_bottom = -0.32;
};

const HeadLayout& head_layout();

HeadRig procedural_rig(const RigSpec& spec, std::uint64_t seed);

// JSON rig document, "format_version": 1.
void save_rig(const HeadRig& rig, const std::filesystem::path& path);
HeadRig load_rig(const std::filesystem::path& path);
std::string rig_to_json_string(const HeadRig& rig);
HeadRig rig_from_json_string(const std::string& text, const std::string& source = "<string>");

}  // namespace headsynth
