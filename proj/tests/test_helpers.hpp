#pragma once

#include <filesystem>
#include <fstream>
#include <string>

#include "headsynth/headmodel.hpp"

namespace headsynth::test {

inline const HeadRig& rig() {
  static const HeadRig r = procedural_rig(RigSpec{}, 1);
  return r;
}

inline Mesh rest_mesh(const PoseCode& pose = {}) {
  return evaluate_mesh(rig(), ShapeCode::zero(rig().shape_dim()), ExpressionCode::zero(rig().expression_dim()), pose);
}

// Fresh directory under the system temp dir, removed by the destructor.
class TempDir {
 public:
  explicit TempDir(const std::string& name)
      : path_(std::filesystem::temp_directory_path() / ("headsynth_test_" + name)) {
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() { std::filesystem::remove_all(path_); }
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& leaf) const { return path_ / leaf; }

 private:
  std::filesystem::path path_;
};

inline std::string read_bytes(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), {}};
}

inline void write_bytes(const std::filesystem::path& p, const std::string& bytes) {
  std::ofstream os(p, std::ios::binary);
  os << bytes;
}

}  // namespace headsynth::test
