#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "headsynth/common.hpp"

namespace headsynth {

inline constexpr int kMotionExpressionDim = 30;
inline constexpr int kMotionLipDim = 512;
inline constexpr int kMotionEyeDim = 6;
inline constexpr int kMotionDim = kMotionExpressionDim + kMotionLipDim + kMotionEyeDim;  // 548

// [expression (30) | lip (512) | eye (6)]
struct MotionVector {
  Eigen::VectorXd values = Eigen::VectorXd::Zero(kMotionDim);
};

// N x D token matrix, one row per grid position.
struct FeatureGrid {
  Eigen::MatrixXd tokens;
};

// on = cross-attention active. Off skips every cross-attention residual,
// which is bitwise the same as adding zero.
struct GateSwitch {
  bool on = true;
};

struct PhiDims {
  int tokens = 256;  // 16 x 16 grid
  int width = 64;
  int heads = 4;
  int motion_tokens = 8;
  int blocks = 4;
  int expand_hidden = 256;
  int motion_dim = kMotionDim;

  void validate() const;
  bool operator==(const PhiDims&) const = default;
};

template <class S>
using MatrixT = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
template <class S>
using VectorT = Eigen::Matrix<S, Eigen::Dynamic, 1>;

// y = x W^T + b applied to the rows of x.
template <class S>
struct LinearT {
  MatrixT<S> w;  // out x in
  VectorT<S> b;
};

template <class S>
struct LayerNormT {
  VectorT<S> gamma;
  VectorT<S> beta;
};

template <class S>
struct AttentionT {
  LinearT<S> q, k, v, o;
};

template <class S>
struct BlockT {
  LayerNormT<S> norm_cross, norm_self, norm_mlp;
  AttentionT<S> cross, self;
  LinearT<S> fc1, fc2;  // D -> 4D -> D
};

// Motion expansion (548 -> hidden -> M * D) and the transformer blocks of one
// sub-module.
template <class S>
struct StageT {
  LinearT<S> expand1, expand2;
  std::vector<BlockT<S>> blocks;
};

// de = expression neutralization against the source motion; re = reenactment
// against the driving motion.
template <class S>
struct PhiParamsT {
  PhiDims dims;
  StageT<S> de, re;
};

using PhiParams = PhiParamsT<double>;
using AttentionParams = AttentionT<double>;
using LinearParams = LinearT<double>;

inline constexpr double kLayerNormEpsilon = 1e-5;

// Cross-attention output projections (weights and biases) are zero; every
// other weight and bias is uniform on [-1/sqrt(fan_in), 1/sqrt(fan_in)];
// layer norms start at gamma = 1, beta = 0.
PhiParams init_phi(const PhiDims& dims, std::uint64_t seed);

// Parameters with every tensor zero (layer-norm gamma included).
PhiParams zero_phi(const PhiDims& dims);

// Tensor names in storage order, e.g. "de.expand1.w", "re.blocks.3.cross.o.b".
std::vector<std::string> phi_tensor_names(const PhiParams& params);
// Throws ContractViolation for unknown names.
std::span<double> phi_tensor(PhiParams& params, std::string_view name);
std::span<const double> phi_tensor(const PhiParams& params, std::string_view name);

// M x D motion tokens from one sub-module's expansion MLP (GELU hidden layer).
Eigen::MatrixXd expand_motion(const StageT<double>& stage, const PhiDims& dims, const MotionVector& v);

// Multi-head scaled dot-product attention; queries from q_in (N x D), keys and
// values from kv_in (M x D).
Eigen::MatrixXd attention(const Eigen::MatrixXd& q_in, const Eigen::MatrixXd& kv_in, const AttentionParams& params,
                          int heads);
// Softmax rows per head, each N x M.
std::vector<Eigen::MatrixXd> attention_weights(const Eigen::MatrixXd& q_in, const Eigen::MatrixXd& kv_in,
                                               const AttentionParams& params, int heads);

Eigen::MatrixXd layer_norm(const Eigen::MatrixXd& x, const LayerNormT<double>& params);
double gelu(double x);  // tanh form

FeatureGrid phi_forward(const PhiParams& params, const FeatureGrid& features, const MotionVector& v_source,
                        const MotionVector& v_driving, GateSwitch gate);

// d/d(eps) of <probe, phi_forward(params with tensor += eps * direction)> at
// eps = 0, by forward-mode dual numbers.
double phi_jvp(const PhiParams& params, const FeatureGrid& features, const MotionVector& v_source,
               const MotionVector& v_driving, GateSwitch gate, std::string_view tensor,
               std::span<const double> direction, const Eigen::MatrixXd& probe);

struct JacobianCheck {
  double analytic = 0.0;
  double numeric = 0.0;
  double relative_error = 0.0;  // |a - n| / max(|a|, |n|), 0 when both vanish
};

// Dual-number JVP against a central difference of step `step`.
JacobianCheck finite_diff_jacobian_check(const PhiParams& params, const FeatureGrid& features,
                                         const MotionVector& v_source, const MotionVector& v_driving,
                                         GateSwitch gate, std::string_view tensor,
                                         std::span<const double> direction, const Eigen::MatrixXd& probe,
                                         double step = 1e-4);

// Fixed seeded linear embedding standing in for a motion encoder:
// block 0..29 = A_e beta, 30..541 = A_l [beta; jaw], 542..547 = A_g eye, plus
// `bias`. Entries of A are N(0, 1/cols), bias N(0, 0.01).
struct MotionEmbedding {
  Eigen::MatrixXd expression_map;  // 30 x |beta|
  Eigen::MatrixXd lip_map;         // 512 x (|beta| + 3)
  Eigen::MatrixXd eye_map;         // 6 x 3
  Eigen::VectorXd bias;            // 548
};

MotionEmbedding make_motion_embedding(int expression_dim, std::uint64_t seed);
MotionVector embed_motion(const MotionEmbedding& embedding, const Eigen::VectorXd& expression, const Vec3& eye,
                          const Vec3& jaw);
MotionVector synth_motion_vector(const Eigen::VectorXd& expression, const Vec3& eye, const Vec3& jaw,
                                 std::uint64_t seed);

// "PHI1" container: magic, seven u32 dimensions (tokens, width, heads,
// motion_tokens, blocks, expand_hidden, motion_dim), then every tensor in
// phi_tensor_names order as little-endian f32.
void write_phi(const PhiParams& params, std::ostream& os);
PhiParams read_phi(std::istream& is, const std::string& source);
void save_phi(const PhiParams& params, const std::filesystem::path& path);
PhiParams load_phi(const std::filesystem::path& path);

}  // namespace headsynth
