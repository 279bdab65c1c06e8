#include "headsynth/motionnet.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <numbers>
#include <type_traits>

#include "dual.hpp"
#include "headsynth/binary_io.hpp"
#include "headsynth/rng.hpp"

namespace headsynth {

void PhiDims::validate() const {
  require(tokens > 0 && width > 0 && heads > 0 && motion_tokens > 0 && blocks > 0 && expand_hidden > 0 &&
              motion_dim > 0,
          "PhiDims: every dimension must be positive");
  require(width % heads == 0, "PhiDims: width " + std::to_string(width) + " is not divisible by " +
                                  std::to_string(heads) + " heads");
}

namespace {

template <class S>
LinearT<S> zero_linear(int out, int in) {
  return {MatrixT<S>::Zero(out, in), VectorT<S>::Zero(out)};
}

template <class S>
AttentionT<S> zero_attention(int width) {
  return {zero_linear<S>(width, width), zero_linear<S>(width, width), zero_linear<S>(width, width),
          zero_linear<S>(width, width)};
}

template <class S>
LayerNormT<S> zero_norm(int width) {
  return {VectorT<S>::Zero(width), VectorT<S>::Zero(width)};
}

template <class S>
PhiParamsT<S> zero_params(const PhiDims& dims) {
  dims.validate();
  PhiParamsT<S> p;
  p.dims = dims;
  for (StageT<S>* stage : {&p.de, &p.re}) {
    stage->expand1 = zero_linear<S>(dims.expand_hidden, dims.motion_dim);
    stage->expand2 = zero_linear<S>(dims.motion_tokens * dims.width, dims.expand_hidden);
    stage->blocks.resize(static_cast<std::size_t>(dims.blocks));
    for (BlockT<S>& b : stage->blocks) {
      b.norm_cross = zero_norm<S>(dims.width);
      b.norm_self = zero_norm<S>(dims.width);
      b.norm_mlp = zero_norm<S>(dims.width);
      b.cross = zero_attention<S>(dims.width);
      b.self = zero_attention<S>(dims.width);
      b.fc1 = zero_linear<S>(4 * dims.width, dims.width);
      b.fc2 = zero_linear<S>(dims.width, 4 * dims.width);
    }
  }
  return p;
}

// fn(name, tensor) over every tensor in storage order. Works for const and
// mutable parameter sets of any scalar type.
template <class Stage, class Fn>
void visit_stage(Stage& stage, const std::string& prefix, Fn& fn) {
  auto linear = [&](auto& l, const std::string& name) {
    fn(name + ".w", l.w);
    fn(name + ".b", l.b);
  };
  auto norm = [&](auto& n, const std::string& name) {
    fn(name + ".gamma", n.gamma);
    fn(name + ".beta", n.beta);
  };
  auto attn = [&](auto& a, const std::string& name) {
    linear(a.q, name + ".q");
    linear(a.k, name + ".k");
    linear(a.v, name + ".v");
    linear(a.o, name + ".o");
  };
  linear(stage.expand1, prefix + ".expand1");
  linear(stage.expand2, prefix + ".expand2");
  for (std::size_t i = 0; i < stage.blocks.size(); ++i) {
    auto& b = stage.blocks[i];
    const std::string p = prefix + ".blocks." + std::to_string(i);
    norm(b.norm_cross, p + ".norm_cross");
    attn(b.cross, p + ".cross");
    norm(b.norm_self, p + ".norm_self");
    attn(b.self, p + ".self");
    norm(b.norm_mlp, p + ".norm_mlp");
    linear(b.fc1, p + ".fc1");
    linear(b.fc2, p + ".fc2");
  }
}

template <class Params, class Fn>
void visit_tensors(Params& params, Fn fn) {
  visit_stage(params.de, "de", fn);
  visit_stage(params.re, "re", fn);
}

template <class S>
PhiParamsT<S> cast_params(const PhiParams& src) {
  std::vector<const double*> data;
  visit_tensors(src, [&](const std::string&, const auto& t) { data.push_back(t.data()); });
  PhiParamsT<S> out = zero_params<S>(src.dims);
  std::size_t k = 0;
  visit_tensors(out, [&](const std::string&, auto& t) {
    const double* d = data[k++];
    for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] = S(d[i]);
  });
  return out;
}

template <class S>
MatrixT<S> linear_rows(const MatrixT<S>& x, const LinearT<S>& l) {
  MatrixT<S> y = x * l.w.transpose();
  y.rowwise() += l.b.transpose();
  return y;
}

template <class S>
MatrixT<S> layer_norm_t(const MatrixT<S>& x, const LayerNormT<S>& n) {
  using std::sqrt;
  const Eigen::Index d = x.cols();
  MatrixT<S> y(x.rows(), d);
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    S mean(0.0);
    for (Eigen::Index c = 0; c < d; ++c) mean += x(r, c);
    mean /= S(static_cast<double>(d));
    S var(0.0);
    for (Eigen::Index c = 0; c < d; ++c) {
      const S diff = x(r, c) - mean;
      var += diff * diff;
    }
    var /= S(static_cast<double>(d));
    const S inv = S(1.0) / sqrt(var + S(kLayerNormEpsilon));
    for (Eigen::Index c = 0; c < d; ++c) y(r, c) = (x(r, c) - mean) * inv * n.gamma[c] + n.beta[c];
  }
  return y;
}

template <class S>
S gelu_t(const S& x) {
  using std::tanh;
  const double k = std::sqrt(2.0 / std::numbers::pi);
  return S(0.5) * x * (S(1.0) + tanh(S(k) * (x + S(0.044715) * x * x * x)));
}

template <class S>
void softmax_rows(MatrixT<S>& m) {
  using std::exp;
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    double peak = value_of(m(r, 0));
    for (Eigen::Index c = 1; c < m.cols(); ++c) peak = std::max(peak, value_of(m(r, c)));
    S sum(0.0);
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      m(r, c) = exp(m(r, c) - S(peak));
      sum += m(r, c);
    }
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) /= sum;
  }
}

template <class S>
MatrixT<S> attention_t(const MatrixT<S>& q_in, const MatrixT<S>& kv_in, const AttentionT<S>& p, int heads,
                       std::type_identity_t<std::vector<MatrixT<S>>>* weights) {
  const Eigen::Index width = p.q.w.rows();
  require(q_in.cols() == p.q.w.cols() && kv_in.cols() == p.k.w.cols(), "attention: token width mismatch");
  require(heads > 0 && width % heads == 0, "attention: width not divisible by heads");
  const Eigen::Index dh = width / heads;
  const MatrixT<S> q = linear_rows(q_in, p.q);
  const MatrixT<S> k = linear_rows(kv_in, p.k);
  const MatrixT<S> v = linear_rows(kv_in, p.v);
  const S scale(1.0 / std::sqrt(static_cast<double>(dh)));
  MatrixT<S> merged(q_in.rows(), width);
  for (int h = 0; h < heads; ++h) {
    MatrixT<S> logits = q.middleCols(h * dh, dh) * k.middleCols(h * dh, dh).transpose();
    logits *= scale;
    softmax_rows(logits);
    merged.middleCols(h * dh, dh) = logits * v.middleCols(h * dh, dh);
    if (weights) weights->push_back(std::move(logits));
  }
  return linear_rows(merged, p.o);
}

template <class S>
MatrixT<S> expand_t(const StageT<S>& stage, const PhiDims& dims, const VectorT<S>& v) {
  require(v.size() == dims.motion_dim, "expand_motion: motion vector has dimension " + std::to_string(v.size()) +
                                           ", expected " + std::to_string(dims.motion_dim));
  VectorT<S> h = stage.expand1.w * v + stage.expand1.b;
  for (Eigen::Index i = 0; i < h.size(); ++i) h[i] = gelu_t(h[i]);
  const VectorT<S> flat = stage.expand2.w * h + stage.expand2.b;
  MatrixT<S> tokens(dims.motion_tokens, dims.width);
  for (int m = 0; m < dims.motion_tokens; ++m)
    for (int c = 0; c < dims.width; ++c) tokens(m, c) = flat[static_cast<Eigen::Index>(m) * dims.width + c];
  return tokens;
}

template <class S>
void stage_forward(MatrixT<S>& x, const StageT<S>& stage, const PhiDims& dims, const VectorT<S>& motion,
                   GateSwitch gate) {
  MatrixT<S> motion_tokens;
  if (gate.on) motion_tokens = expand_t(stage, dims, motion);
  for (const BlockT<S>& b : stage.blocks) {
    if (gate.on) x += attention_t(layer_norm_t(x, b.norm_cross), motion_tokens, b.cross, dims.heads, nullptr);
    const MatrixT<S> ns = layer_norm_t(x, b.norm_self);
    x += attention_t(ns, ns, b.self, dims.heads, nullptr);
    MatrixT<S> hidden = linear_rows(layer_norm_t(x, b.norm_mlp), b.fc1);
    for (Eigen::Index i = 0; i < hidden.size(); ++i) hidden.data()[i] = gelu_t(hidden.data()[i]);
    x += linear_rows(hidden, b.fc2);
  }
}

template <class S>
MatrixT<S> phi_forward_t(const PhiParamsT<S>& p, const MatrixT<S>& tokens, const VectorT<S>& v_source,
                         const VectorT<S>& v_driving, GateSwitch gate) {
  require(tokens.rows() == p.dims.tokens && tokens.cols() == p.dims.width,
          "phi_forward: feature grid is " + std::to_string(tokens.rows()) + "x" + std::to_string(tokens.cols()) +
              ", expected " + std::to_string(p.dims.tokens) + "x" + std::to_string(p.dims.width));
  require(v_source.size() == p.dims.motion_dim && v_driving.size() == p.dims.motion_dim,
          "phi_forward: motion vector dimension mismatch");
  MatrixT<S> x = tokens;
  stage_forward(x, p.de, p.dims, v_source, gate);
  stage_forward(x, p.re, p.dims, v_driving, gate);
  return x;
}

template <class Params>
auto find_tensor(Params& params, std::string_view name) {
  using Ptr = std::conditional_t<std::is_const_v<Params>, const double*, double*>;
  Ptr data = nullptr;
  std::size_t size = 0;
  visit_tensors(params, [&](const std::string& n, auto& t) {
    if (n == name) {
      data = t.data();
      size = static_cast<std::size_t>(t.size());
    }
  });
  if (!data) throw ContractViolation("phi: unknown tensor '" + std::string(name) + "'");
  return std::span(data, size);
}

double probe_dot(const Eigen::MatrixXd& probe, const Eigen::MatrixXd& out) {
  require(probe.rows() == out.rows() && probe.cols() == out.cols(), "jacobian check: probe shape mismatch");
  return probe.cwiseProduct(out).sum();
}

}  // namespace

PhiParams zero_phi(const PhiDims& dims) { return zero_params<double>(dims); }

PhiParams init_phi(const PhiDims& dims, std::uint64_t seed) {
  PhiParams p = zero_params<double>(dims);
  Rng rng(derive_seed(seed, {0x504849ull}));
  Eigen::Index fan_in = 1;
  visit_tensors(p, [&](const std::string& name, auto& t) {
    if (name.ends_with(".gamma")) {
      t.setOnes();
      return;
    }
    if (name.ends_with(".beta")) return;
    // Bias fan-in is that of its weight, the matrix visited just before.
    if (name.ends_with(".w")) fan_in = t.cols();
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] = rng.uniform(-bound, bound);
  });
  for (StageT<double>* stage : {&p.de, &p.re}) {
    for (BlockT<double>& b : stage->blocks) {
      b.cross.o.w.setZero();
      b.cross.o.b.setZero();
    }
  }
  return p;
}

std::vector<std::string> phi_tensor_names(const PhiParams& params) {
  std::vector<std::string> names;
  visit_tensors(params, [&](const std::string& n, const auto&) { names.push_back(n); });
  return names;
}

std::span<double> phi_tensor(PhiParams& params, std::string_view name) { return find_tensor(params, name); }
std::span<const double> phi_tensor(const PhiParams& params, std::string_view name) {
  return find_tensor(params, name);
}

Eigen::MatrixXd expand_motion(const StageT<double>& stage, const PhiDims& dims, const MotionVector& v) {
  return expand_t(stage, dims, v.values);
}

Eigen::MatrixXd attention(const Eigen::MatrixXd& q_in, const Eigen::MatrixXd& kv_in, const AttentionParams& params,
                          int heads) {
  return attention_t(q_in, kv_in, params, heads, nullptr);
}

std::vector<Eigen::MatrixXd> attention_weights(const Eigen::MatrixXd& q_in, const Eigen::MatrixXd& kv_in,
                                               const AttentionParams& params, int heads) {
  std::vector<Eigen::MatrixXd> weights;
  attention_t(q_in, kv_in, params, heads, &weights);
  return weights;
}

Eigen::MatrixXd layer_norm(const Eigen::MatrixXd& x, const LayerNormT<double>& params) {
  return layer_norm_t(x, params);
}

double gelu(double x) { return gelu_t(x); }

FeatureGrid phi_forward(const PhiParams& params, const FeatureGrid& features, const MotionVector& v_source,
                        const MotionVector& v_driving, GateSwitch gate) {
  return {phi_forward_t(params, features.tokens, v_source.values, v_driving.values, gate)};
}

double phi_jvp(const PhiParams& params, const FeatureGrid& features, const MotionVector& v_source,
               const MotionVector& v_driving, GateSwitch gate, std::string_view tensor,
               std::span<const double> direction, const Eigen::MatrixXd& probe) {
  PhiParamsT<Dual> dual = cast_params<Dual>(params);
  const std::span<const double> target = phi_tensor(params, tensor);
  require(direction.size() == target.size(), "phi_jvp: direction has " + std::to_string(direction.size()) +
                                                 " entries, tensor has " + std::to_string(target.size()));
  visit_tensors(dual, [&](const std::string& n, auto& t) {
    if (n != tensor) return;
    for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i].d = direction[static_cast<std::size_t>(i)];
  });
  const MatrixT<Dual> x = features.tokens.cast<Dual>();
  const VectorT<Dual> vs = v_source.values.cast<Dual>();
  const VectorT<Dual> vd = v_driving.values.cast<Dual>();
  const MatrixT<Dual> out = phi_forward_t(dual, x, vs, vd, gate);
  require(probe.rows() == out.rows() && probe.cols() == out.cols(), "phi_jvp: probe shape mismatch");
  double jvp = 0.0;
  for (Eigen::Index i = 0; i < out.size(); ++i) jvp += probe.data()[i] * out.data()[i].d;
  return jvp;
}

JacobianCheck finite_diff_jacobian_check(const PhiParams& params, const FeatureGrid& features,
                                         const MotionVector& v_source, const MotionVector& v_driving,
                                         GateSwitch gate, std::string_view tensor,
                                         std::span<const double> direction, const Eigen::MatrixXd& probe,
                                         double step) {
  require(step > 0.0, "finite_diff_jacobian_check: step must be positive");
  JacobianCheck check;
  check.analytic = phi_jvp(params, features, v_source, v_driving, gate, tensor, direction, probe);
  auto shifted = [&](double eps) {
    PhiParams p = params;
    std::span<double> t = phi_tensor(p, tensor);
    for (std::size_t i = 0; i < t.size(); ++i) t[i] += eps * direction[i];
    return probe_dot(probe, phi_forward(p, features, v_source, v_driving, gate).tokens);
  };
  check.numeric = (shifted(step) - shifted(-step)) / (2.0 * step);
  const double scale = std::max(std::abs(check.analytic), std::abs(check.numeric));
  check.relative_error = scale > 0.0 ? std::abs(check.analytic - check.numeric) / scale : 0.0;
  return check;
}

MotionEmbedding make_motion_embedding(int expression_dim, std::uint64_t seed) {
  require(expression_dim >= 1, "make_motion_embedding: expression dimension must be positive");
  Rng rng(derive_seed(seed, {0x4D4F54ull}));
  MotionEmbedding e;
  auto gaussian = [&](Eigen::MatrixXd& m, int rows, int cols) {
    m.resize(rows, cols);
    const double sd = 1.0 / std::sqrt(static_cast<double>(cols));
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal(0.0, sd);
  };
  gaussian(e.expression_map, kMotionExpressionDim, expression_dim);
  gaussian(e.lip_map, kMotionLipDim, expression_dim + 3);
  gaussian(e.eye_map, kMotionEyeDim, 3);
  e.bias.resize(kMotionDim);
  for (Eigen::Index i = 0; i < e.bias.size(); ++i) e.bias[i] = rng.normal(0.0, 0.01);
  return e;
}

MotionVector embed_motion(const MotionEmbedding& e, const Eigen::VectorXd& expression, const Vec3& eye,
                          const Vec3& jaw) {
  require(expression.size() == e.expression_map.cols(),
          "embed_motion: expression has dimension " + std::to_string(expression.size()) + ", embedding expects " +
              std::to_string(e.expression_map.cols()));
  Eigen::VectorXd lip_in(expression.size() + 3);
  lip_in << expression, jaw;
  MotionVector v;
  v.values.segment(0, kMotionExpressionDim) = e.expression_map * expression;
  v.values.segment(kMotionExpressionDim, kMotionLipDim) = e.lip_map * lip_in;
  v.values.segment(kMotionExpressionDim + kMotionLipDim, kMotionEyeDim) = e.eye_map * eye;
  v.values += e.bias;
  return v;
}

MotionVector synth_motion_vector(const Eigen::VectorXd& expression, const Vec3& eye, const Vec3& jaw,
                                 std::uint64_t seed) {
  return embed_motion(make_motion_embedding(static_cast<int>(expression.size()), seed), expression, eye, jaw);
}

void write_phi(const PhiParams& params, std::ostream& os) {
  const PhiDims& d = params.dims;
  binio::write_magic(os, "PHI1");
  for (int v : {d.tokens, d.width, d.heads, d.motion_tokens, d.blocks, d.expand_hidden, d.motion_dim})
    binio::write_u32(os, static_cast<std::uint32_t>(v));
  std::vector<float> buffer;
  visit_tensors(params, [&](const std::string&, const auto& t) {
    buffer.resize(static_cast<std::size_t>(t.size()));
    for (Eigen::Index i = 0; i < t.size(); ++i) buffer[i] = static_cast<float>(t.data()[i]);
    binio::write_f32s(os, buffer);
  });
}

PhiParams read_phi(std::istream& is, const std::string& source) {
  const std::string what = "Phi parameter file " + source;
  binio::expect_magic(is, "PHI1", what);
  std::array<std::uint32_t, 7> h{};
  for (auto& v : h) v = binio::read_u32(is, what);
  for (auto v : h) {
    if (v == 0 || v > (1u << 16)) throw ParseError(what + ": implausible dimension " + std::to_string(v));
  }
  PhiDims dims{static_cast<int>(h[0]), static_cast<int>(h[1]), static_cast<int>(h[2]), static_cast<int>(h[3]),
               static_cast<int>(h[4]), static_cast<int>(h[5]), static_cast<int>(h[6])};
  if (dims.width % dims.heads != 0) throw ParseError(what + ": width not divisible by heads");
  PhiParams p = zero_phi(dims);
  std::vector<float> buffer;
  visit_tensors(p, [&](const std::string&, auto& t) {
    buffer.resize(static_cast<std::size_t>(t.size()));
    binio::read_f32s(is, buffer, what);
    for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] = buffer[i];
  });
  return p;
}

void save_phi(const PhiParams& params, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  write_phi(params, os);
  if (!os) throw IoError("failed writing " + path.string());
}

PhiParams load_phi(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  return read_phi(is, path.string());
}

}  // namespace headsynth
