#include <gtest/gtest.h>

#include <sstream>

#include "headsynth/motionnet.hpp"
#include "headsynth/rng.hpp"

using namespace headsynth;

namespace {

PhiDims tiny_dims() {
  PhiDims d;
  d.tokens = 6;
  d.width = 8;
  d.heads = 2;
  d.motion_tokens = 3;
  d.blocks = 2;
  d.expand_hidden = 12;
  return d;
}

MotionVector random_motion(Rng& rng) {
  MotionVector v;
  for (Eigen::Index i = 0; i < v.values.size(); ++i) v.values[i] = rng.normal();
  return v;
}

FeatureGrid random_grid(const PhiDims& d, Rng& rng) {
  FeatureGrid g{Eigen::MatrixXd(d.tokens, d.width)};
  for (Eigen::Index i = 0; i < g.tokens.size(); ++i) g.tokens.data()[i] = rng.normal();
  return g;
}

void randomize_cross_outputs(PhiParams& p, Rng& rng) {
  for (const auto& name : phi_tensor_names(p)) {
    if (name.find(".cross.o.") == std::string::npos) continue;
    for (double& x : phi_tensor(p, name)) x = rng.uniform(-0.2, 0.2);
  }
}

}  // namespace

TEST(PhiDims, MotionVectorLayout) {
  EXPECT_EQ(kMotionDim, kMotionExpressionDim + kMotionLipDim + kMotionEyeDim);
  EXPECT_EQ(kMotionDim, 548);
  PhiDims bad = tiny_dims();
  bad.heads = 3;  // width 8 is not divisible by 3
  EXPECT_THROW(bad.validate(), ContractViolation);
}

TEST(PhiInit, CrossOutputsStartAtZero) {
  const PhiParams p = init_phi(tiny_dims(), 1);
  for (const auto& name : phi_tensor_names(p)) {
    const auto t = phi_tensor(p, name);
    const bool all_zero = std::all_of(t.begin(), t.end(), [](double x) { return x == 0.0; });
    EXPECT_EQ(all_zero, name.find(".cross.o.") != std::string::npos || name.ends_with("beta")) << name;
  }
  EXPECT_EQ(phi_tensor_names(p).front(), "de.expand1.w");
  EXPECT_THROW(phi_tensor(const_cast<PhiParams&>(p), "de.nope"), ContractViolation);
}

TEST(PhiForward, GateOffIgnoresMotion) {
  Rng rng(1);
  const PhiDims d = tiny_dims();
  PhiParams p = init_phi(d, 2);
  randomize_cross_outputs(p, rng);
  const FeatureGrid g = random_grid(d, rng);
  const FeatureGrid a = phi_forward(p, g, random_motion(rng), random_motion(rng), {false});
  const FeatureGrid b = phi_forward(p, g, random_motion(rng), random_motion(rng), {false});
  EXPECT_EQ(a.tokens, b.tokens);
  EXPECT_NE(phi_forward(p, g, random_motion(rng), random_motion(rng), {true}).tokens, a.tokens);
}

TEST(PhiForward, ZeroInitGateOnEqualsGateOff) {
  Rng rng(3);
  const PhiDims d = tiny_dims();
  const PhiParams p = init_phi(d, 4);
  const FeatureGrid g = random_grid(d, rng);
  const MotionVector s = random_motion(rng), t = random_motion(rng);
  EXPECT_EQ(phi_forward(p, g, s, t, {true}).tokens, phi_forward(p, g, s, t, {false}).tokens);
}

TEST(Attention, RowsAreProbabilityDistributions) {
  Rng rng(5);
  const PhiDims d = tiny_dims();
  const PhiParams p = init_phi(d, 6);
  const FeatureGrid g = random_grid(d, rng);
  const Eigen::MatrixXd m = expand_motion(p.de, d, random_motion(rng));
  ASSERT_EQ(m.rows(), d.motion_tokens);
  for (const auto& w : attention_weights(g.tokens, m, p.de.blocks[0].cross, d.heads)) {
    EXPECT_EQ(w.rows(), d.tokens);
    EXPECT_EQ(w.cols(), d.motion_tokens);
    EXPECT_GE(w.minCoeff(), 0.0);
    EXPECT_LT((w.rowwise().sum().array() - 1.0).abs().maxCoeff(), 1e-12);
  }
}

TEST(LayerNorm, NormalizesRows) {
  LayerNormT<double> ln;
  ln.gamma = Eigen::VectorXd::Ones(4);
  ln.beta = Eigen::VectorXd::Zero(4);
  Eigen::MatrixXd x(2, 4);
  x << 1, 2, 3, 4, -1, 0, 5, 2;
  const Eigen::MatrixXd y = layer_norm(x, ln);
  for (int r = 0; r < 2; ++r) {
    EXPECT_NEAR(y.row(r).mean(), 0.0, 1e-12);
    EXPECT_NEAR(y.row(r).squaredNorm() / 4.0, 1.0, 1e-4);
  }
  EXPECT_NEAR(gelu(0.0), 0.0, 1e-15);
  EXPECT_NEAR(gelu(10.0), 10.0, 1e-9);
}

TEST(PhiJacobian, DualNumbersAgreeWithFiniteDifferences) {
  Rng rng(7);
  const PhiDims d = tiny_dims();
  PhiParams p = init_phi(d, 8);
  randomize_cross_outputs(p, rng);
  const FeatureGrid g = random_grid(d, rng);
  Eigen::MatrixXd probe(d.tokens, d.width);
  for (Eigen::Index i = 0; i < probe.size(); ++i) probe.data()[i] = rng.normal();
  const MotionVector s = random_motion(rng), t = random_motion(rng);
  for (const char* name : {"de.expand2.b", "de.blocks.0.cross.q.w", "re.blocks.1.fc1.w", "re.blocks.1.norm_mlp.gamma"}) {
    const std::size_t n = phi_tensor(p, name).size();
    std::vector<double> dir(n);
    for (double& x : dir) x = rng.normal() / std::sqrt(double(n));
    const JacobianCheck c = finite_diff_jacobian_check(p, g, s, t, {true}, name, dir, probe);
    EXPECT_LT(c.relative_error, 1e-4) << name << " analytic " << c.analytic << " numeric " << c.numeric;
  }
}

TEST(PhiFile, RoundTripStoresSinglePrecision) {
  const PhiParams p = init_phi(tiny_dims(), 9);
  std::stringstream ss;
  write_phi(p, ss);
  const std::string bytes = ss.str();
  EXPECT_EQ(bytes.substr(0, 4), "PHI1");
  const PhiParams back = read_phi(ss, "memory");
  for (const auto& name : phi_tensor_names(p)) {
    const auto a = phi_tensor(p, name), b = phi_tensor(back, name);
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(b[i], static_cast<double>(static_cast<float>(a[i])));
  }
  std::stringstream again;
  write_phi(back, again);
  EXPECT_EQ(again.str(), bytes);
  std::stringstream truncated(bytes.substr(0, bytes.size() - 4));
  EXPECT_THROW(read_phi(truncated, "short"), ParseError);
}

TEST(MotionEmbedding, DeterministicAndSensitiveToEveryInput) {
  const MotionEmbedding e = make_motion_embedding(10, 1);
  Eigen::VectorXd beta = Eigen::VectorXd::LinSpaced(10, -1, 1);
  const MotionVector v = embed_motion(e, beta, Vec3(0.1, 0, 0), Vec3(0.2, 0, 0));
  EXPECT_EQ(v.values.size(), kMotionDim);
  EXPECT_EQ(embed_motion(make_motion_embedding(10, 1), beta, Vec3(0.1, 0, 0), Vec3(0.2, 0, 0)).values, v.values);
  const MotionVector eye = embed_motion(e, beta, Vec3(0.2, 0, 0), Vec3(0.2, 0, 0));
  EXPECT_EQ(eye.values.head(kMotionExpressionDim + kMotionLipDim), v.values.head(kMotionExpressionDim + kMotionLipDim));
  EXPECT_NE(eye.values.tail(kMotionEyeDim), v.values.tail(kMotionEyeDim));
  EXPECT_THROW(embed_motion(e, Eigen::VectorXd::Zero(9), Vec3::Zero(), Vec3::Zero()), ContractViolation);
}
