#include <gtest/gtest.h>

#include "headsynth/losses.hpp"

using namespace headsynth;

TEST(L1, MeanAbsoluteDifference) {
  const std::vector<double> a{1, 2, 3}, b{2, 2, 1};
  EXPECT_DOUBLE_EQ(l1(a, b), 1.0);
  EXPECT_THROW(l1(a, std::vector<double>{1.0}), ContractViolation);
  Image x(2, 1, 2, 1.0f), y(2, 1, 2, 0.5f);
  EXPECT_DOUBLE_EQ(l1(x, y), 0.5);
}

TEST(MaskedL1, OnlyMaskedPixelsCount) {
  Image a(2, 2, 3, 0.0f), b(2, 2, 3, 0.0f), mask(2, 2, 1, 0.0f);
  b.at(1, 0, 0) = 3.0f;
  b.at(0, 1, 2) = 100.0f;
  EXPECT_DOUBLE_EQ(masked_l1(a, b, mask), 0.0);
  mask.at(1, 0) = 1.0f;
  EXPECT_DOUBLE_EQ(masked_l1(a, b, mask), 1.0);
  EXPECT_THROW(masked_l1(a, b, Image(2, 2, 3)), ContractViolation);
}

TEST(LossTri, MeanOverPointsAndChannels) {
  Eigen::MatrixXd f = Eigen::MatrixXd::Zero(4, 2), r = Eigen::MatrixXd::Ones(4, 2);
  EXPECT_DOUBLE_EQ(loss_tri(f, r), 1.0);
  EXPECT_DOUBLE_EQ(loss_tri(Eigen::MatrixXd(0, 2), Eigen::MatrixXd(0, 2)), 0.0);
  EXPECT_THROW(loss_tri(f, Eigen::MatrixXd::Ones(4, 3)), ContractViolation);
}

TEST(LossPart, SumsSigmaInsideTheMask) {
  Image mask(4, 4, 1, 0.0f);
  mask.at(2, 1) = 1.0f;
  const std::vector<double> sigma{1.0, 2.0, 4.0, 8.0};
  const std::vector<Eigen::Vector2d> px{{2.5, 1.9}, {2.0, 1.0}, {1.99, 1.5}, {-0.5, 9.0}};
  EXPECT_DOUBLE_EQ(loss_part(sigma, px, mask), 3.0);
}

TEST(TotalLoss, WeightedSumWithHooks) {
  const LossTerms ones{1, 1, 1, 1, 1};
  EXPECT_NEAR(total_loss(ones).total, 3.4, 1e-15);
  LossHooks hooks;
  hooks.identity = [] { return 1.0; };
  hooks.adversarial = [] { return 1.0; };
  EXPECT_NEAR(total_loss(ones, {}, hooks).total, 4.41, 1e-15);
  hooks.perceptual = [] { return 0.5; };
  const LossReport r = total_loss(ones, {}, hooks);
  EXPECT_DOUBLE_EQ(r.re, 1.5);
  EXPECT_NEAR(r.total, 4.91, 1e-15);
  LossWeights bad;
  bad.opa = -1.0;
  EXPECT_THROW(total_loss(ones, bad), ContractViolation);
}

TEST(TotalLoss, ReportFormat) {
  const std::string s = total_loss(LossTerms{0.5, 0, 0, 0, 0}).to_string();
  EXPECT_EQ(s.rfind("re=0.5 f=0 tri=0 depth=0 opa=0 id=0 adv=0 total=0.5", 0), 0u) << s;
}
