#include <gtest/gtest.h>

#include "headsynth/rng.hpp"
#include "headsynth/verify.hpp"

using namespace headsynth;

TEST(Oracles, PsnrOfIdenticalAndShiftedImages) {
  Image a(4, 4, 3, 0.5f), b = a;
  EXPECT_TRUE(std::isinf(psnr(a, b)));
  for (float& v : b.data()) v += 0.1f;
  EXPECT_NEAR(psnr(a, b), 20.0, 1e-5);
}

TEST(Oracles, KsAndChiSquareRecogniseUniformity) {
  Rng rng(1);
  std::vector<double> u, skew;
  for (int i = 0; i < 5000; ++i) {
    u.push_back(rng.uniform(2.0, 5.0));
    skew.push_back(2.0 + 3.0 * std::pow(rng.uniform(), 2.0));
  }
  EXPECT_LT(ks_uniform(u, 2.0, 5.0), 0.03);
  EXPECT_GT(ks_uniform(skew, 2.0, 5.0), 0.1);
  EXPECT_GT(chi_square_uniform_pvalue(u, 2.0, 5.0), 0.001);
  EXPECT_LT(chi_square_uniform_pvalue(skew, 2.0, 5.0), 1e-6);
}

TEST(PropertyChecks, AllPass) {
  VerifyOptions options;
  for (const NamedCheck& c : property_checks()) {
    const CheckResult r = run_check(c, options);
    EXPECT_TRUE(r.passed) << r.name << ": " << r.detail;
  }
}

TEST(RunCheck, ExceptionsBecomeFailures) {
  const NamedCheck c{"throws", [](const VerifyOptions&) -> CheckResult { throw std::runtime_error("boom"); }};
  const CheckResult r = run_check(c, {});
  EXPECT_FALSE(r.passed);
  EXPECT_EQ(r.name, "throws");
  EXPECT_NE(r.detail.find("boom"), std::string::npos);
}

TEST(AcceptanceChecks, TenInOrder) {
  ASSERT_EQ(acceptance_checks().size(), 10u);
  EXPECT_EQ(acceptance_checks().front().name, "surface field identity");
  EXPECT_EQ(acceptance_checks().back().name, "dataset determinism");
}
