#include <gtest/gtest.h>

#include <cmath>

#include "almh/presets.hpp"

using namespace almh;

TEST(Psi, FrozenValue) {
  PsiParams p{2.0, 1.0};
  EXPECT_NEAR(psi_eval(2.0, p), 1.2642411176571153, 1e-15);
  EXPECT_EQ(psi_eval(0.0, p), 0.0);
  EXPECT_THROW(psi_eval(-1.0, p), std::domain_error);
}

TEST(Psi, BoundedMonotoneContraction) {
  PsiParams p{1.5, 0.7};
  double prev = 0.0;
  for (double a = 0.01; a < 40.0; a += 0.37) {
    double v = psi_eval(a, p);
    EXPECT_GT(v, prev);
    EXPECT_LT(v, p.K);
    EXPECT_LE(v - prev, p.kappa * 0.37 + 1e-15);
    prev = v;
  }
}

TEST(Intensity, SigmoidMidpoint) {
  IntensitySpec f;
  f.family = IntensityFamily::sigmoid_affine;
  f.f_min = 0.1;
  f.f_max = 1.6;
  EXPECT_DOUBLE_EQ(intensity_eval(f, PsiParams{}, 3.0, Mem{}, 0.0, 1), 0.85);
}

TEST(Intensity, StaysInBounds) {
  for (const auto& name : preset_names()) {
    auto s = preset(name);
    Rng rng(3);
    for (int i = 0; i < 2000; ++i) {
      Mem m{};
      for (int k = 0; k < s.d; ++k) m[k] = 6 * rng.uniform() - 3;
      double v = f_of(s, 10 * rng.uniform(), m, 8 * rng.uniform() - 4);
      EXPECT_GE(v, s.f.f_min);
      EXPECT_LE(v, s.f.f_max);
    }
  }
}

TEST(Jump, AffineContraction) {
  JumpSpec j;
  j.family = JumpFamily::affine_contraction;
  j.alpha = 0.25;
  EXPECT_DOUBLE_EQ(jump_apply(j, Mem{0.4}, 1)[0], 0.55);
  EXPECT_NEAR(jump_inverse(j, Mem{0.55}, 1)[0], 0.4, 1e-15);
  j.alpha = 0.5;
  EXPECT_NEAR(jump_inverse_jacobian_logdet(j, Mem{0.3}, 1), std::log(2.0), 1e-15);
  EXPECT_NEAR(jump_inverse_jacobian_logdet(j, Mem{0.3, 0.1}, 2), 2 * std::log(2.0), 1e-15);
}

TEST(Jump, CustomNewtonInverse) {
  JumpSpec j;
  j.family = JumpFamily::custom;
  j.gamma = [](const Mem& m) { return Mem{m[0] + 0.2 * std::tanh(m[0]) + 0.1}; };
  for (double m : {-2.0, -0.3, 0.0, 0.7, 3.0}) {
    Mem r = jump_inverse(j, jump_apply(j, Mem{m}, 1), 1);
    EXPECT_NEAR(r[0], m, 1e-12);
  }
  // logdet of the inverse at gamma(0): -log(1.2)
  EXPECT_NEAR(jump_inverse_jacobian_logdet(j, jump_apply(j, Mem{0.0}, 1), 1), -std::log(1.2), 1e-6);
}

TEST(Kernel, ExponentialAndErlang) {
  InteractionSpec h;
  h.J = 0.5;
  h.tau = 2.0;
  EXPECT_DOUBLE_EQ(kernel_eval(h, 0.0), 0.5);
  EXPECT_NEAR(kernel_eval(h, 2.0), 0.5 * std::exp(-1.0), 1e-16);
  EXPECT_EQ(kernel_eval(h, -0.1), 0.0);
  h.kernel = KernelFamily::erlang;
  h.erlang_shape = 2;
  // Shape-2 Erlang profile J (t/tau) e^{-t/tau} integrates to J tau.
  double total = gauss_integrate([&](double t) { return kernel_eval(h, t); }, 0.0, 120.0, 16, 40);
  EXPECT_NEAR(total, 1.0, 1e-10);
}

TEST(Law, QuantileInvertsCdf) {
  for (auto law : {Law1D::exponential(1.7), Law1D::uniform(-1, 2), Law1D::truncated_gaussian(0.3, 0.4, 0, 1)}) {
    for (double u : {0.01, 0.2, 0.5, 0.77, 0.99}) EXPECT_NEAR(law.cdf(law.quantile(u)), u, 1e-10);
    double m = gauss_integrate([&](double x) { return law.pdf(x); }, law.support_lo(),
                               std::isfinite(law.support_hi()) ? law.support_hi() : 40.0, 16, 64);
    EXPECT_NEAR(m, 1.0, 1e-9);
  }
}

TEST(Validation, PresetsPassAllChecks) {
  for (const auto& name : preset_names()) {
    auto rep = validate_assumptions(preset(name), 3000, 1);
    EXPECT_TRUE(rep.all_pass()) << name;
    EXPECT_EQ(rep.checks.size() >= 6u, true);
  }
}

TEST(Validation, ExpandingJumpFails) {
  auto s = preset("plain-hawkes");
  s.jump.family = JumpFamily::custom;
  s.jump.custom_scale = {1.5, 1, 1, 1};
  auto rep = validate_assumptions(s, 2000, 1);
  EXPECT_FALSE(rep.all_pass());
}

TEST(Validation, RejectsMalformedSpec) {
  auto s = preset("plain-hawkes");
  s.f.f_min = 0.0;
  EXPECT_THROW(validate_spec(s), std::invalid_argument);
  s = preset("stp");
  s.jump.alpha = 1.2;
  EXPECT_THROW(validate_spec(s), std::invalid_argument);
  s = preset("plain-hawkes");
  s.d = 0;
  EXPECT_THROW(validate_spec(s), std::invalid_argument);
}
