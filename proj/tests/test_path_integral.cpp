#include <gtest/gtest.h>

#include <cmath>

#include "almh/path_integral.hpp"
#include "almh/presets.hpp"

using namespace almh;

namespace {

JumpTimes random_times(Rng& rng, int k, double t) {
  std::vector<double> v(k);
  for (double& x : v) x = t * (0.02 + 0.96 * rng.uniform());
  std::sort(v.begin(), v.end());
  for (int i = 1; i < k; ++i)
    if (v[i] <= v[i - 1]) v[i] = v[i - 1] + 1e-6;
  return {v};
}

ModelSpec affine2d() {
  ModelSpec s;
  s.d = 2;
  s.Lambda = {0.7, 1.3, 1, 1};
  s.f.family = IntensityFamily::sigmoid_affine;
  s.f.f_min = 0.2;
  s.f.f_max = 1.5;
  s.f.c_a = 1.0;
  s.f.c_m = {0.5, -0.4};
  s.f.c_x = 0.8;
  s.jump.family = JumpFamily::affine_contraction;
  s.jump.alpha = 0.3;
  s.init.mem = {Law1D::uniform(0, 1), Law1D::uniform(0, 1)};
  s.has_m_box = true;
  s.m_hi = {1, 1};
  return s;
}

}  // namespace

TEST(Theta, RecurrenceMatchesDirectComposition) {
  auto s = affine2d();
  Rng rng(5);
  for (int n = 0; n < 500; ++n) {
    int k = static_cast<int>(rng.index(6));
    double t = 0.5 + 3 * rng.uniform();
    auto jt = random_times(rng, k, t);
    Mem m0{rng.uniform(), rng.uniform()};
    Mem a = theta_k(jt, t, s, m0), b = theta_k_recursive(jt, t, s, m0);
    EXPECT_NEAR(a[0], b[0], 1e-14);
    EXPECT_NEAR(a[1], b[1], 1e-14);
  }
}

TEST(Theta, InverseLogdetAffine) {
  auto s = affine2d();
  JumpTimes jt{{0.3, 0.9, 1.4}};
  double t = 2.0, ld = 0.0;
  Mem m0{0.2, 0.6};
  Mem back = theta_k_inverse(jt, t, s, theta_k(jt, t, s, m0), &ld);
  EXPECT_NEAR(back[0], 0.2, 1e-14);
  EXPECT_NEAR(back[1], 0.6, 1e-14);
  EXPECT_NEAR(ld, t * 2.0 + 3 * 2 * -std::log(0.7), 1e-13);
}

TEST(Phi, RoundTripAndDomain) {
  auto s = affine2d();
  JumpTimes jt{{0.4, 1.1}};
  auto p = phi_k_apply(jt, 0.0, 1.5, s, Mem{0.1, 0.9});
  EXPECT_NEAR(p.a, 0.4, 1e-15);
  auto pre = phi_k_inverse(p, 2, 1.5, s);
  EXPECT_NEAR(pre.jt.times[1], 1.1, 1e-15);
  EXPECT_NEAR(pre.m0[1], 0.9, 1e-14);
  auto p0 = phi_k_apply({}, 0.7, 1.5, s, Mem{0.5, 0.5});
  EXPECT_NEAR(phi_k_inverse(p0, 0, 1.5, s).a0, 0.7, 1e-15);
  PhiPoint young{{}, 0.5, {0.5, 0.5}};
  EXPECT_THROW(phi_k_inverse(young, 0, 1.5, s), std::domain_error);
  PhiPoint old{{0.4}, 1.3, {0.5, 0.5}};
  EXPECT_THROW(phi_k_inverse(old, 2, 1.5, s), std::domain_error);
}

TEST(Nu, ConstantRateIsPoissonDensity) {
  auto s = preset("plain-hawkes");
  s.f.family = IntensityFamily::constant;
  s.f.f_min = s.f.f_max = 0.8;
  auto x = XPath::constant(3.0, 0.01, 0.0);
  JumpTimes jt{{0.5, 1.2, 2.0}};
  EXPECT_NEAR(nu_k(3.0, jt, 0.3, Mem{0.1}, x, s), std::pow(0.8, 3) * std::exp(-0.8 * 3.0), 1e-14);
  EXPECT_NEAR(eta_k(jt, 0.3, Mem{0.1}, x, s), std::pow(0.8, 3) * std::exp(-0.8 * 2.0), 1e-14);
}

TEST(Nu, ExtendingByOneJumpAtTheEnd) {
  auto s = affine2d();
  auto x = XPath(0.01, [] {
    std::vector<double> v(401);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = std::sin(0.01 * i);
    return v;
  }());
  Rng rng(9);
  for (int n = 0; n < 50; ++n) {
    int k = static_cast<int>(rng.index(4));
    double t = 0.5 + 3 * rng.uniform(), a0 = rng.uniform();
    auto jt = random_times(rng, k, t);
    Mem m0{rng.uniform(), rng.uniform()};
    double age = jt.times.empty() ? a0 + t : t - jt.times.back();
    double lhs = nu_k(t, jt, a0, m0, x, s) * f_of(s, age, theta_k(jt, t, s, m0), x(t));
    JumpTimes ext = jt;
    ext.times.push_back(t);
    double rhs = nu_k(t, ext, a0, m0, x, s);
    EXPECT_NEAR(lhs / rhs, 1.0, 1e-12);
  }
}

TEST(JumpCount, TailBound) {
  int K = jump_count_tail(1.0, 0.6, 1e-4);
  EXPECT_EQ(K, 5);
  EXPECT_LT(poisson_upper_tail(0.6, K), 5e-5);
  EXPECT_GE(poisson_upper_tail(0.6, K - 1), 5e-5);
}

TEST(DensityAt, ConstantRateRenewal) {
  // Constant rate, no memory coupling: the age law at t is
  // lambda e^{-lambda a} for a < t plus the transported initial law.
  auto s = preset("plain-hawkes");
  s.f.family = IntensityFamily::constant;
  s.f.f_min = s.f.f_max = 0.9;
  s.h.J = 0.0;
  s.jump.alpha_vec = {0.0};
  s.init.age = Law1D::exponential(0.9);
  s.init.mem = {Law1D::uniform(-0.5, 0.5)};
  double t = 1.0;
  auto x = XPath::constant(t, 0.01, 0.0);
  PathIntegralConfig cfg;
  cfg.K_max = 8;
  cfg.gl_order = 8;
  cfg.mc_samples = 2000;
  // m = 0 is the image of m0 = 0 only for k = 0; a < t needs at least one jump.
  double a = 0.4, m = 0.1;
  auto v = density_at(t, a, Mem{m}, x, cfg, s);
  // memory density after decay, no jumps since translation 0 and decay e^{-t}: support [-0.5e^{-t}, 0.5e^{-t}]
  double mem_density = std::exp(t) * 1.0;
  EXPECT_NEAR(v.value, 0.9 * std::exp(-0.9 * a) * mem_density, 1e-3 * mem_density);
  EXPECT_GT(v.truncation_bound, 0.0);
  EXPECT_LT(v.truncation_bound, 1e-6);
}
