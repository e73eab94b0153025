#include <gtest/gtest.h>

#include <cmath>

#include "almh/limit_sde.hpp"
#include "almh/presets.hpp"

using namespace almh;

TEST(ClosedForm, ExponentialKernel) {
  EXPECT_NEAR(closed_form_x(0.5, 2.0, 1.0, 1.0), 0.5 * 2.0 * 1.0 * (1 - std::exp(-1.0)), 1e-15);
  EXPECT_EQ(closed_form_x(0.5, 2.0, 1.0, 0.0), 0.0);
}

TEST(Picard, ConstantRateMatchesClosedForm) {
  auto s = preset("plain-hawkes");
  s.f.family = IntensityFamily::constant;
  s.f.f_min = s.f.f_max = 1.2;
  PicardOptions o;
  o.T = 2.0;
  o.dt = 0.005;
  o.n_particles = 4000;
  o.seed = 2;
  auto [x, rep] = solve_x_picard(s, o);
  EXPECT_TRUE(rep.converged);
  double err = 0.0;
  for (std::size_t n = 0; n < x.size(); ++n)
    err = std::max(err, std::abs(x.values[n] - closed_form_x(s.h.J, 1.2, s.h.tau, x.time(n))));
  EXPECT_LT(err, 5e-3);
}

TEST(Picard, DeltasContractAndRunIsReproducible) {
  auto s = preset("adaptation-1d");
  PicardOptions o;
  o.T = 2.0;
  o.dt = 0.01;
  o.n_particles = 2000;
  o.seed = 4;
  auto [x1, r1] = solve_x_picard(s, o);
  auto [x2, r2] = solve_x_picard(s, o);
  EXPECT_EQ(x1.values, x2.values);
  ASSERT_GE(r1.deltas.size(), 3u);
  EXPECT_LT(r1.deltas.back(), r1.deltas.front());
}

TEST(LimitProcess, RenewalAgeLaw) {
  auto s = preset("plain-hawkes");
  s.f.family = IntensityFamily::constant;
  s.f.f_min = s.f.f_max = 1.0;
  s.h.J = 0.0;
  auto x = XPath::constant(3.0, 0.01, 0.0);
  auto tr = simulate_limit_process(s, x, 20000, 1, {3.0});
  // Stationary initial ages stay exponential(1).
  double mean = 0.0;
  for (double a : tr.ages[0]) mean += a;
  mean /= tr.ages[0].size();
  EXPECT_NEAR(mean, 1.0, 0.03);
}
