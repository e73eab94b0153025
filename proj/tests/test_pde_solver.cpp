#include <gtest/gtest.h>

#include <cmath>

#include "almh/pde_solver.hpp"
#include "almh/presets.hpp"

using namespace almh;

namespace {

ModelSpec renewal(double lambda) {
  auto s = preset("plain-hawkes");
  s.f.family = IntensityFamily::constant;
  s.f.f_min = s.f.f_max = lambda;
  s.h.J = 0.0;
  s.init.age = Law1D::uniform(0.5, 1.0);
  s.init.mem = {Law1D::truncated_gaussian(0.0, 0.2, -0.9, 0.9)};
  return s;
}

}  // namespace

TEST(MemAxis, InterpolationReproducesLinear) {
  MemAxis ax;
  ax.d = 2;
  ax.lo = {-1, 0};
  ax.dm = {0.25, 0.5};
  ax.n = {9, 5};
  std::vector<double> v(ax.cells());
  for (std::size_t c = 0; c < ax.cells(); ++c) {
    Mem p = ax.point(c);
    v[c] = 2 * p[0] - 3 * p[1] + 1;
  }
  EXPECT_NEAR(ax.interp(v.data(), Mem{0.13, 1.7}), 2 * 0.13 - 3 * 1.7 + 1, 1e-13);
  EXPECT_EQ(ax.interp(v.data(), Mem{1.2, 0.5}), 0.0);
}

TEST(Pde, RenewalAgeMarginal) {
  const double lambda = 1.5, T = 2.0;
  auto s = renewal(lambda);
  Grid g = default_grid(s, T);
  g.dt = 0.01;
  g.n_m = {21, 21};
  g.save_times = {T};
  auto sol = solve_alm_pde(s, g);
  const auto& r = sol.snapshots.back();
  // Cells with a < T - dt carry only the newborn mass.
  double err = 0.0;
  for (int i = 0; i < r.n_a; ++i) {
    double a0 = i * r.da, a1 = (i + 1) * r.da;
    if (a1 > T - 1e-12) break;
    double exact = std::exp(-lambda * a0) - std::exp(-lambda * a1);
    err += std::abs(r.age_marginal[i] * r.da - exact);
  }
  EXPECT_LT(err, 1e-3);
  EXPECT_NEAR(sol.mass_trace.back(), 1.0, 1e-12);
}

TEST(Pde, ConservesMassAndStaysNonnegative) {
  for (const std::string name : {"adaptation-1d", "stp"}) {
    auto s = preset(name);
    Grid g = default_grid(s, 1.0);
    g.dt = 0.05;
    g.n_m = {61, 41};
    g.save_times = {0.5, 1.0};
    PdeOptions o;
    o.weak_tests = default_test_functions(s, 1.0);
    auto sol = solve_alm_pde(s, g, o);
    for (double m : sol.mass_trace) EXPECT_NEAR(m, 1.0, 1e-6) << name;
    for (double v : sol.flux_imbalance) EXPECT_LT(v, 1e-10) << name;
    for (const auto& sn : sol.snapshots)
      for (double v : sn.values) EXPECT_GE(v, 0.0);
    EXPECT_TRUE(sol.apriori_bound_ok);
    ASSERT_EQ(sol.weak_residuals.size(), 5u);
    EXPECT_LT(sol.weak_residuals[0], 1e-10);  // G = 1 is mass
  }
}

TEST(Pde, WeakResidualShrinksWithResolution) {
  auto s = preset("adaptation-1d");
  auto run = [&](double dt, int nm) {
    Grid g = default_grid(s, 1.0);
    g.dt = dt;
    g.n_m = {nm, 1};
    PdeOptions o;
    o.weak_tests = default_test_functions(s, 1.0);
    auto sol = solve_alm_pde(s, g, o);
    return *std::max_element(sol.weak_residuals.begin(), sol.weak_residuals.end());
  };
  EXPECT_LT(run(0.025, 101), run(0.1, 26));
}

TEST(Pde, LmSolverConservesMass) {
  auto s = preset("adaptation-1d");
  s.f.c_a = 0.0;
  Grid g = default_grid(s, 1.0);
  g.dt = 0.02;
  g.n_m = {101, 1};
  g.save_times = {1.0};
  auto sol = solve_lm_pde(s, g);
  for (double m : sol.mass_trace) EXPECT_NEAR(m, 1.0, 1e-6);
  EXPECT_EQ(sol.snapshots.back().n_a, 1);
}

TEST(Pde, Deterministic) {
  auto s = preset("stp");
  Grid g = default_grid(s, 0.5);
  g.dt = 0.05;
  g.n_m = {31, 1};
  g.save_times = {0.5};
  auto a = solve_alm_pde(s, g), b = solve_alm_pde(s, g);
  EXPECT_EQ(a.snapshots.back().values, b.snapshots.back().values);
  EXPECT_EQ(a.x.values, b.x.values);
}

TEST(GridDensity, L1Distance) {
  auto s = renewal(1.0);
  Grid g = default_grid(s, 0.5);
  g.dt = 0.05;
  g.n_m = {11, 1};
  g.save_times = {0.5};
  auto r = solve_alm_pde(s, g).snapshots.back();
  EXPECT_EQ(l1_distance(r, r), 0.0);
  auto z = r;
  std::fill(z.values.begin(), z.values.end(), 0.0);
  EXPECT_NEAR(l1_distance(r, z), mass(r), 1e-14);
}
