#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "almh/model.hpp"
#include "almh/parallel.hpp"
#include "almh/quadrature.hpp"
#include "almh/xpath.hpp"

namespace almh {

using HbarFn = std::function<double(double)>;

struct Grid {
  double T = 1.0;
  double dt = 1e-3;
  double a_max = 0.0;  // 0: chosen from the initial age support and f_min
  int n_a = 0;         // output age cells; 0: one per time step
  bool has_box = false;
  Mem m_lo{}, m_hi{};
  std::array<int, 2> n_m{41, 41};
  std::vector<double> save_times;
};

// Regular memory grid: nodes lo + j * dm.
struct MemAxis {
  int d = 1;
  std::array<double, 2> lo{}, dm{1, 1};
  std::array<int, 2> n{1, 1};
  std::size_t cells() const { return static_cast<std::size_t>(n[0]) * (d > 1 ? n[1] : 1); }
  double node(int k, int j) const { return lo[k] + j * dm[k]; }
  double hi(int k) const { return lo[k] + (n[k] - 1) * dm[k]; }
  bool contains(const Mem& m) const {
    for (int k = 0; k < d; ++k)
      if (m[k] < lo[k] - 1e-12 || m[k] > hi(k) + 1e-12) return false;
    return true;
  }
  Mem point(std::size_t c) const {
    Mem m{};
    if (d == 1) {
      m[0] = node(0, static_cast<int>(c));
    } else {
      m[0] = node(0, static_cast<int>(c / n[1]));
      m[1] = node(1, static_cast<int>(c % n[1]));
    }
    return m;
  }
  double weight(std::size_t c) const {
    auto w1 = [&](int k, int j) { return (n[k] > 1 && (j == 0 || j == n[k] - 1)) ? 0.5 * dm[k] : dm[k]; };
    if (d == 1) return w1(0, static_cast<int>(c));
    return w1(0, static_cast<int>(c / n[1])) * w1(1, static_cast<int>(c % n[1]));
  }
  // Multilinear interpolation of `v` (laid out like point()) at reference
  // coordinates r; zero outside the grid.
  double interp(const double* v, const Mem& r) const {
    double u0 = (r[0] - lo[0]) / dm[0];
    if (!(u0 >= 0.0) || u0 > n[0] - 1) return 0.0;
    int i0 = std::min(static_cast<int>(u0), n[0] - 2);
    double w0 = u0 - i0;
    if (d == 1) return (1 - w0) * v[i0] + w0 * v[i0 + 1];
    double u1 = (r[1] - lo[1]) / dm[1];
    if (!(u1 >= 0.0) || u1 > n[1] - 1) return 0.0;
    int i1 = std::min(static_cast<int>(u1), n[1] - 2);
    double w1 = u1 - i1;
    const double* a = v + static_cast<std::size_t>(i0) * n[1];
    const double* b = a + n[1];
    return (1 - w0) * ((1 - w1) * a[i1] + w1 * a[i1 + 1]) + w0 * ((1 - w1) * b[i1] + w1 * b[i1 + 1]);
  }
};

// Density on a fixed grid: age cells [i da, (i+1) da) (cell averages) times memory nodes.
struct GridDensity {
  double t = 0.0;
  double da = 1.0;
  int n_a = 0;
  MemAxis axis;
  std::vector<double> values;  // [i_a * cells + c]
  std::vector<double> age_marginal;  // exact per-cell age marginal when produced by the solver

  double at(int ia, std::size_t c) const { return values[static_cast<std::size_t>(ia) * axis.cells() + c]; }
  double age_center(int ia) const { return (ia + 0.5) * da; }
};

// Age cells use the midpoint rule, memory nodes the trapezoid rule.
inline double mass(const GridDensity& r) {
  const std::size_t C = r.axis.cells();
  std::vector<double> rows(r.n_a);
  for (int i = 0; i < r.n_a; ++i) {
    double s = 0.0;
    for (std::size_t c = 0; c < C; ++c) s += r.axis.weight(c) * r.at(i, c);
    rows[i] = s * r.da;
  }
  return pairwise_sum(rows);
}

inline double l1_distance(const GridDensity& p, const GridDensity& q) {
  if (p.n_a != q.n_a || p.axis.cells() != q.axis.cells()) throw std::invalid_argument("l1_distance: grid mismatch");
  double s = 0.0;
  for (int i = 0; i < p.n_a; ++i)
    for (std::size_t c = 0; c < p.axis.cells(); ++c) s += p.da * p.axis.weight(c) * std::abs(p.at(i, c) - q.at(i, c));
  return s;
}

// Border density b_t(m) = |det D gamma^{-1}(m)| int f(a, gamma^{-1} m, x) rho(a, gamma^{-1} m) da
// on the memory nodes of rho, with multilinear pullback.
inline std::vector<double> border_step(const GridDensity& rho, double x, const ModelSpec& s) {
  const std::size_t C = rho.axis.cells();
  std::vector<double> b(C, 0.0);
  for (std::size_t c = 0; c < C; ++c) {
    Mem m = rho.axis.point(c);
    Mem q = jump_inverse(s.jump, m, s.d);
    double jac = std::exp(jump_inverse_jacobian_logdet(s.jump, m, s.d));
    double acc = 0.0;
    for (int i = 0; i < rho.n_a; ++i) {
      double v = rho.axis.interp(&rho.values[static_cast<std::size_t>(i) * C], q);
      if (v != 0.0) acc += rho.da * f_of(s, rho.age_center(i), q, x) * v;
    }
    b[c] = jac * acc;
  }
  return b;
}

// x_t = Hbar_t + dt sum_{j} int int h(t - t_j, a, m) f(a, m, x_j) rho_j da dm (left endpoint in s).
inline double x_volterra_step(const std::vector<GridDensity>& history, const std::vector<double>& x_hist, double dt,
                              double t, const HbarFn& hbar, const ModelSpec& s) {
  if (history.size() != x_hist.size()) throw std::invalid_argument("x_volterra_step: history size mismatch");
  double acc = 0.0;
  if (!is_zero(s.h)) {
    for (std::size_t j = 0; j < history.size(); ++j) {
      const GridDensity& r = history[j];
      double lag = t - j * dt, inner = 0.0;
      for (int i = 0; i < r.n_a; ++i)
        for (std::size_t c = 0; c < r.axis.cells(); ++c) {
          double v = r.at(i, c);
          if (v == 0.0) continue;
          Mem m = r.axis.point(c);
          double a = r.age_center(i);
          inner += r.da * r.axis.weight(c) * h_of(s, lag, a, m) * f_of(s, a, m, x_hist[j]) * v;
        }
      acc += dt * inner;
    }
  }
  return hbar(t) + acc;
}

// Smooth test function G(t, a, m) for the weak formulation, with its
// transport derivative (d/dt + d/da - Lambda m . grad_m) G supplied directly.
struct TestFunction {
  std::string name;
  std::function<double(double, double, const Mem&)> G;
  std::function<double(double, double, const Mem&)> transport;
};

struct PdeOptions {
  HbarFn hbar;                       // default: Hbar of the model
  std::vector<TestFunction> weak_tests;
  int weak_stride = 0;               // 0: about 400 time samples for the weak-form integrals
  double leak_threshold = 1e-3;
};

struct DensitySolution {
  Grid grid;
  MemAxis axis;
  double dt = 0.0, da_out = 0.0, a_max = 0.0;
  int n_layers = 0, sub = 1;
  std::vector<GridDensity> snapshots;
  std::vector<std::vector<double>> border;  // b per step (memory nodes of the reference grid)
  XPath x;
  std::vector<double> mass_trace;           // per step, including t = 0
  std::vector<double> flux_imbalance;       // per step: |gain - (loss - escaped)| / loss of the discrete jump flux
  double pullback_error = 0.0;              // largest relative flux error of the raw interpolated border
  std::vector<double> rate_flux_imbalance;  // per step: against int int f(a, m, x_t) rho_t at the step start
  std::vector<double> rate_flux;            // int int f rho per step
  double u0_raw_mass = 1.0;
  double clipped_mass = 0.0;
  double aged_out_mass = 0.0;  // mass that moved past a_max
  double box_leak_mass = 0.0;  // jump mass whose image left the memory box
  bool apriori_bound_ok = true;
  std::vector<std::string> warnings;
  std::vector<double> weak_residuals;
  std::vector<std::string> weak_names;
};

namespace detail {

inline MemAxis make_axis(const ModelSpec& s, const Grid& g) {
  if (s.d > 2) throw std::invalid_argument("pde: dense grids support d <= 2");
  MemAxis ax;
  ax.d = s.d;
  Mem lo, hi;
  if (g.has_box) {
    lo = g.m_lo;
    hi = g.m_hi;
  } else {
    memory_box(s, lo, hi);
  }
  for (int k = 0; k < s.d; ++k) {
    if (g.n_m[k] < 2) throw std::invalid_argument("pde: need at least 2 memory nodes per dimension");
    if (!(hi[k] > lo[k])) throw std::invalid_argument("pde: empty memory box");
    if (lo[k] > 0 || hi[k] < 0) throw std::invalid_argument("pde: memory box must contain 0 to be invariant under decay");
    ax.lo[k] = lo[k];
    ax.n[k] = g.n_m[k];
    ax.dm[k] = (hi[k] - lo[k]) / (g.n_m[k] - 1);
  }
  return ax;
}

inline double auto_a_max(const ModelSpec& s, double T) {
  double rule = -std::log(1e-6) / s.f.f_min;
  double hi = s.init.age_support_hi();
  return std::isfinite(hi) ? std::min(rule, hi + T) : std::max(rule, T);
}

}  // namespace detail

inline DensitySolution solve_alm_pde(const ModelSpec& s, const Grid& g, const PdeOptions& opt = {}) {
  validate_spec(s);
  if (!(g.dt > 0) || !(g.T > 0)) throw std::invalid_argument("pde: dt and T must be positive");
  auto n_steps = static_cast<std::size_t>(std::llround(g.T / g.dt));
  if (n_steps < 1 || std::abs(n_steps * g.dt - g.T) > 1e-9 * g.T) throw std::invalid_argument("pde: dt must divide T");

  DensitySolution sol;
  sol.grid = g;
  sol.dt = g.dt;
  sol.axis = detail::make_axis(s, g);
  const MemAxis& ax = sol.axis;
  const std::size_t C = ax.cells();
  const double dt = g.dt;
  const int d = s.d;

  double a_max = g.a_max > 0 ? g.a_max : detail::auto_a_max(s, g.T);
  int n_out, sub;
  if (g.n_a > 0) {
    double da = a_max / g.n_a;
    double ratio = da / dt;
    sub = static_cast<int>(std::llround(ratio));
    if (sub < 1 || std::abs(ratio - sub) > 1e-9 * ratio)
      throw std::invalid_argument("pde: dt must divide the age cell width");
    n_out = g.n_a;
  } else {
    sub = 1;
    n_out = static_cast<int>(std::ceil(a_max / dt - 1e-9));
  }
  const int L = n_out * sub;
  sol.sub = sub;
  sol.n_layers = L;
  sol.da_out = sub * dt;
  sol.a_max = L * dt;

  const HbarFn hbar = opt.hbar ? opt.hbar : HbarFn([&s](double t) { return Hbar(s, t); });
  const double tr = trace_lambda(s);
  Mem half_decay{}, full_decay{};
  for (int k = 0; k < d; ++k) {
    half_decay[k] = std::exp(-0.5 * s.Lambda[k] * dt);
    full_decay[k] = std::exp(-s.Lambda[k] * dt);
  }
  const double vol_full = std::exp(tr * dt), vol_half = std::exp(0.5 * tr * dt);

  // Layer storage: ring of L layers, layer i (age cell [i dt, (i+1) dt)) in slot (head + i) % L.
  std::vector<double> data(static_cast<std::size_t>(L) * C, 0.0);
  std::vector<Mem> scale(L);
  std::size_t head = 0;
  auto slot = [&](int i) { return (head + static_cast<std::size_t>(i)) % L; };
  auto layer = [&](int i) { return &data[slot(i) * C]; };
  auto scale_of = [&](int i) -> Mem& { return scale[slot(i)]; };
  auto jac_of = [&](const Mem& sc) {
    double v = 1.0;
    for (int k = 0; k < d; ++k) v *= sc[k];
    return v;
  };

  // Initial layers: age-cell averages of u0 at the memory nodes.
  for (int i = 0; i < L; ++i) {
    Mem one{};
    one.fill(1.0);
    scale_of(i) = one;
    double* v = layer(i);
    double a_lo = i * dt, a_hi = (i + 1) * dt;
    for (std::size_t c = 0; c < C; ++c) {
      Mem m = ax.point(c);
      double val;
      if (!s.init.tabulated) {
        double pa = (s.init.age.cdf(a_hi) - s.init.age.cdf(a_lo)) / dt;
        double pm = 1.0;
        for (int k = 0; k < d; ++k) pm *= s.init.mem[k].pdf(m[k]);
        val = pa * pm;
      } else {
        val = 0.5 * gauss_integrate([&](double a) { return s.init.pdf(a, m, d); }, a_lo, a_hi, 2) * 2.0 / dt;
      }
      v[c] = val;
    }
  }
  auto total_mass = [&]() {
    std::vector<double> rows(L);
    for (int i = 0; i < L; ++i) {
      const double* v = layer(i);
      double s2 = 0.0;
      for (std::size_t c = 0; c < C; ++c) s2 += ax.weight(c) * v[c];
      rows[i] = s2 * dt * jac_of(scale_of(i));
    }
    return pairwise_sum(rows);
  };
  sol.u0_raw_mass = total_mass();
  if (!(sol.u0_raw_mass > 0)) throw std::invalid_argument("pde: initial density has no mass on the grid");
  for (double& v : data) v /= sol.u0_raw_mass;

  std::vector<double> save = g.save_times;
  std::sort(save.begin(), save.end());
  std::vector<std::size_t> save_steps;
  for (double t : save) {
    auto n = static_cast<std::size_t>(std::llround(t / dt));
    if (std::abs(n * dt - t) > 1e-9 * std::max(1.0, t) || n > n_steps)
      throw std::invalid_argument("pde: save times must be multiples of dt within [0, T]");
    save_steps.push_back(n);
  }
  std::size_t next_save = 0;

  auto snapshot = [&](double t) {
    GridDensity out;
    out.t = t;
    out.da = sub * dt;
    out.n_a = n_out;
    out.axis = ax;
    out.values.assign(static_cast<std::size_t>(n_out) * C, 0.0);
    out.age_marginal.assign(n_out, 0.0);
    for (int i = 0; i < L; ++i) {
      const double* v = layer(i);
      const Mem& sc = scale_of(i);
      double* o = &out.values[static_cast<std::size_t>(i / sub) * C];
      double msum = 0.0;
      for (std::size_t c = 0; c < C; ++c) {
        Mem p = ax.point(c), r{};
        for (int k = 0; k < d; ++k) r[k] = p[k] / sc[k];
        o[c] += ax.interp(v, r) / sub;
        msum += ax.weight(c) * v[c];
      }
      out.age_marginal[i / sub] += msum * jac_of(sc) / sub;
    }
    sol.snapshots.push_back(std::move(out));
  };

  // Volterra history: G_j = int int g f(., x_j) rho_j.
  std::vector<double> kernel(n_steps + 1), Gm;
  for (std::size_t k = 0; k <= n_steps; ++k) kernel[k] = kernel_eval(s.h, k * dt);
  const bool coupled = !is_zero(s.h);
  std::vector<double> xs(n_steps + 1, 0.0);

  // Weak-form accumulators.
  std::vector<TestFunction> tests = opt.weak_tests;
  const std::size_t nt = tests.size();
  int stride = opt.weak_stride > 0 ? opt.weak_stride : std::max<int>(1, static_cast<int>(n_steps / 400));
  while (n_steps % stride != 0) --stride;
  std::vector<double> weak(nt, 0.0);
  auto pair_term = [&](double t, double x, double tw) {
    // tw: time quadrature weight; adds tw * int int {transport G + (G(t,0,gamma m) - G) f} rho.
    if (nt == 0) return;
    std::vector<std::vector<double>> rows(nt, std::vector<double>(L, 0.0));
    parallel_for(L, [&](std::size_t i) {
      const double* v = layer(static_cast<int>(i));
      const Mem& sc = scale_of(static_cast<int>(i));
      double a = (i + 0.5) * dt, w_layer = dt * jac_of(sc);
      std::vector<double> acc(nt, 0.0);
      for (std::size_t c = 0; c < C; ++c) {
        if (v[c] == 0.0) continue;
        Mem p = ax.point(c), m{};
        for (int k = 0; k < d; ++k) m[k] = p[k] * sc[k];
        Mem gm = jump_apply(s.jump, m, d);
        double fv = f_of(s, a, m, x), w = ax.weight(c) * v[c];
        for (std::size_t q = 0; q < nt; ++q) {
          double G = tests[q].G(t, a, m);
          acc[q] += w * (tests[q].transport(t, a, m) + (tests[q].G(t, 0.0, gm) - G) * fv);
        }
      }
      for (std::size_t q = 0; q < nt; ++q) rows[q][i] = acc[q] * w_layer;
    });
    for (std::size_t q = 0; q < nt; ++q) weak[q] += tw * pairwise_sum(rows[q]);
  };
  auto pair_G = [&](double t, std::vector<double>& out) {
    out.assign(nt, 0.0);
    for (std::size_t q = 0; q < nt; ++q) {
      std::vector<double> rows(L);
      for (int i = 0; i < L; ++i) {
        const double* v = layer(i);
        const Mem& sc = scale_of(i);
        double a = (i + 0.5) * dt, acc = 0.0;
        for (std::size_t c = 0; c < C; ++c) {
          if (v[c] == 0.0) continue;
          Mem p = ax.point(c), m{};
          for (int k = 0; k < d; ++k) m[k] = p[k] * sc[k];
          acc += ax.weight(c) * v[c] * tests[q].G(t, a, m);
        }
        rows[i] = acc * dt * jac_of(sc);
      }
      out[q] = pairwise_sum(rows);
    }
  };
  std::vector<double> weak_init;
  pair_G(0.0, weak_init);

  std::vector<double> lost(static_cast<std::size_t>(L) * C);
  std::vector<double> loss_rows(L), leak_rows(L), rate_rows(L), mom_rows(L);
  sol.mass_trace.push_back(total_mass());

  for (std::size_t n = 0; n <= n_steps; ++n) {
    const double t = n * dt;
    // Signal at t from the moments of earlier steps.
    double xv = hbar(t);
    if (coupled) {
      double acc = 0.0;
      for (std::size_t j = 0; j < n; ++j) acc += kernel[n - j] * Gm[j];
      xv += dt * acc;
    }
    xs[n] = xv;
    while (next_save < save_steps.size() && save_steps[next_save] == n) {
      snapshot(t);
      ++next_save;
    }
    // Moment for later signal values, and the rate flux at the step start.
    parallel_for(L, [&](std::size_t i) {
      const double* v = layer(static_cast<int>(i));
      const Mem& sc = scale_of(static_cast<int>(i));
      double a = (i + 0.5) * dt, mom = 0.0, rate = 0.0;
      for (std::size_t c = 0; c < C; ++c) {
        if (v[c] == 0.0) continue;
        Mem p = ax.point(c), m{};
        for (int k = 0; k < d; ++k) m[k] = p[k] * sc[k];
        double fv = f_of(s, a, m, xv), w = ax.weight(c) * v[c];
        rate += w * fv;
        if (coupled) mom += w * fv * modulation_eval(s.h, s.psi, a, m, d);
      }
      double jw = dt * jac_of(sc);
      mom_rows[i] = mom * jw;
      rate_rows[i] = rate * jw;
    });
    Gm.push_back(pairwise_sum(mom_rows));
    double rate_flux = pairwise_sum(rate_rows);
    if (nt > 0 && n % stride == 0) {
      double tw = stride * dt * ((n == 0 || n == n_steps) ? 0.5 : 1.0);
      pair_term(t, xv, tw);
    }
    if (n == n_steps) break;
    // x at t + dt depends only on moments up to step n, so the step can use the mid-step signal.
    double x_next = hbar(t + dt);
    if (coupled) {
      double acc = 0.0;
      for (std::size_t j = 0; j <= n; ++j) acc += kernel[n + 1 - j] * Gm[j];
      x_next += dt * acc;
    }
    const double x_mid = 0.5 * (xv + x_next);

    // Transport over [t, t + dt] with survival by the midpoint rule; record the
    // jumped mass at the mid-step configuration.
    parallel_for(L, [&](std::size_t i) {
      double* v = layer(static_cast<int>(i));
      Mem& sc = scale_of(static_cast<int>(i));
      double* lo = &lost[i * C];
      double a_mid = (i + 0.5) * dt + 0.5 * dt, loss = 0.0, escaped = 0.0;
      Mem sc_mid{};
      for (int k = 0; k < d; ++k) sc_mid[k] = sc[k] * half_decay[k];
      for (std::size_t c = 0; c < C; ++c) {
        if (v[c] == 0.0) {
          lo[c] = 0.0;
          continue;
        }
        Mem p = ax.point(c), m{};
        for (int k = 0; k < d; ++k) m[k] = p[k] * sc_mid[k];
        double surv = std::exp(-dt * f_of(s, a_mid, m, x_mid));
        lo[c] = v[c] * vol_half * (1.0 - surv);
        double w = ax.weight(c) * v[c] * (1.0 - surv);
        loss += w;
        if (!ax.contains(jump_apply(s.jump, m, d))) escaped += w;
        v[c] *= vol_full * surv;
      }
      loss_rows[i] = loss * jac_of(sc);  // times dt: mass jumping during the step
      leak_rows[i] = escaped * jac_of(sc);
      sc = Mem{};
      for (int k = 0; k < d; ++k) sc[k] = sc_mid[k] * half_decay[k];
    });
    double loss_mass = dt * pairwise_sum(loss_rows);
    double escaped_mass = dt * pairwise_sum(leak_rows);

    // Border density at the mid-step: pull back the jumped mass through gamma,
    // then rescale so the injected mass equals the jumped mass that stays in the box.
    std::vector<double> b(C, 0.0);
    parallel_for(C, [&](std::size_t c) {
      Mem m = ax.point(c);
      Mem q = jump_inverse(s.jump, m, d);
      double jac = std::exp(jump_inverse_jacobian_logdet(s.jump, m, d));
      double acc = 0.0;
      for (int i = 0; i < L; ++i) {
        const Mem& sc = scale_of(i);  // already at t + dt
        Mem r{};
        for (int k = 0; k < d; ++k) r[k] = q[k] * half_decay[k] / sc[k];
        acc += ax.interp(&lost[static_cast<std::size_t>(i) * C], r);
      }
      b[c] = jac * acc;
    });
    std::vector<double> brow(C);
    for (std::size_t c = 0; c < C; ++c) brow[c] = ax.weight(c) * b[c];
    double raw_gain = dt * pairwise_sum(brow);
    double target = loss_mass - escaped_mass;
    if (loss_mass > 0) sol.pullback_error = std::max(sol.pullback_error, std::abs(raw_gain - target) / loss_mass);
    if (raw_gain > 0 && target > 0) {
      double fix = target / raw_gain;
      for (std::size_t c = 0; c < C; ++c) {
        b[c] *= fix;
        brow[c] *= fix;
      }
    }
    double gain_mass = dt * pairwise_sum(brow);
    sol.border.push_back(b);
    sol.flux_imbalance.push_back(loss_mass > 0 ? std::abs(gain_mass - target) / loss_mass : 0.0);
    sol.rate_flux.push_back(rate_flux);
    sol.rate_flux_imbalance.push_back(rate_flux > 0 ? std::abs(gain_mass / dt - rate_flux) / rate_flux : 0.0);
    sol.box_leak_mass += escaped_mass;

    // Newborns are exposed for half a step on average before t + dt; those that jump
    // again inside the step get gamma applied a second time.
    {
      std::vector<double> again(C), moved(C, 0.0);
      double lost2 = 0.0, kept2 = 0.0;
      for (std::size_t c = 0; c < C; ++c) {
        Mem m = ax.point(c);
        again[c] = b[c] * -std::expm1(-0.5 * dt * f_of(s, 0.25 * dt, m, x_mid));
        lost2 += ax.weight(c) * again[c];
        if (ax.contains(jump_apply(s.jump, m, d))) kept2 += ax.weight(c) * again[c];
      }
      if (lost2 > 0) {
        double moved_mass = 0.0;
        for (std::size_t c = 0; c < C; ++c) {
          Mem m = ax.point(c);
          Mem q = jump_inverse(s.jump, m, d);
          moved[c] = std::exp(jump_inverse_jacobian_logdet(s.jump, m, d)) * ax.interp(again.data(), q);
          moved_mass += ax.weight(c) * moved[c];
        }
        double fix = moved_mass > 0 ? kept2 / moved_mass : 0.0;
        for (std::size_t c = 0; c < C; ++c) b[c] += fix * moved[c] - again[c];
        sol.box_leak_mass += dt * (lost2 - kept2);
      }
      sol.border.back() = b;
    }

    // Shift ages: the oldest layer leaves the grid, the newborn layer enters at age 0.
    {
      const double* old = layer(L - 1);
      double s2 = 0.0;
      for (std::size_t c = 0; c < C; ++c) s2 += ax.weight(c) * old[c];
      sol.aged_out_mass += s2 * dt * jac_of(scale_of(L - 1));
    }
    head = (head + L - 1) % L;
    {
      double* v = layer(0);
      Mem sc{};
      for (int k = 0; k < d; ++k) sc[k] = half_decay[k];
      scale_of(0) = sc;
      for (std::size_t c = 0; c < C; ++c) {
        double val = b[c] * vol_half;
        if (val < 0) {
          sol.clipped_mass += -val * ax.weight(c) * dt;
          val = 0.0;
        }
        v[c] = val;
      }
    }
    double mnow = total_mass();
    sol.mass_trace.push_back(mnow);
    if (mnow > std::exp((t + dt) * s.f.f_max) * (1 + 1e-12)) sol.apriori_bound_ok = false;
  }

  if (nt > 0) {
    std::vector<double> weak_final;
    pair_G(g.T, weak_final);
    for (std::size_t q = 0; q < nt; ++q) {
      sol.weak_names.push_back(tests[q].name);
      sol.weak_residuals.push_back(std::abs(weak_init[q] - weak_final[q] + weak[q]));
    }
  }
  sol.x = XPath(dt, xs);
  double leak = sol.aged_out_mass + sol.box_leak_mass;
  if (leak > opt.leak_threshold)
    sol.warnings.push_back("mass leak " + std::to_string(leak) + " beyond a_max or the memory box");
  if (sol.clipped_mass > 0) sol.warnings.push_back("clipped negative mass " + std::to_string(sol.clipped_mass));
  return sol;
}

// Age-free equation on a fixed memory grid: Strang splitting of the decay flow (half steps,
// pulled back along e^{Lambda t} with the volume factor) around a jump step that moves the
// mass lost at rate f(m, x) through gamma. Snapshots have a single age cell of width 1.
inline DensitySolution solve_lm_pde(const ModelSpec& s, const Grid& g, const PdeOptions& opt = {}) {
  validate_spec(s);
  if (!age_independent(s.f)) throw std::invalid_argument("solve_lm_pde: intensity depends on age");
  if (s.h.modulation == ModulationFamily::custom_bounded && (s.h.g_a != 0.0 || s.h.custom))
    throw std::invalid_argument("solve_lm_pde: interaction depends on age");
  if (!(g.dt > 0) || !(g.T > 0)) throw std::invalid_argument("pde: dt and T must be positive");
  auto n_steps = static_cast<std::size_t>(std::llround(g.T / g.dt));
  if (n_steps < 1 || std::abs(n_steps * g.dt - g.T) > 1e-9 * g.T) throw std::invalid_argument("pde: dt must divide T");

  DensitySolution sol;
  sol.grid = g;
  sol.dt = g.dt;
  sol.axis = detail::make_axis(s, g);
  sol.n_layers = 1;
  sol.da_out = 1.0;
  const MemAxis& ax = sol.axis;
  const std::size_t C = ax.cells();
  const double dt = g.dt;
  const int d = s.d;
  const HbarFn hbar = opt.hbar ? opt.hbar : HbarFn([&s](double t) { return Hbar(s, t); });
  const double tr = trace_lambda(s);
  const bool coupled = !is_zero(s.h);

  std::vector<double> rho(C), tmp(C);
  for (std::size_t c = 0; c < C; ++c) {
    Mem m = ax.point(c);
    double v = 1.0;
    for (int k = 0; k < d; ++k) v *= s.init.tabulated ? 1.0 : s.init.mem[k].pdf(m[k]);
    if (s.init.tabulated) v = gauss_integrate([&](double a) { return s.init.pdf(a, m, d); }, s.init.age_support_lo(),
                                              s.init.age_support_hi(), 8, 8);
    rho[c] = v;
  }
  auto mass_of = [&](const std::vector<double>& v) {
    std::vector<double> w(C);
    for (std::size_t c = 0; c < C; ++c) w[c] = ax.weight(c) * v[c];
    return pairwise_sum(w);
  };
  sol.u0_raw_mass = mass_of(rho);
  if (!(sol.u0_raw_mass > 0)) throw std::invalid_argument("pde: initial density has no mass on the grid");
  for (double& v : rho) v /= sol.u0_raw_mass;

  Mem grow{};
  for (int k = 0; k < d; ++k) grow[k] = std::exp(0.5 * s.Lambda[k] * dt);
  const double vol_half = std::exp(0.5 * tr * dt);
  auto half_transport = [&]() {
    double before = mass_of(rho);
    for (std::size_t c = 0; c < C; ++c) {
      Mem m = ax.point(c), r{};
      for (int k = 0; k < d; ++k) r[k] = m[k] * grow[k];
      tmp[c] = ax.interp(rho.data(), r) * vol_half;
    }
    double after = mass_of(tmp);
    double fix = after > 0 ? before / after : 1.0;
    for (std::size_t c = 0; c < C; ++c) rho[c] = tmp[c] * fix;
  };

  std::vector<double> save = g.save_times;
  std::sort(save.begin(), save.end());
  std::vector<std::size_t> save_steps;
  for (double t : save) {
    auto n = static_cast<std::size_t>(std::llround(t / dt));
    if (std::abs(n * dt - t) > 1e-9 * std::max(1.0, t) || n > n_steps)
      throw std::invalid_argument("pde: save times must be multiples of dt within [0, T]");
    save_steps.push_back(n);
  }
  std::size_t next_save = 0;
  std::vector<double> kernel(n_steps + 1), Gm, xs(n_steps + 1);
  for (std::size_t k = 0; k <= n_steps; ++k) kernel[k] = kernel_eval(s.h, k * dt);
  auto signal = [&](std::size_t n) {
    double v = hbar(n * dt);
    if (coupled) {
      double acc = 0.0;
      for (std::size_t j = 0; j < n && j < Gm.size(); ++j) acc += kernel[n - j] * Gm[j];
      v += dt * acc;
    }
    return v;
  };
  sol.mass_trace.push_back(mass_of(rho));
  std::vector<double> lost(C), gain(C), w(C);
  for (std::size_t n = 0; n <= n_steps; ++n) {
    const double t = n * dt;
    double xv = signal(n);
    xs[n] = xv;
    while (next_save < save_steps.size() && save_steps[next_save] == n) {
      GridDensity out;
      out.t = t;
      out.da = 1.0;
      out.n_a = 1;
      out.axis = ax;
      out.values = rho;
      out.age_marginal = {mass_of(rho)};
      sol.snapshots.push_back(std::move(out));
      ++next_save;
    }
    double rate = 0.0;
    {
      std::vector<double> mom(C), rr(C);
      for (std::size_t c = 0; c < C; ++c) {
        Mem m = ax.point(c);
        double fv = f_of(s, 0.0, m, xv);
        rr[c] = ax.weight(c) * fv * rho[c];
        mom[c] = coupled ? rr[c] * modulation_eval(s.h, s.psi, 0.0, m, d) : 0.0;
      }
      Gm.push_back(pairwise_sum(mom));
      rate = pairwise_sum(rr);
    }
    if (n == n_steps) break;
    const double x_mid = 0.5 * (xv + signal(n + 1));

    half_transport();
    double loss = 0.0, kept = 0.0;
    for (std::size_t c = 0; c < C; ++c) {
      Mem m = ax.point(c);
      double surv = std::exp(-dt * f_of(s, 0.0, m, x_mid));
      lost[c] = rho[c] * (1.0 - surv);
      rho[c] -= lost[c];
      loss += ax.weight(c) * lost[c];
      if (ax.contains(jump_apply(s.jump, m, d))) kept += ax.weight(c) * lost[c];
    }
    double raw = 0.0;
    for (std::size_t c = 0; c < C; ++c) {
      Mem m = ax.point(c);
      gain[c] = std::exp(jump_inverse_jacobian_logdet(s.jump, m, d)) * ax.interp(lost.data(), jump_inverse(s.jump, m, d));
      raw += ax.weight(c) * gain[c];
    }
    if (loss > 0) sol.pullback_error = std::max(sol.pullback_error, std::abs(raw - kept) / loss);
    double fix = raw > 0 ? kept / raw : 0.0;
    for (std::size_t c = 0; c < C; ++c) {
      gain[c] *= fix;
      rho[c] += gain[c];
      w[c] = gain[c] / dt;
    }
    sol.border.push_back(w);
    sol.box_leak_mass += loss - kept;
    sol.flux_imbalance.push_back(loss > 0 ? std::abs(raw * fix - kept) / loss : 0.0);
    sol.rate_flux.push_back(rate);
    sol.rate_flux_imbalance.push_back(rate > 0 ? std::abs(loss / dt - rate) / rate : 0.0);
    half_transport();
    double mnow = mass_of(rho);
    sol.mass_trace.push_back(mnow);
    if (mnow > std::exp((t + dt) * s.f.f_max) * (1 + 1e-12)) sol.apriori_bound_ok = false;
  }
  sol.x = XPath(dt, xs);
  if (sol.box_leak_mass > opt.leak_threshold)
    sol.warnings.push_back("mass leak " + std::to_string(sol.box_leak_mass) + " beyond the memory box");
  return sol;
}

// Smooth test functions for the weak identity on [0, T]; memory enters through the first coordinate.
inline std::vector<TestFunction> default_test_functions(const ModelSpec& s, double T) {
  const double lam = s.Lambda[0], pi = M_PI;
  std::vector<TestFunction> g;
  g.push_back({"one", [](double, double, const Mem&) { return 1.0; },
               [](double, double, const Mem&) { return 0.0; }});
  g.push_back({"cos-t-exp-a",
               [=](double t, double a, const Mem&) { return std::cos(pi * t / T) * std::exp(-0.5 * a); },
               [=](double t, double a, const Mem&) {
                 return (-pi / T * std::sin(pi * t / T) - 0.5 * std::cos(pi * t / T)) * std::exp(-0.5 * a);
               }});
  g.push_back({"ramp-tanh-m",
               [=](double t, double, const Mem& m) { return (1.0 - t / T) * std::tanh(m[0]); },
               [=](double t, double, const Mem& m) {
                 double th = std::tanh(m[0]);
                 return -th / T - lam * m[0] * (1.0 - t / T) * (1.0 - th * th);
               }});
  g.push_back({"a-exp-a-sech-m",
               [](double, double a, const Mem& m) { return a * std::exp(-a) / std::cosh(m[0]); },
               [=](double, double a, const Mem& m) {
                 double sech = 1.0 / std::cosh(m[0]);
                 return (1.0 - a) * std::exp(-a) * sech + lam * m[0] * a * std::exp(-a) * sech * std::tanh(m[0]);
               }});
  g.push_back({"growth-m2-exp-a",
               [=](double t, double a, const Mem& m) { return (1.0 + t / T) * m[0] * m[0] * std::exp(-0.25 * a); },
               [=](double t, double a, const Mem& m) {
                 double phi = 1.0 + t / T;
                 return std::exp(-0.25 * a) * m[0] * m[0] * (1.0 / T - 0.25 * phi - 2.0 * lam * phi);
               }});
  return g;
}

inline std::vector<double> weak_form_residual(const DensitySolution& sol) { return sol.weak_residuals; }

}  // namespace almh
