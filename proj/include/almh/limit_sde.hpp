#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "almh/model.hpp"
#include "almh/parallel.hpp"
#include "almh/quadrature.hpp"
#include "almh/rng.hpp"
#include "almh/xpath.hpp"

namespace almh {

struct PicardReport {
  int iterations = 0;
  std::vector<double> deltas;
  double final_delta = INFINITY;
  int n_particles = 0;
  bool converged = false;
};

struct PicardOptions {
  double T = 1.0;
  double dt = 0.0;  // 0 means 1e-3 * T
  int n_particles = 20000;
  std::uint64_t seed = 0;
  double tol = 1e-4;
  int max_iter = 50;
};

// Candidate stream of limit particle `index`. The stream does not depend on
// the Picard iteration, so successive iterates use common random numbers.
inline Rng common_random_numbers_stream(std::uint64_t seed, std::uint64_t index) {
  return Rng(derive_seed(seed, index));
}

struct LimitTrajectories {
  std::vector<double> save_times;
  std::vector<std::vector<double>> ages;  // [save][particle]
  std::vector<std::vector<Mem>> memories;
};

namespace detail {

// Thinning walk of one limit particle driven by the signal y. visit(j, a, m)
// is called at each grid time j*dt for j in [0, n_grid).
template <class Visit>
void walk_limit_particle(const ModelSpec& s, const XPath& y, Rng rng, double dt, std::size_t n_grid,
                         Visit&& visit) {
  double a;
  Mem m;
  s.init.sample(rng, a, m, s.d);
  const double fmax = s.f.f_max;
  double t = 0.0;
  double cand = rng.exponential(fmax);
  double u = rng.uniform();
  for (std::size_t j = 0; j < n_grid; ++j) {
    double tj = j * dt;
    while (cand <= tj) {
      double step = cand - t;
      a += step;
      m = decay(s, m, step);
      t = cand;
      if (u * fmax < f_of(s, a, m, y(t))) {
        a = 0.0;
        m = jump_apply(s.jump, m, s.d);
      }
      cand = t + rng.exponential(fmax);
      u = rng.uniform();
    }
    double step = tj - t;
    a += step;
    m = decay(s, m, step);
    t = tj;
    visit(j, a, m);
  }
}

}  // namespace detail

inline LimitTrajectories simulate_limit_process(const ModelSpec& s, const XPath& x, int n, std::uint64_t seed,
                                                std::vector<double> save_times) {
  validate_spec(s);
  std::sort(save_times.begin(), save_times.end());
  if (!save_times.empty() && save_times.back() > x.T() * (1 + 1e-12))
    throw std::invalid_argument("simulate_limit_process: x does not cover the save times");
  LimitTrajectories out;
  out.save_times = save_times;
  out.ages.assign(save_times.size(), std::vector<double>(n));
  out.memories.assign(save_times.size(), std::vector<Mem>(n));
  parallel_for(n, [&](std::size_t p) {
    Rng rng = common_random_numbers_stream(seed, p);
    double a;
    Mem m;
    s.init.sample(rng, a, m, s.d);
    const double fmax = s.f.f_max;
    double t = 0.0;
    std::size_t k = 0;
    double cand = rng.exponential(fmax), u = rng.uniform();
    while (k < save_times.size()) {
      if (cand <= save_times[k]) {
        double step = cand - t;
        a += step;
        m = decay(s, m, step);
        t = cand;
        if (u * fmax < f_of(s, a, m, x(t))) {
          a = 0.0;
          m = jump_apply(s.jump, m, s.d);
        }
        cand = t + rng.exponential(fmax);
        u = rng.uniform();
      } else {
        double step = save_times[k] - t;
        out.ages[k][p] = a + step;
        out.memories[k][p] = decay(s, m, step);
        ++k;
      }
    }
  });
  return out;
}

namespace detail {

// Phi_T(y) on the grid: Hbar + left-endpoint Volterra sum of K(t_n - t_j) G_j,
// with G_j = E[g(A, M) f(A, M, y_j)] estimated from the particles.
inline XPath picard_map(const ModelSpec& s, const XPath& y, const PicardOptions& o, double dt, std::size_t n_grid,
                        const std::vector<double>& kernel) {
  std::vector<double> G(n_grid, 0.0);
  if (!is_zero(s.h)) {
    const std::size_t block = 64;
    const std::size_t n_blocks = (o.n_particles + block - 1) / block;
    std::vector<std::vector<double>> partial(n_blocks);
    parallel_for(n_blocks, [&](std::size_t b) {
      std::vector<double> acc(n_grid, 0.0);
      std::size_t lo = b * block, hi = std::min<std::size_t>(lo + block, o.n_particles);
      for (std::size_t p = lo; p < hi; ++p) {
        walk_limit_particle(s, y, common_random_numbers_stream(o.seed, p), dt, n_grid,
                            [&](std::size_t j, double a, const Mem& m) {
                              acc[j] += modulation_eval(s.h, s.psi, a, m, s.d) * f_of(s, a, m, y.values[j]);
                            });
      }
      partial[b] = std::move(acc);
    });
    std::vector<double> col(n_blocks);
    for (std::size_t j = 0; j < n_grid; ++j) {
      for (std::size_t b = 0; b < n_blocks; ++b) col[b] = partial[b][j];
      G[j] = pairwise_sum(col) / o.n_particles;
    }
  }
  std::vector<double> x(n_grid);
  for (std::size_t n = 0; n < n_grid; ++n) {
    double acc = 0.0;
    for (std::size_t j = 0; j < n; ++j) acc += kernel[n - j] * G[j];
    x[n] = Hbar(s, n * dt) + dt * acc;
  }
  return XPath(dt, std::move(x));
}

}  // namespace detail

inline std::pair<XPath, PicardReport> solve_x_picard(const ModelSpec& s, const PicardOptions& o) {
  validate_spec(s);
  if (!(o.T > 0)) throw std::invalid_argument("solve_x_picard: T must be positive");
  if (!(o.tol > 0)) throw std::invalid_argument("solve_x_picard: tol must be positive");
  double dt = o.dt > 0 ? o.dt : 1e-3 * o.T;
  auto steps = static_cast<std::size_t>(std::llround(o.T / dt));
  if (steps < 1 || std::abs(steps * dt - o.T) > 1e-9 * o.T)
    throw std::invalid_argument("solve_x_picard: dt must divide T");
  std::size_t n_grid = steps + 1;
  std::vector<double> kernel(n_grid);
  for (std::size_t k = 0; k < n_grid; ++k) kernel[k] = kernel_eval(s.h, k * dt);

  PicardReport rep;
  rep.n_particles = o.n_particles;
  XPath y(dt, std::vector<double>(n_grid, 0.0));
  for (int it = 1; it <= o.max_iter; ++it) {
    XPath next = detail::picard_map(s, y, o, dt, n_grid, kernel);
    double delta = 0.0;
    for (std::size_t n = 0; n < n_grid; ++n) delta = std::max(delta, std::abs(next.values[n] - y.values[n]));
    y = std::move(next);
    rep.iterations = it;
    rep.deltas.push_back(delta);
    rep.final_delta = delta;
    if (delta <= o.tol) {
      rep.converged = true;
      break;
    }
  }
  return {y, rep};
}

// Closed-form signal for constant f = lambda and h = J e^{-t/tau}, Hbar = 0.
inline double closed_form_x(double J, double lambda, double tau, double t) {
  return J * lambda * tau * (-std::expm1(-t / tau));
}

// Time-Lipschitz constant C_T = |f|_inf (|h|_inf + T L_h).
inline double x_time_lipschitz(const ModelSpec& s, double T) {
  double Lh = kernel_lipschitz(s.h) * modulation_sup(s);
  return s.f.f_max * (h_sup(s) + T * Lh);
}

}  // namespace almh
