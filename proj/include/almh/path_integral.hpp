#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <vector>

#include "almh/model.hpp"
#include "almh/quadrature.hpp"
#include "almh/rng.hpp"
#include "almh/xpath.hpp"

namespace almh {

struct JumpTimes {
  std::vector<double> times;  // 0 < t_1 < ... < t_k
  int k() const { return static_cast<int>(times.size()); }
};

inline void check_ordered(const JumpTimes& jt, double t) {
  double prev = 0.0;
  for (double s : jt.times) {
    if (!(s > prev)) throw std::invalid_argument("jump times must be strictly increasing and positive");
    prev = s;
  }
  if (prev > t) throw std::invalid_argument("jump times must not exceed t");
}

enum class SimplexRule { gauss_legendre, monte_carlo };

struct PathIntegralConfig {
  int K_max = 8;
  double tail_epsilon = 1e-4;
  int gl_order = 16;                   // per time dimension
  std::vector<int> gl_order_by_k;      // optional override, indexed by k
  int max_gl_dims = 3;                 // nested rule up to this many free times, sampling beyond
  std::size_t mc_samples = 1000000;
  std::uint64_t mc_seed = 1;
  int age_panels = 8;                  // composite Gauss-Legendre panels for the initial-age integral
  int age_order = 8;
  double simpson_tol = 1e-8;
  void validate() const {
    if (K_max < 0) throw std::invalid_argument("path integral: K_max must be >= 0");
    if (!(tail_epsilon > 0 && tail_epsilon <= 1)) throw std::invalid_argument("path integral: tail_epsilon in (0, 1]");
    if (gl_order < 1 || age_panels < 1 || age_order < 1) throw std::invalid_argument("path integral: bad quadrature");
  }
  int order_for(int k) const {
    return k < static_cast<int>(gl_order_by_k.size()) && gl_order_by_k[k] > 0 ? gl_order_by_k[k] : gl_order;
  }
};

// Smallest l with P(Poisson(f_max T) > l) < epsilon / 2.
inline int jump_count_tail(double T, double f_max, double epsilon) {
  if (!(epsilon > 0)) throw std::invalid_argument("jump_count_tail: epsilon must be positive");
  double mu = f_max * T;
  if (epsilon >= 1) return 0;
  for (int l = 0; l < 100000; ++l)
    if (poisson_upper_tail(mu, l) < 0.5 * epsilon) return l;
  throw std::runtime_error("jump_count_tail: no bound found");
}

// theta^k_t: m_0 -> state at t after jumps at `times`, composed directly.
inline Mem theta_k(const JumpTimes& jt, double t, const ModelSpec& s, const Mem& m0) {
  check_ordered(jt, t);
  Mem m = m0;
  double prev = 0.0;
  for (double tj : jt.times) {
    m = jump_apply(s.jump, decay(s, m, tj - prev), s.d);
    prev = tj;
  }
  return decay(s, m, t - prev);
}

// Same map through theta^k_t = e^{-Lambda (t - t_k)} o gamma o theta^{k-1}_{t_k}.
inline Mem theta_k_recursive(const JumpTimes& jt, double t, const ModelSpec& s, const Mem& m0) {
  if (jt.times.empty()) return decay(s, m0, t);
  JumpTimes head{std::vector<double>(jt.times.begin(), jt.times.end() - 1)};
  double tk = jt.times.back();
  return decay(s, jump_apply(s.jump, theta_k_recursive(head, tk, s, m0), s.d), t - tk);
}

// Inverse of theta^k_t with log|det D theta^{-1}| at m.
inline Mem theta_k_inverse(const JumpTimes& jt, double t, const ModelSpec& s, const Mem& m, double* logdet = nullptr) {
  check_ordered(jt, t);
  Mem r = m;
  double ld = 0.0, next = t;
  for (int j = jt.k() - 1; j >= 0; --j) {
    r = decay(s, r, -(next - jt.times[j]));
    ld += jump_inverse_jacobian_logdet(s.jump, r, s.d);
    r = jump_inverse(s.jump, r, s.d);
    next = jt.times[j];
  }
  r = decay(s, r, -next);
  if (logdet) *logdet = ld + t * trace_lambda(s);
  return r;
}

// Point of the jump-coordinate chart: (t_1, ..., t_{k-1}, a, m), or (a, m) with k = 0.
struct PhiPoint {
  std::vector<double> times;  // t_1 .. t_{k-1}
  double a = 0.0;
  Mem m{};
};

// phi^k_t (t_1..t_k, m_0) -> (t_1..t_{k-1}, t - t_k, theta^k_t m_0); for k = 0, (a_0, m_0) -> (a_0 + t, theta^0_t m_0).
inline PhiPoint phi_k_apply(const JumpTimes& jt, double a0, double t, const ModelSpec& s, const Mem& m0) {
  PhiPoint p;
  p.m = theta_k(jt, t, s, m0);
  if (jt.times.empty()) {
    p.a = a0 + t;
  } else {
    p.times.assign(jt.times.begin(), jt.times.end() - 1);
    p.a = t - jt.times.back();
  }
  return p;
}

struct PhiPreimage {
  JumpTimes jt;
  double a0 = 0.0;  // k = 0 only
  Mem m0{};
  double logdet = 0.0;  // log|det D(phi^k_t)^{-1}|
};

inline PhiPreimage phi_k_inverse(const PhiPoint& p, int k, double t, const ModelSpec& s) {
  PhiPreimage r;
  if (k == 0) {
    if (!p.times.empty()) throw std::invalid_argument("phi inverse: k = 0 takes no jump times");
    if (p.a < t) throw std::domain_error("phi inverse: no preimage (a < t without jumps)");
    r.a0 = p.a - t;
  } else {
    if (static_cast<int>(p.times.size()) != k - 1) throw std::invalid_argument("phi inverse: expected k - 1 times");
    double tk = t - p.a;
    double prev = p.times.empty() ? 0.0 : p.times.back();
    if (!(p.a >= 0) || !(tk > prev)) throw std::domain_error("phi inverse: no preimage (age incompatible with jump times)");
    r.jt.times = p.times;
    r.jt.times.push_back(tk);
  }
  r.m0 = theta_k_inverse(r.jt, t, s, p.m, &r.logdet);
  return r;
}

inline double phi_k_inverse_logdet(const PhiPoint& p, int k, double t, const ModelSpec& s) {
  return phi_k_inverse(p, k, t, s).logdet;
}

namespace detail {

// exp(-int_0^len f(a_start + u, e^{-Lambda u} m, x_{t_start + u}) du)
inline double survival(const ModelSpec& s, const XPath& x, double t_start, double len, double a_start, const Mem& m,
                       double tol) {
  if (len <= 0) return 1.0;
  if (s.f.family == IntensityFamily::constant) return std::exp(-s.f.f_min * len);
  auto g = [&](double u) { return f_of(s, a_start + u, decay(s, m, u), x(t_start + u)); };
  return std::exp(-adaptive_simpson(g, 0.0, len, tol));
}

// Rate-times-survival factor of one inter-jump stretch.
inline double stretch_density(const ModelSpec& s, const XPath& x, double t_start, double len, double a_start,
                              const Mem& m, double tol) {
  double rate = f_of(s, a_start + len, decay(s, m, len), x(t_start + len));
  return rate * survival(s, x, t_start, len, a_start, m, tol);
}

}  // namespace detail

// Joint density of the first k jump times given (a_0, m_0).
inline double eta_k(const JumpTimes& jt, double a0, const Mem& m0, const XPath& x, const ModelSpec& s,
                    double tol = 1e-8) {
  check_ordered(jt, jt.times.empty() ? 0.0 : jt.times.back());
  double v = 1.0, prev = 0.0, age = a0;
  Mem m = m0;
  for (double tj : jt.times) {
    v *= detail::stretch_density(s, x, prev, tj - prev, age, m, tol);
    m = jump_apply(s.jump, decay(s, m, tj - prev), s.d);
    age = 0.0;
    prev = tj;
  }
  return v;
}

// Sub-probability density of exactly k jumps in [0, t] at the given times.
inline double nu_k(double t, const JumpTimes& jt, double a0, const Mem& m0, const XPath& x, const ModelSpec& s,
                   double tol = 1e-8) {
  check_ordered(jt, t);
  double v = 1.0, prev = 0.0, age = a0;
  Mem m = m0;
  for (double tj : jt.times) {
    v *= detail::stretch_density(s, x, prev, tj - prev, age, m, tol);
    m = jump_apply(s.jump, decay(s, m, tj - prev), s.d);
    age = 0.0;
    prev = tj;
  }
  return v * detail::survival(s, x, prev, t - prev, age, m, tol);
}

struct DensityValue {
  double value = 0.0;
  double truncation_bound = 0.0;  // probability mass of more than K_max jumps
  std::vector<double> by_k;
};

namespace detail {

// int u0(a0, m0) eta^1(t1; a0, m0) da0 over the initial age support.
inline double first_jump_age_integral(const ModelSpec& s, const XPath& x, double t1, const Mem& m0,
                                      const PathIntegralConfig& cfg) {
  double lo = s.init.age_support_lo(), hi = s.init.age_support_hi();
  if (!std::isfinite(hi)) hi = s.init.tabulated ? lo : s.init.age.quantile(1.0 - 1e-12);
  if (!(hi > lo)) return 0.0;
  return gauss_integrate(
      [&](double a0) {
        double u = s.init.pdf(a0, m0, s.d);
        return u == 0.0 ? 0.0 : u * stretch_density(s, x, 0.0, t1, a0, m0, cfg.simpson_tol);
      },
      lo, hi, cfg.age_order, cfg.age_panels);
}

// Contribution of exactly k >= 1 jumps at (a, m) for fixed t_1 .. t_{k-1}.
inline double k_term_integrand(const ModelSpec& s, const XPath& x, double t, double a, const Mem& m,
                               const std::vector<double>& free_times, const PathIntegralConfig& cfg) {
  JumpTimes jt{free_times};
  jt.times.push_back(t - a);
  double logdet = 0.0;
  Mem m0 = theta_k_inverse(jt, t, s, m, &logdet);
  double first = first_jump_age_integral(s, x, jt.times[0], m0, cfg);
  if (first == 0.0) return 0.0;
  double v = first;
  Mem st = jump_apply(s.jump, decay(s, m0, jt.times[0]), s.d);
  double prev = jt.times[0];
  for (std::size_t j = 1; j < jt.times.size(); ++j) {
    double len = jt.times[j] - prev;
    v *= stretch_density(s, x, prev, len, 0.0, st, cfg.simpson_tol);
    st = jump_apply(s.jump, decay(s, st, len), s.d);
    prev = jt.times[j];
  }
  v *= survival(s, x, prev, t - prev, 0.0, st, cfg.simpson_tol);
  return v * std::exp(logdet);
}

// Nested Gauss-Legendre over lo < t_1 < ... < t_n < hi.
template <class F>
double simplex_gl(F& g, std::vector<double>& pts, int n, double lo, double hi, int order) {
  if (static_cast<int>(pts.size()) == n) return g(pts);
  const GaussRule& r = gauss_legendre(order);
  double half = 0.5 * (hi - lo), mid = 0.5 * (hi + lo), acc = 0.0;
  for (int i = 0; i < order; ++i) {
    pts.push_back(mid + half * r.nodes[i]);
    acc += r.weights[i] * simplex_gl(g, pts, n, pts.back(), hi, order);
    pts.pop_back();
  }
  return half * acc;
}

// Stratified sampling over the ordered simplex: Latin-hypercube points in the cube, sorted.
template <class F>
double simplex_mc(F& g, int n, double hi, std::size_t samples, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<std::vector<std::size_t>> perm(n, std::vector<std::size_t>(samples));
  for (int j = 0; j < n; ++j) {
    for (std::size_t i = 0; i < samples; ++i) perm[j][i] = i;
    for (std::size_t i = samples; i > 1; --i) std::swap(perm[j][i - 1], perm[j][rng.index(i)]);
  }
  double vol = std::pow(hi, n);
  for (int j = 2; j <= n; ++j) vol /= j;
  std::vector<double> vals(samples), pts(n);
  for (std::size_t i = 0; i < samples; ++i) {
    for (int j = 0; j < n; ++j) pts[j] = hi * (perm[j][i] + rng.uniform()) / samples;
    std::sort(pts.begin(), pts.end());
    vals[i] = g(pts);
  }
  return vol * pairwise_sum(vals) / samples;
}

}  // namespace detail

// Density of the limit law at (t, a, m), summed over jump counts 0 .. K_max.
inline DensityValue density_at(double t, double a, const Mem& m, const XPath& x, const PathIntegralConfig& cfg,
                               const ModelSpec& s) {
  cfg.validate();
  DensityValue out;
  out.by_k.assign(cfg.K_max + 1, 0.0);
  out.truncation_bound = poisson_upper_tail(s.f.f_max * t, cfg.K_max);
  if (a < 0) return out;
  if (a >= t) {
    // No jump in [0, t]: transport of u0 with survival.
    Mem m0 = decay(s, m, -t);
    double a0 = a - t;
    double u = s.init.pdf(a0, m0, s.d);
    if (u > 0) out.by_k[0] = u * std::exp(t * trace_lambda(s)) * nu_k(t, JumpTimes{}, a0, m0, x, s, cfg.simpson_tol);
  } else {
    for (int k = 1; k <= cfg.K_max; ++k) {
      int free = k - 1;
      double tk = t - a;
      auto g = [&](const std::vector<double>& pts) { return detail::k_term_integrand(s, x, t, a, m, pts, cfg); };
      double v;
      if (free == 0) {
        v = g({});
      } else if (free <= cfg.max_gl_dims) {
        std::vector<double> pts;
        v = detail::simplex_gl(g, pts, free, 0.0, tk, cfg.order_for(k));
      } else {
        v = detail::simplex_mc(g, free, tk, cfg.mc_samples, derive_seed(cfg.mc_seed, static_cast<std::uint64_t>(k)));
      }
      out.by_k[k] = v;
    }
  }
  out.value = pairwise_sum(out.by_k);
  return out;
}

}  // namespace almh
