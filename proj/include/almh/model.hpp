#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "almh/rng.hpp"

namespace almh {

constexpr int kMaxDim = 4;
using Mem = std::array<double, kMaxDim>;

inline double l1_norm(const Mem& m, int d) {
  double s = 0.0;
  for (int k = 0; k < d; ++k) s += std::abs(m[k]);
  return s;
}

inline double l1_dist(const Mem& a, const Mem& b, int d) {
  double s = 0.0;
  for (int k = 0; k < d; ++k) s += std::abs(a[k] - b[k]);
  return s;
}

// ---------------------------------------------------------------- psi

struct PsiParams {
  double K = 1.0;
  double kappa = 1.0;
};

inline void check(const PsiParams& p) {
  if (!(p.K > 0) || !(p.kappa > 0)) throw std::invalid_argument("psi: K and kappa must be positive");
}

inline double psi_eval(double a, const PsiParams& p) {
  if (a < 0) throw std::domain_error("psi_eval: negative age");
  return p.K * (-std::expm1(-a * p.kappa / p.K));
}

inline double psi_derivative(double a, const PsiParams& p) { return p.kappa * std::exp(-a * p.kappa / p.K); }

// ---------------------------------------------------------------- intensity

enum class IntensityFamily { constant, sigmoid_affine, exp_saturating, stp_composite };

struct IntensitySpec {
  IntensityFamily family = IntensityFamily::constant;
  double f_min = 1.0;
  double f_max = 1.0;
  double c_a = 0.0;
  double c_x = 0.0;
  Mem c_m{};
  double b = 0.0;
  // Age shape of the stp-composite family: Psi(a) = -amp * exp(-a / scale).
  double shape_amp = 1.0;
  double shape_scale = 1.0;
  // Vacuous under the global lower bound f >= f_min; kept for completeness.
  double alpha1 = 0.0;
  double alpha2 = 0.0;
};

inline double logistic(double z) {
  return z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
}

inline double stp_shape(const IntensitySpec& f, double a) { return -f.shape_amp * std::exp(-a / f.shape_scale); }

inline bool age_independent(const IntensitySpec& f) {
  switch (f.family) {
    case IntensityFamily::constant: return true;
    case IntensityFamily::stp_composite: return f.shape_amp == 0.0 || f.c_x == 0.0;
    default: return f.c_a == 0.0;
  }
}

inline double intensity_eval(const IntensitySpec& f, const PsiParams& psi, double a, const Mem& m, double x,
                             int d) {
  const double span = f.f_max - f.f_min;
  switch (f.family) {
    case IntensityFamily::constant:
      return f.f_max;
    case IntensityFamily::sigmoid_affine:
    case IntensityFamily::exp_saturating: {
      double z = f.b + f.c_x * x;
      if (f.c_a != 0.0) z += f.c_a * psi_eval(a, psi);
      for (int k = 0; k < d; ++k) z += f.c_m[k] * m[k];
      if (f.family == IntensityFamily::sigmoid_affine) return f.f_min + span * logistic(z);
      return f.f_min + span * (-std::expm1(-std::exp(std::min(z, 700.0))));
    }
    case IntensityFamily::stp_composite:
      return f.f_min + span * logistic(f.c_x * (x + stp_shape(f, a)) + f.b);
  }
  return f.f_max;
}

// Analytic Lipschitz constant in the metric |dpsi| + |dm|_1 + |dx|.
inline double intensity_lipschitz(const IntensitySpec& f, const PsiParams& psi, int d) {
  const double span = f.f_max - f.f_min;
  switch (f.family) {
    case IntensityFamily::constant: return 0.0;
    case IntensityFamily::sigmoid_affine:
    case IntensityFamily::exp_saturating: {
      double c = std::max(std::abs(f.c_a), std::abs(f.c_x));
      for (int k = 0; k < d; ++k) c = std::max(c, std::abs(f.c_m[k]));
      return span * c * (f.family == IntensityFamily::sigmoid_affine ? 0.25 : std::exp(-1.0));
    }
    case IntensityFamily::stp_composite: {
      // dPsi/dpsi = (amp/scale) e^{-a/scale} / (kappa e^{-a kappa/K}); bounded iff 1/scale >= kappa/K.
      double rate = 1.0 / f.shape_scale - psi.kappa / psi.K;
      double ratio = rate >= -1e-15 ? f.shape_amp / (f.shape_scale * psi.kappa) : INFINITY;
      return span * 0.25 * std::abs(f.c_x) * std::max(1.0, ratio);
    }
  }
  return 0.0;
}

// ---------------------------------------------------------------- interaction

enum class KernelFamily { exponential, erlang, finite_support };
enum class ModulationFamily { none, linear_in_m, custom_bounded };

struct InteractionSpec {
  KernelFamily kernel = KernelFamily::exponential;
  double J = 0.0;
  double tau = 1.0;
  int erlang_shape = 2;
  ModulationFamily modulation = ModulationFamily::none;
  // linear-in-m: g = g0 + g_m . m
  // custom-bounded: g = g0 + g1 * tanh(g_a psi(a) + g_m . m), or `custom` when set
  double g0 = 1.0;
  double g1 = 0.0;
  double g_a = 0.0;
  Mem g_m{};
  std::function<double(double, const Mem&)> custom;
  double custom_bound = 1.0;
};

inline bool is_zero(const InteractionSpec& h) { return h.J == 0.0; }

inline double kernel_eval(const InteractionSpec& h, double t) {
  if (t < 0) return 0.0;
  switch (h.kernel) {
    case KernelFamily::exponential:
      return h.J * std::exp(-t / h.tau);
    case KernelFamily::erlang: {
      double u = t / h.tau, p = 1.0;
      for (int k = 1; k < h.erlang_shape; ++k) p *= u / k;
      return h.J * p * std::exp(-u);
    }
    case KernelFamily::finite_support: {
      double u = t / h.tau;
      if (u >= 1.0) return 0.0;
      return h.J * std::exp(1.0 - 1.0 / (1.0 - u * u));
    }
  }
  return 0.0;
}

inline double kernel_sup(const InteractionSpec& h) {
  if (h.kernel == KernelFamily::erlang) {
    int n = h.erlang_shape;
    if (n <= 1) return std::abs(h.J);
    double u = n - 1.0, p = 1.0;
    for (int k = 1; k < n; ++k) p *= u / k;
    return std::abs(h.J) * p * std::exp(-u);
  }
  return std::abs(h.J);
}

// Lipschitz constant of the temporal kernel in t.
inline double kernel_lipschitz(const InteractionSpec& h) {
  switch (h.kernel) {
    case KernelFamily::exponential: return std::abs(h.J) / h.tau;
    case KernelFamily::erlang: return std::abs(h.J) / h.tau;
    case KernelFamily::finite_support: {
      // sup |d/du exp(1 - 1/(1-u^2))| over [0,1) by a fine scan.
      double best = 0.0;
      for (int i = 1; i < 4000; ++i) {
        double u = i / 4000.0, v = 1.0 - u * u;
        double der = std::exp(1.0 - 1.0 / v) * 2.0 * u / (v * v);
        best = std::max(best, der);
      }
      return std::abs(h.J) * best / h.tau;
    }
  }
  return 0.0;
}

inline double modulation_eval(const InteractionSpec& h, const PsiParams& psi, double a, const Mem& m, int d) {
  switch (h.modulation) {
    case ModulationFamily::none:
      return 1.0;
    case ModulationFamily::linear_in_m: {
      double g = h.g0;
      for (int k = 0; k < d; ++k) g += h.g_m[k] * m[k];
      return g;
    }
    case ModulationFamily::custom_bounded: {
      if (h.custom) return h.custom(a, m);
      double z = h.g_a != 0.0 ? h.g_a * psi_eval(a, psi) : 0.0;
      for (int k = 0; k < d; ++k) z += h.g_m[k] * m[k];
      return h.g0 + h.g1 * std::tanh(z);
    }
  }
  return 1.0;
}

inline double h_eval(const InteractionSpec& h, const PsiParams& psi, double t, double a, const Mem& m, int d) {
  if (is_zero(h)) return 0.0;
  return kernel_eval(h, t) * modulation_eval(h, psi, a, m, d);
}

// ---------------------------------------------------------------- jump

enum class JumpFamily { translation, affine_contraction, custom };

struct JumpSpec {
  JumpFamily family = JumpFamily::translation;
  Mem alpha_vec{};       // translation
  double alpha = 0.5;    // affine-contraction: gamma(m) = offset + (1 - alpha) m
  Mem offset{};          // defaults to alpha in every component, see normalize_jump
  bool offset_set = false;
  // custom: diagonal affine gamma(m) = scale * m + shift, or arbitrary maps when provided.
  Mem custom_scale{1, 1, 1, 1};
  Mem custom_shift{};
  std::function<Mem(const Mem&)> gamma;
  std::function<Mem(const Mem&)> gamma_inv;
};

inline Mem affine_offset(const JumpSpec& j) {
  if (j.offset_set) return j.offset;
  Mem o{};
  o.fill(j.alpha);
  return o;
}

inline Mem jump_apply(const JumpSpec& j, const Mem& m, int d) {
  Mem r = m;
  switch (j.family) {
    case JumpFamily::translation:
      for (int k = 0; k < d; ++k) r[k] = m[k] + j.alpha_vec[k];
      break;
    case JumpFamily::affine_contraction: {
      Mem o = affine_offset(j);
      for (int k = 0; k < d; ++k) r[k] = o[k] + (1.0 - j.alpha) * m[k];
      break;
    }
    case JumpFamily::custom:
      if (j.gamma) return j.gamma(m);
      for (int k = 0; k < d; ++k) r[k] = j.custom_scale[k] * m[k] + j.custom_shift[k];
      break;
  }
  return r;
}

namespace detail {
// Central-difference Jacobian of gamma at m.
inline void fd_jacobian(const JumpSpec& j, const Mem& m, int d, double out[kMaxDim][kMaxDim]) {
  for (int c = 0; c < d; ++c) {
    double step = 1e-6 * std::max(1.0, std::abs(m[c]));
    Mem p = m, q = m;
    p[c] += step;
    q[c] -= step;
    Mem gp = jump_apply(j, p, d), gq = jump_apply(j, q, d);
    for (int r = 0; r < d; ++r) out[r][c] = (gp[r] - gq[r]) / (2.0 * step);
  }
}

inline double determinant(double a[kMaxDim][kMaxDim], int d) {
  double m[kMaxDim][kMaxDim];
  for (int i = 0; i < d; ++i)
    for (int k = 0; k < d; ++k) m[i][k] = a[i][k];
  double det = 1.0;
  for (int c = 0; c < d; ++c) {
    int piv = c;
    for (int r = c + 1; r < d; ++r)
      if (std::abs(m[r][c]) > std::abs(m[piv][c])) piv = r;
    if (m[piv][c] == 0.0) return 0.0;
    if (piv != c) {
      for (int k = 0; k < d; ++k) std::swap(m[c][k], m[piv][k]);
      det = -det;
    }
    det *= m[c][c];
    for (int r = c + 1; r < d; ++r) {
      double f = m[r][c] / m[c][c];
      for (int k = c; k < d; ++k) m[r][k] -= f * m[c][k];
    }
  }
  return det;
}

inline bool solve_linear(double a[kMaxDim][kMaxDim], Mem& rhs, int d) {
  for (int c = 0; c < d; ++c) {
    int piv = c;
    for (int r = c + 1; r < d; ++r)
      if (std::abs(a[r][c]) > std::abs(a[piv][c])) piv = r;
    if (a[piv][c] == 0.0) return false;
    if (piv != c) {
      for (int k = 0; k < d; ++k) std::swap(a[c][k], a[piv][k]);
      std::swap(rhs[c], rhs[piv]);
    }
    for (int r = c + 1; r < d; ++r) {
      double f = a[r][c] / a[c][c];
      for (int k = c; k < d; ++k) a[r][k] -= f * a[c][k];
      rhs[r] -= f * rhs[c];
    }
  }
  for (int r = d - 1; r >= 0; --r) {
    double s = rhs[r];
    for (int k = r + 1; k < d; ++k) s -= a[r][k] * rhs[k];
    rhs[r] = s / a[r][r];
  }
  return true;
}
}  // namespace detail

inline Mem jump_inverse(const JumpSpec& j, const Mem& m, int d) {
  Mem r = m;
  switch (j.family) {
    case JumpFamily::translation:
      for (int k = 0; k < d; ++k) r[k] = m[k] - j.alpha_vec[k];
      return r;
    case JumpFamily::affine_contraction: {
      Mem o = affine_offset(j);
      for (int k = 0; k < d; ++k) r[k] = (m[k] - o[k]) / (1.0 - j.alpha);
      return r;
    }
    case JumpFamily::custom:
      break;
  }
  if (j.gamma_inv) return j.gamma_inv(m);
  if (!j.gamma) {
    for (int k = 0; k < d; ++k) {
      if (j.custom_scale[k] == 0.0) throw std::invalid_argument("jump_inverse: custom map is not invertible");
      r[k] = (m[k] - j.custom_shift[k]) / j.custom_scale[k];
    }
    return r;
  }
  // Newton iteration on gamma(r) = m.
  for (int it = 0; it < 100; ++it) {
    Mem g = jump_apply(j, r, d), res{};
    double err = 0.0;
    for (int k = 0; k < d; ++k) {
      res[k] = m[k] - g[k];
      err = std::max(err, std::abs(res[k]));
    }
    if (err < 1e-14 * std::max(1.0, l1_norm(m, d))) return r;
    double jac[kMaxDim][kMaxDim];
    detail::fd_jacobian(j, r, d, jac);
    if (!detail::solve_linear(jac, res, d)) throw std::invalid_argument("jump_inverse: singular Jacobian");
    for (int k = 0; k < d; ++k) r[k] += res[k];
  }
  throw std::invalid_argument("jump_inverse: Newton iteration did not converge");
}

// log |det D gamma^{-1}(m)|.
inline double jump_inverse_jacobian_logdet(const JumpSpec& j, const Mem& m, int d) {
  switch (j.family) {
    case JumpFamily::translation: return 0.0;
    case JumpFamily::affine_contraction: return -d * std::log1p(-j.alpha);
    case JumpFamily::custom: break;
  }
  if (!j.gamma) {
    double s = 0.0;
    for (int k = 0; k < d; ++k) {
      if (j.custom_scale[k] == 0.0) throw std::invalid_argument("jump: custom map is not invertible");
      s -= std::log(std::abs(j.custom_scale[k]));
    }
    return s;
  }
  double jac[kMaxDim][kMaxDim];
  detail::fd_jacobian(j, jump_inverse(j, m, d), d, jac);
  double det = detail::determinant(jac, d);
  if (det == 0.0) throw std::invalid_argument("jump: singular Jacobian");
  return -std::log(std::abs(det));
}

// Exact Lipschitz constant (l1 operator norm) for the affine families.
inline double jump_lipschitz_exact(const JumpSpec& j, int d) {
  switch (j.family) {
    case JumpFamily::translation: return 1.0;
    case JumpFamily::affine_contraction: return 1.0 - j.alpha;
    case JumpFamily::custom: {
      if (j.gamma) return NAN;
      double c = 0.0;
      for (int k = 0; k < d; ++k) c = std::max(c, std::abs(j.custom_scale[k]));
      return c;
    }
  }
  return NAN;
}

// ---------------------------------------------------------------- initial laws

enum class LawKind { exponential, uniform, truncated_gaussian };

struct Law1D {
  LawKind kind = LawKind::uniform;
  double p1 = 0.0;  // rate | lo | mean
  double p2 = 1.0;  // -    | hi | sd
  double lo = -INFINITY, hi = INFINITY;  // truncation bounds (truncated-gaussian)

  static Law1D exponential(double rate) { return {LawKind::exponential, rate, 0.0, 0.0, INFINITY}; }
  static Law1D uniform(double lo, double hi) { return {LawKind::uniform, lo, hi, lo, hi}; }
  static Law1D truncated_gaussian(double mean, double sd, double lo, double hi) {
    return {LawKind::truncated_gaussian, mean, sd, lo, hi};
  }

  double support_lo() const { return kind == LawKind::exponential ? 0.0 : lo; }
  double support_hi() const { return kind == LawKind::exponential ? INFINITY : hi; }

  double pdf(double x) const {
    switch (kind) {
      case LawKind::exponential: return x < 0 ? 0.0 : p1 * std::exp(-p1 * x);
      case LawKind::uniform: return (x < lo || x > hi) ? 0.0 : 1.0 / (hi - lo);
      case LawKind::truncated_gaussian: {
        if (x < lo || x > hi) return 0.0;
        double z = (x - p1) / p2;
        return std::exp(-0.5 * z * z) / (p2 * std::sqrt(2 * M_PI) * norm());
      }
    }
    return 0.0;
  }

  double cdf(double x) const {
    switch (kind) {
      case LawKind::exponential: return x <= 0 ? 0.0 : -std::expm1(-p1 * x);
      case LawKind::uniform: return x <= lo ? 0.0 : x >= hi ? 1.0 : (x - lo) / (hi - lo);
      case LawKind::truncated_gaussian: {
        if (x <= lo) return 0.0;
        if (x >= hi) return 1.0;
        return (normal_cdf((x - p1) / p2) - normal_cdf((lo - p1) / p2)) / norm();
      }
    }
    return 0.0;
  }

  double quantile(double u) const {
    switch (kind) {
      case LawKind::exponential: return -std::log1p(-u) / p1;
      case LawKind::uniform: return lo + u * (hi - lo);
      case LawKind::truncated_gaussian: {
        double c0 = normal_cdf((lo - p1) / p2);
        double x = p1 + p2 * normal_quantile(c0 + u * norm());
        return std::clamp(x, lo, hi);
      }
    }
    return 0.0;
  }

  double mean() const {
    switch (kind) {
      case LawKind::exponential: return 1.0 / p1;
      case LawKind::uniform: return 0.5 * (lo + hi);
      case LawKind::truncated_gaussian: {
        double a = (lo - p1) / p2, b = (hi - p1) / p2;
        auto phi = [](double z) { return std::isfinite(z) ? std::exp(-0.5 * z * z) / std::sqrt(2 * M_PI) : 0.0; };
        return p1 + p2 * (phi(a) - phi(b)) / norm();
      }
    }
    return 0.0;
  }

  void validate() const {
    switch (kind) {
      case LawKind::exponential:
        if (!(p1 > 0)) throw std::invalid_argument("exponential law: rate must be positive");
        break;
      case LawKind::uniform:
        if (!(hi > lo)) throw std::invalid_argument("uniform law: need lo < hi");
        break;
      case LawKind::truncated_gaussian:
        if (!(p2 > 0) || !(hi > lo)) throw std::invalid_argument("truncated gaussian: need sd > 0, lo < hi");
        break;
    }
  }

 private:
  double norm() const { return normal_cdf((hi - p1) / p2) - normal_cdf((lo - p1) / p2); }
};

// Density of (A0, M0) tabulated on a rectangular grid (d <= 2), multilinear
// between nodes and zero outside. Normalized to unit trapezoid mass.
struct TabulatedDensity {
  double a0 = 0.0, da = 1.0;
  int n_a = 0;
  std::array<double, 2> m_lo{}, dm{1, 1};
  std::array<int, 2> n_m{1, 1};
  int d = 1;
  std::vector<double> values;  // index ((i_a * n_m0) + j0) * n_m1 + j1

  std::size_t size() const { return static_cast<std::size_t>(n_a) * n_m[0] * (d > 1 ? n_m[1] : 1); }

  double node(int ia, int j0, int j1 = 0) const {
    return values[(static_cast<std::size_t>(ia) * n_m[0] + j0) * (d > 1 ? n_m[1] : 1) + j1];
  }

  double trapezoid_mass() const;
  void normalize();
  double pdf(double a, const Mem& m) const;
  // Sample by inverse CDF over cells (mass of each cell from the trapezoid rule), uniform within a cell.
  void sample(Rng& rng, double& a, Mem& m) const;

 private:
  mutable std::vector<double> cell_cdf_;
};

inline double TabulatedDensity::trapezoid_mass() const {
  double total = 0.0;
  int n1 = d > 1 ? n_m[1] : 1;
  for (int i = 0; i < n_a; ++i) {
    double wa = (i == 0 || i == n_a - 1) ? 0.5 * da : da;
    for (int j0 = 0; j0 < n_m[0]; ++j0) {
      double w0 = (j0 == 0 || j0 == n_m[0] - 1) ? 0.5 * dm[0] : dm[0];
      for (int j1 = 0; j1 < n1; ++j1) {
        double w1 = d > 1 ? ((j1 == 0 || j1 == n1 - 1) ? 0.5 * dm[1] : dm[1]) : 1.0;
        total += wa * w0 * w1 * node(i, j0, j1);
      }
    }
  }
  return total;
}

inline void TabulatedDensity::normalize() {
  if (values.size() != size()) throw std::invalid_argument("tabulated density: wrong number of values");
  for (double v : values)
    if (!(v >= 0)) throw std::invalid_argument("tabulated density: values must be nonnegative");
  double mass = trapezoid_mass();
  if (!(mass > 0)) throw std::invalid_argument("tabulated density: zero mass");
  for (double& v : values) v /= mass;
  cell_cdf_.clear();
}

inline double TabulatedDensity::pdf(double a, const Mem& m) const {
  auto locate = [](double x, double lo, double h, int n, int& i, double& w) {
    double u = (x - lo) / h;
    if (u < 0 || u > n - 1) return false;
    i = std::min(static_cast<int>(u), n - 2);
    if (n == 1) i = 0;
    w = u - i;
    return true;
  };
  int ia, i0, i1 = 0;
  double wa, w0, w1 = 0.0;
  if (!locate(a, a0, da, n_a, ia, wa) || !locate(m[0], m_lo[0], dm[0], n_m[0], i0, w0)) return 0.0;
  if (d > 1 && !locate(m[1], m_lo[1], dm[1], n_m[1], i1, w1)) return 0.0;
  double s = 0.0;
  for (int ca = 0; ca < 2; ++ca)
    for (int c0 = 0; c0 < 2; ++c0)
      for (int c1 = 0; c1 < (d > 1 ? 2 : 1); ++c1) {
        double w = (ca ? wa : 1 - wa) * (c0 ? w0 : 1 - w0) * (d > 1 ? (c1 ? w1 : 1 - w1) : 1.0);
        if (w == 0.0) continue;
        s += w * node(ia + ca, i0 + c0, i1 + c1);
      }
  return s;
}

inline void TabulatedDensity::sample(Rng& rng, double& a, Mem& m) const {
  int n1 = d > 1 ? n_m[1] : 1, c1n = d > 1 ? n_m[1] - 1 : 1;
  std::size_t ncell = static_cast<std::size_t>(n_a - 1) * (n_m[0] - 1) * c1n;
  if (cell_cdf_.size() != ncell) {
    cell_cdf_.assign(ncell, 0.0);
    double acc = 0.0;
    std::size_t c = 0;
    for (int i = 0; i + 1 < n_a; ++i)
      for (int j0 = 0; j0 + 1 < n_m[0]; ++j0)
        for (int j1 = 0; j1 < c1n; ++j1) {
          double s = 0.0;
          int cnt = 0;
          for (int ca = 0; ca < 2; ++ca)
            for (int c0 = 0; c0 < 2; ++c0)
              for (int cc = 0; cc < (d > 1 ? 2 : 1); ++cc) {
                s += node(i + ca, j0 + c0, std::min(j1 + cc, n1 - 1));
                ++cnt;
              }
          acc += s / cnt;
          cell_cdf_[c++] = acc;
        }
    for (double& v : cell_cdf_) v /= acc;
  }
  double u = rng.uniform();
  auto it = std::lower_bound(cell_cdf_.begin(), cell_cdf_.end(), u);
  std::size_t c = std::min<std::size_t>(it - cell_cdf_.begin(), ncell - 1);
  int j1 = static_cast<int>(c % c1n);
  c /= c1n;
  int j0 = static_cast<int>(c % (n_m[0] - 1));
  int i = static_cast<int>(c / (n_m[0] - 1));
  a = a0 + (i + rng.uniform()) * da;
  m = Mem{};
  m[0] = m_lo[0] + (j0 + rng.uniform()) * dm[0];
  if (d > 1) m[1] = m_lo[1] + (j1 + rng.uniform()) * dm[1];
}

struct InitLaw {
  bool tabulated = false;
  Law1D age = Law1D::exponential(1.0);
  std::vector<Law1D> mem;  // one per memory component
  TabulatedDensity table;

  double pdf(double a, const Mem& m, int d) const {
    if (tabulated) return table.pdf(a, m);
    double p = age.pdf(a);
    for (int k = 0; k < d && p > 0; ++k) p *= mem[k].pdf(m[k]);
    return p;
  }

  void sample(Rng& rng, double& a, Mem& m, int d) const {
    if (tabulated) {
      table.sample(rng, a, m);
      return;
    }
    a = age.quantile(rng.uniform());
    m = Mem{};
    for (int k = 0; k < d; ++k) m[k] = mem[k].quantile(rng.uniform());
  }

  double mean_m(int k) const {
    if (!tabulated) return mem[k].mean();
    double s = 0.0, tot = 0.0;
    Rng rng(12345);
    for (int i = 0; i < 20000; ++i) {
      double a;
      Mem m;
      table.sample(rng, a, m);
      s += m[k];
      tot += 1.0;
    }
    return s / tot;
  }

  double age_support_hi() const {
    if (tabulated) return table.a0 + (table.n_a - 1) * table.da;
    return age.support_hi();
  }
  double age_support_lo() const { return tabulated ? table.a0 : age.support_lo(); }
};

// ---------------------------------------------------------------- baseline H

enum class HFamily { zero, constant_random, exp_decay_from_m0 };

struct HSpec {
  HFamily family = HFamily::zero;
  double mean = 0.0;   // constant-random
  double sd = 0.0;     // constant-random
  double scale = 1.0;  // exp-decay-from-M0: H_t(i) = scale * M0_1(i) exp(-Lambda_1 t)
};

// ---------------------------------------------------------------- model

enum class Coordinates { identity, complement };  // complement: user m = 1 - internal m'

struct ModelSpec {
  std::string name = "custom";
  int d = 1;
  Mem Lambda{1, 1, 1, 1};
  PsiParams psi;
  IntensitySpec f;
  InteractionSpec h;
  JumpSpec jump;
  InitLaw init;
  HSpec H;
  Coordinates coords = Coordinates::identity;
  // Memory box used by validators and as the default PDE domain.
  bool has_m_box = false;
  Mem m_lo{}, m_hi{};
};

inline double trace_lambda(const ModelSpec& s) {
  double t = 0.0;
  for (int k = 0; k < s.d; ++k) t += s.Lambda[k];
  return t;
}

inline Mem decay(const ModelSpec& s, const Mem& m, double t) {
  Mem r = m;
  for (int k = 0; k < s.d; ++k) r[k] = m[k] * std::exp(-s.Lambda[k] * t);
  return r;
}

inline double f_of(const ModelSpec& s, double a, const Mem& m, double x) {
  return intensity_eval(s.f, s.psi, a, m, x, s.d);
}

inline double h_of(const ModelSpec& s, double t, double a, const Mem& m) {
  return h_eval(s.h, s.psi, t, a, m, s.d);
}

inline double Hbar(const ModelSpec& s, double t) {
  switch (s.H.family) {
    case HFamily::zero: return 0.0;
    case HFamily::constant_random: return s.H.mean;
    case HFamily::exp_decay_from_m0: return s.H.scale * s.init.mean_m(0) * std::exp(-s.Lambda[0] * t);
  }
  return 0.0;
}

// sup over t >= 0 of |Hbar_t|; every shipped family attains it at t = 0.
inline double Hbar_sup(const ModelSpec& s) { return std::abs(Hbar(s, 0.0)); }

// Memory box: explicit if given, else the initial support widened by the jump range.
inline void memory_box(const ModelSpec& s, Mem& lo, Mem& hi) {
  if (s.has_m_box) {
    lo = s.m_lo;
    hi = s.m_hi;
    return;
  }
  for (int k = 0; k < s.d; ++k) {
    double l = -1.0, u = 1.0;
    if (!s.init.tabulated && k < static_cast<int>(s.init.mem.size())) {
      l = std::isfinite(s.init.mem[k].support_lo()) ? s.init.mem[k].support_lo() : s.init.mem[k].quantile(1e-9);
      u = std::isfinite(s.init.mem[k].support_hi()) ? s.init.mem[k].support_hi() : s.init.mem[k].quantile(1 - 1e-9);
    } else if (s.init.tabulated) {
      l = s.init.table.m_lo[k];
      u = l + (s.init.table.n_m[k] - 1) * s.init.table.dm[k];
    }
    l = std::min(l, 0.0);
    u = std::max(u, 0.0);
    if (s.jump.family == JumpFamily::translation) {
      double a = s.jump.alpha_vec[k];
      if (a < 0) l += 6.0 * a;
      if (a > 0) u += 6.0 * a;
    }
    lo[k] = l;
    hi[k] = u;
  }
}

inline void validate_spec(const ModelSpec& s) {
  if (s.d < 1 || s.d > kMaxDim) throw std::invalid_argument("model: d must be in [1, " + std::to_string(kMaxDim) + "]");
  for (int k = 0; k < s.d; ++k)
    if (!(s.Lambda[k] > 0)) throw std::invalid_argument("model: Lambda must be positive");
  check(s.psi);
  if (!(s.f.f_min > 0) || !(s.f.f_max >= s.f.f_min) || !std::isfinite(s.f.f_max))
    throw std::invalid_argument("intensity: need 0 < f_min <= f_max < inf");
  if (s.f.family == IntensityFamily::constant && s.f.f_min != s.f.f_max)
    throw std::invalid_argument("intensity: constant family needs f_min == f_max");
  if (s.f.family == IntensityFamily::stp_composite && !(s.f.shape_scale > 0))
    throw std::invalid_argument("intensity: stp shape scale must be positive");
  if (!(s.h.tau > 0)) throw std::invalid_argument("interaction: tau must be positive");
  if (s.h.kernel == KernelFamily::erlang && s.h.erlang_shape < 1)
    throw std::invalid_argument("interaction: erlang shape must be >= 1");
  if (s.jump.family == JumpFamily::affine_contraction && !(s.jump.alpha > 0 && s.jump.alpha < 1))
    throw std::invalid_argument("jump: affine contraction needs alpha in (0,1)");
  if (s.init.tabulated) {
    if (s.init.table.d != s.d || s.d > 2) throw std::invalid_argument("init: tabulated density needs d <= 2 matching d");
  } else {
    s.init.age.validate();
    if (s.init.age.support_lo() < 0) throw std::invalid_argument("init: age law must be supported on [0, inf)");
    if (static_cast<int>(s.init.mem.size()) != s.d) throw std::invalid_argument("init: need one memory law per dimension");
    for (const auto& l : s.init.mem) l.validate();
  }
  if (s.H.family == HFamily::constant_random && !(s.H.sd >= 0)) throw std::invalid_argument("H: sd must be >= 0");
  if (s.has_m_box)
    for (int k = 0; k < s.d; ++k)
      if (!(s.m_hi[k] > s.m_lo[k])) throw std::invalid_argument("model: empty memory box");
}

// Memory-box sup of |g| for the interaction modulation.
inline double modulation_sup(const ModelSpec& s) {
  const auto& h = s.h;
  switch (h.modulation) {
    case ModulationFamily::none: return 1.0;
    case ModulationFamily::custom_bounded: return h.custom ? h.custom_bound : std::abs(h.g0) + std::abs(h.g1);
    case ModulationFamily::linear_in_m: {
      Mem lo, hi;
      memory_box(s, lo, hi);
      double g = std::abs(h.g0);
      double up = h.g0, dn = h.g0;
      for (int k = 0; k < s.d; ++k) {
        up += std::max(h.g_m[k] * lo[k], h.g_m[k] * hi[k]);
        dn += std::min(h.g_m[k] * lo[k], h.g_m[k] * hi[k]);
      }
      return std::max({g, std::abs(up), std::abs(dn)});
    }
  }
  return 1.0;
}

inline double h_sup(const ModelSpec& s) { return is_zero(s.h) ? 0.0 : kernel_sup(s.h) * modulation_sup(s); }

// ---------------------------------------------------------------- validation

struct AssumptionCheck {
  std::string name;
  bool pass = true;
  std::string detail;
};

struct ValidationReport {
  double sup_f = 0.0, sup_h = 0.0, sup_Gamma = 0.0;
  double lip_f = 0.0, lip_h = 0.0, lip_gamma = 0.0;
  double lip_f_analytic = NAN, lip_gamma_exact = NAN;
  double roundtrip_error = 0.0;
  double omega = INFINITY;
  std::vector<AssumptionCheck> checks;
  bool all_pass() const {
    for (const auto& c : checks)
      if (!c.pass) return false;
    return true;
  }
};

inline ValidationReport validate_assumptions(const ModelSpec& s, int n_samples = 10000, std::uint64_t seed = 0) {
  validate_spec(s);
  ValidationReport rep;
  Rng rng(derive_seed(seed, 0xA55));
  Mem lo, hi;
  memory_box(s, lo, hi);
  const int d = s.d;
  const double a_hi = 20.0 * s.psi.K / s.psi.kappa + 10.0;
  const double x_hi = std::abs(Hbar(s, 0.0)) + 10.0 * std::max(1.0, h_sup(s) * s.f.f_max);
  auto draw_m = [&]() {
    Mem m{};
    for (int k = 0; k < d; ++k) m[k] = lo[k] + rng.uniform() * (hi[k] - lo[k]);
    return m;
  };
  double f_lo_seen = INFINITY, f_hi_seen = -INFINITY;
  for (int i = 0; i < n_samples; ++i) {
    double a = rng.uniform() * a_hi, a2 = rng.uniform() < 0.5 ? a + 0.1 * rng.uniform() : rng.uniform() * a_hi;
    double x = (2 * rng.uniform() - 1) * x_hi, x2 = (2 * rng.uniform() - 1) * x_hi;
    Mem m = draw_m(), m2 = draw_m();
    double f1 = f_of(s, a, m, x), f2 = f_of(s, a2, m2, x2);
    f_lo_seen = std::min({f_lo_seen, f1, f2});
    f_hi_seen = std::max({f_hi_seen, f1, f2});
    double dist_f = std::abs(psi_eval(a, s.psi) - psi_eval(a2, s.psi)) + l1_dist(m, m2, d) + std::abs(x - x2);
    if (dist_f > 1e-12) rep.lip_f = std::max(rep.lip_f, std::abs(f1 - f2) / dist_f);

    if (!is_zero(s.h)) {
      double t = rng.uniform() * 10.0 * s.h.tau, t2 = t + (rng.uniform() - 0.5) * 0.2 * s.h.tau;
      t2 = std::max(t2, 0.0);
      double h1 = h_of(s, t, a, m), h2 = h_of(s, t2, a2, m2);
      rep.sup_h = std::max({rep.sup_h, std::abs(h1), std::abs(h2)});
      double dist_h = std::abs(t - t2) + std::abs(psi_eval(a, s.psi) - psi_eval(a2, s.psi)) + l1_dist(m, m2, d);
      if (dist_h > 1e-12) rep.lip_h = std::max(rep.lip_h, std::abs(h1 - h2) / dist_h);
    }

    Mem g1 = jump_apply(s.jump, m, d), g2 = jump_apply(s.jump, m2, d);
    double dm = l1_dist(m, m2, d);
    if (dm > 1e-12) rep.lip_gamma = std::max(rep.lip_gamma, l1_dist(g1, g2, d) / dm);
    Mem Gam{};
    for (int k = 0; k < d; ++k) Gam[k] = g1[k] - m[k];
    rep.sup_Gamma = std::max(rep.sup_Gamma, l1_norm(Gam, d));
    try {
      Mem back = jump_inverse(s.jump, g1, d);
      rep.roundtrip_error = std::max(rep.roundtrip_error, l1_dist(back, m, d) / std::max(1.0, l1_norm(m, d)));
    } catch (const std::invalid_argument&) {
      rep.roundtrip_error = INFINITY;
    }
  }
  rep.sup_f = f_hi_seen;
  rep.omega = f_lo_seen;
  rep.lip_f_analytic = intensity_lipschitz(s.f, s.psi, d);
  rep.lip_gamma_exact = jump_lipschitz_exact(s.jump, d);

  const double tol = 1e-9;
  auto add = [&](std::string name, bool pass, std::string detail) {
    rep.checks.push_back({std::move(name), pass, std::move(detail)});
  };
  bool f_ok = s.f.f_min > 0 && rep.omega >= s.f.f_min * (1 - tol) && rep.sup_f <= s.f.f_max * (1 + tol) &&
              std::isfinite(rep.lip_f) && (!std::isfinite(rep.lip_f_analytic) || rep.lip_f <= rep.lip_f_analytic * (1 + 1e-6) + 1e-12);
  add("intensity-bounded-lipschitz", f_ok, "f in [" + std::to_string(rep.omega) + ", " + std::to_string(rep.sup_f) + "], Lipschitz ratio " + std::to_string(rep.lip_f));
  bool h_ok = std::isfinite(rep.sup_h) && std::isfinite(rep.lip_h);
  add("interaction-bounded-lipschitz", h_ok, "sup|h| " + std::to_string(rep.sup_h) + ", Lipschitz ratio " + std::to_string(rep.lip_h));
  bool G_ok = std::isfinite(rep.sup_Gamma);
  if (s.jump.family == JumpFamily::affine_contraction) G_ok = G_ok && s.has_m_box;
  add("jump-bounded", G_ok, "sup|Gamma| on the memory box " + std::to_string(rep.sup_Gamma));
  add("jump-1-lipschitz", rep.lip_gamma <= 1.0 + tol, "sampled ratio " + std::to_string(rep.lip_gamma));
  add("initial-law", true, "i.i.d. initial conditions, finite-variance baseline");
  add("jump-diffeomorphism", rep.roundtrip_error < 1e-10, "round-trip error " + std::to_string(rep.roundtrip_error));
  if (s.jump.family == JumpFamily::affine_contraction) {
    bool inv = true;
    for (int k = 0; k < d && s.has_m_box; ++k) {
      Mem o = affine_offset(s.jump);
      double g_lo = o[k] + (1 - s.jump.alpha) * s.m_lo[k], g_hi = o[k] + (1 - s.jump.alpha) * s.m_hi[k];
      inv = inv && g_lo >= s.m_lo[k] - tol && g_hi <= s.m_hi[k] + tol && s.m_lo[k] <= 0 && s.m_hi[k] >= 0;
    }
    add("box-invariance", inv, "memory box invariant under decay and jump");
  }
  return rep;
}

}  // namespace almh
