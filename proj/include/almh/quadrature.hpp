#pragma once

#include <cmath>
#include <cstddef>
#include <map>
#include <mutex>
#include <stdexcept>
#include <utility>
#include <vector>

namespace almh {

struct GaussRule {
  std::vector<double> nodes;  // on [-1, 1]
  std::vector<double> weights;
};

// Gauss-Legendre rule of order n by Newton iteration on P_n.
inline GaussRule make_gauss_legendre(int n) {
  if (n < 1) throw std::invalid_argument("Gauss-Legendre order must be >= 1");
  GaussRule r;
  r.nodes.resize(n);
  r.weights.resize(n);
  for (int i = 0; i < (n + 1) / 2; ++i) {
    double z = std::cos(M_PI * (i + 0.75) / (n + 0.5));
    double pp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p1 = 1.0, p2 = 0.0;
      for (int j = 1; j <= n; ++j) {
        double p3 = p2;
        p2 = p1;
        p1 = ((2.0 * j - 1.0) * z * p2 - (j - 1.0) * p3) / j;
      }
      pp = n * (z * p1 - p2) / (z * z - 1.0);
      double dz = p1 / pp;
      z -= dz;
      if (std::abs(dz) < 1e-16) break;
    }
    r.nodes[i] = -z;
    r.nodes[n - 1 - i] = z;
    r.weights[i] = r.weights[n - 1 - i] = 2.0 / ((1.0 - z * z) * pp * pp);
  }
  return r;
}

inline const GaussRule& gauss_legendre(int n) {
  static std::mutex mu;
  static std::map<int, GaussRule> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find(n);
  if (it == cache.end()) it = cache.emplace(n, make_gauss_legendre(n)).first;
  return it->second;
}

// Integral of g over [lo, hi] with `panels` equal panels of an order-n rule.
template <class F>
double gauss_integrate(F&& g, double lo, double hi, int n, int panels = 1) {
  const GaussRule& r = gauss_legendre(n);
  double w = (hi - lo) / panels, total = 0.0;
  for (int p = 0; p < panels; ++p) {
    double c = lo + (p + 0.5) * w, s = 0.0;
    for (int i = 0; i < n; ++i) s += r.weights[i] * g(c + 0.5 * w * r.nodes[i]);
    total += 0.5 * w * s;
  }
  return total;
}

namespace detail {
template <class F>
double simpson_rec(F& g, double a, double b, double fa, double fm, double fb, double whole, double tol,
                   int depth) {
  double m = 0.5 * (a + b), lm = 0.5 * (a + m), rm = 0.5 * (m + b);
  double flm = g(lm), frm = g(rm);
  double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
  double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
  double diff = left + right - whole;
  if (depth <= 0 || std::abs(diff) <= 15.0 * tol) return left + right + diff / 15.0;
  return simpson_rec(g, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
         simpson_rec(g, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
}
}  // namespace detail

// Adaptive Simpson to relative tolerance rel_tol (absolute floor abs_tol).
template <class F>
double adaptive_simpson(F&& g, double a, double b, double rel_tol = 1e-8, double abs_tol = 1e-300,
                        int max_depth = 40) {
  if (b == a) return 0.0;
  double fa = g(a), fb = g(b), m = 0.5 * (a + b), fm = g(m);
  double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
  // Refine once up front so the tolerance is relative to a decent estimate.
  double l1 = 0.5 * (a + m), r1 = 0.5 * (m + b);
  double est = (b - a) / 12.0 * (fa + 4.0 * g(l1) + 2.0 * fm + 4.0 * g(r1) + fb);
  double tol = std::max(rel_tol * std::abs(est), abs_tol);
  return detail::simpson_rec(g, a, b, fa, fm, fb, whole, tol, max_depth);
}

// Trapezoid weights for n equally spaced nodes with spacing h.
inline std::vector<double> trapezoid_weights(std::size_t n, double h) {
  std::vector<double> w(n, h);
  if (n == 1) {
    w[0] = h;
  } else if (n > 1) {
    w.front() = w.back() = 0.5 * h;
  }
  return w;
}

// Pairwise summation; the result does not depend on how the caller chunked work.
inline double pairwise_sum(const double* x, std::size_t n) {
  if (n <= 8) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += x[i];
    return s;
  }
  std::size_t h = n / 2;
  return pairwise_sum(x, h) + pairwise_sum(x + h, n - h);
}

inline double pairwise_sum(const std::vector<double>& x) { return pairwise_sum(x.data(), x.size()); }

// P(Z > l) for Z ~ Poisson(mu).
inline double poisson_upper_tail(double mu, int l) {
  if (l < 0) return 1.0;
  double term = std::exp(-mu), cdf = term;
  for (int k = 1; k <= l; ++k) {
    term *= mu / k;
    cdf += term;
  }
  // Sum the tail directly when the CDF is too close to 1 for subtraction.
  if (cdf > 0.5) {
    double tail = 0.0, t = term;
    for (int k = l + 1; k < l + 2000; ++k) {
      t *= mu / k;
      tail += t;
      if (t < tail * 1e-18) break;
    }
    return tail;
  }
  return 1.0 - cdf;
}

inline double poisson_pmf(double mu, int k) {
  return std::exp(-mu + k * std::log(mu) - std::lgamma(k + 1.0));
}

}  // namespace almh
