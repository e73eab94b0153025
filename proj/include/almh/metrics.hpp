#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <vector>

#include "almh/model.hpp"
#include "almh/parallel.hpp"
#include "almh/particle_sim.hpp"
#include "almh/pde_solver.hpp"
#include "almh/quadrature.hpp"
#include "almh/rng.hpp"

namespace almh {

// Exact W1 between two weighted point sets on the line: integral of |F - G|.
inline double wasserstein1_1d(std::vector<double> x, std::vector<double> wx, std::vector<double> y,
                              std::vector<double> wy) {
  if (x.empty() || y.empty()) throw std::invalid_argument("wasserstein1_1d: empty input");
  if (wx.size() != x.size() || wy.size() != y.size()) throw std::invalid_argument("wasserstein1_1d: weight size");
  auto sort_pair = [](std::vector<double>& v, std::vector<double>& w) {
    std::vector<std::size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> v2(v.size()), w2(v.size());
    double tot = 0.0;
    for (std::size_t i = 0; i < idx.size(); ++i) tot += w[idx[i]];
    if (!(tot > 0)) throw std::invalid_argument("wasserstein1_1d: zero total weight");
    for (std::size_t i = 0; i < idx.size(); ++i) {
      v2[i] = v[idx[i]];
      w2[i] = w[idx[i]] / tot;
    }
    v.swap(v2);
    w.swap(w2);
  };
  sort_pair(x, wx);
  sort_pair(y, wy);
  std::size_t i = 0, j = 0;
  double Fx = 0.0, Fy = 0.0, prev = std::min(x[0], y[0]), acc = 0.0;
  while (i < x.size() || j < y.size()) {
    double nx = i < x.size() ? x[i] : INFINITY, ny = j < y.size() ? y[j] : INFINITY;
    double cur = std::min(nx, ny);
    acc += std::abs(Fx - Fy) * (cur - prev);
    prev = cur;
    while (i < x.size() && x[i] == cur) Fx += wx[i++];
    while (j < y.size() && y[j] == cur) Fy += wy[j++];
  }
  return acc;
}

inline double wasserstein1_1d(const std::vector<double>& x, const std::vector<double>& y) {
  return wasserstein1_1d(x, std::vector<double>(x.size(), 1.0), y, std::vector<double>(y.size(), 1.0));
}

// Continuous law on the line given by its CDF and quantile function.
struct Distribution1D {
  std::function<double(double)> cdf;
  std::function<double(double)> quantile;
};

// W1 between an equal-weight sample and a continuous law: integral of |F_n - F|,
// split where F crosses each plateau of F_n.
inline double wasserstein1_1d(std::vector<double> x, const Distribution1D& law) {
  if (x.empty()) throw std::invalid_argument("wasserstein1_1d: empty input");
  std::sort(x.begin(), x.end());
  const double n = static_cast<double>(x.size());
  double lo = std::min(law.quantile(1e-12), x.front()), hi = std::max(law.quantile(1.0 - 1e-12), x.back());
  auto intF = [&](double u, double v) { return v > u ? gauss_integrate(law.cdf, u, v, 16, 4) : 0.0; };
  auto piece = [&](double u, double v, double level) {
    if (!(v > u)) return 0.0;
    double q = law.quantile(std::clamp(level, 0.0, 1.0));
    double acc = 0.0;
    double mid = std::clamp(q, u, v);
    // F <= level on [u, mid], F >= level on [mid, v]
    acc += level * (mid - u) - intF(u, mid);
    acc += intF(mid, v) - level * (v - mid);
    return acc;
  };
  double acc = piece(lo, x.front(), 0.0);
  for (std::size_t i = 0; i + 1 < x.size(); ++i) acc += piece(x[i], x[i + 1], (i + 1) / n);
  acc += piece(x.back(), hi, 1.0);
  return acc;
}

// Compactifying transform (psi on age, tanh on each memory coordinate).
inline std::vector<std::array<double, kMaxDim + 1>> transform_points(const WeightedPoints& p, const PsiParams& psi) {
  std::vector<std::array<double, kMaxDim + 1>> out(p.ages.size());
  for (std::size_t i = 0; i < p.ages.size(); ++i) {
    out[i][0] = psi_eval(p.ages[i], psi);
    for (int k = 0; k < p.d; ++k) out[i][k + 1] = std::tanh(p.memories[i][k]);
  }
  return out;
}

// `count` seeded unit directions in dimension dim.
inline std::vector<std::array<double, kMaxDim + 1>> slice_directions(int dim, int count, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<std::array<double, kMaxDim + 1>> dirs(count);
  for (auto& v : dirs) {
    double nrm = 0.0;
    do {
      nrm = 0.0;
      v.fill(0.0);
      for (int k = 0; k < dim; ++k) {
        v[k] = rng.normal();
        nrm += v[k] * v[k];
      }
    } while (nrm < 1e-20);
    nrm = std::sqrt(nrm);
    for (int k = 0; k < dim; ++k) v[k] /= nrm;
  }
  return dirs;
}

// Draw from a grid density: cell chosen by mass, then uniform jitter within the age cell and
// the memory node's dual cell.
inline WeightedPoints sample_density(const GridDensity& r, std::size_t n, std::uint64_t seed) {
  const std::size_t C = r.axis.cells();
  std::vector<double> cum(static_cast<std::size_t>(r.n_a) * C);
  double tot = 0.0;
  for (int i = 0; i < r.n_a; ++i)
    for (std::size_t c = 0; c < C; ++c) {
      tot += std::max(0.0, r.at(i, c)) * r.da * r.axis.weight(c);
      cum[static_cast<std::size_t>(i) * C + c] = tot;
    }
  if (!(tot > 0)) throw std::invalid_argument("sample_density: density has no mass");
  Rng rng(seed);
  WeightedPoints p;
  p.d = r.axis.d;
  p.ages.resize(n);
  p.memories.resize(n);
  p.weights.assign(n, 1.0 / n);
  for (std::size_t s = 0; s < n; ++s) {
    double u = rng.uniform() * tot;
    auto idx = static_cast<std::size_t>(std::upper_bound(cum.begin(), cum.end(), u) - cum.begin());
    idx = std::min(idx, cum.size() - 1);
    std::size_t ia = idx / C, c = idx % C;
    p.ages[s] = (ia + rng.uniform()) * r.da;
    Mem m = r.axis.point(c);
    for (int k = 0; k < p.d; ++k) {
      double lo = r.axis.lo[k], hi = lo + (r.axis.n[k] - 1) * r.axis.dm[k];
      double v = m[k] + (rng.uniform() - 0.5) * r.axis.dm[k];
      m[k] = std::clamp(v, lo, hi);
    }
    p.memories[s] = m;
  }
  return p;
}

// Sliced W1 after the compactifying transform, over explicit directions.
inline double sliced_w1(const WeightedPoints& P, const WeightedPoints& Q, const PsiParams& psi,
                        const std::vector<std::array<double, kMaxDim + 1>>& dirs) {
  if (P.ages.empty() || Q.ages.empty()) throw std::invalid_argument("sliced_w1: empty input");
  if (P.d != Q.d) throw std::invalid_argument("sliced_w1: dimension mismatch");
  auto tp = transform_points(P, psi), tq = transform_points(Q, psi);
  const int dim = P.d + 1;
  std::vector<double> vals(dirs.size());
  parallel_for(dirs.size(), [&](std::size_t k) {
    std::vector<double> x(tp.size()), y(tq.size());
    for (std::size_t i = 0; i < tp.size(); ++i) {
      double s = 0.0;
      for (int j = 0; j < dim; ++j) s += dirs[k][j] * tp[i][j];
      x[i] = s;
    }
    for (std::size_t i = 0; i < tq.size(); ++i) {
      double s = 0.0;
      for (int j = 0; j < dim; ++j) s += dirs[k][j] * tq[i][j];
      y[i] = s;
    }
    vals[k] = wasserstein1_1d(x, P.weights, y, Q.weights);
  });
  return pairwise_sum(vals) / dirs.size();
}

struct SliceOptions {
  int n_directions = 64;
  std::size_t density_samples = 20000;
  std::uint64_t seed = 0;
};

inline double transformed_w1(const WeightedPoints& emp, const GridDensity& rho, const PsiParams& psi,
                             const SliceOptions& o = {}) {
  auto q = sample_density(rho, o.density_samples, derive_seed(o.seed, 1));
  return sliced_w1(emp, q, psi, slice_directions(emp.d + 1, o.n_directions, derive_seed(o.seed, 2)));
}

// Exact optimal transport between equal-size uniform point sets (Euclidean cost) by
// enumerating matchings; small instances only.
inline double exact_ot_uniform(const std::vector<std::array<double, kMaxDim + 1>>& P,
                               const std::vector<std::array<double, kMaxDim + 1>>& Q, int dim) {
  if (P.size() != Q.size() || P.empty() || P.size() > 8) throw std::invalid_argument("exact_ot_uniform: need 1..8 points each");
  std::vector<std::size_t> perm(P.size());
  std::iota(perm.begin(), perm.end(), 0);
  double best = INFINITY;
  do {
    double c = 0.0;
    for (std::size_t i = 0; i < P.size(); ++i) {
      double s = 0.0;
      for (int k = 0; k < dim; ++k) s += (P[i][k] - Q[perm[i]][k]) * (P[i][k] - Q[perm[i]][k]);
      c += std::sqrt(s);
    }
    best = std::min(best, c);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best / P.size();
}

inline double sliced_w1_points(const std::vector<std::array<double, kMaxDim + 1>>& P,
                               const std::vector<std::array<double, kMaxDim + 1>>& Q, int dim,
                               const std::vector<std::array<double, kMaxDim + 1>>& dirs) {
  std::vector<double> vals(dirs.size());
  for (std::size_t k = 0; k < dirs.size(); ++k) {
    std::vector<double> x(P.size()), y(Q.size());
    for (std::size_t i = 0; i < P.size(); ++i)
      for (int j = 0; j < dim; ++j) x[i] += dirs[k][j] * P[i][j];
    for (std::size_t i = 0; i < Q.size(); ++i)
      for (int j = 0; j < dim; ++j) y[i] += dirs[k][j] * Q[i][j];
    vals[k] = wasserstein1_1d(x, y);
  }
  return pairwise_sum(vals) / dirs.size();
}

struct ConvergenceRow {
  int N = 0;
  int replicate = 0;
  double t = 0.0;
  double w1 = 0.0;
};

struct SlopeFit {
  double slope = 0.0, intercept = 0.0, ci_lo = 0.0, ci_hi = 0.0;
};

struct ConvergenceTable {
  std::vector<ConvergenceRow> rows;
  std::vector<int> ladder;
  std::vector<double> means, std_errors;
  std::optional<SlopeFit> fit;  // absent when fewer than two levels carry positive means
  bool monotone = true;
};

namespace detail {

inline std::optional<std::pair<double, double>> loglog_fit(const std::vector<int>& N, const std::vector<double>& y) {
  std::vector<double> lx, ly;
  for (std::size_t i = 0; i < N.size(); ++i)
    if (y[i] > 0 && std::isfinite(y[i])) {
      lx.push_back(std::log(static_cast<double>(N[i])));
      ly.push_back(std::log(y[i]));
    }
  if (lx.size() < 2) return std::nullopt;
  double mx = std::accumulate(lx.begin(), lx.end(), 0.0) / lx.size();
  double my = std::accumulate(ly.begin(), ly.end(), 0.0) / ly.size();
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    sxx += (lx[i] - mx) * (lx[i] - mx);
    sxy += (lx[i] - mx) * (ly[i] - my);
  }
  if (!(sxx > 0)) return std::nullopt;
  double b = sxy / sxx;
  return std::make_pair(b, my - b * mx);
}

}  // namespace detail

// Fills means, standard errors, the log-log fit with a bootstrap CI, and the monotone-trend flag.
inline void summarize(ConvergenceTable& tab, std::uint64_t seed, int n_boot = 1000) {
  const std::size_t L = tab.ladder.size();
  std::vector<std::vector<double>> by(L);
  for (const auto& r : tab.rows) {
    auto it = std::find(tab.ladder.begin(), tab.ladder.end(), r.N);
    if (it != tab.ladder.end()) by[it - tab.ladder.begin()].push_back(r.w1);
  }
  tab.means.assign(L, 0.0);
  tab.std_errors.assign(L, 0.0);
  for (std::size_t i = 0; i < L; ++i) {
    if (by[i].empty()) continue;
    double m = pairwise_sum(by[i]) / by[i].size(), v = 0.0;
    for (double w : by[i]) v += (w - m) * (w - m);
    tab.means[i] = m;
    tab.std_errors[i] = by[i].size() > 1 ? std::sqrt(v / (by[i].size() - 1) / by[i].size()) : 0.0;
  }
  tab.monotone = true;
  const double z = 1.6448536269514722;  // one-sided 0.05
  for (std::size_t i = 1; i < L; ++i)
    if (tab.means[i] > tab.means[i - 1] + z * std::hypot(tab.std_errors[i], tab.std_errors[i - 1])) tab.monotone = false;

  tab.fit.reset();
  bool replicated = true;
  for (const auto& b : by) replicated = replicated && b.size() > 1;
  auto base = detail::loglog_fit(tab.ladder, tab.means);
  if (!base || !replicated) return;
  SlopeFit fit;
  fit.slope = base->first;
  fit.intercept = base->second;
  Rng rng(seed);
  std::vector<double> slopes;
  slopes.reserve(n_boot);
  std::vector<double> bm(L);
  for (int b = 0; b < n_boot; ++b) {
    for (std::size_t i = 0; i < L; ++i) {
      double s = 0.0;
      for (std::size_t k = 0; k < by[i].size(); ++k) s += by[i][rng.index(by[i].size())];
      bm[i] = s / by[i].size();
    }
    if (auto f = detail::loglog_fit(tab.ladder, bm)) slopes.push_back(f->first);
  }
  if (!slopes.empty()) {
    std::sort(slopes.begin(), slopes.end());
    auto q = [&](double p) { return slopes[static_cast<std::size_t>(std::floor(p * (slopes.size() - 1)))]; };
    fit.ci_lo = q(0.025);
    fit.ci_hi = q(0.975);
  } else {
    fit.ci_lo = fit.ci_hi = fit.slope;
  }
  tab.fit = fit;
}

// Transformed W1 between the N-particle empirical law at t_eval and the density rho.
inline ConvergenceTable convergence_study(const ModelSpec& s, const std::vector<int>& ladder, double t_eval,
                                          int n_replicas, std::uint64_t seed, const GridDensity& rho,
                                          const SliceOptions& so = {}) {
  if (n_replicas < 1) throw std::invalid_argument("convergence_study: need at least one replica");
  ConvergenceTable tab;
  tab.ladder = ladder;
  SliceOptions o = so;
  o.seed = derive_seed(seed, 0xC0FFEE);
  auto ref = sample_density(rho, o.density_samples, derive_seed(o.seed, 1));
  auto dirs = slice_directions(s.d + 1, o.n_directions, derive_seed(o.seed, 2));
  for (int N : ladder) {
    std::vector<double> w(n_replicas);
    parallel_for(n_replicas, [&](std::size_t r) {
      auto rec = simulate_network(s, N, t_eval, derive_seed(derive_seed(seed, static_cast<std::uint64_t>(N)), r), {t_eval});
      w[r] = sliced_w1(empirical_measure(rec, t_eval, s.d), ref, s.psi, dirs);
    });
    for (int r = 0; r < n_replicas; ++r) tab.rows.push_back({N, r, t_eval, w[r]});
  }
  summarize(tab, derive_seed(seed, 0xB007));
  return tab;
}

// Replica distances E[sup_t |coupled difference|] across the ladder.
inline ConvergenceTable coupling_decay_study(const ModelSpec& s, const std::vector<int>& ladder, double T,
                                             int n_replicas, std::uint64_t seed, const XPath& x) {
  ConvergenceTable tab;
  tab.ladder = ladder;
  for (int N : ladder) {
    auto sum = simulate_coupled_pair(s, N, T, x, derive_seed(seed, static_cast<std::uint64_t>(N)), n_replicas);
    for (int r = 0; r < n_replicas; ++r) tab.rows.push_back({N, r, T, sum.per_replica[r]});
  }
  summarize(tab, derive_seed(seed, 0xB007));
  return tab;
}

}  // namespace almh
