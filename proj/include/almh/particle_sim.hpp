#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "almh/model.hpp"
#include "almh/parallel.hpp"
#include "almh/quadrature.hpp"
#include "almh/rng.hpp"
#include "almh/xpath.hpp"

namespace almh {

struct EventRecord {
  double time = 0.0;
  std::uint32_t neuron = 0;
  double age_before = 0.0;
  Mem memory_before{};
};

struct Snapshot {
  double t = 0.0;
  std::vector<double> ages;
  std::vector<Mem> memories;
  double X = 0.0;
};

struct SimulationRecord {
  std::uint64_t spec_hash = 0;
  int N = 0;
  double T = 0.0;
  std::uint64_t seed = 0;
  std::vector<EventRecord> events;
  std::vector<Snapshot> snapshots;
  std::vector<double> x_path_emp;  // X at the save times
  std::size_t n_candidates = 0;
  std::size_t x_bound_violations = 0;
  double max_trace_mismatch = 0.0;  // lazy sum vs trace recursion, when cross-checked
};

struct SimOptions {
  std::size_t event_cap = 10000000;
  bool validate = true;
  bool cross_check = false;  // evaluate the lazy sum next to the trace recursion
  double prune = 1e-12;
};

// Empirical baseline (1/N) sum_j H_t(j) for one realization.
class EmpiricalBaseline {
 public:
  EmpiricalBaseline() = default;
  EmpiricalBaseline(const ModelSpec& s, const std::vector<double>& h_draws, const std::vector<Mem>& m0)
      : family_(s.H.family), lambda1_(s.Lambda[0]) {
    double acc = 0.0;
    if (family_ == HFamily::constant_random) {
      for (double v : h_draws) acc += v;
      level_ = h_draws.empty() ? 0.0 : acc / h_draws.size();
    } else if (family_ == HFamily::exp_decay_from_m0) {
      for (const auto& m : m0) acc += m[0];
      level_ = m0.empty() ? 0.0 : s.H.scale * acc / m0.size();
    }
  }
  double operator()(double t) const {
    switch (family_) {
      case HFamily::zero: return 0.0;
      case HFamily::constant_random: return level_;
      case HFamily::exp_decay_from_m0: return level_ * std::exp(-lambda1_ * t);
    }
    return 0.0;
  }
  double sup() const { return std::abs(level_); }

 private:
  HFamily family_ = HFamily::zero;
  double lambda1_ = 1.0;
  double level_ = 0.0;
};

// Running value of S(t) = sum_k g_k K(t - s_k) over logged events, where h =
// K(t) g(a, m). Exponential and erlang kernels use exact trace recursions;
// other kernels, and the cross-check, use the pruned lazy sum.
class InteractionTrace {
 public:
  InteractionTrace(const InteractionSpec& h, double prune, bool cross_check)
      : h_(h), prune_(prune), cross_check_(cross_check) {
    use_traces_ = h.kernel == KernelFamily::exponential || h.kernel == KernelFamily::erlang;
    if (use_traces_) y_.assign(h.kernel == KernelFamily::erlang ? std::max(1, h.erlang_shape) : 1, 0.0);
  }

  void advance(double t) {
    if (t < now_) throw std::logic_error("InteractionTrace: time went backwards");
    if (use_traces_ && t > now_) {
      double u = (t - now_) / h_.tau, e = std::exp(-u);
      if (y_.size() == 1) {
        y_[0] *= e;
      } else {
        for (std::size_t j = y_.size(); j-- > 0;) {
          double s = 0.0, c = 1.0;
          for (std::size_t i = j + 1; i-- > 0;) {
            s += y_[i] * c;  // c = u^{j-i} / (j-i)!
            c *= u / static_cast<double>(j - i + 1);
          }
          y_[j] = e * s;
        }
      }
    }
    now_ = t;
  }

  void add(double weight) {
    if (use_traces_) y_[0] += weight;
    if (!use_traces_ || cross_check_) lazy_.push_back({now_, weight});
  }

  // Current value of sum_k g_k K(now - s_k).
  double value() {
    if (use_traces_) return h_.J * y_.back();
    return lazy_value();
  }

  double lazy_value() {
    double s = 0.0;
    const double J = std::abs(h_.J);
    while (!lazy_.empty()) {
      const auto& e = lazy_.front();
      double age = now_ - e.first;
      bool dead = h_.kernel == KernelFamily::finite_support ? age >= h_.tau
                  : h_.kernel == KernelFamily::exponential ? J * std::exp(-age / h_.tau) < prune_
                                                            : (age > h_.tau * h_.erlang_shape && std::abs(kernel_eval(h_, age)) < prune_);
      if (!dead) break;
      lazy_.pop_front();
    }
    for (const auto& e : lazy_) s += e.second * kernel_eval(h_, now_ - e.first);
    return s;
  }

  bool uses_traces() const { return use_traces_; }

 private:
  InteractionSpec h_;
  double prune_;
  bool cross_check_;
  bool use_traces_ = false;
  double now_ = 0.0;
  std::vector<double> y_;
  std::deque<std::pair<double, double>> lazy_;
};

namespace detail {

inline void require_runnable(const ModelSpec& s, int N, double T, const SimOptions& opt) {
  if (N < 1) throw std::invalid_argument("simulate: N must be >= 1");
  if (!(T > 0)) throw std::invalid_argument("simulate: T must be positive");
  if (opt.validate) {
    ValidationReport rep = validate_assumptions(s, 2000, 7);
    if (!rep.all_pass()) {
      std::ostringstream os;
      os << "simulate: model fails assumption checks:";
      for (const auto& c : rep.checks)
        if (!c.pass) os << " [" << c.name << ": " << c.detail << "]";
      throw std::invalid_argument(os.str());
    }
  }
}

// Initial draws in a fixed order: for each neuron (a0, m0), then the baseline.
inline void draw_initial(const ModelSpec& s, int N, Rng& rng, std::vector<double>& a, std::vector<Mem>& m,
                         std::vector<double>& h_draws) {
  a.resize(N);
  m.resize(N);
  for (int i = 0; i < N; ++i) s.init.sample(rng, a[i], m[i], s.d);
  h_draws.clear();
  if (s.H.family == HFamily::constant_random) {
    h_draws.resize(N);
    for (int i = 0; i < N; ++i) h_draws[i] = s.H.mean + s.H.sd * rng.normal();
  }
}

// Per-neuron (age, memory) with lazy flow updates.
struct LazyState {
  const ModelSpec* s;
  std::vector<double> a, touched;
  std::vector<Mem> m;

  void init(const ModelSpec& spec, const std::vector<double>& a0, const std::vector<Mem>& m0) {
    s = &spec;
    a = a0;
    m = m0;
    touched.assign(a0.size(), 0.0);
  }
  void bring(std::size_t i, double t) {
    double dt = t - touched[i];
    if (dt > 0) {
      a[i] += dt;
      m[i] = decay(*s, m[i], dt);
      touched[i] = t;
    }
  }
};

}  // namespace detail

inline std::vector<double> sorted_save_times(std::vector<double> v, double T) {
  std::sort(v.begin(), v.end());
  for (double t : v)
    if (t < 0 || t > T) throw std::invalid_argument("save time outside [0, T]");
  return v;
}

inline SimulationRecord simulate_network(const ModelSpec& s, int N, double T, std::uint64_t seed,
                                         std::vector<double> save_times = {}, const SimOptions& opt = {}) {
  detail::require_runnable(s, N, T, opt);
  save_times = sorted_save_times(std::move(save_times), T);
  SimulationRecord rec;
  rec.N = N;
  rec.T = T;
  rec.seed = seed;
  Rng rng(seed);
  std::vector<double> a0, hd;
  std::vector<Mem> m0;
  detail::draw_initial(s, N, rng, a0, m0, hd);
  EmpiricalBaseline H(s, hd, m0);
  detail::LazyState st;
  st.init(s, a0, m0);
  InteractionTrace trace(s.h, opt.prune, opt.cross_check);
  const double hs = h_sup(s);
  const double fmax = s.f.f_max, rate = N * fmax;
  std::size_t next_save = 0;

  auto X_at = [&](double t) {
    trace.advance(t);
    double v = trace.value();
    if (opt.cross_check && trace.uses_traces()) {
      double lz = trace.lazy_value();
      rec.max_trace_mismatch = std::max(rec.max_trace_mismatch, std::abs(lz - v));
    }
    return H(t) + v / N;
  };
  auto snapshot = [&](double t) {
    Snapshot sn;
    sn.t = t;
    sn.ages.resize(N);
    sn.memories.resize(N);
    for (int i = 0; i < N; ++i) {
      st.bring(i, t);
      sn.ages[i] = st.a[i];
      sn.memories[i] = st.m[i];
    }
    sn.X = X_at(t);
    rec.x_path_emp.push_back(sn.X);
    rec.snapshots.push_back(std::move(sn));
  };

  double t = 0.0;
  for (;;) {
    double dt = rng.exponential(rate);
    auto i = static_cast<std::size_t>(rng.index(N));
    double u = rng.uniform();
    double tn = t + dt;
    while (next_save < save_times.size() && save_times[next_save] < tn) snapshot(save_times[next_save++]);
    if (tn > T) break;
    t = tn;
    ++rec.n_candidates;
    st.bring(i, t);
    double X = X_at(t);
    if (std::abs(X) > H.sup() + hs * static_cast<double>(rec.events.size()) / N + 1e-9) ++rec.x_bound_violations;
    double fv = f_of(s, st.a[i], st.m[i], X);
    if (u * fmax < fv) {
      if (rec.events.size() >= opt.event_cap) {
        std::ostringstream os;
        os << "simulate: event cap " << opt.event_cap << " reached at t=" << t << " (N=" << N << ", f_max=" << fmax << ")";
        throw std::runtime_error(os.str());
      }
      rec.events.push_back({t, static_cast<std::uint32_t>(i), st.a[i], st.m[i]});
      if (hs > 0) trace.add(modulation_eval(s.h, s.psi, st.a[i], st.m[i], s.d));
      st.a[i] = 0.0;
      st.m[i] = jump_apply(s.jump, st.m[i], s.d);
    }
  }
  while (next_save < save_times.size()) snapshot(save_times[next_save++]);
  return rec;
}

// Pre-transformation form with exponential self-interaction: the memory of
// neuron i is recomputed as M0(i) e^{-Lambda t} + sum over own events of
// alpha e^{-Lambda (t - s)}, instead of being carried as a state variable.
inline SimulationRecord simulate_equivalent_hawkes(const ModelSpec& s, int N, double T, std::uint64_t seed,
                                                   const SimOptions& opt = {}) {
  if (s.d != 1 || s.jump.family != JumpFamily::translation || !age_independent(s.f))
    throw std::invalid_argument("simulate_equivalent_hawkes: needs d=1, translation jump and age-free intensity");
  detail::require_runnable(s, N, T, opt);
  SimulationRecord rec;
  rec.N = N;
  rec.T = T;
  rec.seed = seed;
  Rng rng(seed);
  std::vector<double> a0, hd;
  std::vector<Mem> m0;
  detail::draw_initial(s, N, rng, a0, m0, hd);
  EmpiricalBaseline H(s, hd, m0);
  InteractionTrace trace(s.h, opt.prune, false);
  std::vector<double> last_event(N, -1.0);
  std::vector<std::vector<double>> own(N);
  const double lam = s.Lambda[0], alpha = s.jump.alpha_vec[0];
  const double fmax = s.f.f_max, rate = N * fmax;
  const bool interacting = h_sup(s) > 0;
  double t = 0.0;
  for (;;) {
    double dt = rng.exponential(rate);
    auto i = static_cast<std::size_t>(rng.index(N));
    double u = rng.uniform();
    if (t + dt > T) break;
    t += dt;
    ++rec.n_candidates;
    double age = last_event[i] < 0 ? a0[i] + t : t - last_event[i];
    Mem m{};
    m[0] = m0[i][0] * std::exp(-lam * t);
    for (double sk : own[i]) m[0] += alpha * std::exp(-lam * (t - sk));
    trace.advance(t);
    double X = H(t) + trace.value() / N;
    if (u * fmax < f_of(s, age, m, X)) {
      if (rec.events.size() >= opt.event_cap) throw std::runtime_error("simulate_equivalent_hawkes: event cap reached");
      rec.events.push_back({t, static_cast<std::uint32_t>(i), age, m});
      if (interacting) trace.add(modulation_eval(s.h, s.psi, age, m, 1));
      own[i].push_back(t);
      last_event[i] = t;
    }
  }
  return rec;
}

struct WeightedPoints {
  std::vector<double> ages;
  std::vector<Mem> memories;
  std::vector<double> weights;
  int d = 1;
};

inline WeightedPoints empirical_measure(const SimulationRecord& rec, double t, int d) {
  for (const auto& sn : rec.snapshots) {
    if (std::abs(sn.t - t) <= 1e-12 * std::max(1.0, std::abs(t))) {
      WeightedPoints p;
      p.ages = sn.ages;
      p.memories = sn.memories;
      p.weights.assign(sn.ages.size(), 1.0 / sn.ages.size());
      p.d = d;
      return p;
    }
  }
  throw std::invalid_argument("empirical_measure: time was not saved");
}

struct CoupledRunSummary {
  int N = 0;
  double T = 0.0;
  std::uint64_t seed = 0;
  int n_replicas = 0;
  // Replica mean of sup_t (|psi(A^N) - psi(A)| + |M^N - M|_1), averaged over
  // the N exchangeable neurons within each replica.
  double sup_distance = 0.0;
  double sup_distance_se = 0.0;
  // Same quantity restricted to neuron 1.
  double sup_distance_neuron1 = 0.0;
  std::vector<double> per_replica;
};

// One coupled replica: the N-system and N limit processes driven by x share
// initial draws and the (clock, neuron, acceptance) candidate stream.
inline void coupled_replica(const ModelSpec& s, int N, double T, const XPath& x, std::uint64_t seed,
                            double& mean_sup, double& neuron1_sup) {
  Rng rng(seed);
  std::vector<double> a0, hd;
  std::vector<Mem> m0;
  detail::draw_initial(s, N, rng, a0, m0, hd);
  EmpiricalBaseline H(s, hd, m0);
  detail::LazyState sys, lim;
  sys.init(s, a0, m0);
  lim.init(s, a0, m0);
  InteractionTrace trace(s.h, 1e-12, false);
  std::vector<double> sup(N, 0.0);
  const bool interacting = h_sup(s) > 0;
  const double fmax = s.f.f_max, rate = N * fmax;
  double t = 0.0;
  for (;;) {
    double dt = rng.exponential(rate);
    auto i = static_cast<std::size_t>(rng.index(N));
    double u = rng.uniform();
    if (t + dt > T) break;
    t += dt;
    sys.bring(i, t);
    lim.bring(i, t);
    trace.advance(t);
    double XN = H(t) + trace.value() / N;
    bool acc_sys = u * fmax < f_of(s, sys.a[i], sys.m[i], XN);
    bool acc_lim = u * fmax < f_of(s, lim.a[i], lim.m[i], x(t));
    if (acc_sys) {
      if (interacting) trace.add(modulation_eval(s.h, s.psi, sys.a[i], sys.m[i], s.d));
      sys.a[i] = 0.0;
      sys.m[i] = jump_apply(s.jump, sys.m[i], s.d);
    }
    if (acc_lim) {
      lim.a[i] = 0.0;
      lim.m[i] = jump_apply(s.jump, lim.m[i], s.d);
    }
    if (acc_sys || acc_lim) {
      // Between events the distance is nonincreasing, so its supremum is
      // attained right after an event.
      double dist = std::abs(psi_eval(sys.a[i], s.psi) - psi_eval(lim.a[i], s.psi)) + l1_dist(sys.m[i], lim.m[i], s.d);
      sup[i] = std::max(sup[i], dist);
    }
  }
  mean_sup = pairwise_sum(sup) / N;
  neuron1_sup = sup[0];
}

inline CoupledRunSummary simulate_coupled_pair(const ModelSpec& s, int N, double T, const XPath& x,
                                               std::uint64_t seed, int n_replicas, const SimOptions& opt = {}) {
  detail::require_runnable(s, N, T, opt);
  if (x.T() < T * (1 - 1e-12)) throw std::invalid_argument("simulate_coupled_pair: x path shorter than T");
  if (n_replicas < 1) throw std::invalid_argument("simulate_coupled_pair: need at least one replica");
  std::vector<double> mean_sup(n_replicas), n1(n_replicas);
  parallel_for(n_replicas, [&](std::size_t r) {
    coupled_replica(s, N, T, x, derive_seed(seed, r), mean_sup[r], n1[r]);
  });
  CoupledRunSummary out;
  out.N = N;
  out.T = T;
  out.seed = seed;
  out.n_replicas = n_replicas;
  out.per_replica = mean_sup;
  out.sup_distance = pairwise_sum(mean_sup) / n_replicas;
  out.sup_distance_neuron1 = pairwise_sum(n1) / n_replicas;
  double v = 0.0;
  for (double m : mean_sup) v += (m - out.sup_distance) * (m - out.sup_distance);
  out.sup_distance_se = n_replicas > 1 ? std::sqrt(v / (n_replicas - 1) / n_replicas) : 0.0;
  return out;
}

}  // namespace almh
