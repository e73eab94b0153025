#pragma once

#include <chrono>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "almh/config.hpp"
#include "almh/io.hpp"
#include "almh/limit_sde.hpp"
#include "almh/metrics.hpp"
#include "almh/parallel.hpp"
#include "almh/particle_sim.hpp"
#include "almh/path_integral.hpp"
#include "almh/pde_solver.hpp"
#include "almh/presets.hpp"

namespace almh::cli {

inline constexpr const char* kVersion = "0.1.0";

enum Exit : int {
  kOk = 0,
  kInternal = 1,
  kValidation = 2,   // schema violation or failed model validation
  kStrict = 3,       // numerical warnings under --strict
  kMissingFile = 4,
  kNumerical = 5,    // downstream numerical or simulation failure
  kOutput = 6,       // artifacts could not be written
  kUsage = 64,
};

inline const std::vector<std::string>& commands() {
  static const std::vector<std::string> c = {"simulate", "limit", "pde", "pathint", "converge", "couple", "validate"};
  return c;
}

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<int> threads;
  bool strict = false;
};

struct RunConfig {
  std::string command;
  ModelSpec model;
  json model_json;
  json numerics = json::object();
  std::uint64_t seed = 0;
  std::string out = "out";
  int threads = 0;
  bool strict = false;
};

inline RunConfig parse_run_config(const json& j, const Overrides& ov = {}) {
  using namespace cfg;
  only_keys(j, "config", {"schema_version", "command", "model", "numerics", "seed", "output", "threads", "strict"});
  if (!j.contains("schema_version")) throw ConfigError("config: missing schema_version");
  if (get<int>(j, "schema_version", "config", 0) != kSchemaVersion)
    throw ConfigError("config: unsupported schema_version (expected " + std::to_string(kSchemaVersion) + ")");
  RunConfig rc;
  rc.command = need<std::string>(j, "command", "config");
  if (std::find(commands().begin(), commands().end(), rc.command) == commands().end())
    throw ConfigError("config: unknown command '" + rc.command + "'");
  if (!j.contains("model")) throw ConfigError("config: missing model");
  rc.model = model_from_json(j["model"]);
  rc.model_json = model_to_json(rc.model);
  if (j.contains("numerics")) {
    require_object(j["numerics"], "numerics");
    rc.numerics = j["numerics"];
  }
  rc.seed = get<std::uint64_t>(j, "seed", "config", 0);
  rc.out = get<std::string>(j, "output", "config", "out");
  rc.threads = get<int>(j, "threads", "config", 0);
  rc.strict = get<bool>(j, "strict", "config", false);
  if (ov.seed) rc.seed = *ov.seed;
  if (ov.out) rc.out = *ov.out;
  if (ov.threads) rc.threads = *ov.threads;
  if (ov.strict) rc.strict = true;
  if (rc.threads < 0) throw ConfigError("config.threads: must be >= 0");
  return rc;
}

// Artifacts are collected in memory and written by a single writer at the end of a run.
struct Artifacts {
  std::map<std::string, CsvTable> csv;
  std::map<std::string, json> js;
  std::map<std::string, std::vector<GridDensity>> grids;
  double grid_dt = 0.0;
  std::vector<std::string> warnings;
};

namespace detail {

inline std::vector<double> num_list(const json& n, const char* key, const std::string& w, std::vector<double> fb) {
  return cfg::get<std::vector<double>>(n, key, w, std::move(fb));
}

inline void append_memory(std::vector<double>& row, const Mem& m, int d, bool complement) {
  for (int k = 0; k < d; ++k) row.push_back(complement ? 1.0 - m[k] : m[k]);
}

inline Grid grid_from(const ModelSpec& s, const json& n, const std::string& w, double T) {
  Grid g = default_grid(s, T);
  g.dt = cfg::get<double>(n, "dt", w, g.dt);
  g.a_max = cfg::get<double>(n, "a_max", w, g.a_max);
  g.n_a = cfg::get<int>(n, "n_a", w, g.n_a);
  if (n.contains("n_m")) {
    auto nm = cfg::get<std::vector<int>>(n, "n_m", w, {});
    if (static_cast<int>(nm.size()) != s.d) throw ConfigError(w + ".n_m: expected d entries");
    for (int k = 0; k < s.d && k < 2; ++k) g.n_m[k] = nm[k];
  }
  if (!(g.dt > 0)) throw ConfigError(w + ".dt: must be positive");
  return g;
}

inline void add_x_path(Artifacts& art, const XPath& x) {
  CsvTable t{{"t", "x"}, {}};
  for (std::size_t n = 0; n < x.size(); ++n) t.rows.push_back({x.time(n), x.values[n]});
  art.csv["x_path.csv"] = std::move(t);
}

inline json table_json(const ConvergenceTable& tab) {
  json j;
  j["ladder"] = tab.ladder;
  j["means"] = tab.means;
  j["std_errors"] = tab.std_errors;
  j["monotone_nonincreasing"] = tab.monotone;
  if (tab.fit) {
    j["slope"] = tab.fit->slope;
    j["intercept"] = tab.fit->intercept;
    j["slope_ci"] = {tab.fit->ci_lo, tab.fit->ci_hi};
  } else {
    j["slope"] = nullptr;
  }
  return j;
}

inline CsvTable rows_csv(const ConvergenceTable& tab, const char* value_name) {
  CsvTable t{{"N", "replicate", "t", value_name}, {}};
  for (const auto& r : tab.rows) t.rows.push_back({double(r.N), double(r.replicate), r.t, r.w1});
  return t;
}

// PDE solution on the model's grid, used by converge, couple and pathint.
inline DensitySolution pde_for(const ModelSpec& s, const json& n, const std::string& w, double T,
                               std::vector<double> save) {
  Grid g = grid_from(s, n, w, T);
  g.save_times = std::move(save);
  return solve_alm_pde(s, g);
}

}  // namespace detail

inline void cmd_simulate(const RunConfig& rc, Artifacts& art) {
  const std::string w = "numerics";
  const json& n = rc.numerics;
  cfg::only_keys(n, w, {"N", "T", "save_times", "event_cap", "equivalent_hawkes", "cross_check"});
  int N = cfg::need<int>(n, "N", w);
  if (N < 1) throw ConfigError("numerics.N: must be >= 1");
  double T = cfg::need<double>(n, "T", w);
  if (!(T > 0)) throw ConfigError("numerics.T: must be positive");
  SimOptions opt;
  opt.event_cap = cfg::get<std::size_t>(n, "event_cap", w, opt.event_cap);
  opt.cross_check = cfg::get<bool>(n, "cross_check", w, false);
  auto save = detail::num_list(n, "save_times", w, {T});
  for (double t : save)
    if (t < 0 || t > T) throw ConfigError("numerics.save_times: outside [0, T]");
  const ModelSpec& s = rc.model;
  bool hawkes = cfg::get<bool>(n, "equivalent_hawkes", w, false);
  SimulationRecord rec = hawkes ? simulate_equivalent_hawkes(s, N, T, rc.seed, opt)
                                : simulate_network(s, N, T, rc.seed, save, opt);
  rec.spec_hash = fnv1a64(rc.model_json.dump());
  const bool comp = s.coords == Coordinates::complement;
  CsvTable ev{{"time", "neuron", "age_before"}, {}};
  for (auto& c : memory_columns(s.d)) ev.header.push_back(c + "_before");
  for (const auto& e : rec.events) {
    std::vector<double> row = {e.time, double(e.neuron), e.age_before};
    detail::append_memory(row, e.memory_before, s.d, comp);
    ev.rows.push_back(std::move(row));
  }
  art.csv["events.csv"] = std::move(ev);
  if (!hawkes) {
    CsvTable sn{{"t", "neuron", "a"}, {}};
    for (auto& c : memory_columns(s.d)) sn.header.push_back(c);
    sn.header.push_back("X");
    for (const auto& snap : rec.snapshots)
      for (int i = 0; i < N; ++i) {
        std::vector<double> row = {snap.t, double(i), snap.ages[i]};
        detail::append_memory(row, snap.memories[i], s.d, comp);
        row.push_back(snap.X);
        sn.rows.push_back(std::move(row));
      }
    art.csv["snapshots.csv"] = std::move(sn);
  }
  art.js["summary.json"] = {{"n_events", rec.events.size()},
                            {"n_candidates", rec.n_candidates},
                            {"x_bound_violations", rec.x_bound_violations},
                            {"max_trace_mismatch", rec.max_trace_mismatch},
                            {"spec_hash", hex64(rec.spec_hash)}};
  if (rec.x_bound_violations > 0) art.warnings.push_back("signal exceeded its a-priori bound");
}

inline void cmd_limit(const RunConfig& rc, Artifacts& art) {
  const std::string w = "numerics";
  const json& n = rc.numerics;
  cfg::only_keys(n, w, {"T", "dt", "n_particles", "tol", "max_iter", "save_times", "n_trajectories"});
  PicardOptions o;
  o.T = cfg::need<double>(n, "T", w);
  o.dt = cfg::get<double>(n, "dt", w, 0.0);
  o.n_particles = cfg::get<int>(n, "n_particles", w, o.n_particles);
  o.tol = cfg::get<double>(n, "tol", w, o.tol);
  o.max_iter = cfg::get<int>(n, "max_iter", w, o.max_iter);
  o.seed = rc.seed;
  if (!(o.T > 0) || o.n_particles < 1 || o.max_iter < 1) throw ConfigError("numerics: T, n_particles, max_iter must be positive");
  auto [x, rep] = solve_x_picard(rc.model, o);
  detail::add_x_path(art, x);
  art.js["picard.json"] = {{"iterations", rep.iterations},
                           {"deltas", rep.deltas},
                           {"final_delta", rep.final_delta},
                           {"converged", rep.converged},
                           {"n_particles", rep.n_particles}};
  if (!rep.converged) art.warnings.push_back("Picard iteration did not reach tolerance");
  int n_traj = cfg::get<int>(n, "n_trajectories", w, 0);
  auto save = detail::num_list(n, "save_times", w, {});
  if (n_traj > 0 && !save.empty()) {
    auto tr = simulate_limit_process(rc.model, x, n_traj, derive_seed(rc.seed, 0x71), save);
    const bool comp = rc.model.coords == Coordinates::complement;
    CsvTable t{{"t", "particle", "a"}, {}};
    for (auto& c : memory_columns(rc.model.d)) t.header.push_back(c);
    for (std::size_t k = 0; k < tr.save_times.size(); ++k)
      for (int p = 0; p < n_traj; ++p) {
        std::vector<double> row = {tr.save_times[k], double(p), tr.ages[k][p]};
        detail::append_memory(row, tr.memories[k][p], rc.model.d, comp);
        t.rows.push_back(std::move(row));
      }
    art.csv["trajectories.csv"] = std::move(t);
  }
}

inline void cmd_pde(const RunConfig& rc, Artifacts& art) {
  const std::string w = "numerics";
  const json& n = rc.numerics;
  cfg::only_keys(n, w, {"T", "dt", "a_max", "n_a", "n_m", "save_times", "weak_tests", "lm", "border"});
  const ModelSpec& s = rc.model;
  double T = cfg::need<double>(n, "T", w);
  if (!(T > 0)) throw ConfigError("numerics.T: must be positive");
  Grid g = detail::grid_from(s, n, w, T);
  g.save_times = detail::num_list(n, "save_times", w, {T});
  PdeOptions opt;
  bool lm = cfg::get<bool>(n, "lm", w, false);
  if (cfg::get<bool>(n, "weak_tests", w, !lm)) opt.weak_tests = default_test_functions(s, T);
  DensitySolution sol = lm ? solve_lm_pde(s, g, opt) : solve_alm_pde(s, g, opt);
  const bool comp = s.coords == Coordinates::complement;
  art.csv["density.csv"] = density_table(sol.snapshots, comp);
  art.grids["density.bin"] = sol.snapshots;
  art.grid_dt = sol.dt;
  detail::add_x_path(art, sol.x);
  CsvTable m{{"t", "mass", "flux_imbalance", "rate_flux_imbalance"}, {}};
  for (std::size_t k = 0; k < sol.mass_trace.size(); ++k) {
    double fi = k > 0 ? sol.flux_imbalance[k - 1] : 0.0, ri = k > 0 ? sol.rate_flux_imbalance[k - 1] : 0.0;
    m.rows.push_back({k * sol.dt, sol.mass_trace[k], fi, ri});
  }
  art.csv["mass.csv"] = std::move(m);
  if (cfg::get<bool>(n, "border", w, false)) {
    CsvTable b{{"t"}, {}};
    for (auto& c : memory_columns(s.d)) b.header.push_back(c);
    b.header.push_back("b");
    for (std::size_t k = 0; k < sol.border.size(); ++k)
      for (std::size_t c = 0; c < sol.axis.cells(); ++c) {
        std::vector<double> row = {(k + 1) * sol.dt};
        detail::append_memory(row, sol.axis.point(c), s.d, comp);
        row.push_back(sol.border[k][c]);
        b.rows.push_back(std::move(row));
      }
    art.csv["border.csv"] = std::move(b);
  }
  double max_flux = 0.0, max_dev = 0.0;
  for (double v : sol.flux_imbalance) max_flux = std::max(max_flux, v);
  for (double v : sol.mass_trace) max_dev = std::max(max_dev, std::abs(v - 1.0));
  json weak = json::object();
  for (std::size_t q = 0; q < sol.weak_residuals.size(); ++q) weak[sol.weak_names[q]] = sol.weak_residuals[q];
  art.js["summary.json"] = {{"solver", lm ? "lm" : "alm"},
                            {"dt", sol.dt},
                            {"a_max", sol.a_max},
                            {"age_layers", sol.n_layers},
                            {"max_mass_deviation", max_dev},
                            {"max_flux_imbalance", max_flux},
                            {"pullback_error", sol.pullback_error},
                            {"aged_out_mass", sol.aged_out_mass},
                            {"box_leak_mass", sol.box_leak_mass},
                            {"clipped_mass", sol.clipped_mass},
                            {"apriori_bound_ok", sol.apriori_bound_ok},
                            {"weak_residuals", weak},
                            {"warnings", sol.warnings}};
  for (const auto& wmsg : sol.warnings) art.warnings.push_back(wmsg);
}

inline void cmd_pathint(const RunConfig& rc, Artifacts& art) {
  const std::string w = "numerics";
  const json& n = rc.numerics;
  cfg::only_keys(n, w, {"t", "tail_epsilon", "K_max", "gl_order", "mc_samples", "a_max", "n_a", "n_m", "dt"});
  const ModelSpec& s = rc.model;
  double t = cfg::need<double>(n, "t", w);
  if (!(t > 0)) throw ConfigError("numerics.t: must be positive");
  PathIntegralConfig pc;
  pc.tail_epsilon = cfg::get<double>(n, "tail_epsilon", w, pc.tail_epsilon);
  pc.K_max = n.contains("K_max") ? cfg::get<int>(n, "K_max", w, 0) : jump_count_tail(t, s.f.f_max, pc.tail_epsilon);
  pc.gl_order = cfg::get<int>(n, "gl_order", w, pc.gl_order);
  pc.mc_samples = cfg::get<std::size_t>(n, "mc_samples", w, pc.mc_samples);
  pc.mc_seed = rc.seed;
  try {
    pc.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("numerics: ") + e.what());
  }
  Grid g = detail::grid_from(s, n, w, t);
  if (s.d > 2) throw ConfigError("pathint: grid output supports d <= 2");
  // The signal comes from the Volterra route of the PDE solver when h is not zero.
  XPath x;
  if (is_zero(s.h)) {
    auto n_t = static_cast<std::size_t>(std::llround(t / g.dt));
    std::vector<double> v(n_t + 1);
    for (std::size_t k = 0; k <= n_t; ++k) v[k] = Hbar(s, k * g.dt);
    x = XPath(g.dt, std::move(v));
  } else {
    x = detail::pde_for(s, n, w, t, {}).x;
  }
  double a_max = g.a_max > 0 ? g.a_max : std::min(-std::log(1e-6) / s.f.f_min, s.init.age_support_hi() + t);
  int n_a = g.n_a > 0 ? g.n_a : 50;
  GridDensity r;
  r.t = t;
  r.da = a_max / n_a;
  r.n_a = n_a;
  r.axis = almh::detail::make_axis(s, g);
  r.values.assign(static_cast<std::size_t>(n_a) * r.axis.cells(), 0.0);
  parallel_for(r.values.size(), [&](std::size_t idx) {
    std::size_t i = idx / r.axis.cells(), c = idx % r.axis.cells();
    r.values[idx] = density_at(t, r.age_center(static_cast<int>(i)), r.axis.point(c), x, pc, s).value;
  });
  double bound = poisson_upper_tail(s.f.f_max * t, pc.K_max);
  art.csv["density.csv"] = density_table({r}, s.coords == Coordinates::complement);
  art.js["summary.json"] = {{"K_max", pc.K_max}, {"truncation_bound", bound}, {"mass", mass(r)}};
  if (bound > pc.tail_epsilon) art.warnings.push_back("jump-count truncation exceeds tail_epsilon");
}

inline void cmd_converge(const RunConfig& rc, Artifacts& art) {
  const std::string w = "numerics";
  const json& n = rc.numerics;
  cfg::only_keys(n, w, {"N_ladder", "t_eval", "replicas", "n_directions", "density_samples", "dt", "a_max", "n_a", "n_m"});
  auto ladder = cfg::need<std::vector<int>>(n, "N_ladder", w);
  double t = cfg::need<double>(n, "t_eval", w);
  int reps = cfg::get<int>(n, "replicas", w, 10);
  for (int N : ladder)
    if (N < 1) throw ConfigError("numerics.N_ladder: entries must be >= 1");
  if (ladder.empty() || reps < 1 || !(t > 0)) throw ConfigError("numerics: need a ladder, replicas >= 1, t_eval > 0");
  SliceOptions so;
  so.n_directions = cfg::get<int>(n, "n_directions", w, so.n_directions);
  so.density_samples = cfg::get<std::size_t>(n, "density_samples", w, so.density_samples);
  auto sol = detail::pde_for(rc.model, n, w, t, {t});
  auto tab = convergence_study(rc.model, ladder, t, reps, rc.seed, sol.snapshots.back(), so);
  art.csv["convergence.csv"] = detail::rows_csv(tab, "w1");
  art.js["convergence.json"] = detail::table_json(tab);
  if (!tab.monotone) art.warnings.push_back("W1 means are not monotone in N");
}

inline void cmd_couple(const RunConfig& rc, Artifacts& art) {
  const std::string w = "numerics";
  const json& n = rc.numerics;
  cfg::only_keys(n, w, {"N_ladder", "T", "replicas", "x_source", "dt", "n_particles", "a_max", "n_a", "n_m"});
  auto ladder = cfg::need<std::vector<int>>(n, "N_ladder", w);
  double T = cfg::need<double>(n, "T", w);
  int reps = cfg::get<int>(n, "replicas", w, 20);
  for (int N : ladder)
    if (N < 1) throw ConfigError("numerics.N_ladder: entries must be >= 1");
  if (ladder.empty() || reps < 1 || !(T > 0)) throw ConfigError("numerics: need a ladder, replicas >= 1, T > 0");
  std::string src = cfg::get<std::string>(n, "x_source", w, "pde");
  XPath x;
  if (src == "pde") {
    x = detail::pde_for(rc.model, n, w, T, {}).x;
  } else if (src == "picard") {
    PicardOptions o;
    o.T = T;
    o.dt = cfg::get<double>(n, "dt", w, 0.0);
    o.n_particles = cfg::get<int>(n, "n_particles", w, o.n_particles);
    o.seed = derive_seed(rc.seed, 0x9C);
    x = solve_x_picard(rc.model, o).first;
  } else {
    throw ConfigError("numerics.x_source: expected 'pde' or 'picard'");
  }
  auto tab = coupling_decay_study(rc.model, ladder, T, reps, rc.seed, x);
  art.csv["coupling.csv"] = detail::rows_csv(tab, "sup_distance");
  art.js["coupling.json"] = detail::table_json(tab);
}

// Returns false when a check fails.
inline bool cmd_validate(const RunConfig& rc, Artifacts& art) {
  const json& n = rc.numerics;
  cfg::only_keys(n, "numerics", {"n_samples"});
  int ns = cfg::get<int>(n, "n_samples", "numerics", 10000);
  if (ns < 10) throw ConfigError("numerics.n_samples: must be >= 10");
  auto rep = validate_assumptions(rc.model, ns, rc.seed);
  json checks = json::array();
  for (const auto& c : rep.checks) checks.push_back({{"name", c.name}, {"pass", c.pass}, {"detail", c.detail}});
  art.js["validation.json"] = {{"all_pass", rep.all_pass()},
                               {"sup_f", rep.sup_f},
                               {"inf_f", rep.omega},
                               {"sup_h", rep.sup_h},
                               {"sup_Gamma", rep.sup_Gamma},
                               {"lip_f", rep.lip_f},
                               {"lip_h", rep.lip_h},
                               {"lip_gamma", rep.lip_gamma},
                               {"roundtrip_error", rep.roundtrip_error},
                               {"checks", checks}};
  return rep.all_pass();
}

struct RunResult {
  int status = kOk;
  std::string message;
  json manifest;
};

inline void write_artifacts(const RunConfig& rc, Artifacts& art, json& manifest) {
  namespace fs = std::filesystem;
  fs::create_directories(rc.out);
  json files = json::object();
  auto put = [&](const std::string& name) { files[name] = hex64(file_hash((fs::path(rc.out) / name).string())); };
  for (const auto& [name, t] : art.csv) {
    write_csv((fs::path(rc.out) / name).string(), t);
    put(name);
  }
  for (const auto& [name, g] : art.grids) {
    write_grid_dump((fs::path(rc.out) / name).string(), g, art.grid_dt);
    put(name);
  }
  for (const auto& [name, j] : art.js) {
    write_json((fs::path(rc.out) / name).string(), j);
    put(name);
  }
  manifest["artifacts"] = files;
  write_json((fs::path(rc.out) / "manifest.json").string(), manifest);
}

// Executes a parsed configuration. Exceptions from the numerics are mapped to exit codes.
inline RunResult execute(const RunConfig& rc) {
  RunResult res;
  Artifacts art;
  if (rc.threads > 0) set_threads(rc.threads);
  auto t0 = std::chrono::steady_clock::now();
  bool passed = true;
  try {
    if (rc.command == "simulate") cmd_simulate(rc, art);
    else if (rc.command == "limit") cmd_limit(rc, art);
    else if (rc.command == "pde") cmd_pde(rc, art);
    else if (rc.command == "pathint") cmd_pathint(rc, art);
    else if (rc.command == "converge") cmd_converge(rc, art);
    else if (rc.command == "couple") cmd_couple(rc, art);
    else passed = cmd_validate(rc, art);
  } catch (const ConfigError& e) {
    return {kValidation, e.what(), {}};
  } catch (const std::invalid_argument& e) {
    return {kValidation, e.what(), {}};
  } catch (const std::exception& e) {
    return {kNumerical, e.what(), {}};
  }
  double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  json effective = {{"schema_version", kSchemaVersion}, {"command", rc.command}, {"model", rc.model_json},
                    {"numerics", rc.numerics}, {"seed", rc.seed}};
  res.manifest = {{"tool", "almh"},
                  {"version", kVersion},
                  {"command", rc.command},
                  {"config_hash", hex64(fnv1a64(effective.dump()))},
                  {"config", effective},
                  {"seed", rc.seed},
                  {"threads", rc.threads},
                  {"wall_time_s", wall},
                  {"warnings", art.warnings}};
  try {
    write_artifacts(rc, art, res.manifest);
  } catch (const std::exception& e) {
    return {kOutput, e.what(), res.manifest};
  }
  if (!passed) {
    res.status = kValidation;
    res.message = "model validation failed";
  } else if (rc.strict && !art.warnings.empty()) {
    res.status = kStrict;
    res.message = "numerical warnings under --strict: " + art.warnings.front();
  }
  return res;
}

inline RunResult run_file(const std::string& path, const Overrides& ov, const std::string& expect_command = "") {
  json j;
  try {
    j = read_json_file(path);
  } catch (const std::ios_base::failure& e) {
    return {kMissingFile, e.what(), {}};
  } catch (const ConfigError& e) {
    return {kValidation, e.what(), {}};
  }
  RunConfig rc;
  try {
    rc = parse_run_config(j, ov);
  } catch (const ConfigError& e) {
    return {kValidation, e.what(), {}};
  }
  if (!expect_command.empty() && rc.command != expect_command)
    return {kValidation, "config command '" + rc.command + "' does not match '" + expect_command + "'", {}};
  return execute(rc);
}

// Entry point of the almh executable.
inline int run(int argc, char** argv) {
  CLI::App app{"almh: age-and-leaky-memory point-process networks and their mean-field limit"};
  app.require_subcommand(1);
  Overrides ov;
  std::uint64_t seed = 0;
  std::string out;
  int threads = 0;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--seed", seed, "override the master seed");
    sub->add_option("--out", out, "output directory");
    sub->add_option("--threads", threads, "worker threads (0: runtime default)")->check(CLI::NonNegativeNumber);
    sub->add_flag("--strict", ov.strict, "treat numerical warnings as errors (exit 3)");
  };
  std::string config;
  auto* run_cmd = app.add_subcommand("run", "run the command named in a config file");
  run_cmd->add_option("config", config, "config JSON")->required();
  add_common(run_cmd);
  std::map<std::string, CLI::App*> subs;
  std::string preset_name;
  for (const auto& c : commands()) {
    auto* sub = app.add_subcommand(c, "run '" + c + "' from a config or a preset");
    sub->add_option("--config", config, "config JSON");
    sub->add_option("--preset", preset_name, "preset model (uses default numerics)");
    add_common(sub);
    subs[c] = sub;
  }
  std::string show;
  auto* preset_cmd = app.add_subcommand("preset", "print a preset model as JSON");
  preset_cmd->add_option("name", show, "adaptation-1d | stp | plain-hawkes")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kUsage;
  }
  auto collect = [&](CLI::App* sub) {
    if (sub->count("--seed")) ov.seed = seed;
    if (sub->count("--out")) ov.out = out;
    if (sub->count("--threads")) ov.threads = threads;
  };
  RunResult res;
  if (preset_cmd->parsed()) {
    try {
      std::cout << model_to_json(preset(show)).dump(2) << '\n';
      return kOk;
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << '\n';
      return kValidation;
    }
  }
  if (run_cmd->parsed()) {
    collect(run_cmd);
    res = run_file(config, ov);
  } else {
    for (auto& [name, sub] : subs) {
      if (!sub->parsed()) continue;
      collect(sub);
      if (!config.empty()) {
        res = run_file(config, ov, name);
      } else if (!preset_name.empty()) {
        json j = {{"schema_version", kSchemaVersion}, {"command", name}, {"model", preset_name}};
        if (name != "validate") {
          std::cerr << "error: '" << name << "' needs --config for its numerics\n";
          return kValidation;
        }
        try {
          res = execute(parse_run_config(j, ov));
        } catch (const ConfigError& e) {
          res = {kValidation, e.what(), {}};
        }
      } else {
        std::cerr << "error: give --config or --preset\n";
        return kUsage;
      }
    }
  }
  if (res.status != kOk) std::cerr << "error: " << res.message << '\n';
  else if (!res.manifest.is_null()) std::cout << "wrote " << res.manifest["artifacts"].size() << " artifacts\n";
  return res.status;
}

}  // namespace almh::cli
