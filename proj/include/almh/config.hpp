#pragma once

#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "almh/model.hpp"
#include "almh/presets.hpp"

namespace almh {

using json = nlohmann::json;

constexpr int kSchemaVersion = 1;

// Thrown for malformed or inconsistent configuration; maps to exit status 2.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace cfg {

inline void require_object(const json& j, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
}

inline void only_keys(const json& j, const std::string& where, std::initializer_list<const char*> keys) {
  require_object(j, where);
  std::set<std::string> ok(keys.begin(), keys.end());
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!ok.count(it.key())) throw ConfigError(where + ": unknown field '" + it.key() + "'");
}

template <class T>
T get(const json& j, const char* key, const std::string& where, T fallback) {
  auto it = j.find(key);
  if (it == j.end()) return fallback;
  try {
    return it->get<T>();
  } catch (const json::exception&) {
    throw ConfigError(where + "." + key + ": wrong type");
  }
}

template <class T>
T need(const json& j, const char* key, const std::string& where) {
  if (!j.contains(key)) throw ConfigError(where + ": missing field '" + key + "'");
  return get<T>(j, key, where, T{});
}

inline Mem get_vec(const json& j, const char* key, const std::string& where, int d, Mem fallback) {
  auto it = j.find(key);
  if (it == j.end()) return fallback;
  Mem m{};
  if (it->is_number()) {
    for (int k = 0; k < d; ++k) m[k] = it->get<double>();
    return m;
  }
  if (!it->is_array() || static_cast<int>(it->size()) != d)
    throw ConfigError(where + "." + key + ": expected a number or an array of length d");
  for (int k = 0; k < d; ++k) {
    if (!(*it)[k].is_number()) throw ConfigError(where + "." + key + ": non-numeric entry");
    m[k] = (*it)[k].get<double>();
  }
  return m;
}

inline json vec_json(const Mem& m, int d) {
  json a = json::array();
  for (int k = 0; k < d; ++k) a.push_back(m[k]);
  return a;
}

template <class E>
E enum_from(const std::string& v, const std::string& where, std::initializer_list<std::pair<const char*, E>> table) {
  for (const auto& [name, e] : table)
    if (v == name) return e;
  throw ConfigError(where + ": unknown value '" + v + "'");
}

template <class E>
std::string enum_name(E e, std::initializer_list<std::pair<const char*, E>> table) {
  for (const auto& [name, v] : table)
    if (v == e) return name;
  return "?";
}

inline const std::initializer_list<std::pair<const char*, IntensityFamily>> kIntensity = {
    {"constant", IntensityFamily::constant},
    {"sigmoid-affine", IntensityFamily::sigmoid_affine},
    {"exp-saturating", IntensityFamily::exp_saturating},
    {"stp-composite", IntensityFamily::stp_composite}};
inline const std::initializer_list<std::pair<const char*, KernelFamily>> kKernel = {
    {"exponential", KernelFamily::exponential},
    {"erlang", KernelFamily::erlang},
    {"finite-support", KernelFamily::finite_support}};
inline const std::initializer_list<std::pair<const char*, ModulationFamily>> kModulation = {
    {"none", ModulationFamily::none},
    {"linear-in-m", ModulationFamily::linear_in_m},
    {"custom-bounded", ModulationFamily::custom_bounded}};
inline const std::initializer_list<std::pair<const char*, JumpFamily>> kJump = {
    {"translation", JumpFamily::translation},
    {"affine-contraction", JumpFamily::affine_contraction},
    {"custom", JumpFamily::custom}};
inline const std::initializer_list<std::pair<const char*, HFamily>> kH = {
    {"zero", HFamily::zero},
    {"constant-random", HFamily::constant_random},
    {"exp-decay-from-m0", HFamily::exp_decay_from_m0}};
inline const std::initializer_list<std::pair<const char*, Coordinates>> kCoords = {
    {"identity", Coordinates::identity}, {"complement", Coordinates::complement}};

inline Law1D law_from(const json& j, const std::string& where) {
  require_object(j, where);
  std::string kind = need<std::string>(j, "law", where);
  Law1D l;
  if (kind == "exponential") {
    only_keys(j, where, {"law", "rate"});
    l = Law1D::exponential(need<double>(j, "rate", where));
  } else if (kind == "uniform") {
    only_keys(j, where, {"law", "lo", "hi"});
    l = Law1D::uniform(need<double>(j, "lo", where), need<double>(j, "hi", where));
  } else if (kind == "truncated-gaussian") {
    only_keys(j, where, {"law", "mean", "sd", "lo", "hi"});
    l = Law1D::truncated_gaussian(need<double>(j, "mean", where), need<double>(j, "sd", where),
                                  get<double>(j, "lo", where, -INFINITY), get<double>(j, "hi", where, INFINITY));
  } else {
    throw ConfigError(where + ": unknown law '" + kind + "'");
  }
  try {
    l.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(where + ": " + e.what());
  }
  return l;
}

inline json law_json(const Law1D& l) {
  switch (l.kind) {
    case LawKind::exponential: return {{"law", "exponential"}, {"rate", l.p1}};
    case LawKind::uniform: return {{"law", "uniform"}, {"lo", l.lo}, {"hi", l.hi}};
    case LawKind::truncated_gaussian: {
      json j = {{"law", "truncated-gaussian"}, {"mean", l.p1}, {"sd", l.p2}};
      if (std::isfinite(l.lo)) j["lo"] = l.lo;
      if (std::isfinite(l.hi)) j["hi"] = l.hi;
      return j;
    }
  }
  return {};
}

}  // namespace cfg

inline ModelSpec model_from_json(const json& j) {
  using namespace cfg;
  if (j.is_string()) {
    try {
      return preset(j.get<std::string>());
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("model: ") + e.what());
    }
  }
  only_keys(j, "model", {"name", "preset", "d", "Lambda", "psi", "intensity", "interaction", "jump", "init", "H",
                         "coordinates", "m_box"});
  ModelSpec s;
  if (j.contains("preset")) {
    // Start from a preset and override the listed blocks.
    try {
      s = preset(need<std::string>(j, "preset", "model"));
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("model: ") + e.what());
    }
  }
  s.name = get<std::string>(j, "name", "model", s.name);
  s.d = get<int>(j, "d", "model", s.d);
  if (s.d < 1 || s.d > kMaxDim) throw ConfigError("model.d: must be in [1, 4]");
  const int d = s.d;
  s.Lambda = get_vec(j, "Lambda", "model", d, s.Lambda);
  if (j.contains("psi")) {
    const json& p = j["psi"];
    only_keys(p, "model.psi", {"K", "kappa"});
    s.psi.K = get<double>(p, "K", "model.psi", s.psi.K);
    s.psi.kappa = get<double>(p, "kappa", "model.psi", s.psi.kappa);
  }
  if (j.contains("intensity")) {
    const json& f = j["intensity"];
    const std::string w = "model.intensity";
    only_keys(f, w, {"family", "f_min", "f_max", "c_a", "c_x", "c_m", "b", "shape_amp", "shape_scale", "alpha1",
                     "alpha2"});
    if (f.contains("family")) s.f.family = enum_from(need<std::string>(f, "family", w), w + ".family", kIntensity);
    s.f.f_min = get<double>(f, "f_min", w, s.f.f_min);
    s.f.f_max = get<double>(f, "f_max", w, s.f.f_max);
    s.f.c_a = get<double>(f, "c_a", w, s.f.c_a);
    s.f.c_x = get<double>(f, "c_x", w, s.f.c_x);
    s.f.c_m = get_vec(f, "c_m", w, d, s.f.c_m);
    s.f.b = get<double>(f, "b", w, s.f.b);
    s.f.shape_amp = get<double>(f, "shape_amp", w, s.f.shape_amp);
    s.f.shape_scale = get<double>(f, "shape_scale", w, s.f.shape_scale);
    s.f.alpha1 = get<double>(f, "alpha1", w, s.f.alpha1);
    s.f.alpha2 = get<double>(f, "alpha2", w, s.f.alpha2);
  }
  if (j.contains("interaction")) {
    const json& h = j["interaction"];
    const std::string w = "model.interaction";
    only_keys(h, w, {"kernel", "J", "tau", "erlang_shape", "modulation", "g0", "g1", "g_a", "g_m"});
    if (h.contains("kernel")) s.h.kernel = enum_from(need<std::string>(h, "kernel", w), w + ".kernel", kKernel);
    s.h.J = get<double>(h, "J", w, s.h.J);
    s.h.tau = get<double>(h, "tau", w, s.h.tau);
    s.h.erlang_shape = get<int>(h, "erlang_shape", w, s.h.erlang_shape);
    if (h.contains("modulation"))
      s.h.modulation = enum_from(need<std::string>(h, "modulation", w), w + ".modulation", kModulation);
    s.h.g0 = get<double>(h, "g0", w, s.h.g0);
    s.h.g1 = get<double>(h, "g1", w, s.h.g1);
    s.h.g_a = get<double>(h, "g_a", w, s.h.g_a);
    s.h.g_m = get_vec(h, "g_m", w, d, s.h.g_m);
  }
  if (j.contains("jump")) {
    const json& g = j["jump"];
    const std::string w = "model.jump";
    only_keys(g, w, {"family", "alpha", "offset", "scale", "shift"});
    if (g.contains("family")) s.jump.family = enum_from(need<std::string>(g, "family", w), w + ".family", kJump);
    if (s.jump.family == JumpFamily::translation) {
      s.jump.alpha_vec = get_vec(g, "alpha", w, d, s.jump.alpha_vec);
    } else if (s.jump.family == JumpFamily::affine_contraction) {
      s.jump.alpha = get<double>(g, "alpha", w, s.jump.alpha);
      if (g.contains("offset")) {
        s.jump.offset = get_vec(g, "offset", w, d, s.jump.offset);
        s.jump.offset_set = true;
      }
    } else {
      s.jump.custom_scale = get_vec(g, "scale", w, d, s.jump.custom_scale);
      s.jump.custom_shift = get_vec(g, "shift", w, d, s.jump.custom_shift);
    }
  }
  if (j.contains("init")) {
    const json& in = j["init"];
    const std::string w = "model.init";
    only_keys(in, w, {"age", "memory", "tabulated"});
    if (in.contains("tabulated")) {
      const json& t = in["tabulated"];
      const std::string wt = w + ".tabulated";
      only_keys(t, wt, {"a0", "da", "n_a", "m_lo", "dm", "n_m", "values"});
      TabulatedDensity tab;
      tab.d = d;
      if (d > 2) throw ConfigError(wt + ": tabulated laws support d <= 2");
      tab.a0 = get<double>(t, "a0", wt, 0.0);
      tab.da = need<double>(t, "da", wt);
      tab.n_a = need<int>(t, "n_a", wt);
      Mem lo = get_vec(t, "m_lo", wt, d, Mem{}), dm = get_vec(t, "dm", wt, d, Mem{1, 1, 1, 1});
      auto nm = need<std::vector<int>>(t, "n_m", wt);
      if (static_cast<int>(nm.size()) != d) throw ConfigError(wt + ".n_m: expected d entries");
      for (int k = 0; k < d; ++k) {
        tab.m_lo[k] = lo[k];
        tab.dm[k] = dm[k];
        tab.n_m[k] = nm[k];
      }
      tab.values = need<std::vector<double>>(t, "values", wt);
      if (tab.values.size() != tab.size()) throw ConfigError(wt + ".values: size does not match the grid");
      tab.normalize();
      s.init.tabulated = true;
      s.init.table = std::move(tab);
    } else {
      if (in.contains("age")) s.init.age = law_from(in["age"], w + ".age");
      if (in.contains("memory")) {
        const json& m = in["memory"];
        if (!m.is_array() || static_cast<int>(m.size()) != d) throw ConfigError(w + ".memory: expected d laws");
        s.init.mem.clear();
        for (int k = 0; k < d; ++k) s.init.mem.push_back(law_from(m[k], w + ".memory[" + std::to_string(k) + "]"));
      }
    }
  }
  if (j.contains("H")) {
    const json& h = j["H"];
    only_keys(h, "model.H", {"family", "mean", "sd", "scale"});
    if (h.contains("family")) s.H.family = enum_from(need<std::string>(h, "family", "model.H"), "model.H.family", kH);
    s.H.mean = get<double>(h, "mean", "model.H", s.H.mean);
    s.H.sd = get<double>(h, "sd", "model.H", s.H.sd);
    s.H.scale = get<double>(h, "scale", "model.H", s.H.scale);
  }
  if (j.contains("coordinates"))
    s.coords = enum_from(need<std::string>(j, "coordinates", "model"), "model.coordinates", kCoords);
  if (j.contains("m_box")) {
    const json& b = j["m_box"];
    only_keys(b, "model.m_box", {"lo", "hi"});
    s.has_m_box = true;
    s.m_lo = get_vec(b, "lo", "model.m_box", d, Mem{});
    s.m_hi = get_vec(b, "hi", "model.m_box", d, Mem{});
  }
  if (!s.init.tabulated && static_cast<int>(s.init.mem.size()) != d)
    throw ConfigError("model.init.memory: expected one law per memory dimension");
  try {
    validate_spec(s);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("model: ") + e.what());
  }
  return s;
}

inline json model_to_json(const ModelSpec& s) {
  using namespace cfg;
  const int d = s.d;
  json j;
  j["name"] = s.name;
  j["d"] = d;
  j["Lambda"] = vec_json(s.Lambda, d);
  j["psi"] = {{"K", s.psi.K}, {"kappa", s.psi.kappa}};
  j["intensity"] = {{"family", enum_name(s.f.family, kIntensity)},
                    {"f_min", s.f.f_min},
                    {"f_max", s.f.f_max},
                    {"c_a", s.f.c_a},
                    {"c_x", s.f.c_x},
                    {"c_m", vec_json(s.f.c_m, d)},
                    {"b", s.f.b},
                    {"shape_amp", s.f.shape_amp},
                    {"shape_scale", s.f.shape_scale},
                    {"alpha1", s.f.alpha1},
                    {"alpha2", s.f.alpha2}};
  j["interaction"] = {{"kernel", enum_name(s.h.kernel, kKernel)},
                      {"J", s.h.J},
                      {"tau", s.h.tau},
                      {"erlang_shape", s.h.erlang_shape},
                      {"modulation", enum_name(s.h.modulation, kModulation)},
                      {"g0", s.h.g0},
                      {"g1", s.h.g1},
                      {"g_a", s.h.g_a},
                      {"g_m", vec_json(s.h.g_m, d)}};
  json g = {{"family", enum_name(s.jump.family, kJump)}};
  switch (s.jump.family) {
    case JumpFamily::translation: g["alpha"] = vec_json(s.jump.alpha_vec, d); break;
    case JumpFamily::affine_contraction:
      g["alpha"] = s.jump.alpha;
      if (s.jump.offset_set) g["offset"] = vec_json(s.jump.offset, d);
      break;
    case JumpFamily::custom:
      if (s.jump.gamma) throw std::invalid_argument("model_to_json: function-valued jump maps are not serializable");
      g["scale"] = vec_json(s.jump.custom_scale, d);
      g["shift"] = vec_json(s.jump.custom_shift, d);
      break;
  }
  j["jump"] = g;
  if (s.init.tabulated) {
    const auto& t = s.init.table;
    json nm = json::array();
    Mem lo{}, dm{};
    for (int k = 0; k < d; ++k) {
      nm.push_back(t.n_m[k]);
      lo[k] = t.m_lo[k];
      dm[k] = t.dm[k];
    }
    j["init"] = {{"tabulated",
                  {{"a0", t.a0}, {"da", t.da}, {"n_a", t.n_a}, {"m_lo", vec_json(lo, d)}, {"dm", vec_json(dm, d)},
                   {"n_m", nm}, {"values", t.values}}}};
  } else {
    json mem = json::array();
    for (int k = 0; k < d; ++k) mem.push_back(law_json(s.init.mem[k]));
    j["init"] = {{"age", law_json(s.init.age)}, {"memory", mem}};
  }
  j["H"] = {{"family", enum_name(s.H.family, kH)}, {"mean", s.H.mean}, {"sd", s.H.sd}, {"scale", s.H.scale}};
  j["coordinates"] = enum_name(s.coords, kCoords);
  if (s.has_m_box) j["m_box"] = {{"lo", vec_json(s.m_lo, d)}, {"hi", vec_json(s.m_hi, d)}};
  return j;
}

inline json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::ios_base::failure("cannot open '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("'" + path + "': " + e.what());
  }
}

}  // namespace almh
