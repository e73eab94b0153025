#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "almh/model.hpp"
#include "almh/pde_solver.hpp"

namespace almh {

// Shipped models. All constants are documented defaults chosen for desk-scale runs.
//
// adaptation-1d: one adaptation variable, lowered by 0.5 at every event and relaxing
//   to 0 at unit rate; the rate rises with age and with m, and is excited by the
//   population through an exponential kernel.
// stp: short-term plasticity written in the used-resource coordinate m' = 1 - m, so the
//   resource relaxes to m' = 0 and an event maps m' to alpha + (1 - alpha) m'. Output
//   converts back through the complement flag.
// plain-hawkes: no jump, rate depends on the signal only (a nonlinear Hawkes process).
inline std::vector<std::string> preset_names() { return {"adaptation-1d", "stp", "plain-hawkes"}; }

inline ModelSpec preset(const std::string& name) {
  ModelSpec s;
  s.name = name;
  s.d = 1;
  if (name == "adaptation-1d") {
    s.Lambda[0] = 1.0;
    s.f.family = IntensityFamily::sigmoid_affine;
    s.f.f_min = 0.2;
    s.f.f_max = 2.0;
    s.f.b = -0.5;
    s.f.c_a = 1.5;
    s.f.c_m[0] = 1.0;
    s.f.c_x = 1.0;
    s.h.kernel = KernelFamily::exponential;
    s.h.J = 0.5;
    s.h.tau = 1.0;
    s.jump.family = JumpFamily::translation;
    s.jump.alpha_vec[0] = -0.5;
    s.init.age = Law1D::truncated_gaussian(1.0, 0.5, 0.0, 3.0);
    s.init.mem = {Law1D::truncated_gaussian(-0.5, 0.3, -2.3, 1.0)};
    s.has_m_box = true;
    s.m_lo[0] = -4.0;
    s.m_hi[0] = 1.0;
  } else if (name == "stp") {
    s.coords = Coordinates::complement;
    s.Lambda[0] = 1.0;
    s.f.family = IntensityFamily::stp_composite;
    s.f.f_min = 0.2;
    s.f.f_max = 2.0;
    s.f.c_x = 2.0;
    s.f.b = 0.0;
    s.f.shape_amp = 1.0;
    s.f.shape_scale = 1.0;
    s.h.kernel = KernelFamily::exponential;
    s.h.J = 1.0;
    s.h.tau = 0.5;
    s.h.modulation = ModulationFamily::linear_in_m;
    s.h.g0 = 1.0;
    s.h.g_m[0] = -1.0;  // efficacy proportional to the available resource 1 - m'
    s.jump.family = JumpFamily::affine_contraction;
    s.jump.alpha = 0.3;
    s.init.age = Law1D::uniform(0.0, 2.0);
    s.init.mem = {Law1D::truncated_gaussian(0.4, 0.1, 0.0, 1.0)};
    s.has_m_box = true;
    s.m_lo[0] = 0.0;
    s.m_hi[0] = 1.0;
  } else if (name == "plain-hawkes") {
    s.Lambda[0] = 1.0;
    s.f.family = IntensityFamily::sigmoid_affine;
    s.f.f_min = 0.2;
    s.f.f_max = 2.0;
    s.f.b = -0.5;
    s.f.c_x = 1.0;
    s.h.kernel = KernelFamily::exponential;
    s.h.J = 0.5;
    s.h.tau = 1.0;
    s.jump.family = JumpFamily::translation;
    s.jump.alpha_vec[0] = 0.0;
    s.init.age = Law1D::exponential(1.0);
    s.init.mem = {Law1D::uniform(-0.5, 0.5)};
    s.has_m_box = true;
    s.m_lo[0] = -1.0;
    s.m_hi[0] = 1.0;
  } else {
    throw std::invalid_argument("unknown preset '" + name + "'");
  }
  validate_spec(s);
  return s;
}

// Default PDE resolution for a preset at horizon T.
inline Grid default_grid(const ModelSpec& s, double T) {
  Grid g;
  g.T = T;
  g.dt = 0.02;
  g.n_m = {201, 41};
  g.has_box = s.has_m_box;
  g.m_lo = s.m_lo;
  g.m_hi = s.m_hi;
  return g;
}

}  // namespace almh
