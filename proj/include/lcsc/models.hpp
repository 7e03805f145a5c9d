#pragma once

#include <cmath>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "lcsc/core.hpp"
#include "lcsc/system.hpp"

namespace lcsc {

/// A one-parameter family of systems around eps = 0. `base` carries the
/// parameter derivative of the perturbation; `at(eps)` builds the perturbed
/// system.
struct ParametricFamily {
  FilippovSystem base;
  std::function<FilippovSystem(double)> at;
};

/// One additive perturbation direction: parameter `param` moves by
/// weight * eps inside the masked regions (empty mask = everywhere).
struct PerturbationSpec {
  struct Term {
    std::string param;
    double weight = 1.0;
  };
  std::vector<Term> terms;
  std::vector<int> region_mask;

  bool applies_to(int region) const {
    if (region_mask.empty()) return true;
    return std::find(region_mask.begin(), region_mask.end(), region) != region_mask.end();
  }
  bool empty() const { return terms.empty(); }
};

// ---------------------------------------------------------------------------
// Planar square model: spiral source in [-1,1]^2 with four hard walls.
// ---------------------------------------------------------------------------

struct PlanarParams {
  double alpha = 0.2;  // expansion rate, 0 < alpha < 1
  double omega = 1.0;  // rotation rate
};

/// Optional local timing surfaces for piecewise experiments. Region 0 is the
/// wedge {y >= level_y} and, when the exit line is enabled, {x >= level_x};
/// region 1 is the rest of the square. The cycle enters region 0 upward
/// through the entry line and leaves through the exit line (or back down
/// through the entry line when the exit line is disabled).
struct PlanarTimingConfig {
  bool enabled = false;
  double level_y = 0.5;            // entry surface {y = level_y}, normal (0, 1)
  bool use_exit_line = false;
  double level_x = -0.5;           // exit surface {x = level_x}, normal (1, 0)
};

namespace detail {

inline InteriorField planar_field_for(double alpha, double omega,
                                      const PerturbationSpec* spec, int region) {
  InteriorField f;
  f.velocity = [alpha, omega](const Vec& x) {
    Vec v(2);
    v << alpha * x(0) - omega * x(1), omega * x(0) + alpha * x(1);
    return v;
  };
  f.jacobian = [alpha, omega](const Vec&) {
    Mat J(2, 2);
    J << alpha, -omega, omega, alpha;
    return J;
  };
  if (spec != nullptr && !spec->empty() && spec->applies_to(region)) {
    const auto terms = spec->terms;
    f.param_derivative = [terms](const Vec& x) {
      Vec p = Vec::Zero(2);
      for (const auto& t : terms) {
        if (t.param == "alpha") {
          p(0) += t.weight * x(0);
          p(1) += t.weight * x(1);
        } else if (t.param == "omega") {
          p(0) += t.weight * -x(1);
          p(1) += t.weight * x(0);
        } else {
          throw ContractViolation("planar model: unknown perturbation parameter '" + t.param + "'");
        }
      }
      return p;
    };
  }
  return f;
}

}  // namespace detail

inline FilippovSystem planar_system(const PlanarParams& p,
                                    const PlanarTimingConfig& timing = {},
                                    const PerturbationSpec* spec = nullptr,
                                    double eps = 0.0) {
  require(p.alpha > 0.0 && p.alpha < 1.0, "planar model: alpha must lie in (0, 1)");
  FilippovSystem sys;
  sys.dim = 2;
  sys.name = "planar";
  sys.params = {{"alpha", p.alpha}, {"omega", p.omega}};
  const int n_regions = timing.enabled ? 2 : 1;
  for (int r = 0; r < n_regions; ++r) {
    double a = p.alpha, w = p.omega;
    if (spec != nullptr && eps != 0.0 && spec->applies_to(r)) {
      for (const auto& t : spec->terms) {
        if (t.param == "alpha") a += t.weight * eps;
        else if (t.param == "omega") w += t.weight * eps;
        else throw ContractViolation("planar model: unknown parameter '" + t.param + "'");
      }
    }
    sys.regions.push_back(detail::planar_field_for(a, w, spec, r));
  }
  auto wall = [](int id, double nx, double ny) {
    HardBoundary b;
    b.id = id;
    b.normal = (Vec(2) << nx, ny).finished();
    b.offset = 1.0;
    return b;
  };
  sys.boundaries = {wall(0, 1, 0), wall(1, 0, 1), wall(2, -1, 0), wall(3, 0, -1)};
  if (timing.enabled) {
    TransversalSurface s_in;
    s_in.id = 0;
    s_in.normal = (Vec(2) << 0, 1).finished();
    s_in.offset = timing.level_y;
    s_in.role = TransversalSurface::Role::LocalTiming;
    sys.surfaces = {s_in};
    const double ly = timing.level_y;
    if (timing.use_exit_line) {
      TransversalSurface s_out;
      s_out.id = 1;
      s_out.normal = (Vec(2) << 1, 0).finished();
      s_out.offset = timing.level_x;
      s_out.role = TransversalSurface::Role::LocalTiming;
      sys.surfaces.push_back(s_out);
      const double lx = timing.level_x;
      sys.region_of = [ly, lx](const Vec& x) { return (x(1) >= ly && x(0) >= lx) ? 0 : 1; };
    } else {
      sys.region_of = [ly](const Vec& x) { return x(1) >= ly ? 0 : 1; };
    }
  }
  return sys;
}

inline ParametricFamily planar_family(const PlanarParams& p, const PerturbationSpec& spec,
                                      const PlanarTimingConfig& timing = {}) {
  ParametricFamily fam;
  fam.base = planar_system(p, timing, &spec, 0.0);
  fam.at = [p, spec, timing](double eps) { return planar_system(p, timing, &spec, eps); };
  return fam;
}

// ---------------------------------------------------------------------------
// Stick-slip oscillator: mass on a moving belt, hard boundary v = u_belt.
// ---------------------------------------------------------------------------

struct StickSlipParams {
  double m = 1.0;
  double k = 1.0;
  double c = 0.1;
  double delta = 0.5;
  double gamma_f = 1.0;
  double eta_f = 0.001;
  double u_belt = 0.5;
};

/// Kinetic friction force as a function of the relative velocity v_rel.
/// Continuous with the maximum static friction f(0) = 1; odd-symmetric
/// two-branch form away from zero.
inline double friction_force(double delta, double gamma_f, double eta_f, double v_rel) {
  if (v_rel == 0.0) return 1.0;
  if (v_rel < 0.0) {
    const double den = 1.0 - gamma_f * v_rel;
    if (std::abs(den) < 1e-12) throw DomainError("friction_force: pole in friction law");
    return (1.0 - delta) / den + delta + eta_f * v_rel * v_rel;
  }
  const double den = 1.0 + gamma_f * v_rel;
  if (std::abs(den) < 1e-12) throw DomainError("friction_force: pole in friction law");
  return -(1.0 - delta) / den - delta - eta_f * v_rel * v_rel;
}

/// d f / d v_rel on the branch containing v_rel (one-sided at zero).
inline double friction_force_slope(double delta, double gamma_f, double eta_f, double v_rel) {
  if (v_rel < 0.0) {
    const double den = 1.0 - gamma_f * v_rel;
    return (1.0 - delta) * gamma_f / (den * den) + 2.0 * eta_f * v_rel;
  }
  const double den = 1.0 + gamma_f * v_rel;
  return (1.0 - delta) * gamma_f / (den * den) - 2.0 * eta_f * v_rel;
}

namespace detail {

inline double friction_param_derivative(const StickSlipParams& p, double v_rel,
                                        const std::string& name) {
  const double sgn = v_rel > 0.0 ? -1.0 : 1.0;
  const double vr = v_rel > 0.0 ? -v_rel : v_rel;  // mirror onto the v_rel <= 0 branch
  const double den = 1.0 - p.gamma_f * vr;
  if (name == "delta") return sgn * (1.0 - 1.0 / den);
  if (name == "gamma_f") return sgn * (1.0 - p.delta) * vr / (den * den);
  if (name == "eta_f") return sgn * vr * vr;
  throw ContractViolation("stick-slip model: unknown friction parameter '" + name + "'");
}

inline InteriorField stick_slip_field_for(const StickSlipParams& p,
                                          const PerturbationSpec* spec) {
  InteriorField f;
  f.velocity = [p](const Vec& x) {
    const double fr = friction_force(p.delta, p.gamma_f, p.eta_f, x(1) - p.u_belt);
    Vec v(2);
    v << x(1), (-p.k * x(0) - p.c * x(1) + fr) / p.m;
    return v;
  };
  f.jacobian = [p](const Vec& x) {
    const double fs = friction_force_slope(p.delta, p.gamma_f, p.eta_f, x(1) - p.u_belt);
    Mat J(2, 2);
    J << 0.0, 1.0, -p.k / p.m, (-p.c + fs) / p.m;
    return J;
  };
  if (spec != nullptr && !spec->empty() && spec->applies_to(0)) {
    const auto terms = spec->terms;
    f.param_derivative = [p, terms](const Vec& x) {
      const double vr = x(1) - p.u_belt;
      Vec d = Vec::Zero(2);
      for (const auto& t : terms) {
        if (t.param == "c") {
          d(1) += t.weight * (-x(1) / p.m);
        } else if (t.param == "k") {
          d(1) += t.weight * (-x(0) / p.m);
        } else if (t.param == "m") {
          const double fr = friction_force(p.delta, p.gamma_f, p.eta_f, vr);
          d(1) += t.weight * (-(-p.k * x(0) - p.c * x(1) + fr) / (p.m * p.m));
        } else if (t.param == "delta" || t.param == "gamma_f" || t.param == "eta_f") {
          d(1) += t.weight * friction_param_derivative(p, vr, t.param) / p.m;
        } else if (t.param == "u_belt") {
          throw ContractViolation(
              "stick-slip model: perturbing u_belt moves the hard boundary and is unsupported");
        } else {
          throw ContractViolation("stick-slip model: unknown perturbation parameter '" +
                                  t.param + "'");
        }
      }
      return d;
    };
  }
  return f;
}

inline StickSlipParams perturbed_params(StickSlipParams p, const PerturbationSpec& spec,
                                        double eps) {
  for (const auto& t : spec.terms) {
    if (t.param == "c") p.c += t.weight * eps;
    else if (t.param == "k") p.k += t.weight * eps;
    else if (t.param == "m") p.m += t.weight * eps;
    else if (t.param == "delta") p.delta += t.weight * eps;
    else if (t.param == "gamma_f") p.gamma_f += t.weight * eps;
    else if (t.param == "eta_f") p.eta_f += t.weight * eps;
    else if (t.param == "u_belt")
      throw ContractViolation(
          "stick-slip model: perturbing u_belt moves the hard boundary and is unsupported");
    else
      throw ContractViolation("stick-slip model: unknown parameter '" + t.param + "'");
  }
  return p;
}

}  // namespace detail

inline FilippovSystem stick_slip_system(const StickSlipParams& p,
                                        const PerturbationSpec* spec = nullptr) {
  FilippovSystem sys;
  sys.dim = 2;
  sys.name = "stick-slip";
  sys.params = {{"m", p.m},           {"k", p.k},         {"c", p.c},
                {"delta", p.delta},   {"gamma_f", p.gamma_f}, {"eta_f", p.eta_f},
                {"u_belt", p.u_belt}};
  sys.regions.push_back(detail::stick_slip_field_for(p, spec));
  HardBoundary b;
  b.id = 0;
  b.normal = (Vec(2) << 0, 1).finished();
  b.offset = p.u_belt;
  sys.boundaries = {b};
  return sys;
}

inline ParametricFamily stick_slip_family(const StickSlipParams& p,
                                          const PerturbationSpec& spec) {
  ParametricFamily fam;
  fam.base = stick_slip_system(p, &spec);
  fam.at = [p, spec](double eps) {
    return stick_slip_system(detail::perturbed_params(p, spec, eps), &spec);
  };
  return fam;
}

// ---------------------------------------------------------------------------
// Two stick-slip oscillators coupled by a spring (no dashpot).
// ---------------------------------------------------------------------------

struct CoupledStickSlipParams {
  double m = 1.0;
  double k = 1.0;
  double delta = 0.0;
  double gamma_f = 3.0;
  double eta_f = 0.0;
  double u_belt = 0.295;
  double k3 = 0.0;  // stiffness of the coupling spring
};

inline StickSlipParams coupled_single_params(const CoupledStickSlipParams& p) {
  StickSlipParams s;
  s.m = p.m;
  s.k = p.k;
  s.c = 0.0;
  s.delta = p.delta;
  s.gamma_f = p.gamma_f;
  s.eta_f = p.eta_f;
  s.u_belt = p.u_belt;
  return s;
}

/// Joint system for state (x1, v1, x2, v2). The coupling acceleration
/// -(x_i - x_j) k3 / m enters only through the interior field, so it is
/// projected away exactly while oscillator i sticks.
inline FilippovSystem coupled_system(const CoupledStickSlipParams& p) {
  FilippovSystem sys;
  sys.dim = 4;
  sys.name = "coupled";
  sys.params = {{"m", p.m},       {"k", p.k},         {"delta", p.delta},
                {"gamma_f", p.gamma_f}, {"eta_f", p.eta_f}, {"u_belt", p.u_belt},
                {"k3", p.k3}};
  InteriorField f;
  f.velocity = [p](const Vec& x) {
    Vec v(4);
    const double f1 = friction_force(p.delta, p.gamma_f, p.eta_f, x(1) - p.u_belt);
    const double f2 = friction_force(p.delta, p.gamma_f, p.eta_f, x(3) - p.u_belt);
    v << x(1), (-p.k * x(0) + f1 - p.k3 * (x(0) - x(2))) / p.m,
        x(3), (-p.k * x(2) + f2 - p.k3 * (x(2) - x(0))) / p.m;
    return v;
  };
  f.jacobian = [p](const Vec& x) {
    const double s1 = friction_force_slope(p.delta, p.gamma_f, p.eta_f, x(1) - p.u_belt);
    const double s2 = friction_force_slope(p.delta, p.gamma_f, p.eta_f, x(3) - p.u_belt);
    Mat J = Mat::Zero(4, 4);
    J(0, 1) = 1.0;
    J(1, 0) = (-p.k - p.k3) / p.m;
    J(1, 1) = s1 / p.m;
    J(1, 2) = p.k3 / p.m;
    J(2, 3) = 1.0;
    J(3, 2) = (-p.k - p.k3) / p.m;
    J(3, 3) = s2 / p.m;
    J(3, 0) = p.k3 / p.m;
    return J;
  };
  sys.regions.push_back(std::move(f));
  HardBoundary b1, b2;
  b1.id = 0;
  b1.normal = (Vec(4) << 0, 1, 0, 0).finished();
  b1.offset = p.u_belt;
  b2.id = 1;
  b2.normal = (Vec(4) << 0, 0, 0, 1).finished();
  b2.offset = p.u_belt;
  sys.boundaries = {b1, b2};
  return sys;
}

/// Pairwise coupling map for the phase reduction: G(X_j, X_i), identically
/// zero while the receiving oscillator i is in its sliding mode.
struct CouplingSpec {
  double k3 = 0.0;
  double m = 1.0;

  Vec G(const Vec& xj, const Vec& xi, bool i_sliding) const {
    Vec g = Vec::Zero(2);
    if (!i_sliding) g(1) = -(xi(0) - xj(0)) / m;
    return g;
  }
};

/// Joint velocity of the coupled pair given each oscillator's sliding flag.
inline Vec coupled_field(const CoupledStickSlipParams& p, const Vec& X1, bool sliding1,
                         const Vec& X2, bool sliding2) {
  require(X1.size() == 2 && X2.size() == 2, "coupled_field: per-oscillator states must be 2-d");
  FilippovSystem sys = coupled_system(p);
  Vec x(4);
  x << X1(0), X1(1), X2(0), X2(1);
  Mode m;
  if (sliding1) m.add_sliding(0);
  if (sliding2) m.add_sliding(1);
  return mode_velocity(sys, m, x);
}

}  // namespace lcsc
