#pragma once

#include <cmath>
#include <memory>

#include "lcsc/integrator.hpp"
#include "lcsc/models.hpp"

namespace lcsc_test {

using namespace lcsc;

inline Vec v2(double a, double b) { return (Vec(2) << a, b).finished(); }

inline EventSpec planar_anchor() { return {EventKind::Liftoff, 0, 0}; }
inline EventSpec stick_slip_anchor() { return {EventKind::Liftoff, 0, 0}; }

/// Planar cycle at alpha = 0.2, anchored at the east-wall liftoff.
inline const LimitCycle& planar_cycle() {
  static const LimitCycle lc = find_limit_cycle(
      std::make_shared<FilippovSystem>(planar_system({0.2, 1.0})), v2(0.5, 0.0), planar_anchor());
  return lc;
}

/// Stick-slip cycle at the default parameters, anchored at liftoff.
inline const LimitCycle& stick_slip_cycle() {
  static const LimitCycle lc =
      find_limit_cycle(std::make_shared<FilippovSystem>(stick_slip_system({})),
                       v2(1.4127, 0.0829), stick_slip_anchor());
  return lc;
}

/// Undamped single oscillator at the coupled-model operating point.
inline const LimitCycle& coupled_single_cycle() {
  static const LimitCycle lc = [] {
    CoupledStickSlipParams cp;
    auto sys = std::make_shared<FilippovSystem>(stick_slip_system(coupled_single_params(cp)));
    return find_limit_cycle(sys, v2(1.2, 0.0), stick_slip_anchor());
  }();
  return lc;
}

/// Smooth radial oscillator r' = r(1 - r^2), theta' = 1, with a timing
/// surface on {x = 0} for anchoring. Isochrons are exactly radial.
inline FilippovSystem rotor_system() {
  FilippovSystem sys;
  sys.dim = 2;
  sys.name = "rotor";
  InteriorField f;
  f.velocity = [](const Vec& x) {
    const double r2 = x.squaredNorm();
    Vec v(2);
    v << x(0) * (1.0 - r2) - x(1), x(1) * (1.0 - r2) + x(0);
    return v;
  };
  f.jacobian = [](const Vec& x) {
    const double r2 = x.squaredNorm();
    Mat J(2, 2);
    J << 1.0 - r2 - 2.0 * x(0) * x(0), -1.0 - 2.0 * x(0) * x(1),
        1.0 - 2.0 * x(0) * x(1), 1.0 - r2 - 2.0 * x(1) * x(1);
    return J;
  };
  sys.regions.push_back(std::move(f));
  TransversalSurface s;
  s.id = 0;
  s.normal = (Vec(2) << 1, 0).finished();
  s.offset = 0.0;
  s.role = TransversalSurface::Role::LocalTiming;
  sys.surfaces = {s};
  return sys;
}

inline EventSpec rotor_anchor() { return {EventKind::TimingSurfaceCrossing, 0, +1}; }

inline const LimitCycle& rotor_cycle() {
  static const LimitCycle lc = find_limit_cycle(
      std::make_shared<FilippovSystem>(rotor_system()), v2(0.3, -0.8), rotor_anchor());
  return lc;
}

/// Two-zone rotor: unit-circle cycle with rotation rate 1 above y = 0 and
/// 1.5 below, discontinuous across the switching line. Period 5 pi / 3.
inline FilippovSystem two_zone_rotor_system() {
  FilippovSystem sys;
  sys.dim = 2;
  sys.name = "two-zone-rotor";
  auto make_field = [](double w) {
    InteriorField f;
    f.velocity = [w](const Vec& x) {
      const double r2 = x.squaredNorm();
      Vec v(2);
      v << x(0) * (1.0 - r2) - w * x(1), x(1) * (1.0 - r2) + w * x(0);
      return v;
    };
    f.jacobian = [w](const Vec& x) {
      const double r2 = x.squaredNorm();
      Mat J(2, 2);
      J << 1.0 - r2 - 2.0 * x(0) * x(0), -w - 2.0 * x(0) * x(1),
          w - 2.0 * x(0) * x(1), 1.0 - r2 - 2.0 * x(1) * x(1);
      return J;
    };
    return f;
  };
  sys.regions.push_back(make_field(1.0));  // region 0: y >= 0
  sys.regions.push_back(make_field(1.5));  // region 1: y < 0
  TransversalSurface s;
  s.id = 0;
  s.normal = (Vec(2) << 0, 1).finished();
  s.offset = 0.0;
  s.role = TransversalSurface::Role::Switching;
  sys.surfaces = {s};
  sys.region_of = [](const Vec& x) { return x(1) >= 0.0 ? 0 : 1; };
  return sys;
}

inline EventSpec two_zone_anchor() { return {EventKind::TransversalCrossing, 0, +1}; }

inline const LimitCycle& two_zone_rotor_cycle() {
  static const LimitCycle lc =
      find_limit_cycle(std::make_shared<FilippovSystem>(two_zone_rotor_system()), v2(0.9, -0.1),
                       two_zone_anchor());
  return lc;
}

}  // namespace lcsc_test
