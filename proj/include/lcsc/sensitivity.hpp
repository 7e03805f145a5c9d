#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <utility>
#include <vector>

#include "lcsc/core.hpp"
#include "lcsc/integrator.hpp"
#include "lcsc/ode.hpp"
#include "lcsc/system.hpp"
#include "lcsc/trajectory.hpp"

namespace lcsc {

enum class CurveSide { Left, Right };

/// Linear map propagating a sensitivity solution across one event.
struct TransitionMatrix {
  enum class Role { Saltation, Jump, TimeReversedJump };

  Mat M;
  Role role = Role::Saltation;
  EventKind event_kind = EventKind::Landing;
  int event_id = 0;
  double time = 0.0;
};

namespace detail {

inline Mat transversal_saltation(const EventRecord& e) {
  const double gn = e.normal.dot(e.pre_velocity);
  if (std::abs(gn) < 1e-10) {
    throw NonTransversalError("saltation_matrix: vanishing normal velocity at crossing");
  }
  const int n = static_cast<int>(e.normal.size());
  return Mat::Identity(n, n) + (e.post_velocity - e.pre_velocity) * e.normal.transpose() / gn;
}

}  // namespace detail

/// Saltation matrix S with u+ = S u-: transversal crossings use the two-sided
/// velocity formula, a landing projects out the boundary normal, a liftoff is
/// the identity.
inline TransitionMatrix saltation_matrix(const EventRecord& e) {
  const int n = static_cast<int>(e.normal.size());
  TransitionMatrix t;
  t.role = TransitionMatrix::Role::Saltation;
  t.event_kind = e.kind;
  t.event_id = e.id;
  t.time = e.time;
  switch (e.kind) {
    case EventKind::Landing:
      t.M = Mat::Identity(n, n) - e.normal * e.normal.transpose();
      break;
    case EventKind::Liftoff:
      t.M = Mat::Identity(n, n);
      break;
    default:
      t.M = detail::transversal_saltation(e);
      break;
  }
  return t;
}

/// Time-reversed jump matrix with z- = J z+: a liftoff projects out the
/// normal, a landing is trivial, and transversal crossings use S^T (from
/// J^T S = I).
inline TransitionMatrix reversed_jump_matrix(const EventRecord& e) {
  const int n = static_cast<int>(e.normal.size());
  TransitionMatrix t;
  t.role = TransitionMatrix::Role::TimeReversedJump;
  t.event_kind = e.kind;
  t.event_id = e.id;
  t.time = e.time;
  switch (e.kind) {
    case EventKind::Liftoff:
      t.M = Mat::Identity(n, n) - e.normal * e.normal.transpose();
      break;
    case EventKind::Landing:
      t.M = Mat::Identity(n, n);
      break;
    default:
      t.M = detail::transversal_saltation(e).transpose();
      break;
  }
  return t;
}

/// One-sided limits and the transition applied at an event along a curve.
struct Discontinuity {
  double time = 0.0;
  Vec left;
  Vec right;
  Mat applied;
  EventKind kind = EventKind::Landing;
  int event_id = 0;
};

/// Vector curve along one cycle period: cubic-Hermite samples per
/// inter-event piece, with both one-sided limits recorded at events.
struct SensitivityCurve {
  double T0 = 0.0;
  struct Piece {
    double t0 = 0.0, t1 = 0.0;
    std::vector<double> t;
    std::vector<Vec> y;
    std::vector<Vec> yd;
  };
  std::vector<Piece> pieces;  // ascending, tiling the covered time span
  std::vector<Discontinuity> jumps;
  Vec final_value;  // solution at the walk's terminal endpoint

  Vec eval(double time, CurveSide side = CurveSide::Right) const {
    require(!pieces.empty(), "SensitivityCurve: empty curve");
    const double tol = 1e-12 * std::max(1.0, T0);
    double w = wrap_phase(time, T0);
    if (side == CurveSide::Left && w < tol) w = T0;  // left limit at the period origin
    const Piece* best = nullptr;
    if (side == CurveSide::Right) {
      for (const auto& p : pieces) {
        if (w < p.t1 - tol) {
          best = &p;
          break;
        }
      }
      if (best == nullptr) best = &pieces.back();
    } else {
      for (const auto& p : pieces) {
        if (p.t1 >= w - tol) {
          best = &p;
          break;
        }
      }
      if (best == nullptr) best = &pieces.back();
    }
    return eval_piece(*best, std::clamp(w, best->t0, best->t1));
  }

  static Vec eval_piece(const Piece& p, double w) {
    require(p.t.size() >= 2, "SensitivityCurve: degenerate piece");
    size_t lo = 0, hi = p.t.size() - 1;
    while (lo + 1 < hi) {
      const size_t mid = (lo + hi) / 2;
      if (p.t[mid] <= w) lo = mid;
      else hi = mid;
    }
    const double dt = p.t[lo + 1] - p.t[lo];
    if (dt <= 0.0) return p.y[lo];
    const double s = (w - p.t[lo]) / dt;
    const double h00 = (1 + 2 * s) * (1 - s) * (1 - s);
    const double h10 = s * (1 - s) * (1 - s);
    const double h01 = s * s * (3 - 2 * s);
    const double h11 = s * s * (s - 1);
    return h00 * p.y[lo] + (h10 * dt) * p.yd[lo] + h01 * p.y[lo + 1] + (h11 * dt) * p.yd[lo + 1];
  }
};

namespace detail {

struct Leg {
  double a = 0.0, b = 0.0;  // unwrapped cycle times, a < b
  size_t segment = 0;
};

/// Split [a, b] (unwrapped, b - a <= T0 + slack) into segment-aligned legs.
inline std::vector<Leg> cycle_legs(const LimitCycle& lc, double a, double b) {
  std::vector<Leg> legs;
  const double tol = 1e-12 * std::max(1.0, lc.T0);
  double t = a;
  while (t < b - tol) {
    const double w = wrap_phase(t, lc.T0);
    size_t si = lc.segments.size() - 1;
    for (size_t i = 0; i < lc.segments.size(); ++i) {
      if (w < lc.segments[i].t1 - tol) {
        si = i;
        break;
      }
    }
    const double base = t - w;
    const double end = std::min(b, base + lc.segments[si].t1);
    legs.push_back({t, std::max(end, t + tol), si});
    t = end;
  }
  return legs;
}

/// Event whose time matches the wrapped instant, if any (anchor matches 0).
inline const EventRecord* event_at(const LimitCycle& lc, double t_unwrapped) {
  const double tol = 1e-9 * std::max(1.0, lc.T0);
  const double w = wrap_phase(t_unwrapped, lc.T0);
  for (const auto& e : lc.events) {
    if (std::abs(e.time - w) <= tol || std::abs(e.time - (w - lc.T0)) <= tol) return &e;
  }
  if (std::abs(w - lc.T0) <= tol || w <= tol) return &lc.events.front();
  return nullptr;
}

struct WalkOptions {
  OdeOptions ode;
  double max_sample_dt = 0.0;  // 0 -> T0 / 800
};

using LinearRhs =
    std::function<Vec(double /*cycle time*/, const Mode&, const Vec& /*gamma*/, const Vec& /*y*/)>;
using EventMatrix = std::function<Mat(const EventRecord&)>;

/// Integrate a linear(ized) equation along the cycle, forward or backward,
/// applying transition matrices at events. `tau0` must coincide with an event
/// time (or 0); the event at the walk's starting endpoint is applied only
/// when `apply_at_start` (backward walks crossing their own start event).
inline SensitivityCurve walk_linear(const LimitCycle& lc, double tau0, double duration,
                                    bool forward, Vec y0, const LinearRhs& rhs,
                                    const EventMatrix& event_matrix, bool apply_at_start,
                                    const WalkOptions& wopts) {
  SensitivityCurve curve;
  curve.T0 = lc.T0;
  const double cap = wopts.max_sample_dt > 0.0 ? wopts.max_sample_dt : lc.T0 / 800.0;

  const double lo = forward ? tau0 : tau0 - duration;
  const double hi = forward ? tau0 + duration : tau0;
  auto legs = cycle_legs(lc, lo, hi);
  if (!forward) std::reverse(legs.begin(), legs.end());

  auto record_jump = [&](const EventRecord& ev, const Vec& pre, const Vec& post, const Mat& M) {
    Discontinuity d;
    d.time = ev.time;
    d.left = pre;
    d.right = post;
    d.applied = M;
    d.kind = ev.kind;
    d.event_id = ev.id;
    curve.jumps.push_back(std::move(d));
  };

  Vec y = std::move(y0);

  auto apply_event_at = [&](double t_unwrapped) {
    const EventRecord* ev = event_at(lc, t_unwrapped);
    if (ev == nullptr) return;
    const Mat M = event_matrix(*ev);
    const Vec y_new = M * y;
    if (forward) record_jump(*ev, y, y_new, M);
    else record_jump(*ev, y_new, y, M);
    y = y_new;
  };

  if (apply_at_start) apply_event_at(tau0);

  OdeOptions ode = wopts.ode;
  ode.h_max = std::min(ode.h_max, cap);

  for (const auto& leg : legs) {
    const auto& mode = lc.segments[leg.segment].mode;
    Rk45 rk(
        [&](double t, const Vec& yy, Vec& dy) {
          const Vec g = lc.state(t);
          dy = rhs(t, mode, g, yy);
        },
        ode);
    SensitivityCurve::Piece piece;
    double t = forward ? leg.a : leg.b;
    const double t_target = forward ? leg.b : leg.a;
    double h = ode.h_max;
    auto push_sample = [&](double tt, const Vec& yy) {
      piece.t.push_back(tt);
      piece.y.push_back(yy);
      const Vec g = lc.state(tt);
      piece.yd.push_back(rhs(tt, mode, g, yy));
    };
    push_sample(t, y);
    while (forward ? (t < t_target) : (t > t_target)) {
      rk.step(t, y, h, t_target);
      push_sample(t, y);
    }
    if (!forward) {
      std::reverse(piece.t.begin(), piece.t.end());
      std::reverse(piece.y.begin(), piece.y.end());
      std::reverse(piece.yd.begin(), piece.yd.end());
    }
    piece.t0 = leg.a;
    piece.t1 = leg.b;
    curve.pieces.push_back(std::move(piece));
    // Event at the far end of the leg (skip the walk's final endpoint so the
    // starting event of a closed loop is not applied twice).
    const double far = forward ? leg.b : leg.a;
    const bool is_last = (&leg == &legs.back());
    if (!is_last) apply_event_at(far);
    else if (forward) apply_event_at(far);  // closed forward loop ends on its start event
  }

  // Normalize piece coordinates into [0, T0].
  for (auto& p : curve.pieces) {
    const double w0 = wrap_phase(p.t0, lc.T0);
    const double shift = w0 - p.t0;
    if (shift != 0.0) {
      p.t0 += shift;
      p.t1 += shift;
      for (auto& tt : p.t) tt += shift;
    }
    if (p.t1 > lc.T0 + 1e-9) {
      // A wrapped leg would straddle the period end; split is avoided by
      // cycle_legs cutting at segment boundaries, which include T0.
      throw ContractViolation("walk_linear: piece crosses the period boundary");
    }
  }
  std::sort(curve.pieces.begin(), curve.pieces.end(),
            [](const auto& a, const auto& b) { return a.t0 < b.t0; });
  std::sort(curve.jumps.begin(), curve.jumps.end(),
            [](const auto& a, const auto& b) { return a.time < b.time; });
  curve.final_value = y;
  return curve;
}

}  // namespace detail

/// Forward variational solution u(t) over one period: du/dt = DF u with the
/// mode-appropriate Jacobian, u+ = S u- at events.
inline SensitivityCurve variational_forward(const LimitCycle& lc, const Vec& u0,
                                            const detail::WalkOptions& wopts = {}) {
  require(u0.size() == lc.system->dim, "variational_forward: dimension mismatch");
  return detail::walk_linear(
      lc, 0.0, lc.T0, true, u0,
      [&](double, const Mode& m, const Vec& g, const Vec& y) -> Vec {
        return mode_jacobian(*lc.system, m, g) * y;
      },
      [](const EventRecord& e) { return saltation_matrix(e).M; }, false, wopts);
}

/// Fundamental solution: all unit-basis variational solves plus the monodromy
/// matrix M = Phi(T0, 0).
struct FundamentalMatrix {
  std::vector<SensitivityCurve> columns;
  Mat monodromy;

  Mat eval(double t, CurveSide side = CurveSide::Right) const {
    const int n = static_cast<int>(columns.size());
    Mat out(n, n);
    for (int j = 0; j < n; ++j) out.col(j) = columns[j].eval(t, side);
    return out;
  }
};

inline FundamentalMatrix fundamental_matrix(const LimitCycle& lc,
                                            const detail::WalkOptions& wopts = {}) {
  const int n = lc.system->dim;
  FundamentalMatrix fm;
  fm.monodromy.resize(n, n);
  for (int j = 0; j < n; ++j) {
    Vec e = Vec::Zero(n);
    e(j) = 1.0;
    fm.columns.push_back(variational_forward(lc, e, wopts));
    fm.monodromy.col(j) = fm.columns.back().final_value;
  }
  return fm;
}

namespace detail {

/// Eigenvector of the eigenvalue nearest 1; complex pairs are rejected.
inline Vec unit_eigenvector(const Mat& M, double tol_unit) {
  Eigen::EigenSolver<Mat> es(M);
  require(es.info() == Eigen::Success, "eigensolver failed");
  int best = -1;
  double best_d = 1e300;
  for (int i = 0; i < M.rows(); ++i) {
    const double d = std::abs(es.eigenvalues()(i) - std::complex<double>(1.0, 0.0));
    if (d < best_d) {
      best_d = d;
      best = i;
    }
  }
  if (best < 0 || best_d > tol_unit) {
    throw MonodromyError("no eigenvalue within tolerance of 1");
  }
  if (std::abs(es.eigenvalues()(best).imag()) > 1e-8) {
    throw MonodromyError("unit eigenvalue is part of a complex pair");
  }
  const Eigen::VectorXcd vc = es.eigenvectors().col(best);
  Vec v = vc.real().norm() >= vc.imag().norm() ? Vec(vc.real()) : Vec(vc.imag());
  const double lambda = es.eigenvalues()(best).real();
  if ((M * v - lambda * v).norm() > 1e-6 * v.norm()) {
    throw MonodromyError("unit eigenvector is not real");
  }
  return v;
}

}  // namespace detail

/// Infinitesimal phase response curve z(t): backward adjoint integration with
/// the time-reversed jump matrices, normalized so F(gamma(t)) . z(t) = 1.
inline SensitivityCurve iprc(const LimitCycle& lc, const detail::WalkOptions& wopts = {}) {
  const int n = lc.system->dim;
  const auto adjoint_rhs = [&](double, const Mode& m, const Vec& g, const Vec& y) -> Vec {
    return -(mode_jacobian(*lc.system, m, g).transpose() * y);
  };
  const auto jump = [](const EventRecord& e) { return reversed_jump_matrix(e).M; };

  // Backward fundamental matrix over one period, as a flattened matrix ODE.
  detail::WalkOptions mopts = wopts;
  mopts.max_sample_dt = lc.T0;  // only the final value is needed
  Vec psi0 = Vec::Zero(n * n);
  for (int i = 0; i < n; ++i) psi0(i * n + i) = 1.0;
  auto mat_rhs = [&](double t, const Mode& m, const Vec& g, const Vec& y) -> Vec {
    const Mat A = mode_jacobian(*lc.system, m, g).transpose();
    Eigen::Map<const Mat> Y(y.data(), n, n);
    Vec out(n * n);
    Eigen::Map<Mat>(out.data(), n, n) = -(A * Y);
    return out;
  };
  auto mat_jump = [&](const EventRecord& e) {
    const Mat J = reversed_jump_matrix(e).M;
    Mat big = Mat::Zero(n * n, n * n);
    for (int c = 0; c < n; ++c) big.block(c * n, c * n, n, n) = J;
    return big;
  };
  auto psi_curve =
      detail::walk_linear(lc, lc.T0, lc.T0, false, psi0, mat_rhs, mat_jump, true, mopts);
  Eigen::Map<const Mat> psi_T(psi_curve.final_value.data(), n, n);

  const Vec v = detail::unit_eigenvector(psi_T, 1e-6);
  const Vec f0 = lc.velocity(0.0);
  const double fv = f0.dot(v);
  if (std::abs(fv) < 1e-12) throw MonodromyError("iprc: unit eigenvector orthogonal to the flow");
  const Vec z0 = v / fv;

  return detail::walk_linear(lc, lc.T0, lc.T0, false, z0, adjoint_rhs, jump, true, wopts);
}

/// Linear period shift under the system's stored perturbation direction:
/// T1 = -int z . dF/deps dt, trapezoid on the curve's samples, split at
/// events by construction.
inline double period_shift_T1(const LimitCycle& lc, const SensitivityCurve& z) {
  double total = 0.0;
  for (const auto& p : z.pieces) {
    const auto& seg_mode = lc.mode_at(0.5 * (p.t0 + p.t1));
    for (size_t i = 0; i + 1 < p.t.size(); ++i) {
      const double ta = p.t[i], tb = p.t[i + 1];
      const Vec pa = mode_param_derivative(*lc.system, seg_mode, lc.state(ta));
      const Vec pb = mode_param_derivative(*lc.system, seg_mode, lc.state(tb));
      total += 0.5 * (tb - ta) * (p.y[i].dot(pa) + p.y[i + 1].dot(pb));
    }
  }
  return -total;
}

/// A timing region along the cycle, delimited by two per-period events.
struct RegionWindow {
  EventSpec enter;
  EventSpec exit;
  std::string label;
};

struct LocalTimingResult {
  RegionWindow window;
  double t_in = 0.0;
  double t_out = 0.0;  // unwrapped; > t_in
  double T0_region = 0.0;
  SensitivityCurve eta;
  Vec eta_in;          // lTRC at the entry point (region side)
  Vec entry_shift;     // d x^in_eps / d eps, finite-differenced
  double T1_region = 0.0;
  double nu1 = 0.0;
};

namespace detail {

/// Exit-surface unit normal for the lTRC boundary condition. For a liftoff
/// exit the surface is the liftoff boundary within Sigma, with normal along
/// the tangential projection of grad(n . F_interior).
inline Vec exit_normal(const LimitCycle& lc, const EventRecord& exit_ev) {
  if (exit_ev.kind != EventKind::Liftoff) return exit_ev.normal;
  const auto& sys = *lc.system;
  const int region = exit_ev.post_mode.region;
  const Vec grad = sys.interior_jacobian(region, exit_ev.state).transpose() * exit_ev.normal;
  Vec w = grad - exit_ev.normal.dot(grad) * exit_ev.normal;
  const double wn = w.norm();
  require(wn > 1e-12, "ltrc: degenerate liftoff boundary normal");
  return w / wn;
}

}  // namespace detail

/// Local timing response curve of the region between the window's events.
/// With the perturbed cycle supplied, also evaluates the linear local timing
/// shift T1^j (entry-shift term plus the adjoint integral) and nu1^j.
inline LocalTimingResult ltrc(const LimitCycle& lc, const RegionWindow& window,
                              const LimitCycle* lc_eps = nullptr, double eps = 0.0,
                              const detail::WalkOptions& wopts = {}) {
  LocalTimingResult res;
  res.window = window;
  const EventRecord& enter_ev = lc.find_event(window.enter);
  const EventRecord& exit_ev = lc.find_event(window.exit);
  res.t_in = enter_ev.time;
  res.t_out = exit_ev.time;
  if (res.t_out <= res.t_in) res.t_out += lc.T0;
  res.T0_region = res.t_out - res.t_in;

  const Vec n_out = detail::exit_normal(lc, exit_ev);
  const Vec f_out = exit_ev.pre_velocity;
  const double nf = n_out.dot(f_out);
  if (std::abs(nf) < 1e-10) {
    throw NonTransversalError("ltrc: exit surface tangent to the flow");
  }
  const Vec eta_out = -n_out / nf;

  res.eta = detail::walk_linear(
      lc, res.t_out, res.T0_region, false, eta_out,
      [&](double, const Mode& m, const Vec& g, const Vec& y) -> Vec {
        return -(mode_jacobian(*lc.system, m, g).transpose() * y);
      },
      [](const EventRecord& e) { return reversed_jump_matrix(e).M; }, false, wopts);
  res.eta_in = res.eta.final_value;

  if (lc_eps != nullptr) {
    require(eps != 0.0, "ltrc: perturbed cycle supplied with eps = 0");
    const EventRecord& enter_eps = lc_eps->find_event(window.enter);
    res.entry_shift = (enter_eps.state - enter_ev.state) / eps;
    double integral = 0.0;
    for (const auto& p : res.eta.pieces) {
      const auto& seg_mode = lc.mode_at(0.5 * (p.t0 + p.t1));
      for (size_t i = 0; i + 1 < p.t.size(); ++i) {
        const Vec pa = mode_param_derivative(*lc.system, seg_mode, lc.state(p.t[i]));
        const Vec pb = mode_param_derivative(*lc.system, seg_mode, lc.state(p.t[i + 1]));
        integral += 0.5 * (p.t[i + 1] - p.t[i]) * (p.y[i].dot(pa) + p.y[i + 1].dot(pb));
      }
    }
    res.T1_region = res.eta_in.dot(res.entry_shift) + integral;
    res.nu1 = res.T1_region / res.T0_region;
  }
  return res;
}

/// nu1 for a region whose exit surface itself moves with the perturbation
/// (a liftoff line depending on the perturbed parameter): the remainder of
/// the global period shift after the directly computed regions.
inline double complement_nu1(double T1_total, double T1_known, double T0_region) {
  return (T1_total - T1_known) / T0_region;
}

/// Time-rescaling exponents for the shape response equation.
struct SrcSpec {
  std::optional<double> nu1_uniform;
  std::vector<std::pair<RegionWindow, double>> nu1_regions;  // piecewise
  EventSpec section;  // event whose crossing states define gamma1(0)
};

struct SrcResult {
  SensitivityCurve gamma1;
  double T1 = 0.0;
  std::vector<double> nu1;  // one entry (uniform) or one per region
  double section_time = 0.0;
  Vec p0;
  Vec p_eps;
  double eps = 0.0;
  double closure_defect = 0.0;
  bool periodic = true;
};

/// Infinitesimal shape response curve gamma1(t): the inhomogeneous
/// variational equation with rescaling term nu1 F and the perturbation term
/// dF/deps, saltation applied at events. The initial condition is the section
/// crossing displacement of the perturbed cycle.
inline SrcResult isrc(const LimitCycle& lc, const LimitCycle& lc_eps, double eps,
                      const SrcSpec& spec, const detail::WalkOptions& wopts = {}) {
  require(eps != 0.0, "isrc: eps must be nonzero");
  require_same_topology(lc, lc_eps);
  SrcResult res;
  res.eps = eps;

  const EventRecord& sec = lc.find_event(spec.section);
  const EventRecord& sec_eps = lc_eps.find_event(spec.section);
  res.section_time = sec.time;
  res.p0 = sec.state;
  res.p_eps = sec_eps.state;
  const Vec y0 = (sec_eps.state - sec.state) / eps;

  // nu1 as a function of cycle time.
  std::function<double(double)> nu_at;
  if (spec.nu1_uniform.has_value()) {
    const double nu = *spec.nu1_uniform;
    res.nu1 = {nu};
    nu_at = [nu](double) { return nu; };
  } else {
    require(!spec.nu1_regions.empty(), "isrc: no rescaling supplied");
    struct Span {
      double a, b, nu;
    };
    std::vector<Span> spans;
    for (const auto& [w, nu] : spec.nu1_regions) {
      double a = lc.find_event(w.enter).time;
      double b = lc.find_event(w.exit).time;
      if (b <= a) b += lc.T0;
      spans.push_back({a, b, nu});
      res.nu1.push_back(nu);
    }
    nu_at = [spans, T0 = lc.T0](double t) {
      const double w = wrap_phase(t, T0);
      for (const auto& s : spans) {
        if ((w >= s.a && w < s.b) || (w + T0 >= s.a && w + T0 < s.b)) return s.nu;
      }
      throw ContractViolation("isrc: rescaling regions do not cover the period");
    };
  }

  res.gamma1 = detail::walk_linear(
      lc, sec.time, lc.T0, true, y0,
      [&](double t, const Mode& m, const Vec& g, const Vec& y) -> Vec {
        return mode_jacobian(*lc.system, m, g) * y + nu_at(t) * mode_velocity(*lc.system, m, g) +
               mode_param_derivative(*lc.system, m, g);
      },
      [](const EventRecord& e) { return saltation_matrix(e).M; }, false, wopts);

  if (spec.nu1_uniform.has_value()) {
    res.T1 = *spec.nu1_uniform * lc.T0;
  } else {
    res.T1 = 0.0;
    for (const auto& [w, nu] : spec.nu1_regions) {
      double a = lc.find_event(w.enter).time;
      double b = lc.find_event(w.exit).time;
      if (b <= a) b += lc.T0;
      res.T1 += nu * (b - a);
    }
  }
  res.closure_defect = (res.gamma1.final_value - y0).norm();
  const double scale = std::max(1.0, y0.norm());
  res.periodic = res.closure_defect <= 1e-3 * scale;
  return res;
}

/// Discrete-L2 comparison of eps * gamma1 against the rescaled numerical
/// displacement Delta(t) = gamma_eps(tau(t)) - gamma0(t).
struct SrcComparison {
  double rel_l2 = 0.0;
  double norm_delta = 0.0;  // RMS of the numerical displacement
  double norm_model = 0.0;  // RMS of eps * gamma1
  double max_abs = 0.0;     // max pointwise deviation
};

inline SrcComparison compare_isrc(const LimitCycle& lc, const LimitCycle& lc_eps, double eps,
                                  const TimeRescaling& resc, const SensitivityCurve& gamma1,
                                  int n_samples = 1024) {
  SrcComparison out;
  double s_diff = 0.0, s_delta = 0.0, s_model = 0.0;
  for (int i = 0; i < n_samples; ++i) {
    const double t = (i + 0.5) * lc.T0 / n_samples;
    const Vec delta = lc_eps.state(resc.tau(t)) - lc.state(t);
    const Vec model = eps * gamma1.eval(t);
    s_diff += (model - delta).squaredNorm();
    s_delta += delta.squaredNorm();
    s_model += model.squaredNorm();
    out.max_abs = std::max(out.max_abs, (model - delta).norm());
  }
  out.norm_delta = std::sqrt(s_delta / n_samples);
  out.norm_model = std::sqrt(s_model / n_samples);
  out.rel_l2 = std::sqrt(s_diff) / std::max(std::sqrt(s_delta), 1e-300);
  return out;
}

/// Least-squares phase offset between two shape response curves of the same
/// problem: gamma1_b - gamma1_a = phi F0(gamma0), returning phi and the
/// maximum residual.
inline std::pair<double, double> isrc_offset_fit(const SensitivityCurve& a,
                                                 const SensitivityCurve& b,
                                                 const LimitCycle& lc, int n_samples = 400) {
  double num = 0.0, den = 0.0;
  std::vector<double> ts;
  for (int i = 0; i < n_samples; ++i) {
    const double t = (i + 0.5) * lc.T0 / n_samples;
    ts.push_back(t);
    const Vec d = b.eval(t) - a.eval(t);
    const Vec f = lc.velocity(t);
    num += f.dot(d);
    den += f.squaredNorm();
  }
  const double phi = num / den;
  double resid = 0.0;
  for (double t : ts) {
    const Vec d = b.eval(t) - a.eval(t);
    const Vec f = lc.velocity(t);
    resid = std::max(resid, (d - phi * f).norm());
  }
  return {phi, resid};
}

}  // namespace lcsc
