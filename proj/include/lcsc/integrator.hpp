#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <utility>
#include <vector>

#include "lcsc/core.hpp"
#include "lcsc/models.hpp"
#include "lcsc/ode.hpp"
#include "lcsc/system.hpp"
#include "lcsc/trajectory.hpp"

namespace lcsc {

struct IntegrateOptions {
  OdeOptions ode;                 // rtol 1e-10 / atol 1e-12 defaults
  double event_time_tol = 1e-12;  // Brent tolerance on event times
  double grazing_tol = 1e-8;      // |n.F| below this at a landing -> grazing
  double drift_tol = 1e-7;        // tolerated boundary violation between events
  bool store_dense = true;
  double sample_dt = 0.0;         // > 0: record sparse samples at this cadence
  int scan_points = 8;            // event-bracketing checkpoints per step
  // Called after each event is recorded; return true to stop integrating.
  std::function<bool(const EventRecord&)> on_event;
};

namespace detail {

struct Watch {
  enum class Type { Landing, Liftoff, Surface } type;
  int id;
};

inline double watch_value(const FilippovSystem& sys, const Mode& mode, const Watch& w,
                          const Vec& x) {
  switch (w.type) {
    case Watch::Type::Landing:
      return sys.boundary(w.id).level(x);
    case Watch::Type::Liftoff:
      return sys.boundary(w.id).normal.dot(sys.interior_velocity(mode.region, x));
    case Watch::Type::Surface:
      return sys.surface(w.id).level(x);
  }
  return 0.0;
}

inline std::vector<Watch> build_watches(const FilippovSystem& sys, const Mode& mode) {
  std::vector<Watch> ws;
  for (const auto& b : sys.boundaries) {
    if (mode.sliding_on(b.id)) ws.push_back({Watch::Type::Liftoff, b.id});
    else ws.push_back({Watch::Type::Landing, b.id});
  }
  for (const auto& s : sys.surfaces) ws.push_back({Watch::Type::Surface, s.id});
  return ws;
}

}  // namespace detail

/// Event-driven integration of a Filippov system through interior, landing,
/// sliding and liftoff phases over [t0, t1] (t1 > t0).
inline Trajectory integrate(std::shared_ptr<const FilippovSystem> sys_ptr, const Vec& x0,
                            const Mode& mode0, double t0, double t1,
                            const IntegrateOptions& opts = {}) {
  const FilippovSystem& sys = *sys_ptr;
  require(x0.size() == sys.dim, "integrate: state dimension mismatch");
  require(t1 > t0, "integrate: empty time span");
  for (const auto& b : sys.boundaries) {
    const double h = b.level(x0);
    if (mode0.sliding_on(b.id)) {
      if (std::abs(h) > 1e2 * sys.event_tol)
        throw ContractViolation("integrate: sliding mode without boundary contact");
    } else if (h > 1e2 * sys.event_tol) {
      throw DriftError("integrate: initial state outside the closed domain");
    }
  }

  Trajectory traj;
  traj.system = sys_ptr;
  traj.t_begin = t0;
  traj.t_end = t1;

  double t = t0;
  Vec x = x0;
  Mode mode = mode0;

  // Resolve the region from a point nudged along the flow, so that states
  // sitting exactly on a switching or timing surface classify by where the
  // trajectory is headed.
  auto nudged_region = [&sys](const Mode& m, const Vec& xs) {
    Mode probe = m;
    probe.region = sys.region_at(xs);
    const Vec v = mode_velocity(sys, probe, xs);
    const double vn = v.norm();
    if (vn == 0.0) return probe.region;
    return sys.region_at(xs + (1e-9 * (1.0 + xs.norm()) / vn) * v);
  };
  mode.region = nudged_region(mode, x);
  double h_hint = opts.ode.h_init;
  double next_sample = opts.sample_dt > 0.0 ? t0 : std::numeric_limits<double>::infinity();

  auto begin_segment = [&](double ts) {
    TrajectorySegment seg;
    seg.mode = mode;
    seg.t0 = ts;
    seg.t1 = ts;
    traj.segments.push_back(std::move(seg));
  };
  begin_segment(t);

  auto record_sample = [&](const StepDense& d, double t_hi) {
    while (next_sample <= t_hi + 1e-14) {
      const double ts = std::min(next_sample, t_hi);
      traj.samples.emplace_back(ts, d.eval(ts));
      next_sample += opts.sample_dt;
    }
  };

  Rk45 stepper([&](double, const Vec& y, Vec& dy) { dy = mode_velocity(sys, mode, y); },
               opts.ode);

  // Watches that just fired; their roots within round-off of the event time
  // must not re-trigger, while other watches may fire at the same instant
  // (simultaneous events of independent boundaries).
  std::vector<detail::Watch> recent_watches;
  double recent_time = -std::numeric_limits<double>::infinity();
  auto note_fired = [&](detail::Watch w, double te) {
    const double guard = 1e-11 * std::max(1.0, std::abs(te));
    if (std::abs(te - recent_time) > guard) recent_watches.clear();
    recent_time = te;
    recent_watches.push_back(w);
  };
  auto just_fired = [&](const detail::Watch& w, double root) {
    const double guard = 1e-11 * std::max(1.0, std::abs(root));
    if (root - recent_time > guard) return false;
    for (const auto& r : recent_watches) {
      if (r.type == w.type && r.id == w.id) return true;
    }
    return false;
  };
  // A start exactly on a surface or boundary counts as its own event having
  // just fired, so it is not re-detected at zero age.
  for (const auto& w : detail::build_watches(sys, mode)) {
    if (w.type == detail::Watch::Type::Liftoff) continue;
    if (std::abs(detail::watch_value(sys, mode, w, x)) <= 1e2 * sys.event_tol) {
      note_fired(w, t0);
    }
  }

  bool stop_requested = false;
  while (t < t1 && !stop_requested) {
    // Boundary states needing an instant transition: a touched non-active
    // boundary with outward interior flow captures the trajectory, and an
    // active boundary whose indicator already turned negative releases it.
    bool transitioned = false;
    for (const auto& b : sys.boundaries) {
      const bool active = mode.sliding_on(b.id);
      EventRecord ev;
      if (!active && std::abs(b.level(x)) <= 1e2 * sys.event_tol &&
          b.normal.dot(sys.interior_velocity(mode.region, x)) > opts.grazing_tol) {
        ev.kind = EventKind::Landing;
        ev.direction = 1;
        ev.pre_velocity = mode_velocity(sys, mode, x);
        mode.add_sliding(b.id);
        x = project_onto_boundaries(sys, mode.sliding, x);
      } else if (active && b.normal.dot(sys.interior_velocity(mode.region, x)) <= 0.0) {
        ev.kind = EventKind::Liftoff;
        ev.direction = -1;
        ev.pre_velocity = mode_velocity(sys, mode, x);
        mode.remove_sliding(b.id);
        mode.region = nudged_region(mode, x);
      } else {
        continue;
      }
      ev.time = t;
      ev.id = b.id;
      ev.normal = b.normal;
      ev.post_velocity = mode_velocity(sys, mode, x);
      ev.state = x;
      ev.post_mode = mode;
      note_fired({ev.kind == EventKind::Landing ? detail::Watch::Type::Landing
                                                : detail::Watch::Type::Liftoff,
                  b.id},
                 t);
      traj.events.push_back(std::move(ev));
      stepper.reset();
      begin_segment(t);
      if (opts.on_event && opts.on_event(traj.events.back())) stop_requested = true;
      transitioned = true;
      break;
    }
    if (transitioned || stop_requested) continue;

    StepDense step;
    try {
      step = stepper.step(t, x, h_hint, t1);
    } catch (const IntegrationError& err) {
      // Step-size underflow while an inactive boundary is within event reach
      // indicates a near-tangential contact.
      for (const auto& b : sys.boundaries) {
        if (!mode.sliding_on(b.id) && std::abs(b.level(x)) < 1e3 * sys.event_tol) {
          throw GrazingError(std::string(err.what()) + " near boundary " + std::to_string(b.id));
        }
      }
      throw;
    }

    // Scan the accepted span for the earliest event crossing.
    const auto watches = detail::build_watches(sys, mode);
    const int m = std::max(2, opts.scan_points);
    double te = std::numeric_limits<double>::infinity();
    std::optional<detail::Watch> hit;
    for (const auto& w : watches) {
      double t_prev = step.t0;
      double v_prev = detail::watch_value(sys, mode, w, step.x0);
      for (int i = 1; i <= m; ++i) {
        const double ti = (i == m) ? step.t1() : step.t0 + step.h * i / m;
        const Vec xi = (i == m) ? x : step.eval(ti);
        const double vi = detail::watch_value(sys, mode, w, xi);
        const bool want =
            (w.type == detail::Watch::Type::Landing && v_prev < 0.0 && vi >= 0.0) ||
            (w.type == detail::Watch::Type::Liftoff && v_prev >= 0.0 && vi < 0.0) ||
            (w.type == detail::Watch::Type::Surface && v_prev != 0.0 && vi != 0.0 &&
             (v_prev > 0.0) != (vi > 0.0));
        if (want) {
          const auto f = [&](double tt) { return detail::watch_value(sys, mode, w, step.eval(tt)); };
          double root = (vi == 0.0) ? ti : brent(f, t_prev, ti, v_prev, vi, opts.event_time_tol);
          root = std::max(root, step.t0 + 4.0 * std::numeric_limits<double>::epsilon() *
                                              std::max(1.0, std::abs(step.t0)));
          if (!just_fired(w, root) && root < te) {
            te = root;
            hit = w;
          }
          break;  // earliest crossing of this watch found
        }
        t_prev = ti;
        v_prev = vi;
      }
    }

    if (hit.has_value() && te <= step.t1()) {
      Vec xe = step.eval(te);
      EventRecord ev;
      ev.time = te;
      const Mode mode_before = mode;
      switch (hit->type) {
        case detail::Watch::Type::Landing: {
          const auto& bd = sys.boundary(hit->id);
          const double g = bd.normal.dot(sys.interior_velocity(mode.region, xe));
          if (std::abs(g) < opts.grazing_tol) {
            throw GrazingError("integrate: grazing contact with boundary " +
                               std::to_string(hit->id) + " at t=" + std::to_string(te));
          }
          ev.kind = EventKind::Landing;
          ev.id = hit->id;
          ev.normal = bd.normal;
          ev.pre_velocity = mode_velocity(sys, mode, xe);
          mode.add_sliding(hit->id);
          xe = project_onto_boundaries(sys, mode.sliding, xe);
          ev.post_velocity = mode_velocity(sys, mode, xe);
          ev.direction = 1;
          break;
        }
        case detail::Watch::Type::Liftoff: {
          const auto& bd = sys.boundary(hit->id);
          if (nondegeneracy_at_liftoff(sys, hit->id, xe) >= 0.0) {
            throw IntegrationError("integrate: degenerate liftoff from boundary " +
                                   std::to_string(hit->id));
          }
          ev.kind = EventKind::Liftoff;
          ev.id = hit->id;
          ev.normal = bd.normal;
          ev.pre_velocity = mode_velocity(sys, mode, xe);
          mode.remove_sliding(hit->id);
          mode.region = nudged_region(mode, xe);
          ev.post_velocity = mode_velocity(sys, mode, xe);
          ev.direction = -1;
          break;
        }
        case detail::Watch::Type::Surface: {
          const auto& sf = sys.surface(hit->id);
          ev.kind = sf.role == TransversalSurface::Role::Switching
                        ? EventKind::TransversalCrossing
                        : EventKind::TimingSurfaceCrossing;
          ev.id = hit->id;
          ev.normal = sf.normal;
          ev.pre_velocity = mode_velocity(sys, mode, xe);
          ev.direction = sf.normal.dot(ev.pre_velocity) >= 0.0 ? 1 : -1;
          // The region may change across the surface, also while sliding.
          mode.region = sys.region_at(xe + 1e-9 * (1.0 + xe.norm()) * ev.pre_velocity.normalized());
          ev.post_velocity = mode_velocity(sys, mode, xe);
          break;
        }
      }
      ev.state = xe;
      ev.post_mode = mode;
      note_fired(*hit, te);

      if (opts.store_dense) {
        auto& seg = traj.segments.back();
        seg.steps.push_back(step);
        seg.t1 = te;
      }
      if (opts.sample_dt > 0.0) record_sample(step, te);
      t = te;
      x = xe;
      stepper.reset();
      traj.events.push_back(ev);
      if (mode != mode_before || opts.store_dense) begin_segment(te);
      traj.segments.back().mode = mode;
      if (opts.on_event && opts.on_event(traj.events.back())) stop_requested = true;
      continue;
    }

    // Plain accepted step.
    if (mode.is_sliding()) {
      x = project_onto_boundaries(sys, mode.sliding, x);
      stepper.reset();
    }
    for (const auto& b : sys.boundaries) {
      if (!mode.sliding_on(b.id) && b.level(x) > opts.drift_tol) {
        throw DriftError("integrate: state left the domain across boundary " +
                         std::to_string(b.id) + " at t=" + std::to_string(t));
      }
    }
    if (opts.sample_dt > 0.0) record_sample(step, t);
    if (opts.store_dense) {
      auto& seg = traj.segments.back();
      seg.steps.push_back(std::move(step));
      seg.t1 = t;
    } else {
      traj.segments.back().t1 = t;
    }
  }

  traj.t_end = t;
  traj.final_state = x;
  traj.final_mode = mode;
  if (!traj.segments.empty() && traj.segments.back().t1 <= traj.segments.back().t0 &&
      traj.segments.back().steps.empty()) {
    traj.segments.pop_back();
  }
  return traj;
}

inline Trajectory integrate(const FilippovSystem& sys, const Vec& x0, const Mode& mode0,
                            double t0, double t1, const IntegrateOptions& opts = {}) {
  return integrate(std::make_shared<FilippovSystem>(sys), x0, mode0, t0, t1, opts);
}

/// Mode consistent with a bare state: sliding wherever the state touches a
/// boundary with decisively outward interior flow. States within round-off of
/// a liftoff point classify as interior; the integrator re-captures genuine
/// sliders immediately.
inline Mode infer_mode(const FilippovSystem& sys, const Vec& x) {
  Mode m;
  m.region = sys.region_at(x);
  for (const auto& b : sys.boundaries) {
    if (std::abs(b.level(x)) <= 1e2 * sys.event_tol && liftoff_indicator(sys, b.id, x) > 1e-9) {
      m.add_sliding(b.id);
    }
  }
  return m;
}

struct CycleOptions {
  IntegrateOptions integrate;
  double convergence_tol = 1e-9;  // anchor-state distance between returns
  int max_cycles = 500;
  double max_time = 1e4;  // budget before the first anchor event
};

/// Locate an asymptotically stable limit cycle by integrating from `x_guess`
/// until successive anchor-event states agree, then re-integrate one period
/// with dense output.
inline LimitCycle find_limit_cycle(std::shared_ptr<const FilippovSystem> sys_ptr,
                                   const Vec& x_guess, const EventSpec& anchor,
                                   const CycleOptions& copts = {}) {
  const FilippovSystem& sys = *sys_ptr;
  Mode mode0 = infer_mode(sys, x_guess);

  std::vector<EventRecord> hits;
  bool converged = false;

  IntegrateOptions search = copts.integrate;
  search.store_dense = false;
  search.on_event = [&](const EventRecord& e) {
    if (!anchor.matches(e)) return false;
    hits.push_back(e);
    const size_t n = hits.size();
    if (n >= 2 && (hits[n - 1].state - hits[n - 2].state).norm() < copts.convergence_tol) {
      converged = true;
      return true;
    }
    if (static_cast<int>(n) > copts.max_cycles) {
      converged = false;
      return true;
    }
    return false;
  };
  integrate(sys_ptr, x_guess, mode0, 0.0, copts.max_time, search);
  if (hits.empty()) throw AnchorError("find_limit_cycle: anchor event never occurred");
  if (!converged) {
    if (static_cast<int>(hits.size()) > copts.max_cycles)
      throw NoCycleError("find_limit_cycle: no convergence within the cycle budget");
    throw AnchorError("find_limit_cycle: anchor event did not recur within the time budget");
  }

  const double T0 = hits.back().time - hits[hits.size() - 2].time;
  const Vec x_anchor = hits.back().state;
  EventRecord anchor_rec = hits.back();
  anchor_rec.time = 0.0;

  // Dense pass over exactly one period, stopping at the anchor recurrence.
  IntegrateOptions dense = copts.integrate;
  dense.store_dense = true;
  int anchor_count = 0;
  dense.on_event = [&](const EventRecord& e) {
    if (anchor.matches(e)) ++anchor_count;
    return anchor_count >= 1;
  };
  Trajectory cyc = integrate(sys_ptr, x_anchor, anchor_rec.post_mode, 0.0, 2.0 * T0, dense);
  require(anchor_count == 1 && !cyc.events.empty(), "find_limit_cycle: dense pass lost the anchor");

  LimitCycle lc;
  lc.system = sys_ptr;
  lc.T0 = cyc.events.back().time;
  lc.anchor = anchor;
  lc.closure_defect = (cyc.final_state - x_anchor).norm();
  lc.segments = std::move(cyc.segments);
  lc.events = std::move(cyc.events);
  lc.events.pop_back();  // terminal anchor recurrence == anchor at time 0
  lc.events.insert(lc.events.begin(), anchor_rec);
  return lc;
}

inline LimitCycle find_limit_cycle(const FilippovSystem& sys, const Vec& x_guess,
                                   const EventSpec& anchor, const CycleOptions& copts = {}) {
  return find_limit_cycle(std::make_shared<FilippovSystem>(sys), x_guess, anchor, copts);
}

/// Limit cycle of the eps-member of a family, anchored at the same event.
inline LimitCycle perturbed_cycle(const ParametricFamily& family, double eps,
                                  const EventSpec& anchor, const Vec& x_guess,
                                  const CycleOptions& copts = {}) {
  auto sys = std::make_shared<FilippovSystem>(family.at(eps));
  return find_limit_cycle(std::move(sys), x_guess, anchor, copts);
}

/// Check that two cycles share the ordered event sequence (kinds and ids).
inline void require_same_topology(const LimitCycle& a, const LimitCycle& b) {
  bool same = a.events.size() == b.events.size();
  if (same) {
    for (size_t i = 0; i < a.events.size(); ++i) {
      if (a.events[i].kind != b.events[i].kind || a.events[i].id != b.events[i].id ||
          a.events[i].direction != b.events[i].direction) {
        same = false;
        break;
      }
    }
  }
  if (!same)
    throw TopologyChangeError(
        "cycles do not share an event sequence (perturbation too large)");
}

/// Uniform rescaling tau(t) = t T_eps / T0.
inline TimeRescaling rescale_time(const LimitCycle& lc0, const LimitCycle& lc_eps) {
  require_same_topology(lc0, lc_eps);
  TimeRescaling r;
  r.kind = TimeRescaling::Kind::Uniform;
  r.T0 = lc0.T0;
  r.T_eps = lc_eps.T0;
  return r;
}

/// Piecewise-uniform rescaling with breakpoints at the selected events. Both
/// cycles must be anchored at one of the cut events (time zero).
inline TimeRescaling rescale_time(const LimitCycle& lc0, const LimitCycle& lc_eps,
                                  const std::vector<EventSpec>& cuts) {
  require_same_topology(lc0, lc_eps);
  require(!cuts.empty(), "rescale_time: no cut events given");
  std::vector<std::pair<double, double>> marks;  // (t in lc0, tau in lc_eps)
  for (const auto& c : cuts) {
    marks.emplace_back(lc0.find_event(c).time, lc_eps.find_event(c).time);
  }
  std::sort(marks.begin(), marks.end());
  require(std::abs(marks.front().first) < 1e-9 * lc0.T0 &&
              std::abs(marks.front().second) < 1e-9 * lc_eps.T0,
          "rescale_time: cycles must be anchored at one of the cut events");
  TimeRescaling r;
  r.kind = TimeRescaling::Kind::Piecewise;
  r.T0 = lc0.T0;
  r.T_eps = lc_eps.T0;
  for (size_t i = 0; i < marks.size(); ++i) {
    const double t0 = marks[i].first;
    const double tau0 = marks[i].second;
    const double t1 = (i + 1 < marks.size()) ? marks[i + 1].first : lc0.T0;
    const double tau1 = (i + 1 < marks.size()) ? marks[i + 1].second : lc_eps.T0;
    require(t1 > t0 && tau1 > tau0, "rescale_time: cut events out of order");
    r.pieces.push_back({t0, t1, tau0, tau1});
  }
  return r;
}

}  // namespace lcsc
