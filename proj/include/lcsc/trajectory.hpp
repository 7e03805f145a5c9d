#pragma once

#include <memory>
#include <optional>
#include <vector>

#include "lcsc/core.hpp"
#include "lcsc/ode.hpp"
#include "lcsc/system.hpp"

namespace lcsc {

enum class EventKind { Landing, Liftoff, TransversalCrossing, TimingSurfaceCrossing };

inline const char* to_string(EventKind k) {
  switch (k) {
    case EventKind::Landing: return "landing";
    case EventKind::Liftoff: return "liftoff";
    case EventKind::TransversalCrossing: return "crossing";
    case EventKind::TimingSurfaceCrossing: return "timing";
  }
  return "?";
}

/// A boundary or surface event along a trajectory, with the one-sided
/// velocities needed to build transition matrices.
struct EventRecord {
  EventKind kind = EventKind::Landing;
  double time = 0.0;
  Vec state;
  int id = 0;         // boundary id for landing/liftoff, surface id otherwise
  Vec normal;         // unit normal of the boundary/surface at the event
  Vec pre_velocity;   // flow just before the event (forward time)
  Vec post_velocity;  // flow just after
  int direction = 0;  // sign of normal . pre_velocity (surface crossings)
  Mode post_mode;     // mode in effect after the event
};

/// Selects events of a given kind/id (and optionally crossing direction).
struct EventSpec {
  EventKind kind = EventKind::Liftoff;
  int id = 0;
  int direction = 0;  // 0 = either

  bool matches(const EventRecord& e) const {
    if (e.kind != kind || e.id != id) return false;
    if (direction != 0 && e.direction != direction) return false;
    return true;
  }
};

/// Maximal stretch of trajectory with a constant mode, stored as the dense
/// output of the accepted integrator steps.
struct TrajectorySegment {
  Mode mode;
  double t0 = 0.0;
  double t1 = 0.0;
  std::vector<StepDense> steps;

  bool contains(double t) const { return t >= t0 && t <= t1; }

  Vec eval(double t) const {
    require(!steps.empty(), "TrajectorySegment: no dense data stored");
    // Binary search for the step whose span contains t.
    size_t lo = 0, hi = steps.size() - 1;
    while (lo < hi) {
      const size_t mid = (lo + hi + 1) / 2;
      if (steps[mid].t0 <= t) lo = mid;
      else hi = mid - 1;
    }
    return steps[lo].eval(t);
  }
};

struct Trajectory {
  std::shared_ptr<const FilippovSystem> system;
  std::vector<TrajectorySegment> segments;
  std::vector<EventRecord> events;
  std::vector<std::pair<double, Vec>> samples;  // sparse samples when dense output is off
  double t_begin = 0.0;
  double t_end = 0.0;
  Vec final_state;
  Mode final_mode;

  Vec eval(double t) const {
    for (const auto& s : segments) {
      if (s.contains(t)) return s.eval(t);
    }
    throw ContractViolation("Trajectory: time outside integrated span");
  }
};

/// Piecewise map tau_eps from unperturbed cycle time onto perturbed cycle
/// time; continuous and increasing, with tau(t + T0) = tau(t) + T_eps.
struct TimeRescaling {
  enum class Kind { Uniform, Piecewise };

  Kind kind = Kind::Uniform;
  double T0 = 0.0;
  double T_eps = 0.0;
  struct Piece {
    double t0, t1;      // unperturbed times
    double tau0, tau1;  // corresponding perturbed times
  };
  std::vector<Piece> pieces;  // cover [0, T0] for the piecewise kind

  double tau(double t) const {
    if (kind == Kind::Uniform) return t * T_eps / T0;
    const double w = wrap_phase(t, T0);
    const double cycles = std::floor((t - w) / T0 + 0.5);
    for (const auto& p : pieces) {
      if (w >= p.t0 - 1e-12 && w <= p.t1 + 1e-12) {
        const double f = (p.t1 > p.t0) ? (w - p.t0) / (p.t1 - p.t0) : 0.0;
        return cycles * T_eps + p.tau0 + f * (p.tau1 - p.tau0);
      }
    }
    throw ContractViolation("TimeRescaling: pieces do not cover the period");
  }
};

/// A converged limit cycle, anchored at a designated event (time zero), with
/// dense segments and the ordered per-period event list.
struct LimitCycle {
  std::shared_ptr<const FilippovSystem> system;
  double T0 = 0.0;
  std::vector<TrajectorySegment> segments;  // cover [0, T0]
  std::vector<EventRecord> events;          // times in [0, T0), anchor at 0
  EventSpec anchor;
  double closure_defect = 0.0;

  const EventRecord& anchor_event() const {
    require(!events.empty() && events.front().time == 0.0, "LimitCycle: missing anchor event");
    return events.front();
  }

  Vec state(double t) const {
    const double w = wrap_phase(t, T0);
    for (const auto& s : segments) {
      if (s.contains(w)) return s.eval(w);
    }
    // w == T0 wraps to 0 by construction; guard the boundary.
    return segments.back().eval(segments.back().t1);
  }

  /// Segment index containing time w in [0, T0]; event times resolve to the
  /// right (post-event) segment except at t = T0.
  size_t segment_index(double t) const {
    const double w = wrap_phase(t, T0);
    for (size_t i = 0; i + 1 < segments.size(); ++i) {
      if (w < segments[i].t1) return i;
    }
    return segments.size() - 1;
  }

  const Mode& mode_at(double t) const { return segments[segment_index(t)].mode; }

  /// Flow velocity along the cycle; right-continuous at event times.
  Vec velocity(double t) const {
    const size_t i = segment_index(t);
    return mode_velocity(*system, segments[i].mode, state(t));
  }

  /// First event matching `spec` (exactly one expected per period).
  const EventRecord& find_event(const EventSpec& spec) const {
    const EventRecord* found = nullptr;
    for (const auto& e : events) {
      if (spec.matches(e)) {
        if (found != nullptr)
          throw RegionTopologyError("LimitCycle: event selector matches more than once per period");
        found = &e;
      }
    }
    if (found == nullptr) throw RegionTopologyError("LimitCycle: event selector matches no event");
    return *found;
  }
};

}  // namespace lcsc
