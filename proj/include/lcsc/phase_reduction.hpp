#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <thread>
#include <utility>
#include <vector>

#include "lcsc/core.hpp"
#include "lcsc/integrator.hpp"
#include "lcsc/models.hpp"
#include "lcsc/sensitivity.hpp"

namespace lcsc {

struct PhaseOptions {
  double tol = 1e-6;     // anchor-state distance counting as "on the cycle"
  int max_periods = 50;  // integration budget
  IntegrateOptions integrate;
};

/// Asymptotic phase of x0 via anchor-event synchronization: integrate until
/// an anchor-event state lands within tolerance of the cycle's anchor state,
/// then phase = (-t_event) mod T0. Empty when the budget is exhausted (e.g.
/// at the repelling equilibrium).
inline std::optional<double> asymptotic_phase(std::shared_ptr<const FilippovSystem> sys,
                                              const LimitCycle& lc, const Vec& x0,
                                              const PhaseOptions& opts = {}) {
  const Vec anchor_state = lc.anchor_event().state;
  std::optional<double> phase;
  IntegrateOptions io = opts.integrate;
  io.store_dense = false;
  io.on_event = [&](const EventRecord& e) {
    if (!lc.anchor.matches(e)) return false;
    if ((e.state - anchor_state).norm() < opts.tol) {
      phase = wrap_phase(-e.time, lc.T0);
      return true;
    }
    return false;
  };
  try {
    integrate(sys, x0, infer_mode(*sys, x0), 0.0, opts.max_periods * lc.T0, io);
  } catch (const GrazingError&) {
    return std::nullopt;  // osculating contact; phase undefined at this point
  }
  return phase;
}

struct GridSpec {
  int nx = 101;
  int ny = 101;
  double x_min = -1.0, x_max = 1.0;
  double y_min = -1.0, y_max = 1.0;

  double x_at(int i) const { return x_min + (x_max - x_min) * i / (nx - 1); }
  double y_at(int j) const { return y_min + (y_max - y_min) * j / (ny - 1); }
  double dx() const { return (x_max - x_min) / (nx - 1); }
  double dy() const { return (y_max - y_min) / (ny - 1); }
};

/// Asymptotic phase sampled on a rectangular grid; phi(j, i) indexed by
/// (row = y index, column = x index), NaN where not converged.
struct PhaseField {
  GridSpec grid;
  double T0 = 0.0;
  Mat phi;        // ny x nx
  Mat converged;  // 1.0 / 0.0

  bool ok(int i, int j) const {
    return i >= 0 && i < grid.nx && j >= 0 && j < grid.ny && converged(j, i) > 0.5;
  }
};

namespace detail {

inline void parallel_for(int n, const std::function<void(int)>& body) {
  const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  if (hw == 1 || n < 4) {
    for (int i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  for (unsigned t = 0; t < hw; ++t) {
    pool.emplace_back([&] {
      for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1)) body(i);
    });
  }
  for (auto& th : pool) th.join();
}

}  // namespace detail

/// Per-cell asymptotic phase over the grid; cells are independent and are
/// evaluated concurrently. Planar systems only.
inline PhaseField isochron_grid(std::shared_ptr<const FilippovSystem> sys, const LimitCycle& lc,
                                const GridSpec& grid, const PhaseOptions& opts = {}) {
  require(sys->dim == 2, "isochron_grid: planar systems only");
  PhaseField field;
  field.grid = grid;
  field.T0 = lc.T0;
  field.phi = Mat::Constant(grid.ny, grid.nx, std::numeric_limits<double>::quiet_NaN());
  field.converged = Mat::Zero(grid.ny, grid.nx);
  detail::parallel_for(grid.ny, [&](int j) {
    for (int i = 0; i < grid.nx; ++i) {
      Vec x(2);
      x << grid.x_at(i), grid.y_at(j);
      std::optional<double> p;
      try {
        p = asymptotic_phase(sys, lc, x, opts);
      } catch (const Error&) {
        p.reset();
      }
      if (p.has_value()) {
        field.phi(j, i) = *p;
        field.converged(j, i) = 1.0;
      }
    }
  });
  return field;
}

/// Central-difference gradient of the phase field using periodic differences;
/// NaN near missing neighbors.
inline std::pair<Mat, Mat> phase_gradient(const PhaseField& f) {
  const auto& g = f.grid;
  Mat gx = Mat::Constant(g.ny, g.nx, std::numeric_limits<double>::quiet_NaN());
  Mat gy = gx;
  for (int j = 0; j < g.ny; ++j) {
    for (int i = 0; i < g.nx; ++i) {
      if (f.ok(i - 1, j) && f.ok(i + 1, j)) {
        gx(j, i) = periodic_difference(f.phi(j, i + 1), f.phi(j, i - 1), f.T0) / (2.0 * g.dx());
      }
      if (f.ok(i, j - 1) && f.ok(i, j + 1)) {
        gy(j, i) = periodic_difference(f.phi(j + 1, i), f.phi(j - 1, i), f.T0) / (2.0 * g.dy());
      }
    }
  }
  return {gx, gy};
}

/// Jump of the normal phase-gradient component across a polyline, sampled a
/// fixed distance to each side (in cells). NaN samples are skipped.
inline std::vector<double> kink_scan(const PhaseField& f, const std::vector<Vec>& polyline,
                                     double probe_cells = 2.5) {
  require(polyline.size() >= 3, "kink_scan: polyline too short");
  const auto [gx, gy] = phase_gradient(f);
  const auto& g = f.grid;
  const double delta = probe_cells * 0.5 * (g.dx() + g.dy());
  auto grad_at = [&](const Vec& p) -> std::optional<Vec> {
    const int i = static_cast<int>(std::lround((p(0) - g.x_min) / g.dx()));
    const int j = static_cast<int>(std::lround((p(1) - g.y_min) / g.dy()));
    if (i < 0 || i >= g.nx || j < 0 || j >= g.ny) return std::nullopt;
    if (std::isnan(gx(j, i)) || std::isnan(gy(j, i))) return std::nullopt;
    Vec out(2);
    out << gx(j, i), gy(j, i);
    return out;
  };
  std::vector<double> jumps;
  for (size_t k = 1; k + 1 < polyline.size(); ++k) {
    Vec tangent = polyline[k + 1] - polyline[k - 1];
    const double tn = tangent.norm();
    if (tn == 0.0) continue;
    tangent /= tn;
    Vec m(2);
    m << -tangent(1), tangent(0);
    const auto gp = grad_at(polyline[k] + delta * m);
    const auto gm = grad_at(polyline[k] - delta * m);
    if (!gp || !gm) continue;
    jumps.push_back(std::abs(m.dot(*gp - *gm)));
  }
  return jumps;
}

/// Backward interior trajectory from a boundary point; the one through the
/// liftoff point is the osculating curve carrying the isochron kink.
inline std::vector<Vec> backward_osculating_polyline(const FilippovSystem& sys, const Vec& from,
                                                     double duration, double sample_dt) {
  OdeOptions ode;
  Rk45 rk([&](double, const Vec& x, Vec& dx) {
    dx = -sys.interior_velocity(sys.region_at(x), x);
  }, ode);
  std::vector<Vec> pts{from};
  double t = 0.0, h = 1e-3, next = sample_dt;
  Vec x = from;
  while (t < duration) {
    const StepDense d = rk.step(t, x, h, duration);
    while (next <= t) {
      pts.push_back(d.eval(next));
      next += sample_dt;
    }
  }
  return pts;
}

// ---------------------------------------------------------------------------
// Weak-coupling interaction function.
// ---------------------------------------------------------------------------

namespace detail {

/// Periodic natural cubic spline on a uniform grid over [0, P).
class PeriodicSpline {
 public:
  PeriodicSpline() = default;
  PeriodicSpline(std::vector<double> y, double period) : y_(std::move(y)), period_(period) {
    const int n = static_cast<int>(y_.size());
    require(n >= 3, "PeriodicSpline: need at least 3 samples");
    h_ = period_ / n;
    // Solve the cyclic tridiagonal system for second derivatives.
    Mat A = Mat::Zero(n, n);
    Vec rhs(n);
    for (int i = 0; i < n; ++i) {
      const int ip = (i + 1) % n, im = (i + n - 1) % n;
      A(i, im) = h_ / 6.0;
      A(i, i) = 2.0 * h_ / 3.0;
      A(i, ip) = h_ / 6.0;
      rhs(i) = (y_[ip] - 2.0 * y_[i] + y_[im]) / h_;
    }
    const Vec m = A.partialPivLu().solve(rhs);
    m2_.assign(m.data(), m.data() + n);
  }

  double operator()(double x) const {
    const int n = static_cast<int>(y_.size());
    const double w = wrap_phase(x, period_);
    int i = std::min(n - 1, static_cast<int>(w / h_));
    const int ip = (i + 1) % n;
    const double a = (h_ * (i + 1) - w) / h_;
    const double b = (w - h_ * i) / h_;
    return a * y_[i] + b * y_[ip] +
           ((a * a * a - a) * m2_[i] + (b * b * b - b) * m2_[ip]) * h_ * h_ / 6.0;
  }

  double derivative(double x) const {
    const int n = static_cast<int>(y_.size());
    const double w = wrap_phase(x, period_);
    int i = std::min(n - 1, static_cast<int>(w / h_));
    const int ip = (i + 1) % n;
    const double a = (h_ * (i + 1) - w) / h_;
    const double b = (w - h_ * i) / h_;
    return (y_[ip] - y_[i]) / h_ +
           ((1.0 - 3.0 * a * a) * m2_[i] + (3.0 * b * b - 1.0) * m2_[ip]) * h_ / 6.0;
  }

 private:
  std::vector<double> y_;
  std::vector<double> m2_;
  double period_ = 1.0;
  double h_ = 1.0;
};

}  // namespace detail

struct PhaseLockedPoint {
  double psi = 0.0;
  double slope = 0.0;  // dH_odd/dpsi
  bool stable = false;
};

/// Sampled averaged coupling function H(psi) and the odd interaction
/// function H(-psi) - H(psi) governing the relative phase, with its phase
/// locked points.
struct InteractionFunction {
  double T0 = 0.0;
  std::vector<double> psi;
  std::vector<double> H;
  std::vector<double> H_odd;
  std::vector<PhaseLockedPoint> fixed_points;
  detail::PeriodicSpline spline;  // interpolant of H_odd

  double eval(double p) const { return spline(p); }
  double slope(double p) const { return spline.derivative(p); }
};

/// Averaged interaction function for two weakly coupled copies of the cycle:
/// H(psi) = (1/T0) int z(t) . G(gamma(t+psi), gamma(t)) dt with the coupling
/// masked during the receiving oscillator's sliding mode. The quadrature is
/// trapezoid, split at the events of both arguments.
inline InteractionFunction h_function(const LimitCycle& lc, const SensitivityCurve& z,
                                      const CouplingSpec& coupling, int n_psi = 512) {
  InteractionFunction out;
  out.T0 = lc.T0;
  std::vector<double> event_times;
  for (const auto& e : lc.events) event_times.push_back(e.time);

  auto H_of = [&](double psi) {
    // Panel breakpoints: events of gamma(t) and of gamma(t+psi).
    std::vector<double> cuts = event_times;
    for (double te : event_times) cuts.push_back(wrap_phase(te - psi, lc.T0));
    cuts.push_back(0.0);
    cuts.push_back(lc.T0);
    std::sort(cuts.begin(), cuts.end());
    cuts.erase(std::unique(cuts.begin(), cuts.end(),
                           [&](double a, double b) { return std::abs(a - b) < 1e-12; }),
               cuts.end());
    auto integrand = [&](double t) {
      const bool sliding_i = lc.mode_at(t).is_sliding();
      const Vec gi = lc.state(t);
      const Vec gj = lc.state(t + psi);
      return z.eval(t).dot(coupling.G(gj, gi, sliding_i));
    };
    double total = 0.0;
    const double h_target = lc.T0 / 1024.0;
    for (size_t c = 0; c + 1 < cuts.size(); ++c) {
      const double a = cuts[c], b = cuts[c + 1];
      if (b - a < 1e-12) continue;
      const int m = std::max(2, static_cast<int>(std::ceil((b - a) / h_target)));
      double prev = integrand(a + 1e-13 * lc.T0);
      for (int i = 1; i <= m; ++i) {
        const double t = a + (b - a) * i / m;
        const double cur = integrand(t - (i == m ? 1e-13 * lc.T0 : 0.0));
        total += 0.5 * (b - a) / m * (prev + cur);
        prev = cur;
      }
    }
    return total / lc.T0;
  };

  out.psi.resize(n_psi);
  out.H.resize(n_psi);
  for (int k = 0; k < n_psi; ++k) {
    out.psi[k] = k * lc.T0 / n_psi;
    out.H[k] = H_of(out.psi[k]);
  }
  out.H_odd.resize(n_psi);
  for (int k = 0; k < n_psi; ++k) {
    out.H_odd[k] = out.H[(n_psi - k) % n_psi] - out.H[k];
  }
  out.spline = detail::PeriodicSpline(out.H_odd, lc.T0);

  // Phase-locked points: sign changes of H_odd between samples that exceed a
  // significance floor. The interaction function can be flat (numerically
  // zero) over a whole band; a crossing through such a band is a single
  // near-neutral point placed at the band midpoint, classified by the slope
  // at the first resolvable scale.
  double h_max = 0.0;
  for (double v : out.H_odd) h_max = std::max(h_max, std::abs(v));
  const double floor_v = 1e-3 * h_max;
  int prev_idx = -1;
  double prev_sign = 0.0;
  int first_idx = -1;
  auto classify = [&](int ia, int ib) {  // significant samples bracketing a crossing
    const double a = out.psi[ia % n_psi] + (ia >= n_psi ? lc.T0 : 0.0);
    const double b = out.psi[ib % n_psi] + (ib >= n_psi ? lc.T0 : 0.0);
    double root;
    if (ib - ia > 1) {
      root = 0.5 * (a + b);  // midpoint of the sub-floor band
    } else {
      double lo = a, hi = b;
      const bool lo_pos = out.H_odd[ia % n_psi] > 0;
      while (hi - lo > 1e-10) {
        const double mid = 0.5 * (lo + hi);
        if ((out.spline(mid) > 0) == lo_pos) lo = mid;
        else hi = mid;
      }
      root = 0.5 * (lo + hi);
    }
    PhaseLockedPoint fp;
    fp.psi = wrap_phase(root, lc.T0);
    fp.slope = out.spline.derivative(root);
    const double macro =
        (out.H_odd[ib % n_psi] - out.H_odd[ia % n_psi]) / std::max(b - a, 1e-12);
    if (std::abs(fp.slope) < std::abs(macro)) fp.slope = macro;
    fp.stable = fp.slope < 0.0;
    for (const auto& other : out.fixed_points) {
      if (std::abs(periodic_difference(fp.psi, other.psi, lc.T0)) < 1e-6 * lc.T0) return;
    }
    out.fixed_points.push_back(fp);
  };
  for (int k = 0; k <= 2 * n_psi; ++k) {  // cyclic scan with wrap
    const double v = out.H_odd[k % n_psi];
    if (std::abs(v) <= floor_v) continue;
    const double s = v > 0 ? 1.0 : -1.0;
    if (prev_idx >= 0 && s != prev_sign && k - prev_idx < n_psi) classify(prev_idx, k);
    if (first_idx < 0) first_idx = k;
    if (k >= n_psi && first_idx >= 0 && k % n_psi >= first_idx) break;
    prev_idx = k;
    prev_sign = s;
  }
  std::sort(out.fixed_points.begin(), out.fixed_points.end(),
            [](const auto& a, const auto& b) { return a.psi < b.psi; });
  return out;
}

/// Scalar phase-difference model psi' = k3 * H_odd(psi), sampled every
/// `sample_dt` time units.
inline std::vector<std::pair<double, double>> phase_model_simulate(
    const InteractionFunction& hf, double k3, double psi0, double t_end,
    double sample_dt = 10.0) {
  OdeOptions ode;
  ode.h_max = std::max(1.0, std::min(50.0, t_end / 100.0));
  Rk45 rk([&](double, const Vec& x, Vec& dx) {
    dx.resize(1);
    dx(0) = k3 * hf.eval(x(0));
  }, ode);
  std::vector<std::pair<double, double>> samples{{0.0, psi0}};
  double t = 0.0, h = 1e-2, next = sample_dt;
  Vec x(1);
  x << psi0;
  while (t < t_end) {
    const StepDense d = rk.step(t, x, h, t_end);
    while (next <= t + 1e-12) {
      samples.emplace_back(next, d.eval(std::min(next, d.t1()))(0));
      next += sample_dt;
    }
  }
  if (samples.back().first < t_end) samples.emplace_back(t_end, x(0));
  return samples;
}

struct CoupledPhaseOptions {
  IntegrateOptions integrate;
  double desync_gap = 3.0;  // error if an oscillator is silent this many T0
  std::function<void(double, double)> on_sample;  // streaming (t, psi)
};

/// Phase difference extracted from the full coupled model: at each liftoff
/// of oscillator 1, psi = (nearest liftoff time of oscillator 2 - liftoff
/// time of oscillator 1) mod T0.
inline std::vector<std::pair<double, double>> full_model_phase_difference(
    std::shared_ptr<const FilippovSystem> sys, const Vec& x0, double t_end, double T0,
    const CoupledPhaseOptions& opts = {}) {
  require(sys->boundaries.size() == 2, "full_model_phase_difference: expects two hard boundaries");
  std::vector<double> lifts1, lifts2;
  IntegrateOptions io = opts.integrate;
  io.store_dense = false;
  double last_seen[2] = {0.0, 0.0};
  io.on_event = [&](const EventRecord& e) {
    if (e.kind == EventKind::Liftoff) {
      (e.id == 0 ? lifts1 : lifts2).push_back(e.time);
      last_seen[e.id] = e.time;
      const double other = last_seen[1 - e.id];
      if (e.time - other > opts.desync_gap * T0 && e.time > opts.desync_gap * T0) {
        throw DesynchronizationError("oscillator " + std::to_string(1 - e.id) +
                                     " stopped cycling near t=" + std::to_string(e.time));
      }
    }
    return false;
  };
  integrate(sys, x0, infer_mode(*sys, x0), 0.0, t_end, io);
  if (t_end >= 2.0 * T0 && (lifts1.empty() || lifts2.empty())) {
    throw DesynchronizationError("an oscillator produced no liftoff events");
  }

  std::vector<std::pair<double, double>> psi;
  for (double t1 : lifts1) {
    const auto it = std::lower_bound(lifts2.begin(), lifts2.end(), t1);
    double best = std::numeric_limits<double>::infinity();
    if (it != lifts2.end() && std::abs(*it - t1) < std::abs(best - t1)) best = *it;
    if (it != lifts2.begin() && std::abs(*(it - 1) - t1) < std::abs(best - t1)) best = *(it - 1);
    if (!std::isfinite(best)) continue;
    const double value = wrap_phase(best - t1, T0);
    psi.emplace_back(t1, value);
    if (opts.on_sample) opts.on_sample(t1, value);
  }
  return psi;
}

}  // namespace lcsc
