#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <vector>

#include "lcsc/core.hpp"

namespace lcsc {

/// Tolerances and step bounds for the embedded Runge-Kutta 5(4) driver.
struct OdeOptions {
  double rtol = 1e-10;
  double atol = 1e-12;
  double h_max = 0.25;
  double h_min = 1e-14;
  double h_init = 1e-3;
};

/// Dense output for one accepted Dormand-Prince step: a quartic interpolant
/// built from the seven stage derivatives.
struct StepDense {
  double t0 = 0.0;
  double h = 0.0;
  Vec x0;
  std::array<Vec, 7> k;

  double t1() const { return t0 + h; }

  /// State at t in [t0, t0+h].
  Vec eval(double t) const {
    const double th = (t - t0) / h;
    // Interpolation weights: b*_i(theta) = sum_j P[i][j] theta^(j+1).
    static constexpr double P[7][4] = {
        {1.0, -8048581381.0 / 2820520608.0, 8663915743.0 / 2820520608.0,
         -12715105075.0 / 11282082432.0},
        {0.0, 0.0, 0.0, 0.0},
        {0.0, 131558114200.0 / 32700410799.0, -68118460800.0 / 10900136933.0,
         87487479700.0 / 32700410799.0},
        {0.0, -1754552775.0 / 470086768.0, 14199869525.0 / 1410260304.0,
         -10690763975.0 / 1880347072.0},
        {0.0, 127303824393.0 / 49829197408.0, -318862633887.0 / 49829197408.0,
         701980252875.0 / 199316789632.0},
        {0.0, -282668133.0 / 205662961.0, 2019193451.0 / 616988883.0,
         -1453857185.0 / 822651844.0},
        {0.0, 40617522.0 / 29380423.0, -110615467.0 / 29380423.0,
         69997945.0 / 29380423.0}};
    Vec out = x0;
    for (int i = 0; i < 7; ++i) {
      double theta_pow = th;
      double w = 0.0;
      for (int j = 0; j < 4; ++j) {
        w += P[i][j] * theta_pow;
        theta_pow *= th;
      }
      if (w != 0.0) out.noalias() += (h * w) * k[i];
    }
    return out;
  }
};

/// One adaptive Dormand-Prince 5(4) integrator. The right-hand side is a
/// callable f(t, x, dx). FSAL is exploited across accepted steps.
class Rk45 {
 public:
  using Rhs = std::function<void(double, const Vec&, Vec&)>;

  Rk45(Rhs rhs, OdeOptions opts) : rhs_(std::move(rhs)), opts_(opts) {}

  /// Attempt steps from (t, x) until one is accepted; returns its dense form
  /// and advances (t, x). `h_hint` is updated with the next proposed step.
  StepDense step(double& t, Vec& x, double& h_hint, double t_limit) {
    static constexpr double c[7] = {0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0};
    static constexpr double a2[] = {1.0 / 5.0};
    static constexpr double a3[] = {3.0 / 40.0, 9.0 / 40.0};
    static constexpr double a4[] = {44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0};
    static constexpr double a5[] = {19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0,
                                    -212.0 / 729.0};
    static constexpr double a6[] = {9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0,
                                    49.0 / 176.0, -5103.0 / 18656.0};
    static constexpr double b5[7] = {35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0,
                                     -2187.0 / 6784.0, 11.0 / 84.0, 0.0};
    static constexpr double b4[7] = {5179.0 / 57600.0, 0.0,           7571.0 / 16695.0,
                                     393.0 / 640.0,    -92097.0 / 339200.0,
                                     187.0 / 2100.0,   1.0 / 40.0};
    const double dir = (t_limit >= t) ? 1.0 : -1.0;
    const int n = static_cast<int>(x.size());
    StepDense d;
    d.x0 = x;
    if (!k1_valid_) {
      k_[0].resize(n);
      rhs_(t, x, k_[0]);
      k1_valid_ = true;
    }
    double h = dir * std::min(std::abs(h_hint), opts_.h_max);
    for (;;) {
      h = dir * std::min(std::abs(h), std::abs(t_limit - t));
      if (std::abs(h) < opts_.h_min) {
        throw IntegrationError("rk45: step size underflow at t=" + std::to_string(t));
      }
      Vec y(n);
      auto stage = [&](int s, const double* a, int na) {
        y = x;
        for (int j = 0; j < na; ++j) y.noalias() += (h * a[j]) * k_[j];
        k_[s].resize(n);
        rhs_(t + c[s] * h, y, k_[s]);
      };
      stage(1, a2, 1);
      stage(2, a3, 2);
      stage(3, a4, 3);
      stage(4, a5, 4);
      stage(5, a6, 5);
      Vec x1 = x;
      for (int j = 0; j < 6; ++j) {
        if (b5[j] != 0.0) x1.noalias() += (h * b5[j]) * k_[j];
      }
      k_[6].resize(n);
      rhs_(t + h, x1, k_[6]);
      double err = 0.0;
      for (int i = 0; i < n; ++i) {
        double e = 0.0;
        for (int j = 0; j < 7; ++j) e += (b5[j] - b4[j]) * k_[j](i);
        e *= h;
        const double sc = opts_.atol + opts_.rtol * std::max(std::abs(x(i)), std::abs(x1(i)));
        err += (e / sc) * (e / sc);
      }
      err = std::sqrt(err / n);
      if (err <= 1.0 || std::abs(h) <= opts_.h_min * 1.0001) {
        d.t0 = t;
        d.h = h;
        for (int j = 0; j < 7; ++j) d.k[j] = k_[j];
        t += h;
        x.swap(x1);
        k_[0] = k_[6];  // FSAL
        const double grow = err > 0.0 ? 0.9 * std::pow(err, -0.2) : 5.0;
        h_hint = std::abs(h) * std::clamp(grow, 0.2, 5.0);
        h_hint = std::min(h_hint, opts_.h_max);
        return d;
      }
      h *= std::clamp(0.9 * std::pow(err, -0.2), 0.2, 0.9);
    }
  }

  /// Invalidate the cached first stage (state changed discontinuously).
  void reset() { k1_valid_ = false; }

 private:
  Rhs rhs_;
  OdeOptions opts_;
  std::array<Vec, 7> k_;
  bool k1_valid_ = false;
};

/// Brent root bracketing on [a, b]; f(a) and f(b) must have opposite signs.
/// Returns the root location to absolute tolerance `tol` in the argument.
inline double brent(const std::function<double(double)>& f, double a, double b,
                    double fa, double fb, double tol = 1e-12) {
  require(fa == 0.0 || fb == 0.0 || (fa > 0) != (fb > 0), "brent: root not bracketed");
  if (fa == 0.0) return a;
  if (fb == 0.0) return b;
  double c = a, fc = fa, d = b - a, e = d;
  for (int iter = 0; iter < 200; ++iter) {
    if ((fb > 0) == (fc > 0)) {
      c = a;
      fc = fa;
      d = e = b - a;
    }
    if (std::abs(fc) < std::abs(fb)) {
      a = b; b = c; c = a;
      fa = fb; fb = fc; fc = fa;
    }
    const double tol1 = 2.0 * std::numeric_limits<double>::epsilon() * std::abs(b) + 0.5 * tol;
    const double xm = 0.5 * (c - b);
    if (std::abs(xm) <= tol1 || fb == 0.0) return b;
    if (std::abs(e) >= tol1 && std::abs(fa) > std::abs(fb)) {
      double p, q, r;
      const double s = fb / fa;
      if (a == c) {
        p = 2.0 * xm * s;
        q = 1.0 - s;
      } else {
        q = fa / fc;
        r = fb / fc;
        p = s * (2.0 * xm * q * (q - r) - (b - a) * (r - 1.0));
        q = (q - 1.0) * (r - 1.0) * (s - 1.0);
      }
      if (p > 0) q = -q;
      p = std::abs(p);
      if (2.0 * p < std::min(3.0 * xm * q - std::abs(tol1 * q), std::abs(e * q))) {
        e = d;
        d = p / q;
      } else {
        d = xm;
        e = d;
      }
    } else {
      d = xm;
      e = d;
    }
    a = b;
    fa = fb;
    b += (std::abs(d) > tol1) ? d : (xm > 0 ? tol1 : -tol1);
    fb = f(b);
  }
  return b;
}

}  // namespace lcsc
