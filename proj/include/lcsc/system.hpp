#pragma once

#include <algorithm>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "lcsc/core.hpp"

namespace lcsc {

/// Dynamical mode of a trajectory: the interior region it moves in, plus the
/// set of hard boundaries it is currently sliding on (sorted ids).
struct Mode {
  int region = 0;
  std::vector<int> sliding;

  bool is_sliding() const { return !sliding.empty(); }
  bool sliding_on(int b) const {
    return std::find(sliding.begin(), sliding.end(), b) != sliding.end();
  }
  void add_sliding(int b) {
    sliding.push_back(b);
    std::sort(sliding.begin(), sliding.end());
  }
  void remove_sliding(int b) {
    sliding.erase(std::remove(sliding.begin(), sliding.end(), b), sliding.end());
  }
  bool operator==(const Mode& o) const { return region == o.region && sliding == o.sliding; }
  bool operator!=(const Mode& o) const { return !(*this == o); }

  std::string label() const {
    std::string s = "I" + std::to_string(region);
    for (int b : sliding) s += "+S" + std::to_string(b);
    return s;
  }
};

/// Vector field on (the closure of) one interior region, with optional
/// analytic Jacobian and parameter derivative dF_eps/deps at eps = 0.
struct InteriorField {
  std::function<Vec(const Vec&)> velocity;
  std::function<Mat(const Vec&)> jacobian;          // null -> central differences
  std::function<Vec(const Vec&)> param_derivative;  // null -> zero
};

/// Affine hard boundary H(x) = normal.x - offset with H < 0 strictly inside
/// the admissible domain and `normal` the outward unit vector.
struct HardBoundary {
  int id = 0;
  Vec normal;
  double offset = 0.0;

  double level(const Vec& x) const { return normal.dot(x) - offset; }
};

/// Affine surface transverse to the flow, used either as a switching boundary
/// between interior regions or as a local timing surface.
struct TransversalSurface {
  enum class Role { Switching, LocalTiming };

  int id = 0;
  Vec normal;
  double offset = 0.0;
  Role role = Role::LocalTiming;

  double level(const Vec& x) const { return normal.dot(x) - offset; }
};

/// A piecewise-smooth system with hard boundaries. Immutable after
/// construction; all operations on it are pure functions of their inputs.
struct FilippovSystem {
  int dim = 0;
  std::string name;
  std::map<std::string, double> params;
  std::vector<InteriorField> regions;
  std::vector<HardBoundary> boundaries;
  std::vector<TransversalSurface> surfaces;
  std::function<int(const Vec&)> region_of;  // null -> single region 0
  double event_tol = 1e-10;

  int region_at(const Vec& x) const { return region_of ? region_of(x) : 0; }

  const InteriorField& field(int region) const {
    require(region >= 0 && region < static_cast<int>(regions.size()),
            "FilippovSystem: unknown region id");
    return regions[static_cast<size_t>(region)];
  }

  const HardBoundary& boundary(int b) const {
    require(b >= 0 && b < static_cast<int>(boundaries.size()),
            "FilippovSystem: unknown boundary id");
    return boundaries[static_cast<size_t>(b)];
  }

  const TransversalSurface& surface(int s) const {
    require(s >= 0 && s < static_cast<int>(surfaces.size()),
            "FilippovSystem: unknown surface id");
    return surfaces[static_cast<size_t>(s)];
  }

  Vec interior_velocity(int region, const Vec& x) const {
    require(x.size() == dim, "FilippovSystem: state dimension mismatch");
    return field(region).velocity(x);
  }

  Mat interior_jacobian(int region, const Vec& x) const {
    require(x.size() == dim, "FilippovSystem: state dimension mismatch");
    const auto& f = field(region);
    if (f.jacobian) return f.jacobian(x);
    // Central differences, step scaled with the state magnitude.
    const double h = 1e-6 * (1.0 + x.norm());
    Mat J(dim, dim);
    Vec xp = x, xm = x;
    for (int j = 0; j < dim; ++j) {
      xp(j) += h;
      xm(j) -= h;
      J.col(j) = (f.velocity(xp) - f.velocity(xm)) / (2.0 * h);
      xp(j) = x(j);
      xm(j) = x(j);
    }
    return J;
  }

  Vec interior_param_derivative(int region, const Vec& x) const {
    require(x.size() == dim, "FilippovSystem: state dimension mismatch");
    const auto& f = field(region);
    if (f.param_derivative) return f.param_derivative(x);
    return Vec::Zero(dim);
  }
};

/// Orthogonal projector onto the tangent space common to the given active
/// boundaries: I - N (N^T N)^{-1} N^T.
inline Mat sliding_projector(const FilippovSystem& sys, const std::vector<int>& active) {
  Mat P = Mat::Identity(sys.dim, sys.dim);
  if (active.empty()) return P;
  Mat N(sys.dim, active.size());
  for (size_t i = 0; i < active.size(); ++i) N.col(i) = sys.boundary(active[i]).normal;
  const Mat G = N.transpose() * N;
  P -= N * G.ldlt().solve(N.transpose());
  return P;
}

/// Continuation of the interior field tangential to boundary `b`:
/// F_interior - (n.F_interior) n, with the projection applied after
/// evaluation so that n.result vanishes.
inline Vec sliding_field(const FilippovSystem& sys, int b, const Vec& x) {
  require(x.size() == sys.dim, "sliding_field: state dimension mismatch");
  const auto& bd = sys.boundary(b);
  require(std::abs(bd.level(x)) <= 1e2 * sys.event_tol + 1e-12,
          "sliding_field: state not on boundary");
  const Vec f = sys.interior_velocity(sys.region_at(x), x);
  return f - (bd.normal.dot(f)) * bd.normal;
}

/// True iff the outward-normal component of the interior velocity is strictly
/// positive, i.e. x lies in the sliding region of boundary b.
inline bool in_sliding_region(const FilippovSystem& sys, int b, const Vec& x) {
  const auto& bd = sys.boundary(b);
  const Vec f = sys.interior_velocity(sys.region_at(x), x);
  return bd.normal.dot(f) > 0.0;
}

/// n.F_interior at x on boundary b; its zero set along the boundary is the
/// liftoff boundary.
inline double liftoff_indicator(const FilippovSystem& sys, int b, const Vec& x) {
  const auto& bd = sys.boundary(b);
  return bd.normal.dot(sys.interior_velocity(sys.region_at(x), x));
}

/// Directional derivative of the liftoff indicator along the sliding flow,
/// grad(n.F_interior) . F_slide. Negative values mark a valid unique liftoff.
inline double nondegeneracy_at_liftoff(const FilippovSystem& sys, int b, const Vec& x) {
  const auto& bd = sys.boundary(b);
  const int r = sys.region_at(x);
  const Vec grad = sys.interior_jacobian(r, x).transpose() * bd.normal;
  const Vec fs = sys.interior_velocity(r, x) - (bd.normal.dot(sys.interior_velocity(r, x))) * bd.normal;
  return grad.dot(fs);
}

/// Velocity of the given mode: interior field, or its projection onto the
/// tangent space of the active boundaries.
inline Vec mode_velocity(const FilippovSystem& sys, const Mode& m, const Vec& x) {
  Vec f = sys.interior_velocity(m.region, x);
  for (int b : m.sliding) {
    const auto& bd = sys.boundary(b);
    f -= (bd.normal.dot(f)) * bd.normal;
  }
  return f;
}

/// Jacobian appropriate to the mode. On sliding segments the derivative is
/// taken within the boundary tangent space: P DF P, which keeps the normal
/// components of adjoint solutions stationary.
inline Mat mode_jacobian(const FilippovSystem& sys, const Mode& m, const Vec& x) {
  Mat J = sys.interior_jacobian(m.region, x);
  if (m.is_sliding()) {
    const Mat P = sliding_projector(sys, m.sliding);
    J = P * J * P;
  }
  return J;
}

/// dF_eps/deps appropriate to the mode; projected tangentially while sliding
/// (the boundaries themselves do not move with eps).
inline Vec mode_param_derivative(const FilippovSystem& sys, const Mode& m, const Vec& x) {
  Vec p = sys.interior_param_derivative(m.region, x);
  for (int b : m.sliding) {
    const auto& bd = sys.boundary(b);
    p -= (bd.normal.dot(p)) * bd.normal;
  }
  return p;
}

/// Remove the (affine) boundary levels from x for the given active set.
inline Vec project_onto_boundaries(const FilippovSystem& sys, const std::vector<int>& active,
                                   Vec x) {
  if (active.empty()) return x;
  if (active.size() == 1) {
    const auto& bd = sys.boundary(active[0]);
    return x - bd.level(x) * bd.normal;
  }
  Mat N(sys.dim, active.size());
  Vec h(active.size());
  for (size_t i = 0; i < active.size(); ++i) {
    N.col(i) = sys.boundary(active[i]).normal;
    h(static_cast<Eigen::Index>(i)) = sys.boundary(active[i]).level(x);
  }
  const Mat G = N.transpose() * N;
  return x - N * G.ldlt().solve(h);
}

}  // namespace lcsc
