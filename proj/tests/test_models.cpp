#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "lcsc/models.hpp"
#include "lcsc/system.hpp"

using namespace lcsc;

namespace {

Vec v2(double a, double b) { return (Vec(2) << a, b).finished(); }

/// Hand-coded wall rows of the planar model (omega = 1): the dispatch oracle.
Vec planar_table_row(double alpha, double x, double y) {
  if (x == 1.0) {
    if (y < alpha) return v2(0.0, 1.0 + alpha * y);
    return v2(alpha - y, 1.0 + alpha * y);
  }
  if (y == 1.0) {
    if (x > -alpha) return v2(alpha * x - 1.0, 0.0);
    return v2(alpha * x - 1.0, x + alpha);
  }
  if (x == -1.0) {
    if (y > -alpha) return v2(0.0, -1.0 + alpha * y);
    return v2(-alpha - y, -1.0 + alpha * y);
  }
  if (y == -1.0) {
    if (x < alpha) return v2(alpha * x + 1.0, 0.0);
    return v2(alpha * x + 1.0, x - alpha);
  }
  return v2(alpha * x - y, x + alpha * y);
}

/// Full Filippov dispatch at a state: sliding field inside a sliding region,
/// interior field otherwise.
Vec dispatch(const FilippovSystem& sys, const Vec& x) {
  for (const auto& b : sys.boundaries) {
    if (std::abs(b.level(x)) <= sys.event_tol && in_sliding_region(sys, b.id, x)) {
      return sliding_field(sys, b.id, x);
    }
  }
  return sys.interior_velocity(sys.region_at(x), x);
}

}  // namespace

TEST_CASE("planar model reproduces the wall dispatch table", "[models]") {
  const double alpha = 0.2;
  auto sys = planar_system({alpha, 1.0});
  std::mt19937 rng(7);
  std::uniform_real_distribution<double> u(-0.999, 0.999);
  // Interior row.
  for (int i = 0; i < 20; ++i) {
    const Vec x = v2(u(rng), u(rng));
    CHECK((dispatch(sys, x) - planar_table_row(alpha, x(0), x(1))).cwiseAbs().maxCoeff() < 1e-12);
  }
  // Eight wall rows, 20 samples each.
  auto span = [&](double lo, double hi, int i, int n) { return lo + (hi - lo) * (i + 0.5) / n; };
  for (int i = 0; i < 20; ++i) {
    const double s_low = span(-1.0, alpha, i, 20);   // sliding part of east wall
    const double s_high = span(alpha, 1.0, i, 20);   // inward part of east wall
    for (auto [x, y] : {std::pair{1.0, s_low}, std::pair{1.0, s_high},
                        std::pair{-1.0, -s_low}, std::pair{-1.0, -s_high}}) {
      const Vec p = v2(x, y);
      CHECK((dispatch(sys, p) - planar_table_row(alpha, x, y)).cwiseAbs().maxCoeff() < 1e-12);
    }
    for (auto [x, y] : {std::pair{-s_low, 1.0}, std::pair{-s_high, 1.0},
                        std::pair{s_low, -1.0}, std::pair{s_high, -1.0}}) {
      const Vec p = v2(x, y);
      CHECK((dispatch(sys, p) - planar_table_row(alpha, x, y)).cwiseAbs().maxCoeff() < 1e-12);
    }
  }
}

TEST_CASE("sliding field examples", "[models]") {
  auto sys = planar_system({0.2, 1.0});
  const Vec f = sliding_field(sys, 0, v2(1.0, -0.5));
  CHECK(f(0) == 0.0);
  CHECK(f(1) == Catch::Approx(0.9).margin(1e-15));
  // At the liftoff point the sliding field equals the interior field.
  const Vec fl = sliding_field(sys, 0, v2(1.0, 0.2));
  CHECK(fl(0) == Catch::Approx(0.0).margin(1e-16));
  CHECK(fl(1) == Catch::Approx(1.04).margin(1e-15));
  CHECK_THROWS_AS(sliding_field(sys, 0, Vec::Zero(3)), ContractViolation);

  auto ss = stick_slip_system({});
  const Vec fs = sliding_field(ss, 0, v2(0.3, 0.5));
  CHECK(fs(0) == Catch::Approx(0.5));
  CHECK(fs(1) == 0.0);
}

TEST_CASE("sliding region membership", "[models]") {
  auto sys = planar_system({0.2, 1.0});
  CHECK(in_sliding_region(sys, 0, v2(1.0, -0.5)));
  CHECK_FALSE(in_sliding_region(sys, 0, v2(1.0, 0.2)));  // liftoff point itself
  auto ss = stick_slip_system({});
  CHECK(in_sliding_region(ss, 0, v2(0.94, 0.5)));
  CHECK_FALSE(in_sliding_region(ss, 0, v2(0.96, 0.5)));
}

TEST_CASE("liftoff indicator and its zeros", "[models]") {
  const double alpha = 0.2;
  auto sys = planar_system({alpha, 1.0});
  CHECK(liftoff_indicator(sys, 0, v2(1.0, -0.4)) == Catch::Approx(alpha + 0.4));
  const Vec liftoffs[4] = {v2(1, alpha), v2(-alpha, 1), v2(-1, -alpha), v2(alpha, -1)};
  for (int b = 0; b < 4; ++b) {
    CHECK(liftoff_indicator(sys, b, liftoffs[b]) == Catch::Approx(0.0).margin(1e-15));
  }
  auto ss = stick_slip_system({});
  CHECK(liftoff_indicator(ss, 0, v2(0.7, 0.5)) == Catch::Approx(1.0 - 0.7 - 0.1 * 0.5));
  CHECK(liftoff_indicator(ss, 0, v2(0.95, 0.5)) == Catch::Approx(0.0).margin(1e-15));
}

TEST_CASE("nondegeneracy at liftoff", "[models]") {
  auto sys = planar_system({0.2, 1.0});
  const Vec lift = v2(1.0, 0.2);
  CHECK(nondegeneracy_at_liftoff(sys, 0, lift) == Catch::Approx(-1.04));
  // Linearity in the sliding flow: reversing it flips the sign.
  const Vec grad = sys.interior_jacobian(0, lift).transpose() * sys.boundaries[0].normal;
  const Vec fslide = sliding_field(sys, 0, lift);
  CHECK(grad.dot(-fslide) == Catch::Approx(-nondegeneracy_at_liftoff(sys, 0, lift)));

  auto ss = stick_slip_system({});
  CHECK(nondegeneracy_at_liftoff(ss, 0, v2(0.95, 0.5)) < 0.0);
  CHECK(nondegeneracy_at_liftoff(ss, 0, v2(0.95, 0.5)) == Catch::Approx(-0.5));
}

TEST_CASE("friction force values", "[models]") {
  CHECK(friction_force(0.5, 1.0, 0.001, 0.0) == 1.0);
  CHECK(friction_force(0.5, 1.0, 0.001, -0.5) ==
        Catch::Approx(0.5 / 1.5 + 0.5 + 0.001 * 0.25).epsilon(1e-12));
  CHECK(friction_force(0.0, 3.0, 0.0, -0.295) == Catch::Approx(1.0 / 1.885).epsilon(1e-12));
  // Mirror branch for positive relative velocity.
  CHECK(friction_force(0.5, 1.0, 0.001, 0.5) ==
        Catch::Approx(-(0.5 / 1.5 + 0.5 + 0.001 * 0.25)).epsilon(1e-12));
}

TEST_CASE("interior fields pass derivative cross-checks", "[models]") {
  std::mt19937 rng(11);
  std::uniform_real_distribution<double> u(-0.9, 0.9);

  PerturbationSpec palpha;
  palpha.terms = {{"alpha", 1.0}};
  auto fam = planar_family({0.2, 1.0}, palpha);

  PerturbationSpec pc;
  pc.terms = {{"c", 1.0}};
  StickSlipParams ssp;
  auto fam_ss = stick_slip_family(ssp, pc);

  auto check_family = [&](const ParametricFamily& f, auto draw_state) {
    const auto& sys = f.base;
    for (int i = 0; i < 100; ++i) {
      const Vec x = draw_state();
      const Mat J = sys.interior_jacobian(0, x);
      // Finite-difference Jacobian, step 1e-6.
      Mat Jfd(sys.dim, sys.dim);
      for (int j = 0; j < sys.dim; ++j) {
        Vec xp = x, xm = x;
        xp(j) += 1e-6;
        xm(j) -= 1e-6;
        Jfd.col(j) = (sys.interior_velocity(0, xp) - sys.interior_velocity(0, xm)) / 2e-6;
      }
      CHECK((J - Jfd).norm() < 1e-4 * (1.0 + J.norm()));
      // dF/deps against the (F_eps - F_0)/eps oracle at eps = 1e-6.
      const double eps = 1e-6;
      const auto pert = f.at(eps);
      const Vec fd = (pert.interior_velocity(0, x) - sys.interior_velocity(0, x)) / eps;
      const Vec pd = sys.interior_param_derivative(0, x);
      CHECK((pd - fd).norm() < 1e-5 * (1.0 + pd.norm()));
    }
  };
  check_family(fam, [&] { return v2(u(rng), u(rng)); });
  check_family(fam_ss, [&] { return v2(1.2 * u(rng), 0.45 * u(rng)); });
}

TEST_CASE("coupled model reduces and swaps correctly", "[models]") {
  CoupledStickSlipParams cp;
  cp.k3 = 0.0;
  auto joint = coupled_system(cp);
  auto single = stick_slip_system(coupled_single_params(cp));
  std::mt19937 rng(3);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int i = 0; i < 50; ++i) {
    const Vec X1 = v2(u(rng), 0.29 * u(rng));
    const Vec X2 = v2(u(rng), 0.29 * u(rng));
    Vec x4(4);
    x4 << X1(0), X1(1), X2(0), X2(1);
    const Vec vj = joint.interior_velocity(0, x4);
    const Vec v1 = single.interior_velocity(0, X1);
    const Vec v2s = single.interior_velocity(0, X2);
    CHECK(std::abs(vj(0) - v1(0)) < 1e-14);
    CHECK(std::abs(vj(1) - v1(1)) < 1e-14);
    CHECK(std::abs(vj(2) - v2s(0)) < 1e-14);
    CHECK(std::abs(vj(3) - v2s(1)) < 1e-14);
  }

  cp.k3 = 0.02;
  // Both sticking: joint velocity (u, 0, u, 0) regardless of coupling.
  const Vec vstick = coupled_field(cp, v2(0.1, cp.u_belt), true, v2(-0.4, cp.u_belt), true);
  CHECK(vstick(0) == Catch::Approx(cp.u_belt));
  CHECK(vstick(1) == 0.0);
  CHECK(vstick(2) == Catch::Approx(cp.u_belt));
  CHECK(vstick(3) == 0.0);
  // Exchange symmetry.
  const Vec a = v2(0.3, 0.1), b = v2(-0.2, 0.05);
  const Vec vab = coupled_field(cp, a, false, b, false);
  const Vec vba = coupled_field(cp, b, false, a, false);
  CHECK(std::abs(vab(0) - vba(2)) < 1e-15);
  CHECK(std::abs(vab(1) - vba(3)) < 1e-15);
  CHECK(std::abs(vab(2) - vba(0)) < 1e-15);
  CHECK(std::abs(vab(3) - vba(1)) < 1e-15);
}

TEST_CASE("sliding projections are exact on the normals", "[models]") {
  auto sys = planar_system({0.2, 1.0});
  std::mt19937 rng(5);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int b = 0; b < 4; ++b) {
    const auto& bd = sys.boundaries[b];
    for (int i = 0; i < 25; ++i) {
      Vec x = v2(u(rng), u(rng));
      x -= bd.level(x) * bd.normal;  // place on the wall
      if (!in_sliding_region(sys, b, x)) continue;
      CHECK(bd.normal.dot(sliding_field(sys, b, x)) == 0.0);
    }
  }
}
