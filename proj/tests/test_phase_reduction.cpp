#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>

#include "common.hpp"
#include "lcsc/phase_reduction.hpp"
#include "lcsc/sensitivity.hpp"

using namespace lcsc;
using lcsc_test::v2;

namespace {

double median(std::vector<double> v) {
  REQUIRE(!v.empty());
  std::sort(v.begin(), v.end());
  return v[v.size() / 2];
}

std::shared_ptr<const FilippovSystem> planar_sys() {
  static auto sys = std::make_shared<FilippovSystem>(planar_system({0.2, 1.0}));
  return sys;
}

/// Log-spiral flow curve of the planar interior field through radius scale
/// exp(rho_off) relative to the east-wall liftoff point.
std::vector<Vec> planar_spiral(double rho_off, double dtheta, int n = 180) {
  const double th0 = std::atan2(0.2, 1.0);
  const double rho0 = 0.5 * std::log(1.04);
  std::vector<Vec> pts;
  for (int i = 0; i <= n; ++i) {
    const double th = th0 - dtheta * i / n;
    const double r = std::exp(rho0 + 0.2 * (th - th0) + rho_off);
    pts.push_back(v2(r * std::cos(th), r * std::sin(th)));
  }
  return pts;
}

}  // namespace

TEST_CASE("asymptotic phase identities on the cycle", "[phase]") {
  const auto& lc = lcsc_test::planar_cycle();
  auto sys = planar_sys();
  CHECK(*asymptotic_phase(sys, lc, lc.anchor_event().state) == Catch::Approx(0.0).margin(1e-9));
  for (double f : {0.13, 0.4, 0.62, 0.97}) {
    const auto p = asymptotic_phase(sys, lc, lc.state(f * lc.T0));
    REQUIRE(p.has_value());
    CHECK(std::abs(periodic_difference(*p, f * lc.T0, lc.T0)) < 1e-6);
  }
}

TEST_CASE("asymptotic phase advances at unit rate", "[phase]") {
  const auto& lc = lcsc_test::planar_cycle();
  auto sys = planar_sys();
  const double dt = lc.T0 / 100.0;
  for (auto [x, y] : {std::pair{0.52, 0.31}, {-0.68, 0.12}, {0.05, -0.77}, {0.9, 0.9}}) {
    const Vec p0 = v2(x, y);
    const auto a = asymptotic_phase(sys, lc, p0);
    REQUIRE(a.has_value());
    IntegrateOptions io;
    io.store_dense = false;
    auto tr = integrate(sys, p0, infer_mode(*sys, p0), 0.0, dt, io);
    const auto b = asymptotic_phase(sys, lc, tr.final_state);
    REQUIRE(b.has_value());
    CHECK(std::abs(periodic_difference(*b, *a, lc.T0) - dt) < 1e-4);
  }
}

TEST_CASE("unconverged cells are flagged, not errored", "[phase]") {
  const auto& lc = lcsc_test::planar_cycle();
  auto sys = planar_sys();
  PhaseOptions po;
  po.max_periods = 5;
  CHECK_FALSE(asymptotic_phase(sys, lc, v2(0.0, 0.0), po).has_value());
  GridSpec tiny;
  tiny.nx = 3;
  tiny.ny = 3;
  auto field = isochron_grid(sys, lc, tiny, po);
  CHECK(field.converged(1, 1) == 0.0);  // the repelling origin
  CHECK(field.converged.sum() == 8.0);
}

TEST_CASE("isochrons meet sliding walls perpendicularly", "[phase]") {
  const auto& lc = lcsc_test::planar_cycle();
  auto sys = planar_sys();
  const double h = 2e-3;
  std::vector<double> ratios;
  for (double x : {0.5, 0.3, 0.1, -0.1}) {  // interior of the north-wall sliding range
    const Vec p = v2(x, 1.0);
    const auto f0 = asymptotic_phase(sys, lc, p);
    const auto f1 = asymptotic_phase(sys, lc, p - h * v2(0, 1));
    const auto f2 = asymptotic_phase(sys, lc, p - 2 * h * v2(0, 1));
    const auto t1 = asymptotic_phase(sys, lc, p - h * v2(1, 0));
    const auto t2 = asymptotic_phase(sys, lc, p + h * v2(1, 0));
    const double dn = (3.0 * *f0 - 4.0 * *f1 + *f2) / (2 * h);
    const double dtan = periodic_difference(*t2, *t1, lc.T0) / (2 * h);
    ratios.push_back(std::abs(dn / dtan));
    // Tangential phase slope along the wall equals 1 / |F_slide|.
    CHECK(std::abs(std::abs(dtan) - 1.0 / std::abs(0.2 * x - 1.0)) < 1e-3);
  }
  CHECK(*std::max_element(ratios.begin(), ratios.end()) < 0.02);
}

TEST_CASE("isochron level sets are grid-converged", "[phase]") {
  const auto& lc = lcsc_test::planar_cycle();
  auto sys = planar_sys();
  auto crossings = [&](const PhaseField& f, double level, int j) {
    std::vector<double> xs;
    for (int i = 0; i + 1 < f.grid.nx; ++i) {
      if (!f.ok(i, j) || !f.ok(i + 1, j)) continue;
      const double a = periodic_difference(f.phi(j, i), level, f.T0);
      const double b = periodic_difference(f.phi(j, i + 1), level, f.T0);
      if (a == 0.0 || (a > 0) == (b > 0) || std::abs(a - b) > f.T0 / 4) continue;
      xs.push_back(f.grid.x_at(i) + f.grid.dx() * a / (a - b));
    }
    return xs;
  };
  GridSpec coarse;
  coarse.nx = coarse.ny = 31;
  GridSpec fine;
  fine.nx = fine.ny = 61;
  auto fc = isochron_grid(sys, lc, coarse);
  auto ff = isochron_grid(sys, lc, fine);
  const double level = 2.0;
  const auto xs_c = crossings(fc, level, 21);  // scanline y = 0.4
  const auto xs_f = crossings(ff, level, 42);
  REQUIRE(!xs_c.empty());
  for (double xc : xs_c) {
    double best = 1e9;
    for (double xf : xs_f) best = std::min(best, std::abs(xf - xc));
    CHECK(best < coarse.dx());
  }
}

TEST_CASE("kink in the phase gradient along the osculating spiral", "[phase]") {
  const auto& lc = lcsc_test::planar_cycle();
  auto sys = planar_sys();
  GridSpec g;
  g.nx = g.ny = 101;
  auto field = isochron_grid(sys, lc, g);
  const double window = 0.25 * lc.T0;
  const auto kink_jumps = kink_scan(field, planar_spiral(0.0, window), 1.6);
  std::vector<double> pooled;
  const double gap = 0.2 * M_PI / 2.0;
  for (int j = 0; j < 10; ++j) {
    const double f = 0.30 + 0.30 * j / 9.0;
    for (double x : kink_scan(field, planar_spiral(-f * gap, window), 1.6)) pooled.push_back(x);
  }
  const double ratio = median(kink_jumps) / median(pooled);
  INFO("kink " << median(kink_jumps) << " control " << median(pooled) << " ratio " << ratio);
  CHECK(ratio > 3.0);
}

TEST_CASE("no kink anywhere in a smooth system", "[phase]") {
  const auto& lc = lcsc_test::rotor_cycle();
  auto sys = std::make_shared<FilippovSystem>(lcsc_test::rotor_system());
  GridSpec g;
  g.nx = g.ny = 81;
  g.x_min = g.y_min = -1.3;
  g.x_max = g.y_max = 1.3;
  auto field = isochron_grid(sys, lc, g);
  std::vector<double> all;
  for (double r : {1.15, 1.0, 0.85}) {
    std::vector<Vec> circle;
    for (int i = 0; i <= 160; ++i) {
      const double th = 2.0 * M_PI * i / 160.0;
      circle.push_back(v2(r * std::cos(th), r * std::sin(th)));
    }
    for (double x : kink_scan(field, circle, 1.6)) all.push_back(x);
  }
  INFO("median " << median(all) << " max " << *std::max_element(all.begin(), all.end()));
  CHECK(median(all) < 0.05);
}

namespace {

struct CoupledFixture {
  LimitCycle lc;
  SensitivityCurve z;
  InteractionFunction hf;
  CoupledStickSlipParams params;

  CoupledFixture() {
    params.k3 = 0.001;
    auto ssys = std::make_shared<FilippovSystem>(stick_slip_system(coupled_single_params(params)));
    lc = find_limit_cycle(ssys, v2(1.2, 0.0), lcsc_test::stick_slip_anchor());
    z = iprc(lc);
    hf = h_function(lc, z, CouplingSpec{1.0, params.m}, 512);
  }
};

const CoupledFixture& coupled() {
  static const CoupledFixture f;
  return f;
}

}  // namespace

TEST_CASE("interaction function symmetry and zeros", "[phase]") {
  const auto& hf = coupled().hf;
  const int n = static_cast<int>(hf.psi.size());
  for (int k = 0; k < n; ++k) {
    CHECK(hf.H_odd[k] + hf.H_odd[(n - k) % n] == 0.0);  // odd by construction
  }
  CHECK(hf.H_odd[0] == 0.0);
  CHECK(hf.H_odd[n / 2] == 0.0);
  // Odd about T0/2 as well.
  for (int m = 1; m < n / 2; m += 7) {
    CHECK(hf.H_odd[n / 2 + m] == Catch::Approx(-hf.H_odd[n / 2 - m]).margin(1e-14));
  }
}

TEST_CASE("anti-phase locking of coupled stick-slip oscillators", "[phase]") {
  const auto& f = coupled();
  REQUIRE(f.hf.fixed_points.size() == 2);
  const auto& at0 = f.hf.fixed_points[0];
  const auto& at_half = f.hf.fixed_points[1];
  CHECK(at0.psi == Catch::Approx(0.0).margin(1e-9));
  CHECK(at0.slope > 0.0);
  CHECK_FALSE(at0.stable);
  CHECK(at_half.psi == Catch::Approx(f.lc.T0 / 2.0).margin(1e-6));
  CHECK(at_half.slope < 0.0);
  CHECK(at_half.stable);
  // Classification is a sign property, invariant under the coupling strength.
  for (double k3 : {0.001, 0.002, 0.1}) {
    CHECK(k3 * at0.slope > 0.0);
    CHECK(k3 * at_half.slope < 0.0);
  }
  // Near-zero plateau between the locked states.
  double hmax = 0.0;
  for (double v : f.hf.H_odd) hmax = std::max(hmax, std::abs(v));
  int low = 0;
  for (double v : f.hf.H_odd) {
    if (std::abs(v) < 0.05 * hmax) ++low;
  }
  CHECK(low > static_cast<int>(0.2 * f.hf.H_odd.size()));
}

TEST_CASE("phase model trajectories", "[phase]") {
  const auto& f = coupled();
  // A phase-locked start stays put.
  auto locked = phase_model_simulate(f.hf, 0.001, f.lc.T0 / 2.0, 5000.0, 500.0);
  for (const auto& [t, p] : locked) CHECK(std::abs(p - f.lc.T0 / 2.0) < 1e-6);
  // Doubling k3 and halving time leaves the trajectory invariant.
  auto slow = phase_model_simulate(f.hf, 0.001, 0.5, 4000.0, 400.0);
  auto fast = phase_model_simulate(f.hf, 0.002, 0.5, 2000.0, 200.0);
  REQUIRE(slow.size() == fast.size());
  for (size_t i = 0; i < slow.size(); ++i) {
    CHECK(slow[i].second == Catch::Approx(fast[i].second).margin(1e-7));
  }
  // Long-horizon value from a near-in-phase start.
  auto run = phase_model_simulate(f.hf, 0.001, 0.01, 80000.0, 1000.0);
  CHECK(std::abs(run.back().second - 4.2449) <= 0.05 * 4.2449);
}

TEST_CASE("full coupled model phase difference", "[phase]") {
  const auto& f = coupled();
  auto sys4 = std::make_shared<FilippovSystem>(coupled_system(f.params));
  // Identical initial states stay in phase.
  {
    Vec x0(4);
    const Vec a = f.lc.state(0.3);
    x0 << a(0), a(1), a(0), a(1);
    auto psi = full_model_phase_difference(sys4, x0, 8.0 * f.lc.T0, f.lc.T0);
    REQUIRE(!psi.empty());
    for (const auto& [t, p] : psi) {
      CHECK(std::min(p, f.lc.T0 - p) < 1e-6);
    }
  }
  // Offset start: the extracted difference follows the phase model.
  {
    const double psi0 = 3.0;
    Vec x0(4);
    const Vec a = f.lc.state(0.0), b = f.lc.state(-psi0);
    x0 << a(0), a(1), b(0), b(1);
    auto actual = full_model_phase_difference(sys4, x0, 400.0, f.lc.T0);
    auto predicted = phase_model_simulate(f.hf, f.params.k3, psi0, 400.0, 1.0);
    REQUIRE(actual.size() > 30);
    double worst = 0.0;
    for (const auto& [t, p] : actual) {
      const auto idx = std::min(static_cast<size_t>(t), predicted.size() - 1);
      worst = std::max(worst, std::abs(predicted[idx].second - p));
    }
    INFO("max deviation " << worst);
    CHECK(worst < 0.05);
    CHECK(actual.back().second > psi0);  // drifting away from in-phase
  }
  // Desynchronization guard: oscillator 2 pinned far outside the cycling
  // regime never produces liftoffs.
  {
    Vec bad(4);
    bad << 1.0, 0.295, 40.0, -10.0;
    CHECK_THROWS_AS(full_model_phase_difference(sys4, bad, 8.0 * f.lc.T0, f.lc.T0),
                    Error);
  }
}
