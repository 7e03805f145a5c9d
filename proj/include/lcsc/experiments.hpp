#pragma once

#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "lcsc/integrator.hpp"
#include "lcsc/io.hpp"
#include "lcsc/manifest.hpp"
#include "lcsc/models.hpp"
#include "lcsc/phase_reduction.hpp"
#include "lcsc/sensitivity.hpp"
#include "lcsc/system_config.hpp"

namespace lcsc::experiments {

struct Context {
  ExperimentManifest manifest;
  std::filesystem::path out_dir = "out";
};

struct ModelBundle {
  ParametricFamily family;
  EventSpec anchor;
  Vec guess;
  std::optional<RegionWindow> region_a;  // timing regions, when defined
  std::optional<RegionWindow> region_b;
  bool region_b_exit_moves = false;  // region_b exits through a moving surface
  std::vector<EventSpec> cuts;       // piecewise rescaling cut events
};

namespace detail {

inline double param_or(const ExperimentManifest& m, const std::string& key, double fallback) {
  const auto it = m.params.find(key);
  return it == m.params.end() ? fallback : it->second;
}

inline ModelBundle build_model(const ExperimentManifest& m) {
  ModelBundle b;
  if (m.model == "planar") {
    PlanarParams p;
    p.alpha = param_or(m, "alpha", p.alpha);
    p.omega = param_or(m, "omega", p.omega);
    PlanarTimingConfig timing;
    timing.enabled = m.timing_enabled || !m.perturb.region_mask.empty();
    timing.level_y = m.timing_level_y;
    timing.use_exit_line = m.timing_wedge;
    timing.level_x = m.timing_level_x;
    const auto spec = m.perturbation_spec();
    b.family = planar_family(p, spec, timing);
    b.guess = (Vec(2) << 0.5, 0.0).finished();
    if (timing.enabled) {
      const EventSpec entry{EventKind::TimingSurfaceCrossing, 0, +1};
      const EventSpec exit = timing.use_exit_line
                                 ? EventSpec{EventKind::TimingSurfaceCrossing, 1, -1}
                                 : EventSpec{EventKind::TimingSurfaceCrossing, 0, -1};
      b.anchor = entry;
      b.region_a = RegionWindow{entry, exit, "I"};
      b.region_b = RegionWindow{exit, entry, "II"};
      b.cuts = {entry, exit};
    } else {
      b.anchor = EventSpec{EventKind::Liftoff, 0, 0};
    }
  } else if (m.model == "stick-slip" || m.model == "coupled") {
    StickSlipParams p;
    if (m.model == "coupled") {
      CoupledStickSlipParams cp;
      cp.m = param_or(m, "m", cp.m);
      cp.k = param_or(m, "k", cp.k);
      cp.delta = param_or(m, "delta", cp.delta);
      cp.gamma_f = param_or(m, "gamma_f", cp.gamma_f);
      cp.eta_f = param_or(m, "eta_f", cp.eta_f);
      cp.u_belt = param_or(m, "u_belt", cp.u_belt);
      p = coupled_single_params(cp);
    } else {
      p.m = param_or(m, "m", p.m);
      p.k = param_or(m, "k", p.k);
      p.c = param_or(m, "c", p.c);
      p.delta = param_or(m, "delta", p.delta);
      p.gamma_f = param_or(m, "gamma_f", p.gamma_f);
      p.eta_f = param_or(m, "eta_f", p.eta_f);
      p.u_belt = param_or(m, "u_belt", p.u_belt);
    }
    b.family = stick_slip_family(p, m.perturbation_spec());
    b.anchor = EventSpec{EventKind::Liftoff, 0, 0};
    const double x_lift = (1.0 - p.c * p.u_belt) / p.k;
    b.guess = (Vec(2) << x_lift + 0.45, 0.0).finished();
    const EventSpec lift{EventKind::Liftoff, 0, 0};
    const EventSpec land{EventKind::Landing, 0, 0};
    b.region_a = RegionWindow{lift, land, "slip"};
    b.region_b = RegionWindow{land, lift, "stick"};
    b.region_b_exit_moves = true;  // the liftoff line depends on the parameters
    b.cuts = {lift, land};
  } else if (m.model.size() > 5 && m.model.rfind(".json") == m.model.size() - 5) {
    std::ifstream in(m.model);
    require(in.good(), "cannot open system config " + m.model);
    nlohmann::json j;
    in >> j;
    FilippovSystem sys = system_from_json(j);
    b.family.base = sys;
    b.family.at = [sys](double) { return sys; };
    require(j.contains("anchor") && j.contains("guess"),
            "system config used as a model needs 'anchor' and 'guess' entries");
    const auto& a = j.at("anchor");
    const std::string kind = a.at("kind").get<std::string>();
    b.anchor.kind = kind == "liftoff"    ? EventKind::Liftoff
                    : kind == "landing"  ? EventKind::Landing
                    : kind == "crossing" ? EventKind::TransversalCrossing
                                         : EventKind::TimingSurfaceCrossing;
    b.anchor.id = a.value("id", 0);
    b.anchor.direction = a.value("direction", 0);
    const auto g = j.at("guess").get<std::vector<double>>();
    b.guess = Eigen::Map<const Vec>(g.data(), static_cast<Eigen::Index>(g.size()));
  } else {
    throw ContractViolation("unknown model '" + m.model + "'");
  }
  return b;
}

inline CycleOptions cycle_options(const ExperimentManifest& m) {
  CycleOptions c;
  c.integrate.ode.rtol = m.tol_rel;
  c.integrate.ode.atol = m.tol_abs;
  return c;
}

inline std::vector<std::string> stamp(const Context& ctx, const std::string& figure) {
  std::vector<std::string> s;
  s.push_back("model: " + ctx.manifest.model);
  if (!figure.empty()) s.push_back("figure: " + figure);
  s.push_back("manifest: " + ctx.manifest.to_json().dump());
  return s;
}

inline bool want_csv(const Context& c) { return c.manifest.format != "svg"; }
inline bool want_svg(const Context& c) { return c.manifest.format != "csv"; }

inline std::string cycle_figure(const std::string& model) {
  if (model == "planar") return "3";
  if (model == "stick-slip") return "6";
  return "";
}

struct PiecewiseSetup {
  LocalTimingResult region_a;
  double nu_b = 0.0;
  double T1_total = 0.0;
  std::vector<std::pair<RegionWindow, double>> nus;
  std::string method_b;
};

/// lTRC-based rescaling factors for the two standard regions. Regions whose
/// exit surface moves with the perturbation take the complement of the
/// global shift.
inline PiecewiseSetup piecewise_setup(const ModelBundle& b, const LimitCycle& lc,
                                      const LimitCycle& lce, double eps,
                                      const SensitivityCurve& z) {
  require(b.region_a.has_value() && b.region_b.has_value(),
          "piecewise rescaling needs timing regions for this model");
  PiecewiseSetup out;
  out.T1_total = period_shift_T1(lc, z);
  out.region_a = ltrc(lc, *b.region_a, &lce, eps);
  if (b.region_b_exit_moves) {
    const double t_in = lc.find_event(b.region_b->enter).time;
    double t_out = lc.find_event(b.region_b->exit).time;
    if (t_out <= t_in) t_out += lc.T0;
    out.nu_b = complement_nu1(out.T1_total, out.region_a.T1_region, t_out - t_in);
    out.method_b = "complement";
  } else {
    const auto rb = ltrc(lc, *b.region_b, &lce, eps);
    out.nu_b = rb.nu1;
    out.method_b = "ltrc";
  }
  out.nus = {{*b.region_a, out.region_a.nu1}, {*b.region_b, out.nu_b}};
  return out;
}

inline void write_comparison_csv(const std::filesystem::path& path, const LimitCycle& lc,
                                 const LimitCycle& lce, double eps, const TimeRescaling& resc,
                                 const SensitivityCurve& g1,
                                 const std::vector<std::string>& comments, int n = 1024) {
  const int dim = lc.system->dim;
  std::vector<std::string> header{"t"};
  for (int i = 1; i <= dim; ++i) header.push_back("delta_" + std::to_string(i));
  for (int i = 1; i <= dim; ++i) header.push_back("model_" + std::to_string(i));
  io::CsvWriter csv(path, header, comments);
  for (int i = 0; i < n; ++i) {
    const double t = (i + 0.5) * lc.T0 / n;
    const Vec delta = lce.state(resc.tau(t)) - lc.state(t);
    const Vec model = eps * g1.eval(t);
    std::vector<double> vals{t};
    for (int d = 0; d < dim; ++d) vals.push_back(delta(d));
    for (int d = 0; d < dim; ++d) vals.push_back(model(d));
    csv.row(vals);
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Subcommands.
// ---------------------------------------------------------------------------

inline LimitCycle find_model_cycle(const ModelBundle& b, const ExperimentManifest& m) {
  return find_limit_cycle(std::make_shared<FilippovSystem>(b.family.base), b.guess, b.anchor,
                          detail::cycle_options(m));
}

inline void run_cycle(const Context& ctx) {
  const auto b = detail::build_model(ctx.manifest);
  const auto lc = find_model_cycle(b, ctx.manifest);
  io::write_json(ctx.out_dir / "cycle_summary.json", io::cycle_summary(lc));
  const auto comments = detail::stamp(ctx, detail::cycle_figure(ctx.manifest.model));
  if (detail::want_csv(ctx)) {
    Trajectory tr;
    tr.system = lc.system;
    tr.segments = lc.segments;
    tr.events = lc.events;
    io::write_trajectory_csv(ctx.out_dir / "cycle.csv", tr, 200, comments);
  }
  if (detail::want_svg(ctx) && lc.system->dim == 2) {
    io::SvgSeries orbit;
    for (int i = 0; i <= 1200; ++i) {
      const Vec x = lc.state(lc.T0 * i / 1200.0);
      orbit.points.push_back({x(0), x(1)});
    }
    io::write_svg_plot(ctx.out_dir / "cycle.svg", {orbit}, ctx.manifest.model + " limit cycle",
                       "x", "y");
  }
}

inline void run_prc(const Context& ctx) {
  const auto b = detail::build_model(ctx.manifest);
  const auto lc = find_model_cycle(b, ctx.manifest);
  const auto z = iprc(lc);
  const std::string figure = ctx.manifest.model == "planar"     ? "3B"
                             : ctx.manifest.model == "coupled"  ? "9-left"
                                                                : "";
  if (detail::want_csv(ctx)) {
    io::write_curve_csv(ctx.out_dir / "prc.csv", z, "z", detail::stamp(ctx, figure));
  }
  if (detail::want_svg(ctx)) {
    std::vector<io::SvgSeries> series(static_cast<size_t>(lc.system->dim));
    const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd"};
    for (int d = 0; d < lc.system->dim; ++d) series[d].color = colors[d % 4];
    for (int i = 0; i <= 2000; ++i) {
      const double t = lc.T0 * i / 2000.0;
      const Vec v = z.eval(t);
      for (int d = 0; d < lc.system->dim; ++d) series[d].points.push_back({t, v(d)});
    }
    io::write_svg_plot(ctx.out_dir / "prc.svg", series, "phase response curve", "t", "z");
  }
  nlohmann::json summary;
  summary["period"] = lc.T0;
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const double t = (i + 0.5) * lc.T0 / 1000.0;
    worst = std::max(worst, std::abs(lc.velocity(t).dot(z.eval(t)) - 1.0));
  }
  summary["max_normalization_error"] = worst;
  if (!ctx.manifest.perturb.terms.empty()) {
    const double T1 = period_shift_T1(lc, z);
    summary["T1"] = T1;
    summary["nu1"] = T1 / lc.T0;
    if (ctx.manifest.perturb.eps != 0.0) {
      const double eps = ctx.manifest.perturb.eps;
      const auto lce = perturbed_cycle(b.family, eps, b.anchor, lc.anchor_event().state,
                                       detail::cycle_options(ctx.manifest));
      summary["T1_finite_difference"] = (lce.T0 - lc.T0) / eps;
      summary["T_eps"] = lce.T0;
    }
  }
  io::write_json(ctx.out_dir / "prc_summary.json", summary);
}

inline void run_variational(const Context& ctx) {
  const auto b = detail::build_model(ctx.manifest);
  const auto lc = find_model_cycle(b, ctx.manifest);
  Vec u0(2);
  u0 << ctx.manifest.u0_x, ctx.manifest.u0_y;
  require(lc.system->dim == 2, "variational subcommand drives planar-sized displacements");
  const auto u = variational_forward(lc, u0);
  if (detail::want_csv(ctx)) {
    io::write_curve_csv(ctx.out_dir / "variational.csv", u, "u", detail::stamp(ctx, "4"));
  }
  const auto fm = fundamental_matrix(lc);
  nlohmann::json summary;
  summary["period"] = lc.T0;
  summary["u0"] = {u0(0), u0(1)};
  summary["closure_error"] = (u.final_value - u0).norm();
  summary["monodromy"] = io::matrix_json(fm.monodromy);
  Eigen::EigenSolver<Mat> es(fm.monodromy);
  nlohmann::json eigs = nlohmann::json::array();
  for (int i = 0; i < fm.monodromy.rows(); ++i) {
    eigs.push_back({{"re", es.eigenvalues()(i).real()}, {"im", es.eigenvalues()(i).imag()}});
  }
  summary["floquet_multipliers"] = eigs;
  io::write_json(ctx.out_dir / "variational_summary.json", summary);
}

inline void run_ltrc(const Context& ctx) {
  const auto b = detail::build_model(ctx.manifest);
  require(b.region_a.has_value(), "ltrc needs a model with timing regions "
                                  "(stick-slip, or planar with timing surfaces)");
  const auto lc = find_model_cycle(b, ctx.manifest);
  const auto z = iprc(lc);
  require(!ctx.manifest.perturb.terms.empty() && ctx.manifest.perturb.eps != 0.0,
          "ltrc needs a perturbation and eps for the timing shifts");
  const double eps = ctx.manifest.perturb.eps;
  const auto lce = perturbed_cycle(b.family, eps, b.anchor, lc.anchor_event().state,
                                   detail::cycle_options(ctx.manifest));
  const auto setup = detail::piecewise_setup(b, lc, lce, eps, z);

  if (detail::want_csv(ctx)) {
    io::write_curve_csv(ctx.out_dir / ("ltrc_" + b.region_a->label + ".csv"), setup.region_a.eta,
                        "eta", detail::stamp(ctx, ""));
    if (!b.region_b_exit_moves) {
      const auto rb = ltrc(lc, *b.region_b, &lce, eps);
      io::write_curve_csv(ctx.out_dir / ("ltrc_" + b.region_b->label + ".csv"), rb.eta, "eta",
                          detail::stamp(ctx, ""));
    }
  }
  nlohmann::json summary;
  summary["period"] = lc.T0;
  summary["T1_total"] = setup.T1_total;
  summary[b.region_a->label] = {{"T0", setup.region_a.T0_region},
                                {"T1", setup.region_a.T1_region},
                                {"nu1", setup.region_a.nu1},
                                {"entry_shift_norm", setup.region_a.entry_shift.norm()},
                                {"method", "ltrc"}};
  summary[b.region_b->label] = {{"nu1", setup.nu_b}, {"method", setup.method_b}};
  io::write_json(ctx.out_dir / "ltrc_summary.json", summary);
}

inline void run_src(const Context& ctx) {
  const auto b = detail::build_model(ctx.manifest);
  require(!ctx.manifest.perturb.terms.empty() && ctx.manifest.perturb.eps != 0.0,
          "src needs a perturbation and eps");
  const double eps = ctx.manifest.perturb.eps;
  const auto lc = find_model_cycle(b, ctx.manifest);
  const auto lce = perturbed_cycle(b.family, eps, b.anchor, lc.anchor_event().state,
                                   detail::cycle_options(ctx.manifest));
  const auto z = iprc(lc);
  const double T1 = period_shift_T1(lc, z);

  nlohmann::json summary;
  summary["period"] = lc.T0;
  summary["period_eps"] = lce.T0;
  summary["eps"] = eps;
  summary["T1"] = T1;

  const std::string figure = ctx.manifest.model == "stick-slip"  ? "7"
                             : ctx.manifest.timing_enabled ||
                                     !ctx.manifest.perturb.region_mask.empty()
                                 ? "8"
                                 : "5A";

  SrcSpec uniform;
  uniform.nu1_uniform = T1 / lc.T0;
  uniform.section = b.anchor;
  const auto g_uniform = isrc(lc, lce, eps, uniform);
  const auto resc_uniform = rescale_time(lc, lce);
  const auto cmp_uniform = compare_isrc(lc, lce, eps, resc_uniform, g_uniform.gamma1);
  summary["uniform"] = {{"nu1", *uniform.nu1_uniform},
                        {"rel_l2", cmp_uniform.rel_l2},
                        {"norm_delta", cmp_uniform.norm_delta},
                        {"norm_model", cmp_uniform.norm_model},
                        {"closure_defect", g_uniform.closure_defect},
                        {"periodic", g_uniform.periodic}};
  if (detail::want_csv(ctx)) {
    io::write_curve_csv(ctx.out_dir / "src_uniform.csv", g_uniform.gamma1, "gamma1",
                        detail::stamp(ctx, figure));
    detail::write_comparison_csv(ctx.out_dir / "src_compare_uniform.csv", lc, lce, eps,
                                 resc_uniform, g_uniform.gamma1, detail::stamp(ctx, figure));
  }

  if (ctx.manifest.rescaling == "piecewise") {
    const auto setup = detail::piecewise_setup(b, lc, lce, eps, z);
    SrcSpec piecewise;
    piecewise.nu1_regions = setup.nus;
    piecewise.section = b.anchor;
    const auto g_pw = isrc(lc, lce, eps, piecewise);
    const auto resc_pw = rescale_time(lc, lce, b.cuts);
    const auto cmp_pw = compare_isrc(lc, lce, eps, resc_pw, g_pw.gamma1);
    summary["piecewise"] = {{"nu1_" + b.region_a->label, setup.nus[0].second},
                            {"nu1_" + b.region_b->label, setup.nus[1].second},
                            {"rel_l2", cmp_pw.rel_l2},
                            {"norm_delta", cmp_pw.norm_delta},
                            {"norm_model", cmp_pw.norm_model},
                            {"closure_defect", g_pw.closure_defect},
                            {"periodic", g_pw.periodic}};
    if (detail::want_csv(ctx)) {
      io::write_curve_csv(ctx.out_dir / "src_piecewise.csv", g_pw.gamma1, "gamma1",
                          detail::stamp(ctx, figure));
      detail::write_comparison_csv(ctx.out_dir / "src_compare_piecewise.csv", lc, lce, eps,
                                   resc_pw, g_pw.gamma1, detail::stamp(ctx, figure));
    }
    if (detail::want_svg(ctx)) {
      io::SvgSeries sd, sm;
      sd.color = "#000000";
      sm.color = "#d62728";
      for (int i = 0; i < 800; ++i) {
        const double t = (i + 0.5) * lc.T0 / 800.0;
        sd.points.push_back({t, (lce.state(resc_pw.tau(t)) - lc.state(t))(0)});
        sm.points.push_back({t, eps * g_pw.gamma1.eval(t)(0)});
      }
      io::write_svg_plot(ctx.out_dir / "src_piecewise.svg", {sd, sm},
                         "shape response (piecewise rescaling), first component", "t", "dx");
    }
  }
  io::write_json(ctx.out_dir / "src_summary.json", summary);
}

inline void run_isochrons(const Context& ctx) {
  require(ctx.manifest.model == "planar", "isochrons are computed for the planar model");
  const auto b = detail::build_model(ctx.manifest);
  const auto lc = find_model_cycle(b, ctx.manifest);
  auto sys = lc.system;
  GridSpec grid;
  grid.nx = grid.ny = ctx.manifest.grid_n;
  PhaseOptions po;
  po.integrate.ode.rtol = ctx.manifest.tol_rel;
  po.integrate.ode.atol = ctx.manifest.tol_abs;
  const auto field = isochron_grid(sys, lc, grid, po);
  if (detail::want_csv(ctx)) {
    io::write_phase_field(ctx.out_dir / "isochrons.csv", ctx.out_dir / "isochrons_meta.json",
                          field, detail::stamp(ctx, "3A"));
  }
  if (detail::want_svg(ctx)) {
    auto contours = io::isochron_contours(field, 50);
    io::SvgSeries orbit;
    orbit.color = "#000000";
    for (int i = 0; i <= 1200; ++i) {
      const Vec x = lc.state(lc.T0 * i / 1200.0);
      orbit.points.push_back({x(0), x(1)});
    }
    contours.push_back(orbit);
    io::write_svg_plot(ctx.out_dir / "isochrons.svg", contours,
                       "isochrons at 50 evenly distributed phases", "x", "y");
  }
}

struct KinkScanResult {
  double kink_median = 0.0;
  double control_median = 0.0;
  double ratio = 0.0;
  std::vector<double> kink_jumps;
};

inline KinkScanResult kink_statistics(const LimitCycle& lc, const PhaseField& field,
                                      double alpha, double omega, double probe_cells = 1.6) {
  const double window = 0.25 * lc.T0;
  const double th0 = std::atan2(alpha, 1.0);
  const double rho0 = 0.5 * std::log(1.0 + alpha * alpha);
  auto spiral = [&](double rho_off) {
    std::vector<Vec> pts;
    for (int i = 0; i <= 180; ++i) {
      const double th = th0 - omega * window * i / 180.0;
      const double r = std::exp(rho0 + (alpha / omega) * (th - th0) + rho_off);
      pts.push_back((Vec(2) << r * std::cos(th), r * std::sin(th)).finished());
    }
    return pts;
  };
  KinkScanResult out;
  out.kink_jumps = kink_scan(field, spiral(0.0), probe_cells);
  std::vector<double> pooled;
  const double gap = (alpha / omega) * (M_PI / 2.0);
  for (int j = 0; j < 10; ++j) {
    const double f = 0.30 + 0.30 * j / 9.0;
    for (double v : kink_scan(field, spiral(-f * gap), probe_cells)) pooled.push_back(v);
  }
  auto median = [](std::vector<double> v) {
    require(!v.empty(), "kink scan produced no samples");
    std::sort(v.begin(), v.end());
    return v[v.size() / 2];
  };
  out.kink_median = median(out.kink_jumps);
  out.control_median = median(pooled);
  out.ratio = out.kink_median / out.control_median;
  return out;
}

inline void run_kink(const Context& ctx) {
  require(ctx.manifest.model == "planar", "the kink scan applies to the planar model");
  const auto b = detail::build_model(ctx.manifest);
  const auto lc = find_model_cycle(b, ctx.manifest);
  GridSpec grid;
  grid.nx = grid.ny = ctx.manifest.grid_n;
  const auto field = isochron_grid(lc.system, lc, grid);
  const double alpha = lc.system->params.at("alpha");
  const double omega = lc.system->params.at("omega");
  const auto stats = kink_statistics(lc, field, alpha, omega);
  if (detail::want_csv(ctx)) {
    io::CsvWriter csv(ctx.out_dir / "kink_jumps.csv", {"sample", "jump"},
                      detail::stamp(ctx, "3A"));
    for (size_t i = 0; i < stats.kink_jumps.size(); ++i) {
      csv.row({static_cast<double>(i), stats.kink_jumps[i]});
    }
  }
  nlohmann::json summary;
  summary["kink_median"] = stats.kink_median;
  summary["control_median"] = stats.control_median;
  summary["ratio"] = stats.ratio;
  io::write_json(ctx.out_dir / "kink_summary.json", summary);
}

inline void run_couple(const Context& ctx) {
  require(ctx.manifest.model == "coupled", "couple runs the coupled stick-slip model");
  CoupledStickSlipParams cp;
  cp.m = detail::param_or(ctx.manifest, "m", cp.m);
  cp.k = detail::param_or(ctx.manifest, "k", cp.k);
  cp.delta = detail::param_or(ctx.manifest, "delta", cp.delta);
  cp.gamma_f = detail::param_or(ctx.manifest, "gamma_f", cp.gamma_f);
  cp.eta_f = detail::param_or(ctx.manifest, "eta_f", cp.eta_f);
  cp.u_belt = detail::param_or(ctx.manifest, "u_belt", cp.u_belt);
  cp.k3 = ctx.manifest.k3;

  const auto b = detail::build_model(ctx.manifest);
  const auto lc = find_model_cycle(b, ctx.manifest);
  const auto z = iprc(lc);
  const auto hf = h_function(lc, z, CouplingSpec{1.0, cp.m}, 512);

  if (detail::want_csv(ctx)) {
    io::CsvWriter csv(ctx.out_dir / "interaction.csv", {"psi", "H", "H_odd"},
                      detail::stamp(ctx, "9-right"));
    for (size_t k = 0; k < hf.psi.size(); ++k) csv.row({hf.psi[k], hf.H[k], hf.H_odd[k]});
  }
  nlohmann::json summary;
  summary["period"] = lc.T0;
  summary["k3"] = cp.k3;
  summary["psi0"] = ctx.manifest.psi0;
  summary["fixed_points"] = nlohmann::json::array();
  for (const auto& fp : hf.fixed_points) {
    summary["fixed_points"].push_back(
        {{"psi", fp.psi}, {"slope", fp.slope}, {"stable", fp.stable}});
  }

  const double t_end = ctx.manifest.t_end;
  const auto predicted = phase_model_simulate(hf, cp.k3, ctx.manifest.psi0, t_end,
                                              std::max(1.0, t_end / 2000.0));
  io::write_series_csv(ctx.out_dir / "psi_predicted.csv", predicted, "t", "psi",
                       detail::stamp(ctx, "10"));
  summary["psi_predicted_end"] = predicted.back().second;

  // Full model, with psi checkpoints flushed every 1000 time units.
  auto sys4 = std::make_shared<FilippovSystem>(coupled_system(cp));
  Vec x0(4);
  const Vec a0 = lc.state(0.0), b0 = lc.state(-ctx.manifest.psi0);
  x0 << a0(0), a0(1), b0(0), b0(1);
  std::filesystem::create_directories(ctx.out_dir);
  std::ofstream psi_out(ctx.out_dir / "psi_actual.csv");
  for (const auto& c : detail::stamp(ctx, "10")) psi_out << "# " << c << "\n";
  psi_out << "t,psi\n";
  double next_flush = 1000.0;
  CoupledPhaseOptions copts;
  copts.integrate.ode.rtol = ctx.manifest.tol_rel;
  copts.integrate.ode.atol = ctx.manifest.tol_abs;
  copts.on_sample = [&](double t, double psi) {
    psi_out << io::fmt(t) << ',' << io::fmt(psi) << "\n";
    if (t >= next_flush) {
      psi_out.flush();
      next_flush += 1000.0;
    }
  };
  const auto actual = full_model_phase_difference(sys4, x0, t_end, lc.T0, copts);
  psi_out.flush();
  summary["psi_actual_end"] = actual.empty() ? 0.0 : actual.back().second;

  if (detail::want_svg(ctx)) {
    io::SvgSeries sp, sa;
    sp.color = "#d62728";
    sa.color = "#000000";
    sp.points = predicted;
    sa.points = actual;
    io::write_svg_plot(ctx.out_dir / "psi_compare.svg", {sa, sp},
                       "relative phase: full model (black) vs phase model (red)", "t", "psi");
  }
  io::write_json(ctx.out_dir / "couple_summary.json", summary);
}

/// Dispatch a subcommand; throws lcsc::Error subclasses on numerical failure.
inline void run(const std::string& sub, const Context& ctx) {
  std::filesystem::create_directories(ctx.out_dir);
  io::write_json(ctx.out_dir / "manifest.json", ctx.manifest.to_json());
  if (sub == "cycle") run_cycle(ctx);
  else if (sub == "prc") run_prc(ctx);
  else if (sub == "ltrc") run_ltrc(ctx);
  else if (sub == "variational") run_variational(ctx);
  else if (sub == "src") run_src(ctx);
  else if (sub == "isochrons") run_isochrons(ctx);
  else if (sub == "kink") run_kink(ctx);
  else if (sub == "couple") run_couple(ctx);
  else throw ContractViolation("unknown subcommand '" + sub + "'");
}

}  // namespace lcsc::experiments
