#pragma once

#include <json.hpp>

#include <map>
#include <string>
#include <vector>

#include "lcsc/core.hpp"
#include "lcsc/models.hpp"

namespace lcsc {

/// Complete description of one experiment run: model, parameter overrides,
/// perturbation, tolerances, and output selection. Round-trips losslessly
/// through its JSON form.
struct ExperimentManifest {
  std::string model = "planar";  // planar | stick-slip | coupled | a JSON file path
  std::map<std::string, double> params;

  struct Perturb {
    std::vector<PerturbationSpec::Term> terms;
    std::vector<int> region_mask;
    double eps = 0.0;
  } perturb;

  std::string format = "csv";  // csv | svg | both
  double tol_rel = 1e-10;
  double tol_abs = 1e-12;
  unsigned seed = 0;

  // Timing surfaces for piecewise experiments (planar model).
  bool timing_enabled = false;
  double timing_level_y = 0.5;
  bool timing_wedge = false;
  double timing_level_x = -0.5;

  // Subcommand knobs.
  std::string rescaling = "uniform";  // src: uniform | piecewise
  double t_end = 80000.0;             // couple horizon
  double k3 = 0.001;                  // coupling strength
  double psi0 = 3.0;                  // initial phase offset of the coupled run
  int grid_n = 161;                   // isochron/kink grid resolution
  double u0_x = 0.0, u0_y = 0.1;      // variational initial displacement

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["model"] = model;
    j["params"] = params;
    nlohmann::json terms = nlohmann::json::array();
    for (const auto& t : perturb.terms) terms.push_back({{"param", t.param}, {"weight", t.weight}});
    j["perturb"] = {{"terms", terms}, {"region_mask", perturb.region_mask}, {"eps", perturb.eps}};
    j["format"] = format;
    j["tol_rel"] = tol_rel;
    j["tol_abs"] = tol_abs;
    j["seed"] = seed;
    j["timing"] = {{"enabled", timing_enabled},
                   {"level_y", timing_level_y},
                   {"wedge", timing_wedge},
                   {"level_x", timing_level_x}};
    j["rescaling"] = rescaling;
    j["t_end"] = t_end;
    j["k3"] = k3;
    j["psi0"] = psi0;
    j["grid_n"] = grid_n;
    j["u0"] = {u0_x, u0_y};
    return j;
  }

  static ExperimentManifest from_json(const nlohmann::json& j) {
    ExperimentManifest m;
    m.model = j.value("model", m.model);
    if (j.contains("params")) {
      for (const auto& [k, v] : j.at("params").items()) m.params[k] = v.get<double>();
    }
    if (j.contains("perturb")) {
      const auto& p = j.at("perturb");
      for (const auto& t : p.value("terms", nlohmann::json::array())) {
        m.perturb.terms.push_back({t.at("param").get<std::string>(), t.value("weight", 1.0)});
      }
      m.perturb.region_mask = p.value("region_mask", std::vector<int>{});
      m.perturb.eps = p.value("eps", 0.0);
    }
    m.format = j.value("format", m.format);
    m.tol_rel = j.value("tol_rel", m.tol_rel);
    m.tol_abs = j.value("tol_abs", m.tol_abs);
    m.seed = j.value("seed", m.seed);
    if (j.contains("timing")) {
      const auto& t = j.at("timing");
      m.timing_enabled = t.value("enabled", false);
      m.timing_level_y = t.value("level_y", 0.5);
      m.timing_wedge = t.value("wedge", false);
      m.timing_level_x = t.value("level_x", -0.5);
    }
    m.rescaling = j.value("rescaling", m.rescaling);
    m.t_end = j.value("t_end", m.t_end);
    m.k3 = j.value("k3", m.k3);
    m.psi0 = j.value("psi0", m.psi0);
    m.grid_n = j.value("grid_n", m.grid_n);
    if (j.contains("u0")) {
      const auto u = j.at("u0").get<std::vector<double>>();
      require(u.size() == 2, "manifest: u0 must have two entries");
      m.u0_x = u[0];
      m.u0_y = u[1];
    }
    return m;
  }

  PerturbationSpec perturbation_spec() const {
    PerturbationSpec spec;
    spec.terms = perturb.terms;
    spec.region_mask = perturb.region_mask;
    return spec;
  }
};

}  // namespace lcsc
