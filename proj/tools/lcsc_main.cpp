// Command-line runner for the limit-cycle sensitivity experiments.
//
// Subcommands: cycle, prc, ltrc, variational, src, isochrons, kink, couple.
// Exit codes: 0 success, 2 numerical failure (diagnostic.json written), 64
// usage error.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "lcsc/experiments.hpp"

namespace {

int parse_kv(const std::vector<std::string>& kvs, lcsc::ExperimentManifest& m) {
  for (const auto& kv : kvs) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) {
      std::cerr << "--param expects key=value, got '" << kv << "'\n";
      return 64;
    }
    try {
      m.params[kv.substr(0, eq)] = std::stod(kv.substr(eq + 1));
    } catch (const std::exception&) {
      std::cerr << "--param value is not a number in '" << kv << "'\n";
      return 64;
    }
  }
  return 0;
}

int parse_perturb(const std::vector<std::string>& specs, lcsc::ExperimentManifest& m) {
  for (const auto& s : specs) {
    const auto colon = s.find(':');
    lcsc::PerturbationSpec::Term t;
    t.param = s.substr(0, colon == std::string::npos ? s.size() : colon);
    if (colon != std::string::npos) {
      try {
        t.weight = std::stod(s.substr(colon + 1));
      } catch (const std::exception&) {
        std::cerr << "--perturb weight is not a number in '" << s << "'\n";
        return 64;
      }
    }
    m.perturb.terms.push_back(t);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Timing and shape sensitivity analysis of limit cycles with sliding components"};
  app.require_subcommand(1);

  lcsc::ExperimentManifest manifest;
  std::string out_dir = "out";
  std::string manifest_path;
  std::vector<std::string> kv_params;
  std::vector<std::string> perturb_specs;
  double alpha = -1.0, omega = -1.0;

  const std::vector<std::string> subs = {"cycle", "prc",       "ltrc", "variational",
                                         "src",   "isochrons", "kink", "couple"};
  for (const auto& name : subs) {
    auto* sc = app.add_subcommand(name);
    sc->add_option("--model", manifest.model, "planar | stick-slip | coupled | <system>.json");
    sc->add_option("--param", kv_params, "parameter override key=value")->take_all();
    sc->add_option("--alpha", alpha, "planar expansion rate (shortcut for --param alpha=...)");
    sc->add_option("--omega", omega, "planar rotation rate");
    sc->add_option("--perturb", perturb_specs, "perturbed parameter name[:weight]")->take_all();
    sc->add_option("--eps", manifest.perturb.eps, "perturbation size");
    sc->add_option("--region-mask", manifest.perturb.region_mask,
                   "region ids the perturbation acts on")
        ->take_all();
    sc->add_option("--out", out_dir, "output directory");
    sc->add_option("--format", manifest.format, "csv | svg | both");
    sc->add_option("--tol-rel", manifest.tol_rel, "integrator relative tolerance");
    sc->add_option("--tol-abs", manifest.tol_abs, "integrator absolute tolerance");
    sc->add_option("--manifest", manifest_path, "read the manifest from a JSON file");
    sc->add_option("--rescaling", manifest.rescaling, "src: uniform | piecewise");
    sc->add_option("--t-end", manifest.t_end, "couple: integration horizon");
    sc->add_option("--k3", manifest.k3, "couple: coupling spring stiffness");
    sc->add_option("--psi0", manifest.psi0, "couple: initial phase offset");
    sc->add_option("--grid", manifest.grid_n, "isochrons/kink: grid resolution per axis");
    sc->add_flag("--timing", manifest.timing_enabled, "planar: enable the timing surfaces");
    sc->add_flag("--timing-wedge", manifest.timing_wedge, "planar: two-line timing region");
    sc->add_option("--seed", manifest.seed, "seed recorded in the manifest");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 64;
  }

  if (!manifest_path.empty()) {
    std::ifstream in(manifest_path);
    if (!in.good()) {
      std::cerr << "cannot open manifest " << manifest_path << "\n";
      return 64;
    }
    nlohmann::json j;
    try {
      in >> j;
      manifest = lcsc::ExperimentManifest::from_json(j);
    } catch (const std::exception& e) {
      std::cerr << "bad manifest: " << e.what() << "\n";
      return 64;
    }
  }
  if (int rc = parse_kv(kv_params, manifest); rc != 0) return rc;
  if (int rc = parse_perturb(perturb_specs, manifest); rc != 0) return rc;
  if (alpha > 0.0) manifest.params["alpha"] = alpha;
  if (omega > 0.0) manifest.params["omega"] = omega;
  if (manifest.format != "csv" && manifest.format != "svg" && manifest.format != "both") {
    std::cerr << "--format must be csv, svg or both\n";
    return 64;
  }

  const std::string sub = app.get_subcommands().front()->get_name();
  lcsc::experiments::Context ctx{manifest, out_dir};
  try {
    lcsc::experiments::run(sub, ctx);
  } catch (const lcsc::Error& e) {
    nlohmann::json diag;
    diag["subcommand"] = sub;
    diag["error"] = e.what();
    try {
      lcsc::io::write_json(ctx.out_dir / "diagnostic.json", diag);
    } catch (...) {
    }
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
