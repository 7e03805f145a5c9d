#pragma once

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "lcsc/core.hpp"
#include "lcsc/system.hpp"

namespace lcsc {

// User-defined systems from a JSON description. Vector-field components are
// polynomial or rational expressions per region; hard boundaries and
// transversal surfaces are affine. Jacobians are formed by central
// differences; an optional "perturbation" block supplies dF/deps terms in
// the same expression format.
//
// Schema sketch:
//   {
//     "name": "...", "dimension": n,
//     "parameters": {"a": 0.2},
//     "regions": [{"field": [component, ...]}],
//     "boundaries": [{"normal": [...], "offset": h}],
//     "surfaces": [{"normal": [...], "offset": h, "role": "timing"|"switching"}],
//     "region_rule": {"surface": id},              // optional: region 0 where level >= 0
//     "perturbation": {"regions": [[component...], ...]}  // optional dF/deps
//   }
// A component is {"terms": [...]} or {"terms": [...], "denominator": [...]};
// a term is {"c": number | "param-name", "scale": s, "powers": [p_1..p_n]}.

namespace detail {

struct ConfigTerm {
  double coeff = 0.0;
  std::vector<int> powers;
};

inline ConfigTerm parse_term(const nlohmann::json& j, int dim,
                             const std::map<std::string, double>& params) {
  ConfigTerm t;
  const auto& c = j.at("c");
  if (c.is_string()) {
    const auto it = params.find(c.get<std::string>());
    require(it != params.end(),
            "system config: unknown parameter '" + c.get<std::string>() + "'");
    t.coeff = it->second;
  } else {
    t.coeff = c.get<double>();
  }
  if (j.contains("scale")) t.coeff *= j.at("scale").get<double>();
  t.powers.assign(static_cast<size_t>(dim), 0);
  if (j.contains("powers")) {
    const auto p = j.at("powers").get<std::vector<int>>();
    require(static_cast<int>(p.size()) == dim, "system config: powers length != dimension");
    t.powers = p;
  }
  return t;
}

inline double eval_terms(const std::vector<ConfigTerm>& terms, const Vec& x) {
  double sum = 0.0;
  for (const auto& t : terms) {
    double v = t.coeff;
    for (size_t i = 0; i < t.powers.size(); ++i) {
      for (int p = 0; p < t.powers[i]; ++p) v *= x(static_cast<Eigen::Index>(i));
    }
    sum += v;
  }
  return sum;
}

struct ConfigComponent {
  std::vector<ConfigTerm> numerator;
  std::vector<ConfigTerm> denominator;  // empty -> 1

  double eval(const Vec& x) const {
    const double num = eval_terms(numerator, x);
    if (denominator.empty()) return num;
    const double den = eval_terms(denominator, x);
    if (std::abs(den) < 1e-14) throw DomainError("system config: rational pole hit");
    return num / den;
  }
};

inline ConfigComponent parse_component(const nlohmann::json& j, int dim,
                                       const std::map<std::string, double>& params) {
  ConfigComponent c;
  for (const auto& t : j.at("terms")) c.numerator.push_back(parse_term(t, dim, params));
  if (j.contains("denominator")) {
    for (const auto& t : j.at("denominator")) c.denominator.push_back(parse_term(t, dim, params));
  }
  return c;
}

inline std::function<Vec(const Vec&)> field_from(const nlohmann::json& components, int dim,
                                                 const std::map<std::string, double>& params) {
  std::vector<ConfigComponent> comps;
  for (const auto& c : components) comps.push_back(parse_component(c, dim, params));
  require(static_cast<int>(comps.size()) == dim, "system config: field component count != dimension");
  return [comps, dim](const Vec& x) {
    Vec v(dim);
    for (int i = 0; i < dim; ++i) v(i) = comps[static_cast<size_t>(i)].eval(x);
    return v;
  };
}

}  // namespace detail

inline FilippovSystem system_from_json(const nlohmann::json& j) {
  FilippovSystem sys;
  sys.dim = j.at("dimension").get<int>();
  sys.name = j.value("name", "custom");
  if (j.contains("parameters")) {
    for (const auto& [k, v] : j.at("parameters").items()) sys.params[k] = v.get<double>();
  }
  require(j.contains("regions") && !j.at("regions").empty(), "system config: no regions");
  const auto* pert = j.contains("perturbation") ? &j.at("perturbation") : nullptr;
  int r = 0;
  for (const auto& region : j.at("regions")) {
    InteriorField f;
    f.velocity = detail::field_from(region.at("field"), sys.dim, sys.params);
    if (pert != nullptr) {
      const auto& regions = pert->at("regions");
      if (r < static_cast<int>(regions.size()) && !regions[r].is_null()) {
        f.param_derivative = detail::field_from(regions[r], sys.dim, sys.params);
      }
    }
    sys.regions.push_back(std::move(f));
    ++r;
  }
  int id = 0;
  for (const auto& b : j.value("boundaries", nlohmann::json::array())) {
    HardBoundary hb;
    hb.id = id++;
    const auto n = b.at("normal").get<std::vector<double>>();
    require(static_cast<int>(n.size()) == sys.dim, "system config: boundary normal dimension");
    hb.normal = Eigen::Map<const Vec>(n.data(), sys.dim);
    require(std::abs(hb.normal.norm() - 1.0) < 1e-9, "system config: boundary normal not unit");
    hb.offset = b.at("offset").get<double>();
    sys.boundaries.push_back(std::move(hb));
  }
  id = 0;
  for (const auto& s : j.value("surfaces", nlohmann::json::array())) {
    TransversalSurface ts;
    ts.id = id++;
    const auto n = s.at("normal").get<std::vector<double>>();
    ts.normal = Eigen::Map<const Vec>(n.data(), sys.dim);
    require(std::abs(ts.normal.norm() - 1.0) < 1e-9, "system config: surface normal not unit");
    ts.offset = s.at("offset").get<double>();
    ts.role = s.value("role", "timing") == std::string("switching")
                  ? TransversalSurface::Role::Switching
                  : TransversalSurface::Role::LocalTiming;
    sys.surfaces.push_back(std::move(ts));
  }
  if (j.contains("region_rule")) {
    const int sid = j.at("region_rule").at("surface").get<int>();
    require(sys.regions.size() == 2, "system config: region_rule expects exactly two regions");
    const TransversalSurface surf = sys.surface(sid);
    sys.region_of = [surf](const Vec& x) { return surf.level(x) >= 0.0 ? 0 : 1; };
  } else {
    require(sys.regions.size() == 1, "system config: multiple regions need a region_rule");
  }
  return sys;
}

inline FilippovSystem load_system(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(in.good(), "load_system: cannot open " + path.string());
  nlohmann::json j;
  in >> j;
  return system_from_json(j);
}

}  // namespace lcsc
