#pragma once

#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "lcsc/core.hpp"
#include "lcsc/phase_reduction.hpp"
#include "lcsc/sensitivity.hpp"
#include "lcsc/trajectory.hpp"

namespace lcsc::io {

/// Shortest round-trippable decimal form; locale-independent.
inline std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

/// Comma-delimited CSV with '.' decimals, a header row, and optional leading
/// comment lines.
class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header,
            const std::vector<std::string>& comments = {}) {
    std::filesystem::create_directories(path.parent_path());
    out_.open(path);
    require(out_.good(), "CsvWriter: cannot open " + path.string());
    for (const auto& c : comments) out_ << "# " << c << "\n";
    write_strings(header);
  }

  void row(const std::vector<double>& values, const std::vector<std::string>& tail = {}) {
    std::string line;
    for (size_t i = 0; i < values.size(); ++i) {
      if (i) line += ',';
      line += fmt(values[i]);
    }
    for (const auto& t : tail) {
      line += ',';
      line += t;
    }
    out_ << line << "\n";
  }

  void write_strings(const std::vector<std::string>& cells) {
    for (size_t i = 0; i < cells.size(); ++i) {
      if (i) out_ << ',';
      out_ << cells[i];
    }
    out_ << "\n";
  }

 private:
  std::ofstream out_;
};

/// Trajectory dump: t, x_1..x_n, mode label, event flag at event rows.
inline void write_trajectory_csv(const std::filesystem::path& path, const Trajectory& tr,
                                 int samples_per_segment = 200,
                                 const std::vector<std::string>& comments = {}) {
  const int n = tr.system->dim;
  std::vector<std::string> header{"t"};
  for (int i = 1; i <= n; ++i) header.push_back("x_" + std::to_string(i));
  header.push_back("mode");
  header.push_back("event");
  CsvWriter csv(path, header, comments);
  auto emit = [&](double t, const Vec& x, const Mode& mode, const std::string& flag) {
    std::vector<double> vals{t};
    for (int i = 0; i < n; ++i) vals.push_back(x(i));
    csv.row(vals, {mode.label(), flag});
  };
  size_t next_event = 0;
  for (const auto& seg : tr.segments) {
    while (next_event < tr.events.size() && tr.events[next_event].time <= seg.t0 + 1e-15) {
      const auto& e = tr.events[next_event++];
      emit(e.time, e.state, e.post_mode, to_string(e.kind));
    }
    if (seg.steps.empty()) continue;
    for (int i = 0; i <= samples_per_segment; ++i) {
      const double t = seg.t0 + (seg.t1 - seg.t0) * i / samples_per_segment;
      emit(t, seg.eval(t), seg.mode, "");
    }
  }
  for (; next_event < tr.events.size(); ++next_event) {
    const auto& e = tr.events[next_event];
    emit(e.time, e.state, e.post_mode, to_string(e.kind));
  }
}

inline nlohmann::json event_json(const EventRecord& e) {
  nlohmann::json j;
  j["kind"] = to_string(e.kind);
  j["time"] = e.time;
  j["id"] = e.id;
  j["direction"] = e.direction;
  j["state"] = std::vector<double>(e.state.data(), e.state.data() + e.state.size());
  return j;
}

/// Cycle summary: period, anchor, ordered events.
inline nlohmann::json cycle_summary(const LimitCycle& lc) {
  nlohmann::json j;
  j["model"] = lc.system->name;
  j["period"] = lc.T0;
  j["closure_defect"] = lc.closure_defect;
  j["params"] = lc.system->params;
  j["anchor"] = {{"kind", to_string(lc.anchor.kind)}, {"id", lc.anchor.id},
                 {"direction", lc.anchor.direction}};
  j["events"] = nlohmann::json::array();
  for (const auto& e : lc.events) j["events"].push_back(event_json(e));
  return j;
}

inline nlohmann::json matrix_json(const Mat& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(row);
  }
  return rows;
}

inline void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  require(out.good(), "write_json: cannot open " + path.string());
  out << j.dump(2) << "\n";
}

/// Sensitivity curve: t, v_1..v_n, disc (L/R one-sided rows at events).
inline void write_curve_csv(const std::filesystem::path& path, const SensitivityCurve& curve,
                            const std::string& value_name,
                            const std::vector<std::string>& comments = {}) {
  require(!curve.pieces.empty(), "write_curve_csv: empty curve");
  const size_t n = static_cast<size_t>(curve.pieces.front().y.front().size());
  std::vector<std::string> header{"t"};
  for (size_t i = 1; i <= n; ++i) header.push_back(value_name + "_" + std::to_string(i));
  header.push_back("disc");
  CsvWriter csv(path, header, comments);
  auto emit = [&](double t, const Vec& v, const std::string& disc) {
    std::vector<double> vals{t};
    for (size_t i = 0; i < n; ++i) vals.push_back(v(static_cast<Eigen::Index>(i)));
    csv.row(vals, {disc});
  };
  auto jump_at = [&](double t) -> const Discontinuity* {
    for (const auto& j : curve.jumps) {
      if (std::abs(j.time - wrap_phase(t, curve.T0)) < 1e-12 * std::max(1.0, curve.T0)) return &j;
    }
    return nullptr;
  };
  for (const auto& p : curve.pieces) {
    if (const auto* j = jump_at(p.t0)) emit(p.t0, j->left, "L");
    for (size_t i = 0; i < p.t.size(); ++i) {
      emit(p.t[i], p.y[i], i == 0 ? "R" : (i + 1 == p.t.size() ? "L*" : ""));
    }
  }
}

/// Phase field: CSV value matrix plus JSON metadata.
inline void write_phase_field(const std::filesystem::path& csv_path,
                              const std::filesystem::path& json_path, const PhaseField& f,
                              const std::vector<std::string>& comments = {}) {
  std::vector<std::string> header{"y\\x"};
  for (int i = 0; i < f.grid.nx; ++i) header.push_back(fmt(f.grid.x_at(i)));
  CsvWriter csv(csv_path, header, comments);
  for (int j = 0; j < f.grid.ny; ++j) {
    std::vector<double> vals{f.grid.y_at(j)};
    for (int i = 0; i < f.grid.nx; ++i) vals.push_back(f.phi(j, i));
    csv.row(vals);
  }
  nlohmann::json meta;
  meta["period"] = f.T0;
  meta["nx"] = f.grid.nx;
  meta["ny"] = f.grid.ny;
  meta["x_range"] = {f.grid.x_min, f.grid.x_max};
  meta["y_range"] = {f.grid.y_min, f.grid.y_max};
  meta["converged_cells"] = static_cast<long>(f.converged.sum());
  write_json(json_path, meta);
}

inline void write_series_csv(const std::filesystem::path& path,
                             const std::vector<std::pair<double, double>>& series,
                             const std::string& xname, const std::string& yname,
                             const std::vector<std::string>& comments = {}) {
  CsvWriter csv(path, {xname, yname}, comments);
  for (const auto& [x, y] : series) csv.row({x, y});
}

// ---------------------------------------------------------------------------
// Minimal self-contained SVG plotting: polylines plus axes.
// ---------------------------------------------------------------------------

struct SvgSeries {
  std::vector<std::pair<double, double>> points;
  std::string color = "#1f77b4";
  bool breaks_on_nan = true;
};

inline void write_svg_plot(const std::filesystem::path& path, const std::vector<SvgSeries>& series,
                           const std::string& title, const std::string& xlabel,
                           const std::string& ylabel) {
  const double W = 720, H = 480, ml = 70, mr = 20, mt = 40, mb = 50;
  double x0 = 1e300, x1 = -1e300, y0 = 1e300, y1 = -1e300;
  for (const auto& s : series) {
    for (const auto& [x, y] : s.points) {
      if (!std::isfinite(x) || !std::isfinite(y)) continue;
      x0 = std::min(x0, x);
      x1 = std::max(x1, x);
      y0 = std::min(y0, y);
      y1 = std::max(y1, y);
    }
  }
  if (x1 <= x0) x1 = x0 + 1;
  if (y1 <= y0) y1 = y0 + 1;
  const double pad = 0.05 * (y1 - y0);
  y0 -= pad;
  y1 += pad;
  auto px = [&](double x) { return ml + (x - x0) / (x1 - x0) * (W - ml - mr); };
  auto py = [&](double y) { return H - mb - (y - y0) / (y1 - y0) * (H - mt - mb); };

  std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  require(out.good(), "write_svg_plot: cannot open " + path.string());
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
      << "\" viewBox=\"0 0 " << W << " " << H << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << W / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">" << title
      << "</text>\n";
  // Axes with a few ticks.
  out << "<line x1=\"" << ml << "\" y1=\"" << H - mb << "\" x2=\"" << W - mr << "\" y2=\""
      << H - mb << "\" stroke=\"black\"/>\n";
  out << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\"" << H - mb
      << "\" stroke=\"black\"/>\n";
  for (int k = 0; k <= 5; ++k) {
    const double xv = x0 + (x1 - x0) * k / 5, yv = y0 + (y1 - y0) * k / 5;
    out << "<text x=\"" << px(xv) << "\" y=\"" << H - mb + 18
        << "\" text-anchor=\"middle\" font-size=\"11\">" << fmt(xv) << "</text>\n";
    out << "<text x=\"" << ml - 6 << "\" y=\"" << py(yv) + 4
        << "\" text-anchor=\"end\" font-size=\"11\">" << fmt(yv) << "</text>\n";
  }
  out << "<text x=\"" << (W + ml - mr) / 2 << "\" y=\"" << H - 10
      << "\" text-anchor=\"middle\" font-size=\"13\">" << xlabel << "</text>\n";
  out << "<text x=\"16\" y=\"" << (H + mt - mb) / 2
      << "\" text-anchor=\"middle\" font-size=\"13\" transform=\"rotate(-90 16 "
      << (H + mt - mb) / 2 << ")\">" << ylabel << "</text>\n";
  for (const auto& s : series) {
    std::string d;
    bool pen_up = true;
    for (const auto& [x, y] : s.points) {
      if (!std::isfinite(x) || !std::isfinite(y)) {
        pen_up = true;
        continue;
      }
      d += (pen_up ? "M" : "L");
      d += fmt(px(x));
      d += " ";
      d += fmt(py(y));
      pen_up = false;
    }
    out << "<path d=\"" << d << "\" fill=\"none\" stroke=\"" << s.color
        << "\" stroke-width=\"1.2\"/>\n";
  }
  out << "</svg>\n";
}

/// Level-set contours of a phase field (periodic values), as segment soup per
/// level, via edge interpolation with periodic differences.
inline std::vector<SvgSeries> isochron_contours(const PhaseField& f, int n_levels) {
  std::vector<SvgSeries> out;
  const auto& g = f.grid;
  for (int lv = 0; lv < n_levels; ++lv) {
    const double level = f.T0 * lv / n_levels;
    SvgSeries s;
    s.color = "hsl(" + std::to_string(360 * lv / n_levels) + ",70%,45%)";
    auto cross = [&](int i0, int j0, int i1, int j1, double& frac) {
      if (!f.ok(i0, j0) || !f.ok(i1, j1)) return false;
      const double a = periodic_difference(f.phi(j0, i0), level, f.T0);
      const double b = periodic_difference(f.phi(j1, i1), level, f.T0);
      if ((a > 0) == (b > 0) || std::abs(a - b) > f.T0 / 4) return false;
      frac = a / (a - b);
      return true;
    };
    for (int j = 0; j + 1 < g.ny; ++j) {
      for (int i = 0; i + 1 < g.nx; ++i) {
        std::vector<std::pair<double, double>> pts;
        double frac;
        if (cross(i, j, i + 1, j, frac)) pts.push_back({g.x_at(i) + frac * g.dx(), g.y_at(j)});
        if (cross(i, j, i, j + 1, frac)) pts.push_back({g.x_at(i), g.y_at(j) + frac * g.dy()});
        if (cross(i + 1, j, i + 1, j + 1, frac))
          pts.push_back({g.x_at(i + 1), g.y_at(j) + frac * g.dy()});
        if (cross(i, j + 1, i + 1, j + 1, frac))
          pts.push_back({g.x_at(i) + frac * g.dx(), g.y_at(j + 1)});
        if (pts.size() >= 2) {
          s.points.push_back(pts[0]);
          s.points.push_back(pts[1]);
          s.points.push_back({std::numeric_limits<double>::quiet_NaN(),
                              std::numeric_limits<double>::quiet_NaN()});
        }
      }
    }
    if (!s.points.empty()) out.push_back(std::move(s));
  }
  return out;
}

}  // namespace lcsc::io
