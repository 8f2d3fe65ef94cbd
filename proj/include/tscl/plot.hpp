#pragma once

// Static SVG figures from the CSV outputs: line plots (first column is x,
// every other column a series) and heatmaps (first column is the row label,
// header holds the column labels).

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "tscl/csv.hpp"

namespace tscl::plot {

enum class Kind { Lines, Heatmap };

struct Options {
  bool log_y = false;
  std::string title;
  std::string x_label;
  std::string y_label;
};

namespace detail {

constexpr double kW = 640, kH = 440, kLeft = 80, kRight = 150, kTop = 40, kBottom = 60;

inline std::string num(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", x);
  return buf;
}

inline std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

inline const char* colour(std::size_t i) {
  static const char* palette[] = {"#1b9e77", "#d95f02", "#7570b3", "#e7298a",
                                  "#66a61e", "#e6ab02", "#a6761d", "#666666"};
  return palette[i % 8];
}

// viridis-like ramp through five anchors
inline std::string ramp(double u) {
  static const double a[5][3] = {{68, 1, 84}, {59, 82, 139}, {33, 145, 140}, {94, 201, 98}, {253, 231, 37}};
  u = std::clamp(std::isfinite(u) ? u : 0.0, 0.0, 1.0) * 4.0;
  const int i = std::min(3, static_cast<int>(u));
  const double f = u - i;
  char buf[16];
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", static_cast<int>(a[i][0] + f * (a[i + 1][0] - a[i][0])),
                static_cast<int>(a[i][1] + f * (a[i + 1][1] - a[i][1])),
                static_cast<int>(a[i][2] + f * (a[i + 1][2] - a[i][2])));
  return buf;
}

inline void header(std::ostringstream& o, const Options& opt) {
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << kH
    << "\" font-family=\"sans-serif\" font-size=\"12\">\n"
    << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  if (!opt.title.empty())
    o << "<text x=\"" << kW / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" << escape(opt.title)
      << "</text>\n";
  if (!opt.x_label.empty())
    o << "<text x=\"" << kLeft + (kW - kLeft - kRight) / 2 << "\" y=\"" << kH - 15
      << "\" text-anchor=\"middle\">" << escape(opt.x_label) << "</text>\n";
  if (!opt.y_label.empty())
    o << "<text x=\"18\" y=\"" << kTop + (kH - kTop - kBottom) / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 18 "
      << kTop + (kH - kTop - kBottom) / 2 << ")\">" << escape(opt.y_label) << "</text>\n";
}

inline std::string lines_svg(const csv::Table& t, const Options& opt) {
  if (t.header.size() < 2) throw std::runtime_error("plot: line CSV needs an x column and at least one series");
  const std::size_t n = t.rows.size(), series = t.header.size() - 1;
  std::vector<double> x(n);
  std::vector<std::vector<double>> y(series, std::vector<double>(n));
  double xlo = std::numeric_limits<double>::infinity(), xhi = -xlo, ylo = xlo, yhi = -xlo;
  for (std::size_t r = 0; r < n; ++r) {
    x[r] = t.number(r, 0);
    xlo = std::min(xlo, x[r]);
    xhi = std::max(xhi, x[r]);
    for (std::size_t s = 0; s < series; ++s) {
      double v = t.number(r, s + 1);
      if (opt.log_y) v = v > 0.0 ? std::log10(v) : std::numeric_limits<double>::quiet_NaN();
      y[s][r] = v;
      if (std::isfinite(v)) {
        ylo = std::min(ylo, v);
        yhi = std::max(yhi, v);
      }
    }
  }
  if (!std::isfinite(xlo) || !std::isfinite(ylo)) throw std::runtime_error("plot: no finite data to draw");
  if (xhi == xlo) xhi = xlo + 1.0;
  if (yhi == ylo) {
    ylo -= 0.5;
    yhi += 0.5;
  }
  const double pw = kW - kLeft - kRight, ph = kH - kTop - kBottom;
  auto px = [&](double v) { return kLeft + (v - xlo) / (xhi - xlo) * pw; };
  auto py = [&](double v) { return kTop + (1.0 - (v - ylo) / (yhi - ylo)) * ph; };

  std::ostringstream o;
  header(o, opt);
  o << "<rect x=\"" << kLeft << "\" y=\"" << kTop << "\" width=\"" << pw << "\" height=\"" << ph
    << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double xv = xlo + (xhi - xlo) * i / 4.0, yv = ylo + (yhi - ylo) * i / 4.0;
    o << "<text x=\"" << px(xv) << "\" y=\"" << kTop + ph + 16 << "\" text-anchor=\"middle\">" << num(xv)
      << "</text>\n";
    o << "<text x=\"" << kLeft - 6 << "\" y=\"" << py(yv) + 4 << "\" text-anchor=\"end\">"
      << (opt.log_y ? "1e" + num(yv) : num(yv)) << "</text>\n";
  }
  for (std::size_t s = 0; s < series; ++s) {
    std::string pts;
    auto flush = [&] {
      if (!pts.empty())
        o << "<polyline fill=\"none\" stroke=\"" << colour(s) << "\" stroke-width=\"1.5\" points=\"" << pts
          << "\"/>\n";
      pts.clear();
    };
    for (std::size_t r = 0; r < n; ++r) {
      if (!std::isfinite(y[s][r])) {
        flush();
        continue;
      }
      pts += num(px(x[r])) + "," + num(py(y[s][r])) + " ";
    }
    flush();
    const double ly = kTop + 10 + 18.0 * s;
    o << "<line x1=\"" << kW - kRight + 12 << "\" y1=\"" << ly << "\" x2=\"" << kW - kRight + 32 << "\" y2=\"" << ly
      << "\" stroke=\"" << colour(s) << "\" stroke-width=\"2\"/>\n"
      << "<text x=\"" << kW - kRight + 38 << "\" y=\"" << ly + 4 << "\">" << escape(t.header[s + 1]) << "</text>\n";
  }
  o << "</svg>\n";
  return o.str();
}

inline std::string heatmap_svg(const csv::Table& t, const Options& opt) {
  if (t.header.size() < 2) throw std::runtime_error("plot: heatmap CSV needs a label column and data columns");
  const std::size_t rows = t.rows.size(), cols = t.header.size() - 1;
  std::vector<double> v(rows * cols);
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) {
      const double x = t.number(r, c + 1);
      v[r * cols + c] = x;
      if (std::isfinite(x)) {
        lo = std::min(lo, x);
        hi = std::max(hi, x);
      }
    }
  if (!std::isfinite(lo)) throw std::runtime_error("plot: no finite data to draw");
  const double span = hi > lo ? hi - lo : 1.0;
  const double pw = kW - kLeft - kRight, ph = kH - kTop - kBottom;
  const double cw = pw / cols, ch = ph / rows;

  std::ostringstream o;
  header(o, opt);
  for (std::size_t r = 0; r < rows; ++r) {
    o << "<text x=\"" << kLeft - 6 << "\" y=\"" << kTop + (r + 0.5) * ch + 4 << "\" text-anchor=\"end\">"
      << escape(t.rows[r][0]) << "</text>\n";
    for (std::size_t c = 0; c < cols; ++c) {
      const double x = v[r * cols + c];
      o << "<rect x=\"" << num(kLeft + c * cw) << "\" y=\"" << num(kTop + r * ch) << "\" width=\"" << num(cw)
        << "\" height=\"" << num(ch) << "\" fill=\"" << (std::isfinite(x) ? ramp((x - lo) / span) : "#cccccc")
        << "\"><title>" << num(x) << "</title></rect>\n";
    }
  }
  for (std::size_t c = 0; c < cols; ++c)
    o << "<text x=\"" << kLeft + (c + 0.5) * cw << "\" y=\"" << kTop + ph + 16 << "\" text-anchor=\"middle\">"
      << escape(t.header[c + 1]) << "</text>\n";

  // colorbar
  const double bx = kW - kRight + 30, bw = 18;
  const int steps = 50;
  for (int i = 0; i < steps; ++i)
    o << "<rect x=\"" << bx << "\" y=\"" << num(kTop + ph * i / steps) << "\" width=\"" << bw << "\" height=\""
      << num(ph / steps + 0.5) << "\" fill=\"" << ramp(1.0 - (i + 0.5) / steps) << "\"/>\n";
  o << "<rect x=\"" << bx << "\" y=\"" << kTop << "\" width=\"" << bw << "\" height=\"" << ph
    << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i)
    o << "<text x=\"" << bx + bw + 5 << "\" y=\"" << kTop + ph * (1.0 - i / 4.0) + 4 << "\">"
      << num(lo + (hi - lo) * i / 4.0) << "</text>\n";
  o << "</svg>\n";
  return o.str();
}

}  // namespace detail

/// Renders `csv_path` to an SVG at `out_path`. Nothing is written on error.
inline void emit_plot(const std::string& csv_path, Kind kind, const std::string& out_path, const Options& opt = {}) {
  const csv::Table t = csv::read(csv_path);
  const std::string svg = kind == Kind::Lines ? detail::lines_svg(t, opt) : detail::heatmap_svg(t, opt);
  std::ofstream out(out_path, std::ios::binary);
  if (!out) throw std::runtime_error("plot: cannot open " + out_path);
  out << svg;
}

}  // namespace tscl::plot
