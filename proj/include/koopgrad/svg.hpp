// SPDX-License-Identifier: Apache-2.0
//
// Minimal self-contained SVG emission for the experiment figures: line
// charts, the eigenvalue scatter with the unit circle, and mode-magnitude
// decay. Deterministic output so tests can parse and assert on it.
#pragma once

#include <koopgrad/numerics.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <string>
#include <vector>

namespace koopgrad {

struct Series {
  std::string label;
  std::vector<double> xs;
  std::vector<double> ys;
};

namespace svg_detail {

inline const char* palette(std::size_t i) {
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                 "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};
  return colors[i % 8];
}

inline std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

struct Mapper {
  double xmin, xmax, ymin, ymax;
  double left, top, width, height;
  double px(double x) const {
    const double span = xmax - xmin;
    return left + (span > 0 ? (x - xmin) / span : 0.5) * width;
  }
  double py(double y) const {
    const double span = ymax - ymin;
    return top + height - (span > 0 ? (y - ymin) / span : 0.5) * height;
  }
};

inline void open_svg(std::ostream& out, int w, int h) {
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h
      << "\" viewBox=\"0 0 " << w << ' ' << h << "\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
}

inline void text(std::ostream& out, double x, double y, const std::string& s, int size = 12,
                 const char* anchor = "start", const char* fill = "#222") {
  out << "<text x=\"" << num(x) << "\" y=\"" << num(y) << "\" font-size=\"" << size
      << "\" font-family=\"sans-serif\" text-anchor=\"" << anchor << "\" fill=\"" << fill
      << "\">" << s << "</text>\n";
}

}  // namespace svg_detail

/// Multi-series line chart with auto-scaled axes and a legend.
inline void write_line_chart_svg(std::ostream& out, const std::string& title,
                                 const std::string& xlabel, const std::string& ylabel,
                                 const std::vector<Series>& series, int width = 720,
                                 int height = 440) {
  using namespace svg_detail;
  double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
  for (const Series& s : series) {
    for (double x : s.xs) {
      xmin = std::min(xmin, x);
      xmax = std::max(xmax, x);
    }
    for (double y : s.ys) {
      if (!std::isfinite(y)) continue;
      ymin = std::min(ymin, y);
      ymax = std::max(ymax, y);
    }
  }
  if (xmin > xmax) {
    xmin = 0;
    xmax = 1;
  }
  if (ymin > ymax) {
    ymin = 0;
    ymax = 1;
  }
  if (ymin == ymax) {
    ymin -= 0.5;
    ymax += 0.5;
  }
  Mapper m{xmin, xmax, ymin, ymax, 64, 40, width - 240.0, height - 100.0};

  open_svg(out, width, height);
  text(out, width / 2.0, 22, title, 14, "middle");
  // frame
  out << "<rect x=\"" << num(m.left) << "\" y=\"" << num(m.top) << "\" width=\"" << num(m.width)
      << "\" height=\"" << num(m.height) << "\" fill=\"none\" stroke=\"#888\"/>\n";
  // ticks
  for (int k = 0; k <= 4; ++k) {
    const double fx = xmin + (xmax - xmin) * k / 4.0;
    const double fy = ymin + (ymax - ymin) * k / 4.0;
    text(out, m.px(fx), m.top + m.height + 18, num(fx), 10, "middle", "#444");
    text(out, m.left - 6, m.py(fy) + 4, num(fy), 10, "end", "#444");
    out << "<line x1=\"" << num(m.px(fx)) << "\" y1=\"" << num(m.top + m.height) << "\" x2=\""
        << num(m.px(fx)) << "\" y2=\"" << num(m.top + m.height + 4)
        << "\" stroke=\"#888\"/>\n";
  }
  text(out, m.left + m.width / 2, height - 12.0, xlabel, 12, "middle");
  text(out, 16, m.top + m.height / 2, ylabel, 12, "middle");

  for (std::size_t si = 0; si < series.size(); ++si) {
    const Series& s = series[si];
    out << "<polyline fill=\"none\" stroke=\"" << palette(si) << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < s.xs.size(); ++i) {
      if (!std::isfinite(s.ys[i])) continue;
      out << num(m.px(s.xs[i])) << ',' << num(m.py(s.ys[i])) << ' ';
    }
    out << "\"/>\n";
    const double ly = m.top + 16 + 18.0 * static_cast<double>(si);
    out << "<line x1=\"" << num(m.left + m.width + 12) << "\" y1=\"" << num(ly - 4) << "\" x2=\""
        << num(m.left + m.width + 34) << "\" y2=\"" << num(ly - 4) << "\" stroke=\"" << palette(si)
        << "\" stroke-width=\"2\"/>\n";
    text(out, m.left + m.width + 40, ly, s.label, 11);
  }
  out << "</svg>\n";
}

/// Eigenvalue scatter on the complex plane with the unit circle; eigenvalues
/// within `kept_tol` of 1+0i are highlighted.
inline void write_spectrum_svg(std::ostream& out, const ComplexVector& eigenvalues,
                               double kept_tol = 0.05, int size = 480) {
  using namespace svg_detail;
  double extent = 1.3;
  for (Eigen::Index j = 0; j < eigenvalues.size(); ++j) {
    extent = std::max(extent, std::abs(eigenvalues(j)) + 0.2);
  }
  Mapper m{-extent, extent, -extent, extent, 44, 36, size - 80.0, size - 80.0};
  open_svg(out, size, size);
  text(out, size / 2.0, 20, "DMD spectrum", 14, "middle");
  const double cx = m.px(0), cy = m.py(0);
  const double r = m.px(1.0) - cx;
  out << "<circle cx=\"" << num(cx) << "\" cy=\"" << num(cy) << "\" r=\"" << num(r)
      << "\" fill=\"none\" stroke=\"#999\" stroke-dasharray=\"4 3\"/>\n";
  out << "<line x1=\"" << num(m.px(-extent)) << "\" y1=\"" << num(cy) << "\" x2=\""
      << num(m.px(extent)) << "\" y2=\"" << num(cy) << "\" stroke=\"#ccc\"/>\n";
  out << "<line x1=\"" << num(cx) << "\" y1=\"" << num(m.py(-extent)) << "\" x2=\"" << num(cx)
      << "\" y2=\"" << num(m.py(extent)) << "\" stroke=\"#ccc\"/>\n";
  // tolerance disc around 1 + 0i
  out << "<circle cx=\"" << num(m.px(1.0)) << "\" cy=\"" << num(cy) << "\" r=\""
      << num(kept_tol * r) << "\" fill=\"none\" stroke=\"#ff7f0e\" stroke-dasharray=\"2 2\"/>\n";
  for (Eigen::Index j = 0; j < eigenvalues.size(); ++j) {
    const Complex lambda = eigenvalues(j);
    const bool kept = std::abs(lambda - Complex(1.0, 0.0)) <= kept_tol;
    out << "<circle cx=\"" << num(m.px(lambda.real())) << "\" cy=\"" << num(m.py(lambda.imag()))
        << "\" r=\"4\" fill=\"" << (kept ? "#ff7f0e" : "#1f77b4") << "\" fill-opacity=\"0.85\""
        << (kept ? " data-kept=\"1\"" : "") << "/>\n";
  }
  text(out, m.px(1.0), m.py(0) + 18, "1+0i", 10, "middle", "#ff7f0e");
  out << "</svg>\n";
}

}  // namespace koopgrad
