#pragma once

// Minimal static SVG line plots with shaded segment bands.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

namespace latseg {

struct PlotSeries {
  std::string label;
  std::vector<double> x, y;
  std::string color = "#1f77b4";
  bool markers = false;  // points instead of a polyline
};

struct PlotBand {
  double x0 = 0.0, x1 = 0.0;
  std::string color = "#dddddd";
};

struct Plot {
  std::string title;
  std::vector<PlotSeries> series;
  std::vector<PlotBand> bands;
  std::vector<double> vlines;  // dashed markers, e.g. true changepoints
  int width = 800;
  int height = 300;
};

/// Categorical colour for segment bands and series.
inline std::string palette(std::size_t i) {
  static const char* colors[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};
  return colors[i % 8];
}

inline std::string band_palette(std::size_t i) {
  static const char* colors[] = {"#dbe9f6", "#fde3c8", "#d9f0d3", "#f7d4d4", "#e7dcf2", "#eadbd5"};
  return colors[i % 6];
}

namespace detail {

inline std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

inline std::string escape_xml(const std::string& s) {
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

}  // namespace detail

inline std::string render_svg(const Plot& p) {
  const double left = 50, right = 140, top = 30, bottom = 30;
  double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin, ymin = xmin, ymax = -xmin;
  for (const PlotSeries& s : p.series) {
    for (double v : s.x)
      if (std::isfinite(v)) xmin = std::min(xmin, v), xmax = std::max(xmax, v);
    for (double v : s.y)
      if (std::isfinite(v)) ymin = std::min(ymin, v), ymax = std::max(ymax, v);
  }
  if (!std::isfinite(xmin)) xmin = 0, xmax = 1, ymin = 0, ymax = 1;
  if (xmax == xmin) xmax = xmin + 1;
  if (ymax == ymin) ymax = ymin + 1;
  const double pad = 0.05 * (ymax - ymin);
  ymin -= pad;
  ymax += pad;
  const double pw = p.width - left - right, ph = p.height - top - bottom;
  auto X = [&](double x) { return left + (x - xmin) / (xmax - xmin) * pw; };
  auto Y = [&](double y) { return top + (ymax - y) / (ymax - ymin) * ph; };

  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << p.width << "\" height=\"" << p.height << "\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  for (const PlotBand& b : p.bands) {
    const double a = X(std::max(b.x0, xmin)), c = X(std::min(b.x1, xmax));
    if (c <= a) continue;
    o << "<rect x=\"" << detail::num(a) << "\" y=\"" << top << "\" width=\"" << detail::num(c - a) << "\" height=\"" << ph
      << "\" fill=\"" << b.color << "\"/>\n";
  }
  o << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << pw << "\" height=\"" << ph
    << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (double v : p.vlines) {
    o << "<line x1=\"" << detail::num(X(v)) << "\" x2=\"" << detail::num(X(v)) << "\" y1=\"" << top << "\" y2=\""
      << top + ph << "\" stroke=\"black\" stroke-dasharray=\"4 3\"/>\n";
  }
  for (const PlotSeries& s : p.series) {
    if (s.markers) {
      for (std::size_t i = 0; i < s.x.size(); ++i) {
        if (!std::isfinite(s.y[i])) continue;
        o << "<circle cx=\"" << detail::num(X(s.x[i])) << "\" cy=\"" << detail::num(Y(s.y[i])) << "\" r=\"1.8\" fill=\""
          << s.color << "\"/>\n";
      }
    } else {
      o << "<polyline fill=\"none\" stroke=\"" << s.color << "\" stroke-width=\"1.5\" points=\"";
      for (std::size_t i = 0; i < s.x.size(); ++i)
        if (std::isfinite(s.y[i])) o << detail::num(X(s.x[i])) << ',' << detail::num(Y(s.y[i])) << ' ';
      o << "\"/>\n";
    }
  }
  o << "<text x=\"" << left << "\" y=\"18\" font-family=\"sans-serif\" font-size=\"13\">" << detail::escape_xml(p.title)
    << "</text>\n";
  o << "<text x=\"" << left << "\" y=\"" << p.height - 8 << "\" font-family=\"sans-serif\" font-size=\"10\">" << detail::num(xmin)
    << "</text>\n";
  o << "<text x=\"" << left + pw << "\" y=\"" << p.height - 8
    << "\" font-family=\"sans-serif\" font-size=\"10\" text-anchor=\"end\">" << detail::num(xmax) << "</text>\n";
  o << "<text x=\"" << left - 4 << "\" y=\"" << top + 10 << "\" font-family=\"sans-serif\" font-size=\"10\" text-anchor=\"end\">"
    << detail::num(ymax) << "</text>\n";
  o << "<text x=\"" << left - 4 << "\" y=\"" << top + ph << "\" font-family=\"sans-serif\" font-size=\"10\" text-anchor=\"end\">"
    << detail::num(ymin) << "</text>\n";
  double ly = top + 12;
  for (const PlotSeries& s : p.series) {
    o << "<rect x=\"" << left + pw + 10 << "\" y=\"" << ly - 8 << "\" width=\"10\" height=\"10\" fill=\"" << s.color << "\"/>\n";
    o << "<text x=\"" << left + pw + 25 << "\" y=\"" << ly << "\" font-family=\"sans-serif\" font-size=\"11\">"
      << detail::escape_xml(s.label) << "</text>\n";
    ly += 16;
  }
  o << "</svg>\n";
  return o.str();
}

}  // namespace latseg
