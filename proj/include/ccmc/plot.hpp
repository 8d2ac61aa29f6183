#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "ccmc/errors.hpp"

namespace ccmc {

/// One polyline of an SVG chart.
struct PlotSeries {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

/// Axis and title options for line_plot_svg.
struct PlotOptions {
  std::string title;
  std::string x_label;
  std::string y_label;
  bool log_x = false;
  bool log_y = false;
};

namespace detail_plot {

inline std::string fmt(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

inline const char* palette(std::size_t i) {
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                 "#9467bd", "#8c564b", "#17becf", "#7f7f7f"};
  return colors[i % (sizeof(colors) / sizeof(colors[0]))];
}

inline std::string escape(const std::string& text) {
  std::string out;
  for (char c : text) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace detail_plot

/// Renders series as a fixed-size standalone SVG with linear or decade
/// axes. Output is a pure function of the inputs, so identical runs yield
/// identical bytes.
inline std::string line_plot_svg(const std::vector<PlotSeries>& series,
                                 const PlotOptions& options) {
  if (series.empty()) throw ValidationError("plot needs at least one series");

  const double width = 640.0, height = 420.0;
  const double left = 70.0, right = 20.0, top = 40.0, bottom = 55.0;
  const double plot_w = width - left - right;
  const double plot_h = height - top - bottom;

  auto coord = [](double v, bool log_axis) {
    if (!log_axis) return v;
    if (!(v > 0.0))
      throw ValidationError("log axis requires strictly positive values");
    return std::log10(v);
  };

  double x_lo = 0, x_hi = 0, y_lo = 0, y_hi = 0;
  bool first = true;
  for (const auto& s : series) {
    if (s.x.size() != s.y.size() || s.x.empty())
      throw ValidationError("plot series must be nonempty and aligned");
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      const double cx = coord(s.x[i], options.log_x);
      const double cy = coord(s.y[i], options.log_y);
      if (!std::isfinite(cx) || !std::isfinite(cy))
        throw ValidationError("plot values must be finite");
      if (first) {
        x_lo = x_hi = cx;
        y_lo = y_hi = cy;
        first = false;
      } else {
        x_lo = std::min(x_lo, cx);
        x_hi = std::max(x_hi, cx);
        y_lo = std::min(y_lo, cy);
        y_hi = std::max(y_hi, cy);
      }
    }
  }
  if (x_hi - x_lo <= 0.0) { x_lo -= 0.5; x_hi += 0.5; }
  if (y_hi - y_lo <= 0.0) { y_lo -= 0.5; y_hi += 0.5; }
  const double x_pad = 0.03 * (x_hi - x_lo);
  const double y_pad = 0.06 * (y_hi - y_lo);
  x_lo -= x_pad; x_hi += x_pad;
  y_lo -= y_pad; y_hi += y_pad;

  auto px = [&](double cx) { return left + (cx - x_lo) / (x_hi - x_lo) * plot_w; };
  auto py = [&](double cy) { return top + (1.0 - (cy - y_lo) / (y_hi - y_lo)) * plot_h; };

  using detail_plot::escape;
  using detail_plot::fmt;
  std::string svg;
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fmt(width) +
         "\" height=\"" + fmt(height) + "\" viewBox=\"0 0 " + fmt(width) +
         " " + fmt(height) + "\">\n";
  svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg += "<text x=\"" + fmt(width / 2) + "\" y=\"22\" text-anchor=\"middle\" "
         "font-family=\"sans-serif\" font-size=\"15\">" +
         escape(options.title) + "</text>\n";

  // Frame.
  svg += "<rect x=\"" + fmt(left) + "\" y=\"" + fmt(top) + "\" width=\"" +
         fmt(plot_w) + "\" height=\"" + fmt(plot_h) +
         "\" fill=\"none\" stroke=\"#333\" stroke-width=\"1\"/>\n";

  // Ticks: decades on log axes, five even ticks on linear ones.
  auto tick_values = [](double lo, double hi, bool log_axis) {
    std::vector<double> ticks;
    if (log_axis) {
      for (double d = std::ceil(lo); d <= std::floor(hi) + 1e-9; d += 1.0)
        ticks.push_back(d);
      if (ticks.empty()) ticks = {lo, hi};
    } else {
      for (int i = 0; i <= 4; ++i) ticks.push_back(lo + (hi - lo) * i / 4.0);
    }
    return ticks;
  };
  for (double t : tick_values(x_lo, x_hi, options.log_x)) {
    const double gx = px(t);
    const double value = options.log_x ? std::pow(10.0, t) : t;
    svg += "<line x1=\"" + fmt(gx) + "\" y1=\"" + fmt(top) + "\" x2=\"" +
           fmt(gx) + "\" y2=\"" + fmt(top + plot_h) +
           "\" stroke=\"#ddd\" stroke-width=\"1\"/>\n";
    svg += "<text x=\"" + fmt(gx) + "\" y=\"" + fmt(top + plot_h + 18) +
           "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
           "font-size=\"11\">" + fmt(value) + "</text>\n";
  }
  for (double t : tick_values(y_lo, y_hi, options.log_y)) {
    const double gy = py(t);
    const double value = options.log_y ? std::pow(10.0, t) : t;
    svg += "<line x1=\"" + fmt(left) + "\" y1=\"" + fmt(gy) + "\" x2=\"" +
           fmt(left + plot_w) + "\" y2=\"" + fmt(gy) +
           "\" stroke=\"#ddd\" stroke-width=\"1\"/>\n";
    svg += "<text x=\"" + fmt(left - 6) + "\" y=\"" + fmt(gy + 4) +
           "\" text-anchor=\"end\" font-family=\"sans-serif\" "
           "font-size=\"11\">" + fmt(value) + "</text>\n";
  }

  // Axis labels.
  svg += "<text x=\"" + fmt(left + plot_w / 2) + "\" y=\"" +
         fmt(height - 12) + "\" text-anchor=\"middle\" "
         "font-family=\"sans-serif\" font-size=\"12\">" +
         escape(options.x_label) + "</text>\n";
  svg += "<text x=\"16\" y=\"" + fmt(top + plot_h / 2) +
         "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
         "font-size=\"12\" transform=\"rotate(-90 16 " +
         fmt(top + plot_h / 2) + ")\">" + escape(options.y_label) +
         "</text>\n";

  // Series polylines and legend.
  for (std::size_t si = 0; si < series.size(); ++si) {
    const auto& s = series[si];
    std::string points;
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (i) points += ' ';
      points += fmt(px(coord(s.x[i], options.log_x))) + "," +
                fmt(py(coord(s.y[i], options.log_y)));
    }
    svg += std::string("<polyline fill=\"none\" stroke=\"") +
           detail_plot::palette(si) + "\" stroke-width=\"1.6\" points=\"" +
           points + "\"/>\n";
    const double ly = top + 16 + 16.0 * si;
    svg += std::string("<line x1=\"") + fmt(left + plot_w - 150) + "\" y1=\"" +
           fmt(ly - 4) + "\" x2=\"" + fmt(left + plot_w - 130) + "\" y2=\"" +
           fmt(ly - 4) + "\" stroke=\"" + detail_plot::palette(si) +
           "\" stroke-width=\"1.6\"/>\n";
    svg += "<text x=\"" + fmt(left + plot_w - 124) + "\" y=\"" + fmt(ly) +
           "\" font-family=\"sans-serif\" font-size=\"11\">" +
           escape(s.label) + "</text>\n";
  }
  svg += "</svg>\n";
  return svg;
}

}  // namespace ccmc
