// Minimal static SVG figures: annotated heatmaps for sweep tables and line
// plots for per-time curves.
#pragma once

#include "core.hpp"

#include <algorithm>
#include <cstdio>
#include <limits>
#include <sstream>
#include <vector>

namespace replaylab::svg {

namespace detail {

inline std::string num(double v, int precision = 3) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*g", precision, v);
  return buf;
}

inline std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      default: out += c;
    }
  }
  return out;
}

// Blue (low) to white to red (high).
inline std::string diverging(double x) {
  x = std::clamp(x, 0.0, 1.0);
  int r, g, b;
  if (x < 0.5) {
    const double f = x / 0.5;
    r = static_cast<int>(59 + f * (255 - 59));
    g = static_cast<int>(76 + f * (255 - 76));
    b = static_cast<int>(192 + f * (255 - 192));
  } else {
    const double f = (x - 0.5) / 0.5;
    r = static_cast<int>(255 - f * (255 - 180));
    g = static_cast<int>(255 - f * (255 - 4));
    b = static_cast<int>(255 - f * (255 - 38));
  }
  char buf[16];
  std::snprintf(buf, sizeof(buf), "#%02x%02x%02x", r, g, b);
  return buf;
}

}  // namespace detail

/// values[row][col]; NaN cells are drawn as hatched gaps.
inline std::string heatmap(const std::string& title,
                           const std::vector<std::string>& row_labels,
                           const std::vector<std::string>& col_labels,
                           const std::vector<std::vector<double>>& values,
                           const std::string& row_axis, const std::string& col_axis) {
  const int cell = 70, left = 90, top = 50;
  const int width = left + cell * static_cast<int>(col_labels.size()) + 20;
  const int height = top + cell * static_cast<int>(row_labels.size()) + 60;
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (const auto& row : values)
    for (double v : row)
      if (std::isfinite(v)) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
  const double span = hi > lo ? hi - lo : 1.0;

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
     << height << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  os << "<defs><pattern id=\"gap\" width=\"6\" height=\"6\" patternUnits=\"userSpaceOnUse\">"
        "<path d=\"M0,6 L6,0\" stroke=\"#999\"/></pattern></defs>\n";
  os << "<text x=\"" << width / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">"
     << detail::escape(title) << "</text>\n";
  for (std::size_t i = 0; i < row_labels.size(); ++i) {
    const int y = top + cell * static_cast<int>(i);
    os << "<text x=\"" << left - 8 << "\" y=\"" << y + cell / 2 + 4
       << "\" text-anchor=\"end\">" << detail::escape(row_labels[i]) << "</text>\n";
    for (std::size_t j = 0; j < col_labels.size(); ++j) {
      const int x = left + cell * static_cast<int>(j);
      const double v = i < values.size() && j < values[i].size()
                           ? values[i][j]
                           : std::numeric_limits<double>::quiet_NaN();
      const std::string fill =
          std::isfinite(v) ? detail::diverging((v - lo) / span) : "url(#gap)";
      os << "<rect x=\"" << x << "\" y=\"" << y << "\" width=\"" << cell << "\" height=\""
         << cell << "\" fill=\"" << fill << "\" stroke=\"#fff\"/>\n";
      if (std::isfinite(v))
        os << "<text x=\"" << x + cell / 2 << "\" y=\"" << y + cell / 2 + 4
           << "\" text-anchor=\"middle\">" << detail::num(v) << "</text>\n";
    }
  }
  const int bottom = top + cell * static_cast<int>(row_labels.size());
  for (std::size_t j = 0; j < col_labels.size(); ++j)
    os << "<text x=\"" << left + cell * static_cast<int>(j) + cell / 2 << "\" y=\""
       << bottom + 16 << "\" text-anchor=\"middle\">" << detail::escape(col_labels[j])
       << "</text>\n";
  os << "<text x=\"" << left + cell * static_cast<int>(col_labels.size()) / 2 << "\" y=\""
     << bottom + 40 << "\" text-anchor=\"middle\">" << detail::escape(col_axis) << "</text>\n";
  os << "<text x=\"16\" y=\"" << top + cell * static_cast<int>(row_labels.size()) / 2
     << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
     << top + cell * static_cast<int>(row_labels.size()) / 2 << ")\">"
     << detail::escape(row_axis) << "</text>\n";
  os << "</svg>\n";
  return os.str();
}

struct Series {
  std::string name;
  std::vector<double> y;
};

/// Line plot of several series against their index scaled by `x_step`.
inline std::string line_plot(const std::string& title, const std::vector<Series>& series,
                             double x_step, const std::string& x_label,
                             const std::string& y_label) {
  const int width = 560, height = 360, left = 60, right = 150, top = 40, bottom = 50;
  const int pw = width - left - right, ph = height - top - bottom;
  std::size_t len = 1;
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (const auto& s : series) {
    len = std::max(len, s.y.size());
    for (double v : s.y)
      if (std::isfinite(v)) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
  }
  if (!(hi > lo)) {
    lo = std::isfinite(lo) ? lo - 1.0 : 0.0;
    hi = lo + 2.0;
  }
  const double x_max = static_cast<double>(len > 1 ? len - 1 : 1) * x_step;
  auto px = [&](double x) { return left + pw * x / x_max; };
  auto py = [&](double y) { return top + ph * (1.0 - (y - lo) / (hi - lo)); };
  static const char* kColors[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728",
                                  "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
                                  "#bcbd22", "#17becf"};

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
     << height << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  os << "<text x=\"" << left + pw / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">"
     << detail::escape(title) << "</text>\n";
  os << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << pw << "\" height=\""
     << ph << "\" fill=\"none\" stroke=\"#333\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double yv = lo + (hi - lo) * k / 4.0;
    const double xv = x_max * k / 4.0;
    os << "<text x=\"" << left - 6 << "\" y=\"" << py(yv) + 4 << "\" text-anchor=\"end\">"
       << detail::num(yv) << "</text>\n";
    os << "<text x=\"" << px(xv) << "\" y=\"" << top + ph + 16
       << "\" text-anchor=\"middle\">" << detail::num(xv) << "</text>\n";
  }
  os << "<text x=\"" << left + pw / 2 << "\" y=\"" << height - 10
     << "\" text-anchor=\"middle\">" << detail::escape(x_label) << "</text>\n";
  os << "<text x=\"14\" y=\"" << top + ph / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 14 "
     << top + ph / 2 << ")\">" << detail::escape(y_label) << "</text>\n";
  for (std::size_t s = 0; s < series.size(); ++s) {
    const char* color = kColors[s % 10];
    os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    bool first = true;
    for (std::size_t i = 0; i < series[s].y.size(); ++i) {
      if (!std::isfinite(series[s].y[i])) continue;
      if (!first) os << ' ';
      first = false;
      os << detail::num(px(static_cast<double>(i) * x_step), 6) << ','
         << detail::num(py(series[s].y[i]), 6);
    }
    os << "\"/>\n";
    const int ly = top + 10 + 16 * static_cast<int>(s);
    os << "<line x1=\"" << left + pw + 10 << "\" y1=\"" << ly << "\" x2=\"" << left + pw + 30
       << "\" y2=\"" << ly << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    os << "<text x=\"" << left + pw + 34 << "\" y=\"" << ly + 4 << "\">"
       << detail::escape(series[s].name) << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

}  // namespace replaylab::svg
