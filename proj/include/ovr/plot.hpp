#pragma once

// Standalone SVG 1.1 line plots from run-record CSV files.

#include "ovr/csv.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace ovr {

struct PlotSeries {
  std::string group;
  std::vector<std::pair<double, double>> points;  // sorted by x, duplicate x averaged
};

struct PlotOptions {
  std::optional<std::pair<std::string, std::string>> filter;  // keep rows where column == value
  std::optional<bool> log_x;                                   // default: on when x is "lambda"
  int width = 720;
  int height = 480;
};

namespace detail {

inline std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

inline std::string fmt(double v, const char* spec = "%.2f") {
  char buf[48];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

inline std::optional<double> to_number(const std::string& s) {
  if (s.empty()) return std::nullopt;
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size() || !std::isfinite(v)) return std::nullopt;
    return v;
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

}  // namespace detail

inline std::vector<PlotSeries> collect_series(const CsvTable& t, const std::string& x_col, const std::string& y_col,
                                              const std::string& group_col, const PlotOptions& opt = {}) {
  const std::size_t xi = t.column(x_col), yi = t.column(y_col), gi = t.column(group_col);
  std::optional<std::size_t> fi;
  if (opt.filter) fi = t.column(opt.filter->first);

  std::map<std::string, std::map<double, std::pair<double, int>>> acc;
  for (const auto& row : t.rows) {
    if (fi && row[*fi] != opt.filter->second) continue;
    const auto x = detail::to_number(row[xi]);
    const auto y = detail::to_number(row[yi]);
    if (!x || !y) continue;
    auto& slot = acc[row[gi]][*x];
    slot.first += *y;
    slot.second += 1;
  }
  if (acc.empty()) throw InvalidArgument("plot: selection is empty (no rows with numeric " + x_col + " and " + y_col + ")");

  std::vector<PlotSeries> out;
  for (const auto& [g, pts] : acc) {
    PlotSeries s{g, {}};
    for (const auto& [x, sum] : pts) s.points.emplace_back(x, sum.first / sum.second);
    out.push_back(std::move(s));
  }
  // Numeric group labels sort numerically.
  std::stable_sort(out.begin(), out.end(), [](const PlotSeries& a, const PlotSeries& b) {
    const auto na = detail::to_number(a.group), nb = detail::to_number(b.group);
    if (na && nb) return *na < *nb;
    return a.group < b.group;
  });
  return out;
}

inline std::string render_svg_plot(const std::vector<PlotSeries>& series, const std::string& x_label,
                                   const std::string& y_label, const std::string& group_label, bool log_x,
                                   int width = 720, int height = 480) {
  static const char* palette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                                  "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
  const double left = 80, right = 170, top = 30, bottom = 60;
  const double pw = width - left - right, ph = height - top - bottom;

  // Under a log axis, x = 0 is drawn one decade below the smallest positive x.
  double min_pos = INFINITY;
  for (const auto& s : series)
    for (const auto& [x, y] : s.points)
      if (x > 0) min_pos = std::min(min_pos, x);
  const bool has_zero = log_x && std::any_of(series.begin(), series.end(), [](const PlotSeries& s) {
    return std::any_of(s.points.begin(), s.points.end(), [](const auto& p) { return p.first <= 0; });
  });
  if (log_x && !std::isfinite(min_pos)) min_pos = 1.0;
  const double zero_at = std::floor(std::log10(min_pos)) - 1.0;
  auto xval = [&](double x) { return log_x ? (x > 0 ? std::log10(x) : zero_at) : x; };

  double x0 = INFINITY, x1 = -INFINITY, y0 = INFINITY, y1 = -INFINITY;
  for (const auto& s : series)
    for (const auto& [x, y] : s.points) {
      x0 = std::min(x0, xval(x));
      x1 = std::max(x1, xval(x));
      y0 = std::min(y0, y);
      y1 = std::max(y1, y);
    }
  if (log_x) {
    x0 = std::floor(x0);
    x1 = std::ceil(x1);
  }
  if (x1 - x0 < 1e-12) {
    x0 -= 0.5;
    x1 += 0.5;
  }
  if (y1 - y0 < 1e-12) {
    y0 -= 0.5;
    y1 += 0.5;
  } else {
    const double pad = 0.05 * (y1 - y0);
    y0 -= pad;
    y1 += pad;
  }
  auto px = [&](double v) { return left + (v - x0) / (x1 - x0) * pw; };
  auto py = [&](double v) { return top + (1.0 - (v - y0) / (y1 - y0)) * ph; };

  std::ostringstream os;
  os << "<?xml version=\"1.0\" encoding=\"UTF-8\" standalone=\"no\"?>\n"
     << "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" << width << "\" height=\"" << height
     << "\" viewBox=\"0 0 " << width << ' ' << height << "\">\n"
     << "<rect x=\"0\" y=\"0\" width=\"" << width << "\" height=\"" << height << "\" fill=\"white\"/>\n"
     << "<g id=\"axes\" stroke=\"black\" stroke-width=\"1\">\n"
     << "<line x1=\"" << left << "\" y1=\"" << top + ph << "\" x2=\"" << left + pw << "\" y2=\"" << top + ph
     << "\"/>\n"
     << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << top + ph << "\"/>\n"
     << "</g>\n";

  os << "<g id=\"ticks\" font-family=\"sans-serif\" font-size=\"11\">\n";
  if (log_x) {
    for (double d = x0; d <= x1 + 1e-9; d += 1.0) {
      const std::string label = has_zero && std::abs(d - zero_at) < 1e-9 ? "0" : "1e" + detail::fmt(d, "%.0f");
      os << "<line x1=\"" << detail::fmt(px(d)) << "\" y1=\"" << top + ph << "\" x2=\"" << detail::fmt(px(d))
         << "\" y2=\"" << top + ph + 5 << "\" stroke=\"black\"/>\n"
         << "<text x=\"" << detail::fmt(px(d)) << "\" y=\"" << top + ph + 18 << "\" text-anchor=\"middle\">"
         << label << "</text>\n";
    }
  } else {
    for (int i = 0; i <= 5; ++i) {
      const double v = x0 + (x1 - x0) * i / 5.0;
      os << "<line x1=\"" << detail::fmt(px(v)) << "\" y1=\"" << top + ph << "\" x2=\"" << detail::fmt(px(v))
         << "\" y2=\"" << top + ph + 5 << "\" stroke=\"black\"/>\n"
         << "<text x=\"" << detail::fmt(px(v)) << "\" y=\"" << top + ph + 18 << "\" text-anchor=\"middle\">"
         << detail::fmt(v, "%.3g") << "</text>\n";
    }
  }
  for (int i = 0; i <= 5; ++i) {
    const double v = y0 + (y1 - y0) * i / 5.0;
    os << "<line x1=\"" << left - 5 << "\" y1=\"" << detail::fmt(py(v)) << "\" x2=\"" << left << "\" y2=\""
       << detail::fmt(py(v)) << "\" stroke=\"black\"/>\n"
       << "<text x=\"" << left - 8 << "\" y=\"" << detail::fmt(py(v) + 4) << "\" text-anchor=\"end\">"
       << detail::fmt(v, "%.3g") << "</text>\n";
  }
  os << "</g>\n";

  os << "<text x=\"" << detail::fmt(left + pw / 2) << "\" y=\"" << height - 15
     << "\" font-family=\"sans-serif\" font-size=\"13\" text-anchor=\"middle\">" << detail::xml_escape(x_label)
     << (log_x ? " (log scale)" : "") << "</text>\n"
     << "<text x=\"18\" y=\"" << detail::fmt(top + ph / 2)
     << "\" font-family=\"sans-serif\" font-size=\"13\" text-anchor=\"middle\" transform=\"rotate(-90 18 "
     << detail::fmt(top + ph / 2) << ")\">" << detail::xml_escape(y_label) << "</text>\n";

  for (std::size_t i = 0; i < series.size(); ++i) {
    const auto& s = series[i];
    const char* color = palette[i % 10];
    os << "<g class=\"series\" data-group=\"" << detail::xml_escape(s.group) << "\">\n";
    if (s.points.size() >= 2) {
      os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
      for (std::size_t k = 0; k < s.points.size(); ++k)
        os << (k ? " " : "") << detail::fmt(px(xval(s.points[k].first))) << ','
           << detail::fmt(py(s.points[k].second));
      os << "\"/>\n";
    }
    for (const auto& [x, y] : s.points)
      os << "<circle cx=\"" << detail::fmt(px(xval(x))) << "\" cy=\"" << detail::fmt(py(y)) << "\" r=\"3\" fill=\""
         << color << "\"/>\n";
    os << "</g>\n";
  }

  const double lx = left + pw + 20;
  os << "<g id=\"legend\" font-family=\"sans-serif\" font-size=\"12\">\n"
     << "<text x=\"" << lx << "\" y=\"" << top + 10 << "\" font-weight=\"bold\">" << detail::xml_escape(group_label)
     << "</text>\n";
  for (std::size_t i = 0; i < series.size(); ++i) {
    const double ly = top + 30 + 18.0 * static_cast<double>(i);
    os << "<rect x=\"" << lx << "\" y=\"" << ly - 9 << "\" width=\"12\" height=\"12\" fill=\"" << palette[i % 10]
       << "\"/>\n"
       << "<text x=\"" << lx + 18 << "\" y=\"" << ly + 1 << "\">" << detail::xml_escape(series[i].group)
       << "</text>\n";
  }
  os << "</g>\n</svg>\n";
  return os.str();
}

inline void plot_csv(const std::filesystem::path& csv_path, const std::string& x_column, const std::string& y_column,
                     const std::string& group_by, const std::filesystem::path& out_svg, const PlotOptions& opt = {}) {
  std::ifstream in(csv_path);
  if (!in) throw FormatError("plot: cannot open " + csv_path.string());
  const CsvTable t = read_csv(in);
  const auto series = collect_series(t, x_column, y_column, group_by, opt);
  const bool log_x = opt.log_x.value_or(x_column == "lambda");
  const std::string svg = render_svg_plot(series, x_column, y_column, group_by, log_x, opt.width, opt.height);
  std::ofstream out(out_svg, std::ios::binary);
  if (!out) throw FormatError("plot: cannot write " + out_svg.string());
  out << svg;
}

}  // namespace ovr
