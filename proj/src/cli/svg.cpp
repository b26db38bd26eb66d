#include "lu/cli/svg.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>

#include "lu/common.h"

namespace lu::cli {

namespace {

constexpr std::array<int, 3> kNeutral{247, 247, 247};
constexpr std::array<int, 3> kPositive{178, 24, 43};

std::string esc(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&':
        out += "&amp;";
        break;
      case '<':
        out += "&lt;";
        break;
      case '>':
        out += "&gt;";
        break;
      case '"':
        out += "&quot;";
        break;
      case '\'':
        out += "&apos;";
        break;
      default:
        out += c;
    }
  }
  return out;
}

std::string px(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string hex(const std::array<int, 3>& c) {
  char buf[8];
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", c[0], c[1], c[2]);
  return buf;
}

std::string tick(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

const char* group_color(const std::string& g) {
  if (g == "A") return "#1b9e77";
  if (g == "B") return "#d95f02";
  if (g == "R") return "#7570b3";
  return "#666666";
}

const char* kPalette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                          "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

std::string palette(std::size_t i) { return kPalette[i % std::size(kPalette)]; }

struct Range {
  double lo;
  double hi;
};

// Data range widened by 5% of its span on each side; a degenerate range
// gets a half-width of 5% of max(|v|, 1).
Range padded(double lo, double hi) {
  const double span = hi - lo;
  if (span > 0.0) return {lo - 0.05 * span, hi + 0.05 * span};
  const double half = 0.05 * std::max(std::abs(lo), 1.0);
  return {lo - half, hi + half};
}

struct Frame {
  double left = 70.0;
  double top = 40.0;
  double width = 520.0;
  double height = 320.0;
  Range x{0, 1};
  Range y{0, 1};

  double sx(double v) const { return left + (v - x.lo) / (x.hi - x.lo) * width; }
  double sy(double v) const { return top + height - (v - y.lo) / (y.hi - y.lo) * height; }
};

void open_svg(std::ostringstream& os, double w, double h, const std::string& title) {
  os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
     << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << px(w) << "\" height=\"" << px(h)
     << "\" viewBox=\"0 0 " << px(w) << ' ' << px(h) << "\" font-family=\"sans-serif\" font-size=\"11\">\n"
     << "<rect width=\"100%\" height=\"100%\" fill=\"#ffffff\"/>\n";
  if (!title.empty()) {
    os << "<text x=\"" << px(w / 2) << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">" << esc(title)
       << "</text>\n";
  }
}

void axes(std::ostringstream& os, const Frame& f, bool x_ticks) {
  os << "<g class=\"axes\" stroke=\"#000000\">\n";
  os << "<line x1=\"" << px(f.left) << "\" y1=\"" << px(f.top + f.height) << "\" x2=\"" << px(f.left + f.width)
     << "\" y2=\"" << px(f.top + f.height) << "\"/>\n";
  os << "<line x1=\"" << px(f.left) << "\" y1=\"" << px(f.top) << "\" x2=\"" << px(f.left) << "\" y2=\""
     << px(f.top + f.height) << "\"/>\n";
  os << "</g>\n<g class=\"ticks\">\n";
  for (int i = 0; i <= 4; ++i) {
    const double v = f.y.lo + (f.y.hi - f.y.lo) * i / 4.0;
    os << "<text x=\"" << px(f.left - 6) << "\" y=\"" << px(f.sy(v) + 4) << "\" text-anchor=\"end\">" << tick(v)
       << "</text>\n";
    if (x_ticks) {
      const double u = f.x.lo + (f.x.hi - f.x.lo) * i / 4.0;
      os << "<text x=\"" << px(f.sx(u)) << "\" y=\"" << px(f.top + f.height + 16) << "\" text-anchor=\"middle\">"
         << tick(u) << "</text>\n";
    }
  }
  os << "</g>\n";
}

}  // namespace

std::array<int, 3> diverging_color(double v, double vmax) {
  const double t = vmax > 0.0 ? std::clamp(v / vmax, -1.0, 1.0) : 0.0;
  const double a = std::abs(t);
  std::array<int, 3> c{};
  for (int k = 0; k < 3; ++k) c[k] = static_cast<int>(std::lround(kNeutral[k] + a * (kPositive[k] - kNeutral[k])));
  if (t < 0.0) std::swap(c[0], c[2]);
  return c;
}

std::string heatmap_svg(const std::vector<std::vector<double>>& grid, const HeatmapGeometry& g,
                        std::span<const ScatterPoint> scatter, const std::string& title) {
  if (grid.empty() || grid.front().empty()) throw ValidationError("heatmap needs a non-empty grid");
  const std::size_t rows = grid.size();
  const std::size_t cols = grid.front().size();
  for (const auto& r : grid) {
    if (r.size() != cols) throw ValidationError("heatmap grid is ragged");
  }
  double vmax = 0.0;
  for (const auto& r : grid) {
    for (double v : r) vmax = std::max(vmax, std::abs(v));
  }

  constexpr double kCell = 30.0;
  Frame f;
  f.left = 60.0;
  f.top = 40.0;
  f.width = kCell * static_cast<double>(cols);
  f.height = kCell * static_cast<double>(rows);
  f.x = {g.first - g.spacing / 2, g.first + g.spacing * (static_cast<double>(cols) - 0.5)};
  f.y = {g.first - g.spacing / 2, g.first + g.spacing * (static_cast<double>(rows) - 0.5)};

  std::ostringstream os;
  open_svg(os, f.left + f.width + 110, f.top + f.height + 50, title);
  os << "<g class=\"cells\" data-vmax=\"" << format_double(vmax) << "\">\n";
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      const double v = grid[r][c];
      os << "<rect class=\"cell\" data-row=\"" << r << "\" data-col=\"" << c << "\" data-value=\""
         << format_double(v) << "\" x=\"" << px(f.left + kCell * static_cast<double>(c)) << "\" y=\""
         << px(f.top + kCell * static_cast<double>(rows - 1 - r)) << "\" width=\"" << px(kCell) << "\" height=\""
         << px(kCell) << "\" fill=\"" << hex(diverging_color(v, vmax)) << "\"/>\n";
    }
  }
  os << "</g>\n";
  if (!scatter.empty()) {
    os << "<g class=\"scatter\" fill-opacity=\"0.6\">\n";
    for (const auto& p : scatter) {
      if (p.x < f.x.lo || p.x > f.x.hi || p.y < f.y.lo || p.y > f.y.hi) continue;
      os << "<circle cx=\"" << px(f.sx(p.x)) << "\" cy=\"" << px(f.sy(p.y)) << "\" r=\"1.5\" fill=\""
         << group_color(p.group) << "\"/>\n";
    }
    os << "</g>\n";
  }
  axes(os, f, true);
  // Color key: -vmax, 0, +vmax.
  const double kx = f.left + f.width + 20;
  os << "<g class=\"colorbar\">\n";
  const double key[] = {vmax, 0.0, -vmax};
  for (int i = 0; i < 3; ++i) {
    const double y = f.top + 20.0 * i;
    os << "<rect x=\"" << px(kx) << "\" y=\"" << px(y) << "\" width=\"14\" height=\"14\" fill=\""
       << hex(diverging_color(key[i], vmax)) << "\"/>\n<text x=\"" << px(kx + 20) << "\" y=\"" << px(y + 11)
       << "\">" << tick(key[i]) << "</text>\n";
  }
  os << "</g>\n</svg>\n";
  return os.str();
}

std::string lineplot_svg(std::span<const Series> series, const std::string& title) {
  if (series.empty()) throw ValidationError("line plot needs at least one series");
  double xlo = INFINITY, xhi = -INFINITY, ylo = INFINITY, yhi = -INFINITY;
  for (const auto& s : series) {
    if (s.x.size() != s.y.size() || s.x.empty()) {
      throw ValidationError("series '" + s.label + "' needs matching, non-empty x and y");
    }
    for (double v : s.x) xlo = std::min(xlo, v), xhi = std::max(xhi, v);
    for (double v : s.y) ylo = std::min(ylo, v), yhi = std::max(yhi, v);
  }
  Frame f;
  f.x = padded(xlo, xhi);
  f.y = padded(ylo, yhi);

  std::ostringstream os;
  open_svg(os, f.left + f.width + 160, f.top + f.height + 50, title);
  os << "<g id=\"plot-area\" data-xmin=\"" << format_double(f.x.lo) << "\" data-xmax=\"" << format_double(f.x.hi)
     << "\" data-ymin=\"" << format_double(f.y.lo) << "\" data-ymax=\"" << format_double(f.y.hi) << "\">\n";
  if (f.y.lo < 0.0 && f.y.hi > 0.0) {
    os << "<line class=\"zero\" x1=\"" << px(f.left) << "\" y1=\"" << px(f.sy(0)) << "\" x2=\""
       << px(f.left + f.width) << "\" y2=\"" << px(f.sy(0)) << "\" stroke=\"#bbbbbb\" stroke-dasharray=\"3,3\"/>\n";
  }
  for (std::size_t i = 0; i < series.size(); ++i) {
    const auto& s = series[i];
    os << "<polyline class=\"series\" data-label=\"" << esc(s.label) << "\" fill=\"none\" stroke=\"" << palette(i)
       << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t k = 0; k < s.x.size(); ++k) {
      os << (k ? " " : "") << px(f.sx(s.x[k])) << ',' << px(f.sy(s.y[k]));
    }
    os << "\"/>\n";
  }
  os << "</g>\n";
  axes(os, f, true);
  os << "<g class=\"legend\">\n";
  for (std::size_t i = 0; i < series.size(); ++i) {
    const double y = f.top + 16.0 * static_cast<double>(i);
    const double x = f.left + f.width + 15;
    os << "<g class=\"legend-entry\"><line x1=\"" << px(x) << "\" y1=\"" << px(y) << "\" x2=\"" << px(x + 18)
       << "\" y2=\"" << px(y) << "\" stroke=\"" << palette(i) << "\" stroke-width=\"2\"/><text x=\"" << px(x + 24)
       << "\" y=\"" << px(y + 4) << "\">" << esc(series[i].label) << "</text></g>\n";
  }
  os << "</g>\n</svg>\n";
  return os.str();
}

std::string barplot_svg(std::span<const Bar> bars, std::optional<double> ideal, const std::string& title) {
  if (bars.empty()) throw ValidationError("bar plot needs at least one bar");
  std::vector<std::string> groups;
  std::vector<std::string> names;
  const auto position = [](std::vector<std::string>& v, const std::string& s) {
    auto it = std::find(v.begin(), v.end(), s);
    if (it != v.end()) return static_cast<std::size_t>(it - v.begin());
    v.push_back(s);
    return v.size() - 1;
  };
  double lo = 0.0, hi = 0.0;
  for (const auto& b : bars) {
    if (!(b.std >= 0.0)) throw ValidationError("negative std for bar " + b.group + "/" + b.series);
    position(groups, b.group);
    position(names, b.series);
    lo = std::min(lo, b.mean - 2 * b.std);
    hi = std::max(hi, b.mean + 2 * b.std);
  }
  if (ideal) lo = std::min(lo, *ideal), hi = std::max(hi, *ideal);

  Frame f;
  f.width = std::max(520.0, 30.0 * static_cast<double>(bars.size()) + 20.0 * static_cast<double>(groups.size()));
  f.x = {0.0, static_cast<double>(groups.size())};
  f.y = padded(lo, hi);
  const double slot = 0.8 / static_cast<double>(names.size());

  std::ostringstream os;
  open_svg(os, f.left + f.width + 170, f.top + f.height + 60, title);
  os << "<g id=\"plot-area\" data-ymin=\"" << format_double(f.y.lo) << "\" data-ymax=\"" << format_double(f.y.hi)
     << "\">\n";
  for (const auto& b : bars) {
    const std::size_t gi = position(groups, b.group);
    const std::size_t si = position(names, b.series);
    const double x0 = static_cast<double>(gi) + 0.1 + slot * static_cast<double>(si);
    const double base = std::clamp(0.0, f.y.lo, f.y.hi);
    const double top = f.sy(std::max(b.mean, base));
    const double bottom = f.sy(std::min(b.mean, base));
    const double cx = f.sx(x0 + slot / 2);
    os << "<g class=\"bar-group\" data-group=\"" << esc(b.group) << "\" data-series=\"" << esc(b.series)
       << "\">\n<rect class=\"bar\" data-mean=\"" << format_double(b.mean) << "\" x=\"" << px(f.sx(x0))
       << "\" y=\"" << px(top) << "\" width=\"" << px(f.sx(x0 + slot) - f.sx(x0)) << "\" height=\""
       << px(bottom - top) << "\" fill=\"" << palette(si) << "\"/>\n<line class=\"whisker\" data-lo=\""
       << format_double(b.mean - 2 * b.std) << "\" data-hi=\"" << format_double(b.mean + 2 * b.std) << "\" x1=\""
       << px(cx) << "\" y1=\"" << px(f.sy(b.mean - 2 * b.std)) << "\" x2=\"" << px(cx) << "\" y2=\""
       << px(f.sy(b.mean + 2 * b.std)) << "\" stroke=\"#000000\"/>\n</g>\n";
  }
  if (ideal) {
    os << "<line class=\"ideal\" data-value=\"" << format_double(*ideal) << "\" x1=\"" << px(f.left) << "\" y1=\""
       << px(f.sy(*ideal)) << "\" x2=\"" << px(f.left + f.width) << "\" y2=\"" << px(f.sy(*ideal))
       << "\" stroke=\"#000000\" stroke-dasharray=\"6,4\"/>\n<text x=\"" << px(f.left + f.width + 4) << "\" y=\""
       << px(f.sy(*ideal) + 4) << "\">Ideal</text>\n";
  }
  os << "</g>\n";
  axes(os, f, false);
  os << "<g class=\"group-labels\">\n";
  for (std::size_t i = 0; i < groups.size(); ++i) {
    os << "<text x=\"" << px(f.sx(static_cast<double>(i) + 0.5)) << "\" y=\"" << px(f.top + f.height + 16)
       << "\" text-anchor=\"middle\">" << esc(groups[i]) << "</text>\n";
  }
  os << "</g>\n<g class=\"legend\">\n";
  for (std::size_t i = 0; i < names.size(); ++i) {
    const double y = f.top + 16.0 * static_cast<double>(i);
    const double x = f.left + f.width + 40;
    os << "<g class=\"legend-entry\"><rect x=\"" << px(x) << "\" y=\"" << px(y - 8) << "\" width=\"12\" height=\"12\" fill=\""
       << palette(i) << "\"/><text x=\"" << px(x + 18) << "\" y=\"" << px(y + 2) << "\">" << esc(names[i])
       << "</text></g>\n";
  }
  os << "</g>\n</svg>\n";
  return os.str();
}

std::string heatmap_from_csv(const CsvTable& weights, const CsvTable* dataset) {
  const std::size_t cm = weights.require("matrix");
  const std::size_t cr = weights.require("row");
  const std::size_t cc = weights.require("col");
  const std::size_t cv = weights.require("value");
  std::string matrix;
  for (const auto& row : weights.rows) {
    if (row[cm] == "W") matrix = "W";
  }
  if (matrix.empty()) {
    for (const auto& row : weights.rows) {
      if (matrix.empty()) matrix = row[cm];
      if (row[cm] != matrix) throw ValidationError(weights.source + ": several matrices and none named 'W'");
    }
  }
  std::map<std::pair<long, long>, double> cells;
  long rows = 0, cols = 0;
  for (std::size_t i = 0; i < weights.rows.size(); ++i) {
    if (weights.rows[i][cm] != matrix) continue;
    const double r = weights.number(i, cr);
    const double c = weights.number(i, cc);
    if (r < 0 || c < 0 || r != std::floor(r) || c != std::floor(c)) {
      throw ValidationError(weights.source + ": row " + std::to_string(i + 2) + ": row/col must be non-negative integers");
    }
    cells[{static_cast<long>(r), static_cast<long>(c)}] = weights.number(i, cv);
    rows = std::max(rows, static_cast<long>(r) + 1);
    cols = std::max(cols, static_cast<long>(c) + 1);
  }
  if (cells.empty()) throw ValidationError(weights.source + ": no weight rows");
  if (cells.size() != static_cast<std::size_t>(rows * cols)) {
    throw ValidationError(weights.source + ": matrix " + matrix + " is missing cells");
  }
  std::vector<std::vector<double>> grid(rows, std::vector<double>(cols));
  for (const auto& [k, v] : cells) grid[k.first][k.second] = v;

  std::vector<ScatterPoint> points;
  if (dataset) {
    const std::size_t cx = dataset->require("x");
    const std::size_t cy = dataset->require("y");
    const auto ct = dataset->find("task");
    for (std::size_t i = 0; i < dataset->rows.size(); ++i) {
      points.push_back({dataset->number(i, cx), dataset->number(i, cy), ct ? dataset->rows[i][*ct] : ""});
    }
  }
  return heatmap_svg(grid, HeatmapGeometry{}, points);
}

std::string lineplot_from_csv(const CsvTable& table) {
  const std::size_t cs = table.require("series");
  const std::size_t cx = table.require("x");
  const std::size_t cy = table.require("y");
  std::vector<Series> series;
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const std::string& label = table.rows[i][cs];
    auto it = std::find_if(series.begin(), series.end(), [&](const Series& s) { return s.label == label; });
    if (it == series.end()) {
      series.push_back({label, {}, {}});
      it = series.end() - 1;
    }
    it->x.push_back(table.number(i, cx));
    it->y.push_back(table.number(i, cy));
  }
  return lineplot_svg(series);
}

std::string barplot_from_csv(const CsvTable& table, std::optional<double> ideal) {
  const std::size_t cmean = table.require("mean");
  const std::size_t cstd = table.require("std");
  std::vector<std::size_t> group_cols;
  if (auto g = table.find("group")) {
    group_cols.push_back(*g);
  } else {
    for (const char* c : {"method", "phase", "relearn_subset"}) group_cols.push_back(table.require(c));
  }
  const auto series_col = table.find("series") ? table.require("series") : table.require("metric_name");
  std::vector<Bar> bars;
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    Bar b;
    for (std::size_t c : group_cols) b.group += (b.group.empty() ? "" : " ") + table.rows[i][c];
    b.series = table.rows[i][series_col];
    b.mean = table.number(i, cmean);
    b.std = table.number(i, cstd);
    if (b.std < 0) throw ValidationError(table.source + ": row " + std::to_string(i + 2) + ": negative std");
    bars.push_back(std::move(b));
  }
  return barplot_svg(bars, ideal);
}

}  // namespace lu::cli
