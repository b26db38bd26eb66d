#pragma once

// Dependency-free SVG figures: weight heatmaps, line plots and bar charts.

#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lu/cli/csv.h"

namespace lu::cli {

/// Diverging blue-white-red scale centered at 0; |v| >= vmax saturates.
/// color(-v) is color(v) with red and blue swapped. vmax <= 0 gives the neutral color.
std::array<int, 3> diverging_color(double v, double vmax);

struct ScatterPoint {
  double x = 0.0;
  double y = 0.0;
  std::string group;  // colors the point: "A", "B", "R", anything else is neutral
};

struct HeatmapGeometry {
  double first = -55.0;  // data coordinate of the first cell center
  double spacing = 10.0;
};

/// grid[row][col], row 0 drawn at the bottom (smallest y).
std::string heatmap_svg(const std::vector<std::vector<double>>& grid, const HeatmapGeometry& geometry,
                        std::span<const ScatterPoint> scatter = {}, const std::string& title = "");

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

std::string lineplot_svg(std::span<const Series> series, const std::string& title = "");

struct Bar {
  std::string group;
  std::string series;
  double mean = 0.0;
  double std = 0.0;
};

/// Groups and series in first-appearance order; whiskers span mean +- 2 std.
std::string barplot_svg(std::span<const Bar> bars, std::optional<double> ideal, const std::string& title = "");

/// Weights CSV (matrix,row,col,value; uses matrix "W" when several are present)
/// with an optional dataset CSV (x,y,task) overlaid as a scatter.
std::string heatmap_from_csv(const CsvTable& weights, const CsvTable* dataset);
/// Long-format series CSV: series,x,y.
std::string lineplot_from_csv(const CsvTable& table);
/// Needs mean and std columns. Groups come from a "group" column or from
/// method/phase/relearn_subset; series from "series" or "metric_name".
std::string barplot_from_csv(const CsvTable& table, std::optional<double> ideal);

}  // namespace lu::cli
