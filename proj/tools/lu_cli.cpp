#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "lu/cli/csv.h"
#include "lu/cli/runner.h"
#include "lu/cli/svg.h"

namespace {

using namespace lu::cli;

int report(const RunResult& r) {
  if (r.exit_code != kExitOk) {
    std::cerr << "error: " << r.error << '\n';
  } else {
    std::cout << r.directory.string() << '\n';
  }
  return r.exit_code;
}

int plot(const std::function<std::string()>& render, const std::string& out) {
  try {
    write_file(out, render());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfig;
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Layered unlearning experiments on synthetic testbeds"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);

  RunOptions options;
  std::string config_path;
  std::string out_dir;
  std::size_t workers = 0;
  const auto add_run_flags = [&](CLI::App* sub) {
    sub->add_option("config", config_path, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
    sub->add_option("-o,--out", out_dir, "Output directory (default: $LU_OUTPUT_ROOT/<output_dir or name>)");
    sub->add_option("-j,--workers", workers, "Seeds run concurrently (overrides the config)")
        ->check(CLI::PositiveNumber);
    sub->add_flag("-q,--quiet", options.quiet, "No progress output");
  };
  auto* run = app.add_subcommand("run", "Run the unlearn/relearn protocol for every seed");
  add_run_flags(run);
  auto* ablation = app.add_subcommand("ablation", "Component-substitution sweep (bigram configs)");
  add_run_flags(ablation);

  std::string in_csv, out_svg, dataset_csv;
  auto* heat = app.add_subcommand("plot-heatmap", "Weight heatmap from a snapshot CSV");
  heat->add_option("csv", in_csv, "Snapshot CSV (matrix,row,col,value)")->required();
  heat->add_option("svg", out_svg, "Output SVG")->required();
  heat->add_option("--dataset", dataset_csv, "Dataset CSV (x,y,task) to overlay");
  auto* line = app.add_subcommand("plot-line", "Line plot from a series CSV");
  line->add_option("csv", in_csv, "Series CSV (series,x,y)")->required();
  line->add_option("svg", out_svg, "Output SVG")->required();
  std::optional<double> ideal;
  auto* bars = app.add_subcommand("plot-bars", "Bar chart with 2-std whiskers from an aggregate CSV");
  bars->add_option("csv", in_csv, "Aggregate CSV (needs mean and std)")->required();
  bars->add_option("svg", out_svg, "Output SVG")->required();
  bars->add_option("--ideal", ideal, "Draw the Ideal reference line at this value");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }
  if (!out_dir.empty()) options.output_dir = out_dir;
  if (workers > 0) options.workers = workers;

  if (*run) return report(run_config(config_path, options));
  if (*ablation) return report(run_ablation_config(config_path, options));
  if (*heat) {
    return plot(
        [&] {
          const auto weights = read_csv(in_csv);
          if (dataset_csv.empty()) return heatmap_from_csv(weights, nullptr);
          const auto data = read_csv(dataset_csv);
          return heatmap_from_csv(weights, &data);
        },
        out_svg);
  }
  if (*line) return plot([&] { return lineplot_from_csv(read_csv(in_csv)); }, out_svg);
  return plot([&] { return barplot_from_csv(read_csv(in_csv), ideal); }, out_svg);
}
