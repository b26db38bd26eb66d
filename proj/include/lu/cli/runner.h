#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>

#include "lu/cli/config.h"

namespace lu::cli {

inline constexpr const char* kVersion = "lu 0.1.0";

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitNumerical = 3;

struct RunOptions {
  std::optional<std::filesystem::path> output_dir;  // overrides the config
  std::optional<std::size_t> workers;               // overrides the config
  bool quiet = false;
};

struct RunResult {
  int exit_code = kExitOk;
  std::filesystem::path directory;
  std::string error;
};

/// $LU_OUTPUT_ROOT, or "runs" when unset or empty.
std::filesystem::path output_root();
std::filesystem::path resolve_output_dir(const ExperimentConfig& config, const RunOptions& options);

/// Runs every seed (up to `workers` at a time) and writes reports.csv,
/// aggregate.csv, recovery.csv, per-stage weight snapshots, GMM dataset and
/// logit-slice CSVs, figures and manifest.json. A numerical failure leaves the
/// outputs of finished seeds, an error manifest and exit code 3.
RunResult run_experiment(const ExperimentConfig& config, const RunOptions& options);

/// Component-substitution sweep over all eight masks (bigram configs only).
/// Writes ablation.csv, ablation_unlearned.csv, ablation_relearned.csv, their
/// bar charts and manifest.json.
RunResult run_ablation(const ExperimentConfig& config, const RunOptions& options);

/// load_config + run; config errors give exit code 2 without touching the output directory.
RunResult run_config(const std::filesystem::path& path, const RunOptions& options);
RunResult run_ablation_config(const std::filesystem::path& path, const RunOptions& options);

/// matrix,row,col,value for every parameter. GMM: matrix "W" (per_axis x per_axis)
/// and "bias"; bigram: W_E, W_Q, W_K, W_V, W_O, W_U.
std::string weights_csv(eval::TaskKind task, const ParamVector& params, const gmm::RbfGrid& grid = {});

}  // namespace lu::cli
