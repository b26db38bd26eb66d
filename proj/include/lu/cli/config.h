#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "lu/eval.h"

namespace lu::cli {

struct ExperimentConfig {
  std::string name = "experiment";
  eval::ProtocolConfig protocol;
  std::vector<eval::Method> methods{eval::Method::U, eval::Method::LU};
  std::vector<eval::RelearnTarget> relearn_targets;
  std::vector<std::uint64_t> seeds;
  std::string output_dir;  // relative paths resolve against the output root; empty means `name`
  std::size_t workers = 1;
  std::size_t slice_points = 121;  // GMM logit slice samples over [-60, 60]
  double ideal = 1.0 / 3.0;        // reference line of ablation bar charts
  std::string canonical;           // compact, key-sorted JSON of the source document
};

/// Parses and validates a JSON experiment config. Every schema violation
/// (syntax, unknown key, wrong type, bad value) throws ConfigError with a
/// message of the form "<source>:<line>: <what>".
ExperimentConfig parse_config(std::string_view text, std::string_view source = "<config>");
ExperimentConfig load_config(const std::filesystem::path& path);

/// FNV-1a of the canonical document as 16 hex digits.
std::string config_hash(const ExperimentConfig& config);

}  // namespace lu::cli
