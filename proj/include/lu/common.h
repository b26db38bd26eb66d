#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace lu {

/// Flat parameter vector shared by every model family.
using ParamVector = std::vector<double>;

using Rng = std::mt19937_64;

/// Input that violates a documented precondition (overlapping folds, bad sizes, ...).
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Inconsistent wiring between components, e.g. a primitive that changes dimensionality.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Non-finite values or divergence during optimization.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Metric {
  std::string name;
  double value = 0.0;

  friend bool operator==(const Metric&, const Metric&) = default;
};

using MetricList = std::vector<Metric>;

/// Value of `name` in `metrics`; throws std::out_of_range when absent.
double metric_value(const MetricList& metrics, std::string_view name);

/// Uniform double in [0, 1) from the top 53 bits of one engine draw.
inline double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

inline double uniform(Rng& rng, double lo, double hi) { return lo + (hi - lo) * uniform01(rng); }

/// Uniform integer in [0, n), n > 0.
inline std::size_t uniform_index(Rng& rng, std::size_t n) { return static_cast<std::size_t>(rng() % n); }

/// Standard normal via Box-Muller (one draw per call, no cached pair).
double standard_normal(Rng& rng);

/// 64-bit FNV-1a.
std::uint64_t fnv1a64(std::string_view bytes);

/// Derives an independent stream seed from a base seed and a stream label.
/// Stable across platforms (FNV-1a over the label, then splitmix64).
std::uint64_t derive_seed(std::uint64_t seed, std::string_view stream);

}  // namespace lu
