#include "lu/core.h"

#include <cmath>

namespace lu {

double metric_value(const MetricList& metrics, std::string_view name) {
  for (const auto& m : metrics) {
    if (m.name == name) return m.value;
  }
  throw std::out_of_range("no metric named '" + std::string(name) + "'");
}

double standard_normal(Rng& rng) {
  constexpr double kTwoPi = 6.283185307179586476925286766559;
  double u1 = uniform01(rng);
  while (u1 <= 0.0) u1 = uniform01(rng);
  const double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(kTwoPi * u2);
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::uint64_t derive_seed(std::uint64_t seed, std::string_view stream) {
  const std::uint64_t h = fnv1a64(stream);
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (h | 1ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

namespace core {

void UnlearnConfig::validate(bool allow_zero_steps) const {
  if (steps == 0 && !allow_zero_steps) throw ValidationError("steps must be >= 1");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw ValidationError("learning_rate must be a positive finite number");
  }
  if (batch_size == 0) throw ValidationError("batch_size must be >= 1");
}

double UnlearnConfig::weight(const std::string& name, double fallback) const {
  auto it = loss_weights.find(name);
  return it == loss_weights.end() ? fallback : it->second;
}

std::vector<UnlearnConfig> replicate_config(const UnlearnConfig& config, std::size_t k) {
  std::vector<UnlearnConfig> out(k, config);
  for (std::size_t i = 0; i < k; ++i) {
    out[i].seed = derive_seed(config.seed, "stage-" + std::to_string(i + 1));
  }
  return out;
}

}  // namespace core
}  // namespace lu
