#pragma once

// Sequential (layered) unlearning over an arbitrary unlearning primitive.
//
// Example sets are sorted vectors of unique example identifiers. The GMM
// testbed uses indices into its training dataset, the bigram testbed uses
// tokens. Any totally ordered, copyable identifier works.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <iterator>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "lu/common.h"

namespace lu::core {

template <typename Example>
using ExampleSet = std::vector<Example>;

/// Hyperparameters of one optimization stage (unlearning, training or relearning).
struct UnlearnConfig {
  std::size_t steps = 1;
  double learning_rate = 1e-3;
  std::size_t batch_size = 1;
  std::uint64_t seed = 0;
  std::map<std::string, double> loss_weights{{"forget", 1.0}, {"retain", 1.0}};

  /// Throws ValidationError unless steps >= 1, learning_rate > 0, batch_size >= 1.
  /// `allow_zero_steps` admits the no-op stage used by identity checks.
  void validate(bool allow_zero_steps = false) const;

  double weight(const std::string& name, double fallback = 1.0) const;

  friend bool operator==(const UnlearnConfig&, const UnlearnConfig&) = default;
};

/// The same stage config repeated k times, each copy with a distinct derived seed.
std::vector<UnlearnConfig> replicate_config(const UnlearnConfig& config, std::size_t k);

template <typename Example>
using UnlearnPrimitive = std::function<ParamVector(const ParamVector& params,
                                                   const ExampleSet<Example>& forget,
                                                   const ExampleSet<Example>& retain,
                                                   const UnlearnConfig& hyper)>;

/// Optional per-stage evaluation hook; called on theta_0 .. theta_k.
using StageProbe = std::function<MetricList(const ParamVector&)>;

template <typename Example>
struct FoldPlan {
  std::vector<ExampleSet<Example>> folds;
  ExampleSet<Example> retain;

  std::size_t k() const { return folds.size(); }
};

template <typename Example>
struct LayeredTrajectory {
  std::vector<ParamVector> stage_params;  // theta_0 .. theta_k
  std::vector<MetricList> stage_reports;  // empty unless a probe was supplied
  std::vector<ExampleSet<Example>> stage_forget;
  std::vector<ExampleSet<Example>> stage_retain;
  std::vector<UnlearnConfig> stage_hypers;

  const ParamVector& final_params() const { return stage_params.back(); }
};

namespace detail {

template <typename Example>
ExampleSet<Example> normalized(ExampleSet<Example> set) {
  std::sort(set.begin(), set.end());
  set.erase(std::unique(set.begin(), set.end()), set.end());
  return set;
}

template <typename Example>
ExampleSet<Example> set_union(const ExampleSet<Example>& a, const ExampleSet<Example>& b) {
  ExampleSet<Example> out;
  out.reserve(a.size() + b.size());
  std::set_union(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return out;
}

template <typename Example>
ExampleSet<Example> set_difference(const ExampleSet<Example>& a, const ExampleSet<Example>& b) {
  ExampleSet<Example> out;
  std::set_difference(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return out;
}

template <typename Example>
bool intersects(const ExampleSet<Example>& a, const ExampleSet<Example>& b) {
  auto ia = a.begin();
  auto ib = b.begin();
  while (ia != a.end() && ib != b.end()) {
    if (*ia < *ib) {
      ++ia;
    } else if (*ib < *ia) {
      ++ib;
    } else {
      return true;
    }
  }
  return false;
}

inline void check_dimension(const ParamVector& in, const ParamVector& out, std::size_t stage) {
  if (in.size() != out.size()) {
    throw ConfigError("unlearning primitive changed parameter dimension at stage " +
                      std::to_string(stage) + ": " + std::to_string(in.size()) + " -> " +
                      std::to_string(out.size()));
  }
}

}  // namespace detail

/// Throws ValidationError when folds overlap each other or the retain set, or k = 0.
template <typename Example>
void validate_plan(const FoldPlan<Example>& plan) {
  if (plan.folds.empty()) throw ValidationError("fold plan needs at least one fold");
  std::vector<ExampleSet<Example>> sorted;
  sorted.reserve(plan.folds.size() + 1);
  for (const auto& f : plan.folds) sorted.push_back(detail::normalized(f));
  sorted.push_back(detail::normalized(plan.retain));
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    for (std::size_t j = i + 1; j < sorted.size(); ++j) {
      if (detail::intersects(sorted[i], sorted[j])) {
        const auto name = [&](std::size_t n) {
          return n + 1 == sorted.size() ? std::string("retain set") : "fold " + std::to_string(n + 1);
        };
        throw ValidationError(name(i) + " overlaps " + name(j));
      }
    }
  }
}

/// Single-shot unlearning baseline: primitive(theta0, forget, retain, hyper).
template <typename Example>
ParamVector standard_unlearn(const ParamVector& theta0, const ExampleSet<Example>& forget,
                             const ExampleSet<Example>& retain,
                             const UnlearnPrimitive<Example>& primitive, const UnlearnConfig& hyper) {
  const auto f = detail::normalized(forget);
  const auto r = detail::normalized(retain);
  if (detail::intersects(f, r)) throw ValidationError("forget set overlaps retain set");
  ParamVector out = primitive(theta0, f, r, hyper);
  detail::check_dimension(theta0, out, 1);
  return out;
}

/// Layered unlearning. Stage i forgets F_1 u ... u F_i and retains
/// R_0 u F_{i+1} u ... u F_k, starting from the previous stage's parameters.
template <typename Example>
LayeredTrajectory<Example> layered_unlearn(const ParamVector& theta0, const FoldPlan<Example>& plan,
                                           const UnlearnPrimitive<Example>& primitive,
                                           const std::vector<UnlearnConfig>& hypers,
                                           const StageProbe& probe = {}) {
  validate_plan(plan);
  if (hypers.size() != plan.k()) {
    throw ValidationError("expected " + std::to_string(plan.k()) + " stage configs, got " +
                          std::to_string(hypers.size()));
  }

  LayeredTrajectory<Example> traj;
  traj.stage_params.reserve(plan.k() + 1);
  traj.stage_params.push_back(theta0);
  if (probe) traj.stage_reports.push_back(probe(theta0));

  ExampleSet<Example> forget;
  ExampleSet<Example> retain = detail::normalized(plan.retain);
  for (const auto& fold : plan.folds) retain = detail::set_union(retain, detail::normalized(fold));

  for (std::size_t i = 0; i < plan.k(); ++i) {
    const auto fold = detail::normalized(plan.folds[i]);
    forget = detail::set_union(forget, fold);
    retain = detail::set_difference(retain, fold);

    const ParamVector& prev = traj.stage_params.back();
    ParamVector next = primitive(prev, forget, retain, hypers[i]);
    detail::check_dimension(prev, next, i + 1);

    traj.stage_forget.push_back(forget);
    traj.stage_retain.push_back(retain);
    traj.stage_hypers.push_back(hypers[i]);
    traj.stage_params.push_back(std::move(next));
    if (probe) traj.stage_reports.push_back(probe(traj.stage_params.back()));
  }
  return traj;
}

/// Splits `examples` into k disjoint folds whose sizes differ by at most one.
/// Deterministic in `seed`.
template <typename Example>
std::vector<ExampleSet<Example>> partition_random(const ExampleSet<Example>& examples, std::size_t k,
                                                  std::uint64_t seed) {
  if (k == 0) throw ValidationError("partition needs k >= 1");
  if (k > examples.size()) {
    throw ValidationError("cannot split " + std::to_string(examples.size()) + " examples into " +
                          std::to_string(k) + " folds");
  }
  std::vector<std::size_t> order(examples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  // Fisher-Yates on raw engine output; std::uniform_int_distribution is
  // implementation-defined and would make folds differ across toolchains.
  for (std::size_t i = order.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(order[i - 1], order[j]);
  }
  std::vector<ExampleSet<Example>> folds(k);
  for (std::size_t i = 0; i < order.size(); ++i) folds[i % k].push_back(examples[order[i]]);
  for (auto& f : folds) std::sort(f.begin(), f.end());
  return folds;
}

}  // namespace lu::core
