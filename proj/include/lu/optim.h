#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <utility>

#include "lu/common.h"

namespace lu::optim {

struct AdamState {
  ParamVector m;
  ParamVector v;
  std::uint64_t t = 0;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  /// Zeroed moments for a `dim`-dimensional problem.
  static AdamState fresh(std::size_t dim, double lr, double beta1 = 0.9, double beta2 = 0.999,
                         double eps = 1e-8);
};

/// One bias-corrected Adam update. Returns the new parameters and state;
/// inputs are left untouched. Throws NumericalError naming the first
/// non-finite gradient index, ValidationError on dimension mismatch.
std::pair<ParamVector, AdamState> adam_step(const AdamState& state, const ParamVector& params,
                                            const ParamVector& grads);

/// In-place variant used by the training loops.
void adam_update(AdamState& state, std::span<double> params, std::span<const double> grads);

using ScalarLoss = std::function<double(const ParamVector&)>;

/// Central differences (loss(p + h e_i) - loss(p - h e_i)) / 2h for every coordinate.
ParamVector finite_difference_gradient(const ScalarLoss& loss, const ParamVector& params, double h);

/// Same, restricted to `coords`; other entries of the result are zero.
ParamVector finite_difference_gradient(const ScalarLoss& loss, const ParamVector& params, double h,
                                       std::span<const std::size_t> coords);

}  // namespace lu::optim
