#include "lu/optim.h"

#include <cmath>
#include <numeric>
#include <string>
#include <vector>

namespace lu::optim {

AdamState AdamState::fresh(std::size_t dim, double lr, double beta1, double beta2, double eps) {
  AdamState s;
  s.m.assign(dim, 0.0);
  s.v.assign(dim, 0.0);
  s.lr = lr;
  s.beta1 = beta1;
  s.beta2 = beta2;
  s.eps = eps;
  return s;
}

void adam_update(AdamState& state, std::span<double> params, std::span<const double> grads) {
  if (params.size() != grads.size() || state.m.size() != params.size() ||
      state.v.size() != params.size()) {
    throw ValidationError("adam: dimension mismatch (params " + std::to_string(params.size()) +
                          ", grads " + std::to_string(grads.size()) + ", state " +
                          std::to_string(state.m.size()) + ")");
  }
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (!std::isfinite(grads[i])) {
      throw NumericalError("adam: non-finite gradient at index " + std::to_string(i));
    }
  }
  ++state.t;
  const double t = static_cast<double>(state.t);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g;
    state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g;
    const double m_hat = state.m[i] / c1;
    const double v_hat = state.v[i] / c2;
    params[i] -= state.lr * m_hat / (std::sqrt(v_hat) + state.eps);
  }
}

std::pair<ParamVector, AdamState> adam_step(const AdamState& state, const ParamVector& params,
                                            const ParamVector& grads) {
  std::pair<ParamVector, AdamState> out{params, state};
  adam_update(out.second, out.first, grads);
  return out;
}

ParamVector finite_difference_gradient(const ScalarLoss& loss, const ParamVector& params, double h,
                                       std::span<const std::size_t> coords) {
  if (!(h > 0.0)) throw ValidationError("finite difference step must be positive");
  ParamVector grad(params.size(), 0.0);
  ParamVector probe = params;
  for (std::size_t i : coords) {
    if (i >= params.size()) throw ValidationError("coordinate out of range: " + std::to_string(i));
    const double x = params[i];
    probe[i] = x + h;
    const double up = loss(probe);
    probe[i] = x - h;
    const double down = loss(probe);
    probe[i] = x;
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw NumericalError("non-finite loss while probing coordinate " + std::to_string(i));
    }
    grad[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

ParamVector finite_difference_gradient(const ScalarLoss& loss, const ParamVector& params, double h) {
  std::vector<std::size_t> all(params.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  return finite_difference_gradient(loss, params, h, all);
}

}  // namespace lu::optim
