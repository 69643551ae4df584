#include "advgame/adam.hpp"

#include <cmath>
#include <string>

#include "advgame/errors.hpp"

namespace advgame {

void adam_step(AdamState& state, std::span<double> params, std::span<const double> grads,
               Direction direction) {
  const std::size_t n = params.size();
  if (grads.size() != n || state.first_moment.size() != n || state.second_moment.size() != n) {
    throw ShapeError("adam_step: parameter, gradient and moment lengths differ (" +
                     std::to_string(n) + " params, " + std::to_string(grads.size()) +
                     " grads, " + std::to_string(state.first_moment.size()) + " moments)");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(grads[i])) {
      throw NumericError("adam_step: non-finite gradient at index " + std::to_string(i));
    }
  }
  if (!(state.lr > 0.0)) throw ConfigError("adam_step: learning rate must be positive");

  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(state.beta1, t);
  const double bc2 = 1.0 - std::pow(state.beta2, t);
  const double sign = direction == Direction::descent ? -1.0 : 1.0;
  for (std::size_t i = 0; i < n; ++i) {
    double& m = state.first_moment[i];
    double& v = state.second_moment[i];
    m = state.beta1 * m + (1.0 - state.beta1) * grads[i];
    v = state.beta2 * v + (1.0 - state.beta2) * grads[i] * grads[i];
    const double m_hat = m / bc1;
    const double v_hat = v / bc2;
    params[i] += sign * state.lr * m_hat / (std::sqrt(v_hat) + state.eps);
  }
}

}  // namespace advgame
