#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace advgame {

enum class Direction { descent, ascent };

/// Moment estimates for one parameter vector. Defaults follow Kingma & Ba.
struct AdamState {
  explicit AdamState(std::size_t n = 0, double learning_rate = 1e-3)
      : first_moment(n, 0.0), second_moment(n, 0.0), lr(learning_rate) {}

  std::size_t step = 0;
  std::vector<double> first_moment;
  std::vector<double> second_moment;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double lr = 1e-3;
};

/// One bias-corrected Adam update in place. Ascent flips the sign of the step.
/// Throws NumericError naming the first non-finite gradient index.
void adam_step(AdamState& state, std::span<double> params, std::span<const double> grads,
               Direction direction = Direction::descent);

}  // namespace advgame
