#pragma once

// Independent reference computations used by the tests: central finite
// differences and brute-force grid search. Nothing here calls into the code
// under test except through the supplied callables.

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <vector>

namespace oracle {

using ScalarFn = std::function<double(std::span<const double>)>;

/// Central differences of fn at x with step h.
inline std::vector<double> fd_gradient(const ScalarFn& fn, std::span<const double> x, double h = 1e-5) {
  std::vector<double> p(x.begin(), x.end());
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = p[i];
    p[i] = keep + h;
    const double up = fn(p);
    p[i] = keep - h;
    const double down = fn(p);
    p[i] = keep;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

/// Central difference along coordinate i only.
inline double fd_partial(const ScalarFn& fn, std::span<const double> x, std::size_t i, double h = 1e-5) {
  std::vector<double> p(x.begin(), x.end());
  const double keep = p[i];
  p[i] = keep + h;
  const double up = fn(p);
  p[i] = keep - h;
  const double down = fn(p);
  return (up - down) / (2.0 * h);
}

/// |a - b| / max(|a|, |b|, floor).
inline double rel_err(double a, double b, double floor = 1e-6) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

inline double norm_p(std::span<const double> v, double p) {
  if (std::isinf(p)) {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::abs(x));
    return m;
  }
  double s = 0.0;
  for (double x : v) s += std::pow(std::abs(x), p);
  return std::pow(s, 1.0 / p);
}

struct GridMax {
  double value = -INFINITY;
  std::vector<double> point;
};

/// Max of fn over grid points of step `step` inside the closed lp ball of
/// radius delta around a 2D center.
inline GridMax grid_max_2d(const ScalarFn& fn, std::span<const double> center, double p, double delta,
                           double step = 0.005) {
  GridMax best;
  const auto n = static_cast<long>(std::floor(delta / step + 1e-9));
  std::vector<double> x(2);
  for (long i = -n; i <= n; ++i) {
    for (long j = -n; j <= n; ++j) {
      const double d[2] = {static_cast<double>(i) * step, static_cast<double>(j) * step};
      if (norm_p(d, p) > delta * (1.0 + 1e-12)) continue;
      x[0] = center[0] + d[0];
      x[1] = center[1] + d[1];
      const double v = fn(x);
      if (v > best.value) {
        best.value = v;
        best.point = x;
      }
    }
  }
  return best;
}

/// Nearest point of the lp ball found by dense search over a 2D grid (for
/// checking projections).
inline std::vector<double> grid_nearest_in_ball_2d(std::span<const double> x, std::span<const double> center,
                                                   double p, double delta, double step = 0.001) {
  GridMax m = grid_max_2d(
      [&](std::span<const double> y) {
        const double a = y[0] - x[0], b = y[1] - x[1];
        return -(a * a + b * b);
      },
      center, p, delta, step);
  return m.point;
}

}  // namespace oracle
