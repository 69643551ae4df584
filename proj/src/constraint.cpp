#include "advgame/constraint.hpp"

#include <algorithm>
#include <cmath>

#include "advgame/errors.hpp"

namespace advgame {

std::string to_string(Norm p) {
  switch (p) {
    case Norm::l1: return "1";
    case Norm::l2: return "2";
    case Norm::linf: return "inf";
  }
  return "?";
}

Norm norm_from_string(const std::string& text) {
  if (text == "1" || text == "l1") return Norm::l1;
  if (text == "2" || text == "l2") return Norm::l2;
  if (text == "inf" || text == "linf" || text == "Inf") return Norm::linf;
  throw ConfigError("unsupported norm '" + text + "' (expected 1, 2 or inf)");
}

double lp_norm(std::span<const double> v, Norm p) noexcept {
  double acc = 0.0;
  switch (p) {
    case Norm::l1:
      for (double x : v) acc += std::abs(x);
      return acc;
    case Norm::l2:
      for (double x : v) acc += x * x;
      return std::sqrt(acc);
    case Norm::linf:
      for (double x : v) acc = std::max(acc, std::abs(x));
      return acc;
  }
  return acc;
}

double lp_distance(std::span<const double> a, std::span<const double> b, Norm p) noexcept {
  double acc = 0.0;
  const std::size_t n = std::min(a.size(), b.size());
  for (std::size_t i = 0; i < n; ++i) {
    const double d = std::abs(a[i] - b[i]);
    switch (p) {
      case Norm::l1: acc += d; break;
      case Norm::l2: acc += d * d; break;
      case Norm::linf: acc = std::max(acc, d); break;
    }
  }
  return p == Norm::l2 ? std::sqrt(acc) : acc;
}

void LpConstraint::validate() const {
  if (!(delta > 0.0) || !std::isfinite(delta)) {
    throw ConfigError("constraint delta must be a positive finite number");
  }
}

}  // namespace advgame
