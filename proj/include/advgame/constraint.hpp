#pragma once

#include <span>
#include <string>

namespace advgame {

enum class Norm { l1, l2, linf };

std::string to_string(Norm p);
/// Accepts "1", "2", "inf" (also "l1", "l2", "linf").
Norm norm_from_string(const std::string& text);

double lp_norm(std::span<const double> v, Norm p) noexcept;
/// lp distance between a and b (same length).
double lp_distance(std::span<const double> a, std::span<const double> b, Norm p) noexcept;

/// Attack budget: perturbations obey ||lambda||_p <= delta.
struct LpConstraint {
  Norm p = Norm::linf;
  double delta = 0.2;

  /// Throws ConfigError when delta is not a positive finite number.
  void validate() const;

  friend bool operator==(const LpConstraint&, const LpConstraint&) = default;
};

}  // namespace advgame
