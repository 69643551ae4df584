#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "advgame/attacks.hpp"
#include "advgame/constraint.hpp"
#include "advgame/losses.hpp"
#include "advgame/models.hpp"
#include "advgame/tensor.hpp"

namespace advgame {

/// Differentiable scalar function F: R^D -> R, evaluated one point at a time.
struct PointObjective {
  std::size_t dim = 0;
  std::function<double(std::span<const double>)> value;
  std::function<void(std::span<const double>, std::span<double>)> gradient;
  /// Optional D x D row-major Hessian; finite differences are used when absent.
  std::function<void(std::span<const double>, std::span<double>)> hessian;
};

/// F(x) = L(f(x), y) through the network's backward pass.
PointObjective defense_point_objective(const DefenseNet& f, LossFamily family,
                                       std::size_t label, double target = 0.0);

/// Adapts a PointObjective to the batched attack interface (row by row).
class PointwiseObjective final : public AttackObjective {
 public:
  explicit PointwiseObjective(PointObjective f) : f_(std::move(f)) {}
  std::size_t dim() const override { return f_.dim; }
  std::vector<double> evaluate(const Tensor2& x, Tensor2* grad) const override;

 private:
  PointObjective f_;
};

enum class Integrator { explicit_euler, rk4 };
enum class SaddleHandling { none, deflect, noise };

std::string to_string(SaddleHandling s);
SaddleHandling saddle_handling_from_string(const std::string& text);

struct Saddle {
  std::vector<double> point;
  /// Unit eigenvector of the largest Hessian eigenvalue; computed when empty.
  std::vector<double> direction;
};

struct FlowConfig {
  LpConstraint constraint;
  Integrator integrator = Integrator::rk4;
  double dt = 0.0;  // 0 selects delta / 100
  double max_time = 50.0;
  double stationarity_tol = 1e-6;
  SaddleHandling saddle_handling = SaddleHandling::none;
  double epsilon = 0.0;          // deflection radius, 0 < epsilon < delta
  std::vector<Saddle> saddles;   // deflection targets
  double noise_sigma = 0.0;      // Brownian scale for the noise mode
  double noise_horizon = -1.0;   // noise switched off after this time; < 0 selects max_time / 4
  std::uint64_t seed = 0;
  std::size_t record_every = 1;  // keep every k-th state in the trajectory

  double effective_dt() const noexcept { return dt > 0.0 ? dt : constraint.delta / 100.0; }
  double effective_noise_horizon() const noexcept {
    return noise_horizon >= 0.0 ? noise_horizon : max_time / 4.0;
  }
  void validate() const;
};

/// Relative activation tolerance: g_i(x) counts as zero when |g_i| <= kActivationTol * scale.
inline constexpr double kActivationTol = 1e-8;

struct ActiveSet {
  std::vector<char> active;         // J(x): one flag per constraint
  std::vector<std::size_t> indices; // I(x)
};

/// Constraints g_1 = |x - x_s|_p^p - delta^p (p < inf) or g_i = |(x - x_s)_i| - delta (p = inf).
ActiveSet active_set(std::span<const double> x, std::span<const double> x_s,
                     const LpConstraint& constraint);

/// P(x) = I - DC^T (DC DC^T)^-1 DC over the active constraints (D x D).
Tensor2 projection_matrix(std::span<const double> x, std::span<const double> x_s,
                          const LpConstraint& constraint);

/// Smooth bump exp(-1 / (eps^2 - |x - eta|^2)) inside B_2(eta, eps), zero outside.
/// The flow uses it divided by its peak value exp(-1 / eps^2).
double deflection_bump(std::span<const double> x, std::span<const double> eta, double eps);

/// Unit eigenvector of the largest Hessian eigenvalue at x, by shifted power
/// iteration (tolerance 1e-8, at most 500 iterations).
std::vector<double> top_eigenvector(const PointObjective& f, std::span<const double> x);

struct KktReport {
  bool interior = true;
  double stationarity_residual = 0.0;
  std::vector<std::size_t> active;  // active constraint indices
  std::vector<double> multipliers;   // one per active constraint
  bool primal_feasible = true;
  bool dual_feasible = true;
  bool passed = false;
  double tol = 0.0;
};

KktReport kkt_report(const PointObjective& f, std::span<const double> x_terminal,
                     std::span<const double> x_s, const LpConstraint& constraint, double tol);

struct Trajectory {
  std::vector<double> times;
  Tensor2 states;               // one row per kept sample
  std::vector<double> values;   // F at each kept state
  bool converged = false;
  double final_residual = 0.0;
  std::size_t steps = 0;
  KktReport kkt;

  std::span<const double> terminal() const { return states.row(states.rows() - 1); }
};

/// Integrates dx/dt = P(x)[grad F(x) + sum psi(x) nu] inside the ball around x_s,
/// projecting the state back onto the ball after every step. Stops when the
/// projected velocity drops below stationarity_tol (outside deflection bumps
/// and after the noise horizon) or at max_time.
Trajectory integrate_flow(const PointObjective& f, std::span<const double> x_s,
                          const FlowConfig& cfg);

struct FlowAttack {
  std::vector<double> perturbation;  // terminal state - start
  double value = 0.0;
  bool converged = false;
  KktReport kkt;
};

FlowAttack best_attack_flow(const PointObjective& f, std::span<const double> x_s,
                            const FlowConfig& cfg);

enum class ClosedFormModel { linear, logistic };

/// l-infinity point-wise optimum for linear regression (squared error) and
/// logistic regression (negative log-likelihood), per coordinate:
///   linear  : delta * sign(beta.x - y) * sign(beta_i)
///   logistic: delta * sign(0.5 - y) * sign(beta_i)
/// sign(0) = 0.
std::vector<double> closed_form_attack(ClosedFormModel model, std::span<const double> beta,
                                       std::span<const double> x, double y, double delta);

/// 2D analytic test functions with known structure.
struct AnalyticCase {
  std::string name;
  PointObjective f;
  std::vector<double> start;
  std::vector<Saddle> saddles;  // critical points that need deflection
};

/// linear, concave-quadratic, saddle and two-bump around (0.5, 0.5).
std::vector<AnalyticCase> analytic_suite_2d();
AnalyticCase analytic_case(const std::string& name);

}  // namespace advgame
