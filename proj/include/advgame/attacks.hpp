#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "advgame/constraint.hpp"
#include "advgame/losses.hpp"
#include "advgame/models.hpp"
#include "advgame/rng.hpp"
#include "advgame/tensor.hpp"

namespace advgame {

/// Batched function of perturbed inputs that an attack maximizes row by row.
class AttackObjective {
 public:
  virtual ~AttackObjective() = default;
  virtual std::size_t dim() const = 0;
  /// Per-row values; fills `grad` (same shape as x) when it is non-null.
  virtual std::vector<double> evaluate(const Tensor2& x, Tensor2* grad) const = 0;
  /// Per-row success flags for early stopping (classification: argmax != y).
  /// The default never reports success.
  virtual std::vector<char> succeeded(const Tensor2& x) const;
};

/// L(f(x'), y) for a defense network and fixed batch targets (plain loss).
class DefenseObjective final : public AttackObjective {
 public:
  DefenseObjective(const DefenseNet& f, LossFamily family, const Batch& batch);
  std::size_t dim() const override { return f_.input_dim(); }
  std::vector<double> evaluate(const Tensor2& x, Tensor2* grad) const override;
  std::vector<char> succeeded(const Tensor2& x) const override;

 private:
  const DefenseNet& f_;
  LossFamily family_;
  const Batch& batch_;
};

enum class StepMode { normalized, raw_gradient };

struct PgdConfig {
  LpConstraint constraint;
  double step = 0.01;          // gamma
  std::size_t steps = 50;      // T
  std::size_t restarts = 10;
  bool early_stop_on_misclassify = false;
  Norm ascent_norm = Norm::linf;
  StepMode step_mode = StepMode::normalized;
  std::uint64_t seed = 0;
  /// Also keep the unperturbed input as a candidate, so the returned loss is
  /// never below the clean loss. Off by default: with gamma = delta, T = 1 and
  /// one restart the result is then exactly the FGSM point.
  bool include_start = false;

  /// Requires 0 <= gamma <= 2 delta, T >= 1, restarts >= 1.
  void validate() const;
  /// Ascent norm matching the constraint (l1 -> coordinate, l2 -> normalized, inf -> sign).
  static PgdConfig for_constraint(const LpConstraint& c);
};

/// Nearest point to x inside the closed lp ball of radius delta around center.
std::vector<double> project_lp_ball(std::span<const double> x, std::span<const double> center,
                                    const LpConstraint& constraint);
void project_lp_ball_inplace(std::span<double> x, std::span<const double> center,
                             const LpConstraint& constraint);

/// Unit steepest-ascent direction for the given norm. Zero gradient gives zero.
///   l2: g / |g|_2,  inf: sign(g),  l1: sign(g_i) e_i at i = argmax |g_i|.
std::vector<double> steepest_direction(std::span<const double> grad, Norm ascent_norm);

/// Uniform sample from the lp ball of radius delta around center.
std::vector<double> sample_in_ball(std::span<const double> center, const LpConstraint& c,
                                   Rng& rng);

/// x + delta * sign(grad_x L(f(x), y)); l-infinity only. sign(0) = 0.
Tensor2 fgsm(const DefenseNet& f, LossFamily family, const Batch& batch,
             const LpConstraint& constraint);
Tensor2 fgsm(const AttackObjective& objective, const Tensor2& x, const LpConstraint& constraint);

struct PgdResult {
  Tensor2 x_adv;
  std::vector<double> loss;       // objective at x_adv
  std::vector<char> succeeded;    // early-stop success flag of the winning restart
  std::vector<std::size_t> restart;  // index of the winning restart per row
};

/// Best-of-restarts projected steepest ascent. Restart 0 starts at x; others
/// start uniformly inside the ball using stream (seed, restart). With early
/// stopping a row stops iterating once the objective reports success.
PgdResult pgd(const AttackObjective& objective, const Tensor2& x, const PgdConfig& cfg);
Tensor2 pgd(const DefenseNet& f, LossFamily family, const Batch& batch, const PgdConfig& cfg);

}  // namespace advgame
