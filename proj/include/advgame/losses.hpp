#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "advgame/models.hpp"
#include "advgame/tensor.hpp"

namespace advgame {

enum class LossFamily { cross_entropy, mean_squared_error };
enum class LossMix { plain, alpha_weighted, trades };

std::string to_string(LossFamily f);
std::string to_string(LossMix m);
LossFamily loss_family_from_string(const std::string& text);
LossMix loss_mix_from_string(const std::string& text);

struct LossKind {
  LossFamily family = LossFamily::cross_entropy;
  LossMix mix = LossMix::plain;
  double alpha = 0.0;  // weight of the clean term; used by alpha_weighted and trades

  void validate() const;
  static LossKind for_task(const Task& task) {
    return {task.is_classification() ? LossFamily::cross_entropy : LossFamily::mean_squared_error,
            LossMix::plain, 0.0};
  }
  friend bool operator==(const LossKind&, const LossKind&) = default;
};

/// Samples plus targets. Classification uses `labels`, regression `targets`.
struct Batch {
  Tensor2 x;
  std::vector<std::size_t> labels;
  std::vector<double> targets;

  std::size_t size() const noexcept { return x.rows(); }
  Batch subset(std::span<const std::size_t> rows) const;
};

/// Summed loss, per-sample values and the gradient of the sum w.r.t. the outputs.
struct LossResult {
  double total = 0.0;
  std::vector<double> per_sample;
  Tensor2 grad;
};

/// Hard-target loss: -log softmax(z)[y] (log-sum-exp form) or (f(x) - y)^2.
LossResult loss(LossFamily family, const Tensor2& outputs, const Batch& batch);
/// Soft-target loss against a fixed reference output (treated as a constant):
/// cross-entropy uses softmax(reference) as the target distribution, MSE uses
/// the reference prediction.
LossResult soft_loss(LossFamily family, const Tensor2& outputs, const Tensor2& reference);

/// Single-sample helpers.
double cross_entropy(std::span<const double> logits, std::size_t label);
double squared_error(double prediction, double target);

enum class GradFor { none, defense, attack, both };

struct AdversarialLossResult {
  double total = 0.0;
  std::vector<double> per_sample;        // mixed loss
  std::vector<double> adversarial;       // L(f(x + lambda), y), or the trades term
  std::vector<double> clean;             // L(f(x), y); empty for plain mix
  std::vector<double> defense_grad;      // d total / d theta_f (when requested)
  std::vector<double> attack_grad;       // d total / d theta_lambda (when requested)
  Tensor2 input_grad;                    // d total / d x_adv (when attack grads requested)
};

/// Loss at an already perturbed batch `x_adv` (rows aligned with `batch`).
/// Used by PGD training and as the inner step of adversarial_loss.
AdversarialLossResult perturbed_loss(const LossKind& kind, const DefenseNet& f,
                                     const Batch& batch, const Tensor2& x_adv,
                                     GradFor grads = GradFor::none);

/// Summed adversarial loss of (f, lambda) on the batch:
///   plain : sum_i L(f(x_i + l_i), y_i)
///   alpha : sum_i (1 - a) L(f(x_i + l_i), y_i) + a L(f(x_i), y_i)
///   trades: sum_i (1 - a) L(f(x_i + l_i), f(x_i)) + a L(f(x_i), y_i)
AdversarialLossResult adversarial_loss(const LossKind& kind, const DefenseNet& f,
                                       const AttackModel& attack, const Batch& batch,
                                       GradFor grads = GradFor::none, bool clip_to_cube = false);

/// Clean loss sum_i L(f(x_i), y_i) with optional defense gradient.
AdversarialLossResult clean_loss(const LossKind& kind, const DefenseNet& f, const Batch& batch,
                                 bool want_grad = false);

}  // namespace advgame
