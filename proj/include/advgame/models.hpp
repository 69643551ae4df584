#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "advgame/constraint.hpp"
#include "advgame/mlp.hpp"
#include "advgame/tensor.hpp"

namespace advgame {

enum class TaskKind { classification, regression };

struct Task {
  TaskKind kind = TaskKind::classification;
  std::size_t classes = 2;  // ignored for regression

  static Task classification(std::size_t c) { return {TaskKind::classification, c}; }
  static Task regression() { return {TaskKind::regression, 0}; }
  bool is_classification() const noexcept { return kind == TaskKind::classification; }
  /// Output width of the defense network.
  std::size_t output_dim() const noexcept { return is_classification() ? classes : 1; }

  friend bool operator==(const Task&, const Task&) = default;
};

std::string to_string(TaskKind kind);
TaskKind task_kind_from_string(const std::string& text);

/// The defense f: logits (classification) or a scalar prediction (regression).
struct DefenseNet {
  Mlp net;
  Task task;

  std::size_t input_dim() const noexcept { return net.input_dim(); }
  Tensor2 forward(const Tensor2& x) const { return net.forward(x); }
  /// argmax of each row (classification only).
  std::vector<std::size_t> predict(const Tensor2& x) const;
};

/// Maps a raw decoder output v to the budget-respecting direction u, per norm:
///   l2   : delta * v / |v|_2
///   linf : clamp(sqrt(D) * delta * v / |v|_2, -delta, delta)
///   l1   : delta * v / |v|_1            (experimental; not in the reference tables)
/// A zero vector maps to zero.
void project_head(std::span<const double> v, const LpConstraint& c, std::span<double> out);
/// Vector-Jacobian product of project_head at v.
void project_head_vjp(std::span<const double> v, const LpConstraint& c,
                      std::span<const double> upstream, std::span<double> grad_v);

class AttackTape;

/// Constrained perturbation generator lambda(x, y) = S_y(x) * head(D_y(E(x))).
///
/// Classification: shared encoder E, one decoder D_c and one scaler S_c per
/// class. Regression: no encoder, a single map H and single scaler S.
/// Parameters are exposed as one flat vector laid out as
/// [encoder | decoders... | scalers...].
class AttackModel {
 public:
  AttackModel() = default;
  AttackModel(LpConstraint constraint, Task task, std::optional<Mlp> encoder,
              std::vector<Mlp> decoders, std::vector<Mlp> scalers);

  const LpConstraint& constraint() const noexcept { return constraint_; }
  const Task& task() const noexcept { return task_; }
  std::size_t input_dim() const noexcept;

  const std::optional<Mlp>& encoder() const noexcept { return encoder_; }
  const std::vector<Mlp>& decoders() const noexcept { return decoders_; }
  const std::vector<Mlp>& scalers() const noexcept { return scalers_; }
  std::vector<Mlp>& decoders() noexcept { return decoders_; }

  std::size_t param_count() const noexcept;
  std::vector<double> flat_params() const;
  void set_flat_params(std::span<const double> params);
  /// Offset of decoder c inside the flat parameter vector.
  std::size_t decoder_offset(std::size_t c) const;

  /// Perturbations for a batch (one row per sample). Labels are ignored for
  /// regression and required (one per row) for classification.
  Tensor2 forward(const Tensor2& x, std::span<const std::size_t> labels) const;
  AttackTape record(const Tensor2& x, std::span<const std::size_t> labels) const;
  /// Gradient of <upstream, lambda(x, y)> with respect to the flat parameters.
  std::vector<double> backward(const AttackTape& tape, const Tensor2& upstream) const;

  /// x + lambda(x, y). Not clipped to the unit cube unless `clip_to_cube` is set.
  Tensor2 adversarial_example(const Tensor2& x, std::span<const std::size_t> labels,
                              bool clip_to_cube = false) const;

 private:
  std::size_t slot_of(std::size_t label) const;
  void validate_batch(const Tensor2& x, std::span<const std::size_t> labels) const;

  LpConstraint constraint_;
  Task task_;
  std::optional<Mlp> encoder_;
  std::vector<Mlp> decoders_;
  std::vector<Mlp> scalers_;
};

class AttackTape {
 public:
  bool recorded() const noexcept { return recorded_; }
  const Tensor2& output() const noexcept { return output_; }

 private:
  friend class AttackModel;
  bool recorded_ = false;
  std::optional<Tape> encoder;
  std::vector<std::vector<std::size_t>> rows;  // sample rows handled by each slot
  std::vector<Tape> decoder;
  std::vector<Tape> scaler;
  Tensor2 output_;
};

/// Single-point convenience: validates x in [0,1]^D (1e-9 slack) and the label.
std::vector<double> attack_forward(const AttackModel& model, std::span<const double> x,
                                   std::size_t label);
std::vector<double> adversarial_example(const AttackModel& model, std::span<const double> x,
                                        std::size_t label);

struct ModelPair {
  DefenseNet defense;
  AttackModel attack;
};

/// Classification architectures:
///   f       : D-50-100-15-C, LeakyReLU(0.01) between affine layers
///   encoder : D-50-100
///   decoder : LeakyReLU, 100-50-15-D (LeakyReLU between), projection head
///   scaler  : D-20-1, LeakyReLU between, sigmoid
ModelPair build_classification_pair(std::size_t input_dim, std::size_t classes,
                                    const LpConstraint& constraint, std::uint64_t seed);

/// Regression architectures: f = D-50-20-1, H = D-50-50-D + head, S = D-20-1 + sigmoid.
ModelPair build_regression_pair(std::size_t input_dim, const LpConstraint& constraint,
                                std::uint64_t seed);

/// Fresh defense of the standard architecture for `task` (used for f_PGD and f_clean).
DefenseNet build_defense(std::size_t input_dim, const Task& task, std::uint64_t seed);

}  // namespace advgame
