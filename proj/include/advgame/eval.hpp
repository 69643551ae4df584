#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "advgame/attacks.hpp"
#include "advgame/losses.hpp"
#include "advgame/models.hpp"

namespace advgame {

enum class AttackKind { none, net, pgd, pgd_early_stop, fgsm };

std::string to_string(AttackKind k);

struct AttackSpec {
  std::string name;                  // column label, e.g. "lambda_f"
  AttackKind kind = AttackKind::none;
  const AttackModel* net = nullptr;  // for AttackKind::net
  PgdConfig pgd;                     // constraint and settings for pgd / fgsm
  /// Network attack labels: true test labels, or predictions of `labeler`.
  const DefenseNet* labeler = nullptr;
};

AttackSpec no_attack();
AttackSpec net_attack(const AttackModel& attack, std::string name = "lambda_f",
                      const DefenseNet* labeler = nullptr);
AttackSpec pgd_attack(const PgdConfig& cfg, std::string name = "lambda_pgd");
/// l-infinity: the sign step; other norms fall back to one normalized step of length delta.
AttackSpec fgsm_attack(const LpConstraint& constraint, std::string name = "lambda_fgsm");

struct NamedDefense {
  std::string name;
  const DefenseNet* net = nullptr;
};

struct Cell {
  double loss = 0.0;      // per-sample mean
  double loss_sum = 0.0;
  double error = 0.0;     // misclassification rate, or MSE for regression
};

struct EvalMatrix {
  std::vector<std::string> defenses;
  std::vector<std::string> attacks;
  std::vector<Cell> cells;  // row-major: defense x attack

  const Cell& at(std::size_t d, std::size_t a) const { return cells[d * attacks.size() + a]; }
  const Cell& at(const std::string& defense, const std::string& attack) const;
};

/// Perturbed inputs of `spec` against defense `f` (white-box for pgd/fgsm,
/// forward-only for the network attack).
Tensor2 attack_inputs(const AttackSpec& spec, const DefenseNet& f, LossFamily family,
                      const Batch& batch, std::uint64_t seed);

/// Every (defense, attack) cell on the same batch. Misclassification always
/// uses the true labels.
EvalMatrix evaluate_matrix(std::span<const NamedDefense> defenses,
                           std::span<const AttackSpec> attacks, const Batch& test,
                           LossFamily family, std::uint64_t seed = 0);

std::string matrix_csv(const EvalMatrix& m);

/// Long-format learning curves: one matrix per evaluated epoch.
struct CurveLog {
  std::vector<std::size_t> epochs;
  std::vector<EvalMatrix> matrices;

  void add(std::size_t epoch, EvalMatrix m) {
    epochs.push_back(epoch);
    matrices.push_back(std::move(m));
  }
};

/// epoch,defense,attack,metric,value with metrics loss and error
/// (plus loss_sum for regression).
std::string curves_csv(const CurveLog& log, bool regression = false);
void emit_curves(const CurveLog& log, const std::filesystem::path& out, bool regression = false);

struct FieldPoint {
  double x1 = 0.0, x2 = 0.0;
  std::size_t label = 0;  // imputed by the labeler
  double loss = 0.0;
  double g1 = 0.0, g2 = 0.0;  // unit input gradient of the loss (or zero)
  double a1 = 0.0, a2 = 0.0;  // attack vector lambda(x, label)
};

struct FieldExport {
  LpConstraint constraint;
  std::size_t resolution = 0;
  std::vector<FieldPoint> points;
};

/// Grid field over [0,1]^2; 2D classification inputs only.
FieldExport export_field(const DefenseNet& f, const AttackModel& attack, const DefenseNet& labeler,
                         std::size_t resolution);
std::string field_csv(const FieldExport& field);

/// Angle of (x, y) in degrees in (-180, 180].
double angle_deg(double x, double y);
/// Smallest distance in degrees from `deg` to one of +-45, +-135.
double diagonal_distance_deg(double deg);

/// Counts of attack-vector angles in bins of `bin_deg` starting at -180; zero vectors skipped.
std::vector<std::size_t> angle_histogram(const FieldExport& field, double bin_deg = 5.0);
/// Bin-centre angle of the fullest bin in each quadrant that holds any mass.
std::vector<double> quadrant_modes(const std::vector<std::size_t>& histogram, double bin_deg = 5.0);
/// Mean angle in degrees between attack vectors and loss gradients (points where either is zero are skipped).
double mean_angular_deviation(const FieldExport& field);

}  // namespace advgame
