#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "advgame/adam.hpp"
#include "advgame/attacks.hpp"
#include "advgame/data.hpp"
#include "advgame/losses.hpp"
#include "advgame/models.hpp"

namespace advgame {

enum class BatchMode { full, minibatch };

std::string to_string(BatchMode m);
BatchMode batch_mode_from_string(const std::string& text);

struct GameConfig {
  std::size_t epochs = 100;        // T
  std::size_t defense_steps = 1;   // P
  std::size_t attack_steps = 1;    // H
  double defense_lr = 1e-3;
  double attack_lr = 2e-4;         // 0 freezes the attack
  LossKind loss;
  LpConstraint constraint;
  BatchMode batch_mode = BatchMode::full;
  std::size_t batch_size = 64;
  std::uint64_t seed = 0;
  std::size_t checkpoint_every = 10;
  std::filesystem::path checkpoint_dir;  // empty: no checkpoints
  bool clip_input = false;
  std::optional<double> kappa;           // post-step parameter clip for f
  bool evaluate_test = true;

  void validate() const;
};

struct EpochRecord {
  std::size_t epoch = 0;           // 1-based
  double train_loss = 0.0;         // mean training objective seen by the defense steps
  double test_loss = 0.0;          // mean test loss under the trainer's own attack
  double test_error = 0.0;         // misclassification rate, or MSE for regression
  double clean_test_loss = 0.0;
  double clean_test_error = 0.0;
  double max_budget_norm = 0.0;    // largest |lambda|_p over the 256-point sweep (game only)
  double seconds = 0.0;
};

enum class Player { defense, attack };

/// One optimizer step and which parameter vectors it changed.
struct StepAudit {
  std::size_t epoch = 0;
  std::size_t step = 0;
  Player player = Player::defense;
  bool defense_changed = false;
  bool attack_changed = false;
};

struct TrainRecord {
  std::string trainer;  // clean, game, pgd
  std::vector<EpochRecord> epochs;
  std::vector<StepAudit> audit;
  std::vector<std::filesystem::path> checkpoints;
};

/// Largest |lambda(x, y)|_p over `points` uniform inputs with uniform labels.
double budget_sweep(const AttackModel& attack, std::uint64_t seed, std::size_t points = 256);

/// Mean loss and error of f on a batch at already perturbed inputs.
struct Metrics {
  double loss = 0.0;
  double error = 0.0;
};
Metrics measure(const DefenseNet& f, LossFamily family, const Batch& batch, const Tensor2& x_eval);

class CleanTrainer {
 public:
  CleanTrainer(DefenseNet f, const Dataset& data, GameConfig cfg);
  const EpochRecord& step_epoch();
  TrainRecord run();
  const DefenseNet& defense() const noexcept { return f_; }
  const TrainRecord& record() const noexcept { return record_; }

 private:
  DefenseNet f_;
  const Dataset& data_;
  GameConfig cfg_;
  AdamState opt_;
  TrainRecord record_;
  Batch test_;
  std::filesystem::path last_good_;
};

/// Algorithm-1 alternation: per batch, P descent steps on theta_f with lambda
/// frozen, then H ascent steps on theta_lambda with f frozen.
class GameTrainer {
 public:
  GameTrainer(DefenseNet f, AttackModel attack, const Dataset& data, GameConfig cfg);
  const EpochRecord& step_epoch();
  TrainRecord run();
  const DefenseNet& defense() const noexcept { return f_; }
  const AttackModel& attack() const noexcept { return attack_; }
  const TrainRecord& record() const noexcept { return record_; }

 private:
  DefenseNet f_;
  AttackModel attack_;
  const Dataset& data_;
  GameConfig cfg_;
  AdamState defense_opt_;
  AdamState attack_opt_;
  TrainRecord record_;
  Batch test_;
  std::filesystem::path last_good_;
};

/// PGD adversarial training: per batch, regenerate PGD examples against the
/// current f, then P descent steps on the perturbed batch.
class PgdTrainer {
 public:
  PgdTrainer(DefenseNet f, const Dataset& data, GameConfig cfg, PgdConfig pgd);
  const EpochRecord& step_epoch();
  TrainRecord run();
  const DefenseNet& defense() const noexcept { return f_; }
  const TrainRecord& record() const noexcept { return record_; }

 private:
  DefenseNet f_;
  const Dataset& data_;
  GameConfig cfg_;
  PgdConfig pgd_;
  AdamState opt_;
  TrainRecord record_;
  Batch test_;
  std::filesystem::path last_good_;
};

struct GameResult {
  DefenseNet defense;
  AttackModel attack;
  TrainRecord record;
};
struct DefenseResult {
  DefenseNet defense;
  TrainRecord record;
};

GameResult train_game(DefenseNet f, AttackModel attack, const Dataset& data, const GameConfig& cfg);
DefenseResult train_pgd_baseline(DefenseNet f, const Dataset& data, const GameConfig& cfg,
                                 const PgdConfig& pgd);
DefenseResult train_clean(DefenseNet f, const Dataset& data, const GameConfig& cfg);

/// trainer,epoch,train_loss,test_loss,test_error,clean_test_loss,clean_test_error,max_budget_norm
/// (wall-clock time is kept out so the file is deterministic).
std::string record_csv(const TrainRecord& record);
std::string timing_csv(const TrainRecord& record);
std::string audit_csv(const TrainRecord& record);

}  // namespace advgame
