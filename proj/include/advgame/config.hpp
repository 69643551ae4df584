#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "advgame/attacks.hpp"
#include "advgame/data.hpp"
#include "advgame/training.hpp"

namespace advgame {

/// Declarative experiment description. Enumerations are kept as text until
/// validate() so that every bad field can be reported at once.
struct RunConfig {
  struct DatasetSection {
    std::string family = "circles";
    std::size_t n = 1000;
    double noise = 0.05;
    double train_fraction = 0.8;
    std::string path;            // CSV file instead of a generator
    std::string target_column;
    bool raw_target = false;
    std::size_t regression_dim = 0;  // > 0 selects the synthetic regression generator
  } dataset;

  struct ConstraintSection {
    std::string p = "inf";
    double delta = 0.2;
  } constraint;

  struct LossSection {
    std::string family = "cross-entropy";
    std::string mix = "plain";
    double alpha = 0.0;
  } loss;

  struct TrainingSection {
    std::size_t epochs = 30;
    std::size_t defense_steps = 1;
    std::size_t attack_steps = 1;
    double defense_lr = 1e-3;
    double attack_lr = 2e-4;
    std::string batch_mode = "minibatch";
    std::size_t batch_size = 200;
    std::size_t checkpoint_every = 10;
    bool clip_input = false;
  } training;

  struct PgdSection {
    double step = 0.01;
    std::size_t steps = 50;
    std::size_t restarts = 10;
    bool early_stop = false;
    std::string ascent_norm;  // empty: match the constraint
    std::string step_mode = "normalized";
    bool include_start = false;  // clean input competes with the restarts
  } pgd;

  struct EvaluationSection {
    bool early_stop_column = false;  // extra PGD column with early stopping
    bool impute_labels = false;      // network attack uses f_clean labels
    std::size_t field_resolution = 51;
    std::size_t every = 1;
  } evaluation;

  std::uint64_t seed = 0;

  struct OutputSection {
    std::string dir = "runs";
    std::string name;
  } output;

  /// Every violation, each prefixed by its field path. Empty when valid.
  std::vector<std::string> violations() const;
  /// Throws ConfigError listing every violation.
  void validate() const;

  LpConstraint resolved_constraint() const;
  LossKind resolved_loss() const;
  GameConfig game_config() const;
  PgdConfig pgd_config() const;
  GenerateOptions generate_options() const;
  Task task() const;
  bool is_regression() const;
};

/// Strict parse over `base`: keys present in the file override it; unknown
/// keys and wrong types are errors (all reported).
RunConfig parse_run_config(const std::string& json_text, const RunConfig& base = {});
RunConfig load_run_config(const std::filesystem::path& path, const RunConfig& base = {});
/// Fully resolved config (defaults included) as pretty JSON.
std::string run_config_json(const RunConfig& cfg);

}  // namespace advgame
