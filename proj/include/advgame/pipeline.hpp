#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "advgame/config.hpp"
#include "advgame/data.hpp"
#include "advgame/eval.hpp"
#include "advgame/training.hpp"

namespace advgame {

/// Config for `reproduce <family>-<linf|l2>` (or `regression-<linf|l2>`).
/// full_scale raises epochs to 100 (400 for regression) and n to 2000.
RunConfig reproduce_preset(const std::string& name, bool full_scale = false);

/// Dataset named by the config: CSV file, synthetic regression, or a 2D generator.
Dataset make_dataset(const RunConfig& cfg);

/// Loss kind adjusted to the dataset's task (cross-entropy becomes MSE on regression).
LossKind loss_for(const RunConfig& cfg, const Dataset& data);

struct ReproduceResult {
  std::filesystem::path dir;
  Dataset data;
  DefenseNet f_game;
  AttackModel attack;
  DefenseNet f_pgd;
  DefenseNet f_clean;
  TrainRecord game;
  TrainRecord pgd;
  TrainRecord clean;
  CurveLog curves;
  EvalMatrix final_matrix;
  bool has_field = false;
  FieldExport field;
  std::vector<std::string> files;  // written artifacts, relative to dir
};

/// Clean, game and PGD-baseline training in lockstep, the evaluation matrix
/// after every `evaluation.every` epochs, then the field export. Every
/// artifact is written under `dir`.
ReproduceResult reproduce(const RunConfig& cfg, const std::filesystem::path& dir);

/// Files whose bytes depend only on config and seed.
std::vector<std::string> metric_files(const ReproduceResult& r);

}  // namespace advgame
