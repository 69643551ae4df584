#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "advgame/losses.hpp"
#include "advgame/models.hpp"
#include "advgame/tensor.hpp"

namespace advgame {

enum class Family { circles, moons, streaks, polynomials };

std::string to_string(Family f);
Family family_from_string(const std::string& text);
/// Number of classes each 2D family produces.
std::size_t family_classes(Family f);

/// Per-column min/max used for unit-cube normalization.
struct ColumnScale {
  std::vector<double> min;
  std::vector<double> max;
};

ColumnScale fit_min_max(const Tensor2& x);
/// (x - min) / (max - min); constant columns map to 0.5.
Tensor2 normalize(const Tensor2& x, const ColumnScale& scale);
Tensor2 denormalize(const Tensor2& x, const ColumnScale& scale);

struct Dataset {
  Tensor2 x;                          // features in [0,1]^D
  std::vector<std::size_t> labels;    // classification
  std::vector<double> targets;        // regression (standardized unless raw)
  std::vector<double> raw_targets;    // regression targets as read or generated
  Task task;
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
  std::string provenance;
  std::uint64_t fingerprint = 0;
  ColumnScale scale;
  double target_mean = 0.0;
  double target_std = 1.0;
  std::vector<std::string> warnings;

  std::size_t size() const noexcept { return x.rows(); }
  std::size_t dim() const noexcept { return x.cols(); }
  Batch batch(std::span<const std::size_t> rows) const;
  Batch train_batch() const { return batch(train); }
  Batch test_batch() const { return batch(test); }
};

/// Deterministic permutation split: the first round(fraction * n) shuffled
/// indices form the training set. Both sets are returned sorted.
void split_indices(std::size_t n, double train_fraction, std::uint64_t seed,
                   std::vector<std::size_t>& train, std::vector<std::size_t>& test);

struct GenerateOptions {
  std::size_t n = 2000;
  double noise = 0.05;
  double train_fraction = 0.8;
  std::uint64_t seed = 0;
};

Dataset generate_2d(Family family, const GenerateOptions& opts);

/// Synthetic regression data: y = w.x + sin(2 pi x_1) + noise, x ~ U[0,1]^D.
Dataset generate_regression(std::size_t dim, const GenerateOptions& opts, bool raw_target = false);

struct CsvTable {
  std::vector<std::string> header;
  Tensor2 values;
};

/// Numeric CSV with a header row. Missing or non-numeric cells raise InputError
/// listing every offending row.
CsvTable read_csv(const std::filesystem::path& path);
void write_csv(const std::filesystem::path& path, const CsvTable& table);
/// Canonical text: header, then every value printed with 17 significant digits.
std::string canonical_csv(const CsvTable& table);
std::uint64_t fnv1a64(std::string_view bytes) noexcept;
/// 17 significant digits: parses back to the same double.
std::string format_double(double v);

struct LoadOptions {
  std::string target_column;  // empty selects the last column
  double train_fraction = 0.8;
  std::uint64_t seed = 0;
  bool raw_target = false;
};

/// Regression CSV: features min-max normalized, target standardized on the
/// training split unless raw_target is set.
Dataset load_regression_csv(const std::filesystem::path& path, const LoadOptions& opts);

/// Dataset file as written by save_dataset: features then a `label` (class
/// index) or `target` column. Features are re-normalized to the unit cube.
Dataset load_dataset(const std::filesystem::path& path, const LoadOptions& opts);
void save_dataset(const std::filesystem::path& path, const Dataset& data);
CsvTable to_table(const Dataset& data);

/// resolution^2 evenly spaced points covering [0,1]^2, x1 varying fastest.
Tensor2 grid(std::size_t resolution);

}  // namespace advgame
