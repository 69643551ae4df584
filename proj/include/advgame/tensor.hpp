#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace advgame {

/// Dense row-major matrix of doubles. Rows are samples, columns are features.
class Tensor2 {
 public:
  Tensor2() = default;
  Tensor2(std::size_t rows, std::size_t cols, double fill = 0.0);
  Tensor2(std::size_t rows, std::size_t cols, std::vector<double> data);
  /// Row-list literal, e.g. Tensor2{{0.3, 0.7}, {1.0, 2.0}}.
  Tensor2(std::initializer_list<std::initializer_list<double>> rows);

  static Tensor2 row_vector(std::span<const double> values);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  const std::vector<double>& values() const noexcept { return data_; }

  /// Rows selected by index, in the given order.
  Tensor2 gather_rows(std::span<const std::size_t> indices) const;
  /// Writes `src` rows into this tensor at `indices` (inverse of gather_rows).
  void scatter_rows(std::span<const std::size_t> indices, const Tensor2& src);

  bool all_finite() const noexcept;

  Tensor2& operator+=(const Tensor2& other);
  Tensor2& operator-=(const Tensor2& other);
  Tensor2& operator*=(double s) noexcept;

  friend bool operator==(const Tensor2&, const Tensor2&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

Tensor2 operator+(Tensor2 a, const Tensor2& b);
Tensor2 operator-(Tensor2 a, const Tensor2& b);

/// Throws ShapeError naming both shapes unless `a` and `b` agree.
void require_same_shape(const Tensor2& a, const Tensor2& b, const char* what);

}  // namespace advgame
