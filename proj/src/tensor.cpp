#include "advgame/tensor.hpp"

#include <cmath>
#include <sstream>

#include "advgame/errors.hpp"

namespace advgame {

Tensor2::Tensor2(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Tensor2::Tensor2(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_) {
    std::ostringstream msg;
    msg << "tensor data length " << data_.size() << " does not match " << rows_ << "x" << cols_;
    throw ShapeError(msg.str());
  }
}

Tensor2::Tensor2(std::initializer_list<std::initializer_list<double>> rows) {
  rows_ = rows.size();
  cols_ = rows_ == 0 ? 0 : rows.begin()->size();
  data_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    if (r.size() != cols_) throw ShapeError("ragged row list in tensor literal");
    data_.insert(data_.end(), r.begin(), r.end());
  }
}

Tensor2 Tensor2::row_vector(std::span<const double> values) {
  return Tensor2(1, values.size(), std::vector<double>(values.begin(), values.end()));
}

Tensor2 Tensor2::gather_rows(std::span<const std::size_t> indices) const {
  Tensor2 out(indices.size(), cols_);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= rows_) throw ShapeError("gather_rows: row index out of range");
    auto src = row(indices[i]);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

void Tensor2::scatter_rows(std::span<const std::size_t> indices, const Tensor2& src) {
  if (src.rows() != indices.size() || src.cols() != cols_) {
    throw ShapeError("scatter_rows: source shape does not match index list");
  }
  for (std::size_t i = 0; i < indices.size(); ++i) {
    auto s = src.row(i);
    std::copy(s.begin(), s.end(), row(indices[i]).begin());
  }
}

bool Tensor2::all_finite() const noexcept {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

void require_same_shape(const Tensor2& a, const Tensor2& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    std::ostringstream msg;
    msg << what << ": shape " << a.rows() << "x" << a.cols() << " vs " << b.rows() << "x"
        << b.cols();
    throw ShapeError(msg.str());
  }
}

Tensor2& Tensor2::operator+=(const Tensor2& other) {
  require_same_shape(*this, other, "operator+=");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

Tensor2& Tensor2::operator-=(const Tensor2& other) {
  require_same_shape(*this, other, "operator-=");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= other.data_[i];
  return *this;
}

Tensor2& Tensor2::operator*=(double s) noexcept {
  for (double& v : data_) v *= s;
  return *this;
}

Tensor2 operator+(Tensor2 a, const Tensor2& b) { return a += b; }
Tensor2 operator-(Tensor2 a, const Tensor2& b) { return a -= b; }

}  // namespace advgame
