#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace lpan {

// Dense row-major matrix of doubles. All nn-core math flows through this
// type; multiplication is delegated to Eigen maps over the same storage.
class Matrix {
 public:
  Matrix() : rows_(0), cols_(0) {}
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::vector<double>& storage() { return data_; }
  const std::vector<double>& storage() const { return data_; }

  bool same_shape(const Matrix& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

  bool all_finite() const;

  // C = A * B
  static Matrix multiply(const Matrix& a, const Matrix& b);
  // C = A * B^T
  static Matrix multiply_bt(const Matrix& a, const Matrix& b);
  // C = A^T * B
  static Matrix multiply_at(const Matrix& a, const Matrix& b);

 private:
  std::size_t rows_, cols_;
  std::vector<double> data_;
};

struct ShapeError : std::runtime_error {
  explicit ShapeError(const std::string& what) : std::runtime_error(what) {}
};

inline void require_shape(bool ok, const std::string& what) {
  if (!ok) throw ShapeError(what);
}

}  // namespace lpan
