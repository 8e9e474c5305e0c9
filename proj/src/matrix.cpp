#include "lpan/matrix.hpp"

#include <Eigen/Dense>

#include <cmath>

namespace lpan {

using EigenMap = Eigen::Map<
    const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using EigenMapMut =
    Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

bool Matrix::all_finite() const {
  for (double v : data_)
    if (!std::isfinite(v)) return false;
  return true;
}

Matrix Matrix::multiply(const Matrix& a, const Matrix& b) {
  require_shape(a.cols() == b.rows(), "matmul: inner dimensions differ");
  Matrix c(a.rows(), b.cols());
  EigenMap ma(a.data(), a.rows(), a.cols());
  EigenMap mb(b.data(), b.rows(), b.cols());
  EigenMapMut mc(c.data(), c.rows(), c.cols());
  mc.noalias() = ma * mb;
  return c;
}

Matrix Matrix::multiply_bt(const Matrix& a, const Matrix& b) {
  require_shape(a.cols() == b.cols(), "matmul_bt: inner dimensions differ");
  Matrix c(a.rows(), b.rows());
  EigenMap ma(a.data(), a.rows(), a.cols());
  EigenMap mb(b.data(), b.rows(), b.cols());
  EigenMapMut mc(c.data(), c.rows(), c.cols());
  mc.noalias() = ma * mb.transpose();
  return c;
}

Matrix Matrix::multiply_at(const Matrix& a, const Matrix& b) {
  require_shape(a.rows() == b.rows(), "matmul_at: inner dimensions differ");
  Matrix c(a.cols(), b.cols());
  EigenMap ma(a.data(), a.rows(), a.cols());
  EigenMap mb(b.data(), b.rows(), b.cols());
  EigenMapMut mc(c.data(), c.rows(), c.cols());
  mc.noalias() = ma.transpose() * mb;
  return c;
}

}  // namespace lpan
