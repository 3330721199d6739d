#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace frisbi::numeric {

/// Dense row-major double matrix. The only tensor type the pipeline needs;
/// vectors are n x 1 (or 1 x n) matrices.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);
  static Matrix row_vector(std::span<const double> v);
  static Matrix column_vector(std::span<const double> v);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::span<const double> row(std::size_t i) const { return {data_.data() + i * cols_, cols_}; }
  std::span<double> row(std::size_t i) { return {data_.data() + i * cols_, cols_}; }
  std::span<const double> flat() const { return {data_.data(), data_.size()}; }
  std::span<double> flat() { return {data_.data(), data_.size()}; }

  bool same_shape(const Matrix& other) const {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }
  bool all_finite() const;

  Matrix transposed() const;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// c += alpha * op(a) * op(b); shapes checked, Eigen-backed.
void add_gemm(Matrix& c, const Matrix& a, const Matrix& b, bool transpose_a,
              bool transpose_b, double alpha = 1.0);
Matrix matmul(const Matrix& a, const Matrix& b);

/// log(sum_i exp(v_i)) via max-shift; throws Error("empty-vector") on empty input.
double logsumexp(std::span<const double> v);

/// C_ij = sum_k (A_ik - B_jk)^2. Exact zeros for identical rows.
/// Throws Error("shape") when column counts differ.
Matrix pairwise_sqdist(const Matrix& a, const Matrix& b);

Matrix stack_rows(const Matrix& top, const Matrix& bottom);
Matrix take_rows(const Matrix& m, std::span<const std::size_t> indices);
double max_abs_diff(const Matrix& a, const Matrix& b);

}  // namespace frisbi::numeric
