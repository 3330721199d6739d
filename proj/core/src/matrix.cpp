#include "frisbi/numeric/matrix.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>

#include "frisbi/error.hpp"

namespace frisbi::numeric {

namespace {
using EigenMap = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using EigenConstMap =
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

EigenConstMap map_of(const Matrix& m) {
  return EigenConstMap(m.data(), static_cast<Eigen::Index>(m.rows()),
                       static_cast<Eigen::Index>(m.cols()));
}
}  // namespace

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  Matrix m(rows.size(), rows.size() ? rows.begin()->size() : 0);
  std::size_t i = 0;
  for (const auto& r : rows) {
    if (r.size() != m.cols()) throw Error("shape", "ragged initializer rows");
    std::size_t j = 0;
    for (double v : r) m(i, j++) = v;
    ++i;
  }
  return m;
}

Matrix Matrix::row_vector(std::span<const double> v) {
  Matrix m(1, v.size());
  std::copy(v.begin(), v.end(), m.data());
  return m;
}

Matrix Matrix::column_vector(std::span<const double> v) {
  Matrix m(v.size(), 1);
  std::copy(v.begin(), v.end(), m.data());
  return m;
}

bool Matrix::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Matrix Matrix::transposed() const {
  Matrix t(cols_, rows_);
  for (std::size_t i = 0; i < rows_; ++i)
    for (std::size_t j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
  return t;
}

void add_gemm(Matrix& c, const Matrix& a, const Matrix& b, bool transpose_a, bool transpose_b,
              double alpha) {
  const std::size_t am = transpose_a ? a.cols() : a.rows();
  const std::size_t ak = transpose_a ? a.rows() : a.cols();
  const std::size_t bk = transpose_b ? b.cols() : b.rows();
  const std::size_t bn = transpose_b ? b.rows() : b.cols();
  if (ak != bk || c.rows() != am || c.cols() != bn)
    throw Error("shape", "gemm operand shapes do not match");

  EigenMap cm(c.data(), static_cast<Eigen::Index>(c.rows()), static_cast<Eigen::Index>(c.cols()));
  auto amap = map_of(a);
  auto bmap = map_of(b);
  if (!transpose_a && !transpose_b)
    cm.noalias() += alpha * (amap * bmap);
  else if (transpose_a && !transpose_b)
    cm.noalias() += alpha * (amap.transpose() * bmap);
  else if (!transpose_a && transpose_b)
    cm.noalias() += alpha * (amap * bmap.transpose());
  else
    cm.noalias() += alpha * (amap.transpose() * bmap.transpose());
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  Matrix c(a.rows(), b.cols(), 0.0);
  add_gemm(c, a, b, false, false, 1.0);
  return c;
}

double logsumexp(std::span<const double> v) {
  if (v.empty()) throw Error("empty-vector", "logsumexp of empty input");
  double m = -std::numeric_limits<double>::infinity();
  for (double x : v) m = std::max(m, x);
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

Matrix pairwise_sqdist(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) throw Error("shape", "pairwise_sqdist column mismatch");
  const std::size_t n = a.rows(), m = b.rows(), d = a.cols();
  Matrix c(n, m);
  for (std::size_t i = 0; i < n; ++i) {
    const double* ai = a.data() + i * d;
    for (std::size_t j = 0; j < m; ++j) {
      const double* bj = b.data() + j * d;
      double s = 0.0;
      for (std::size_t k = 0; k < d; ++k) {
        const double diff = ai[k] - bj[k];
        s += diff * diff;
      }
      c(i, j) = s;
    }
  }
  return c;
}

Matrix stack_rows(const Matrix& top, const Matrix& bottom) {
  if (top.empty()) return bottom;
  if (bottom.empty()) return top;
  if (top.cols() != bottom.cols()) throw Error("shape", "stack_rows column mismatch");
  Matrix out(top.rows() + bottom.rows(), top.cols());
  std::copy(top.data(), top.data() + top.size(), out.data());
  std::copy(bottom.data(), bottom.data() + bottom.size(), out.data() + top.size());
  return out;
}

Matrix take_rows(const Matrix& m, std::span<const std::size_t> indices) {
  Matrix out(indices.size(), m.cols());
  for (std::size_t r = 0; r < indices.size(); ++r) {
    auto src = m.row(indices[r]);
    std::copy(src.begin(), src.end(), out.row(r).begin());
  }
  return out;
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
  if (!a.same_shape(b)) throw Error("shape", "max_abs_diff shape mismatch");
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    worst = std::max(worst, std::abs(a.flat()[i] - b.flat()[i]));
  return worst;
}

}  // namespace frisbi::numeric
