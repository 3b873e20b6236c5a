#pragma once

#include <cassert>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <vector>

namespace sheafnet {

// Dense row-major matrix of doubles. The only dense container used by the
// library; all heavy products go through the kernels in kernels.hpp.
class Matrix {
 public:
  Matrix() = default;
  Matrix(int rows, int cols)
      : rows_(rows), cols_(cols), data_(static_cast<size_t>(rows) * cols, 0.0) {
    assert(rows >= 0 && cols >= 0);
  }

  static Matrix zeros(int rows, int cols) { return Matrix(rows, cols); }

  static Matrix identity(int n) {
    Matrix m(n, n);
    for (int i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  static Matrix filled(int rows, int cols, double v) {
    Matrix m(rows, cols);
    m.fill(v);
    return m;
  }

  static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    const int r = static_cast<int>(rows.size());
    const int c = r == 0 ? 0 : static_cast<int>(rows.begin()->size());
    Matrix m(r, c);
    int i = 0;
    for (const auto& row : rows) {
      assert(static_cast<int>(row.size()) == c);
      int j = 0;
      for (double v : row) m(i, j++) = v;
      ++i;
    }
    return m;
  }

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(int i, int j) {
    assert(i >= 0 && i < rows_ && j >= 0 && j < cols_);
    return data_[static_cast<size_t>(i) * cols_ + j];
  }
  double operator()(int i, int j) const {
    assert(i >= 0 && i < rows_ && j >= 0 && j < cols_);
    return data_[static_cast<size_t>(i) * cols_ + j];
  }

  double* row(int i) { return data_.data() + static_cast<size_t>(i) * cols_; }
  const double* row(int i) const { return data_.data() + static_cast<size_t>(i) * cols_; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  bool same_shape(const Matrix& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

  void set_zero() { fill(0.0); }

  Matrix transposed() const {
    Matrix t(cols_, rows_);
    for (int i = 0; i < rows_; ++i)
      for (int j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
    return t;
  }

  double frobenius_norm() const {
    double s = 0.0;
    for (double v : data_) s += v * v;
    return std::sqrt(s);
  }

  double max_abs() const {
    double m = 0.0;
    for (double v : data_) m = std::max(m, std::fabs(v));
    return m;
  }

  bool all_finite() const {
    for (double v : data_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  bool operator==(const Matrix& o) const {
    return rows_ == o.rows_ && cols_ == o.cols_ && data_ == o.data_;
  }

 private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<double> data_;
};

inline void add_inplace(Matrix& a, const Matrix& b) {
  assert(a.same_shape(b));
  double* pa = a.data();
  const double* pb = b.data();
  for (size_t i = 0; i < a.size(); ++i) pa[i] += pb[i];
}

inline void axpy_inplace(Matrix& a, double alpha, const Matrix& b) {
  assert(a.same_shape(b));
  double* pa = a.data();
  const double* pb = b.data();
  for (size_t i = 0; i < a.size(); ++i) pa[i] += alpha * pb[i];
}

inline void scale_inplace(Matrix& a, double alpha) {
  double* pa = a.data();
  for (size_t i = 0; i < a.size(); ++i) pa[i] *= alpha;
}

}  // namespace sheafnet
