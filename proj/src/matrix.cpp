#include "lorafuse/matrix.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "lorafuse/error.hpp"

namespace lorafuse {

namespace {

std::string shape_str(std::size_t r, std::size_t c) {
  return std::to_string(r) + "x" + std::to_string(c);
}

void check_finite(const std::vector<double>& data) {
  for (double v : data) {
    if (!std::isfinite(v)) {
      throw DataError("matrix contains a non-finite entry");
    }
  }
}

}  // namespace

DenseMatrix::DenseMatrix(std::size_t rows, std::size_t cols)
    : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}

DenseMatrix::DenseMatrix(std::size_t rows, std::size_t cols,
                         std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_) {
    throw ShapeError("data length " + std::to_string(data_.size()) +
                     " does not match shape " + shape_str(rows_, cols_));
  }
  check_finite(data_);
}

DenseMatrix DenseMatrix::identity(std::size_t n) {
  DenseMatrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

DenseMatrix DenseMatrix::gaussian(std::size_t rows, std::size_t cols, Rng& rng,
                                  double stddev) {
  DenseMatrix m(rows, cols);
  for (std::size_t i = 0; i < rows * cols; ++i) {
    m.data_[i] = stddev * rng.gaussian();
  }
  return m;
}

DenseMatrix DenseMatrix::transpose() const {
  DenseMatrix t(cols_, rows_);
  for (std::size_t i = 0; i < rows_; ++i) {
    for (std::size_t j = 0; j < cols_; ++j) {
      t(j, i) = (*this)(i, j);
    }
  }
  return t;
}

DenseMatrix DenseMatrix::scaled(double t) const {
  DenseMatrix out(rows_, cols_);
  for (std::size_t i = 0; i < data_.size(); ++i) out.data_[i] = t * data_[i];
  check_finite(out.data_);
  return out;
}

DenseMatrix DenseMatrix::take_rows(const std::vector<std::size_t>& idx) const {
  DenseMatrix out(idx.size(), cols_);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] >= rows_) {
      throw MapError("row index " + std::to_string(idx[i]) +
                     " out of bounds for " + shape_str(rows_, cols_));
    }
    std::copy_n(data_.data() + idx[i] * cols_, cols_,
                out.data_.data() + i * cols_);
  }
  return out;
}

DenseMatrix DenseMatrix::take_cols(const std::vector<std::size_t>& idx) const {
  DenseMatrix out(rows_, idx.size());
  for (std::size_t j = 0; j < idx.size(); ++j) {
    if (idx[j] >= cols_) {
      throw MapError("column index " + std::to_string(idx[j]) +
                     " out of bounds for " + shape_str(rows_, cols_));
    }
  }
  for (std::size_t i = 0; i < rows_; ++i) {
    for (std::size_t j = 0; j < idx.size(); ++j) {
      out(i, j) = (*this)(i, idx[j]);
    }
  }
  return out;
}

DenseMatrix DenseMatrix::submatrix(
    const std::vector<std::size_t>& row_idx,
    const std::vector<std::size_t>& col_idx) const {
  return take_rows(row_idx).take_cols(col_idx);
}

std::vector<double> DenseMatrix::col(std::size_t j) const {
  std::vector<double> out(rows_);
  for (std::size_t i = 0; i < rows_; ++i) out[i] = (*this)(i, j);
  return out;
}

double DenseMatrix::frobenius_norm() const {
  double s = 0.0;
  for (double v : data_) s += v * v;
  return std::sqrt(s);
}

double DenseMatrix::max_abs() const {
  double m = 0.0;
  for (double v : data_) m = std::max(m, std::abs(v));
  return m;
}

namespace {

void check_mul_shapes(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul shape mismatch: " +
                     shape_str(a.rows(), a.cols()) + " x " +
                     shape_str(b.rows(), b.cols()));
  }
}

inline void matmul_row(const DenseMatrix& a, const DenseMatrix& b,
                       std::vector<double>& out, std::size_t i) {
  const std::size_t n = b.cols(), k = a.cols();
  double* dst = out.data() + i * n;
  for (std::size_t l = 0; l < k; ++l) {
    const double ail = a(i, l);
    const double* brow = b.data().data() + l * n;
    for (std::size_t j = 0; j < n; ++j) dst[j] += ail * brow[j];
  }
}

}  // namespace

DenseMatrix matmul_serial(const DenseMatrix& a, const DenseMatrix& b) {
  check_mul_shapes(a, b);
  std::vector<double> out(a.rows() * b.cols(), 0.0);
  for (std::size_t i = 0; i < a.rows(); ++i) matmul_row(a, b, out, i);
  return DenseMatrix(a.rows(), b.cols(), std::move(out));
}

DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b) {
  check_mul_shapes(a, b);
  const std::size_t m = a.rows(), n = b.cols(), k = a.cols();
  std::vector<double> out(m * n, 0.0);
  // Threshold keeps thread startup off the tiny desk-scale products.
  if (m * n * k >= 1u << 16) {
#pragma omp parallel for schedule(static)
    for (long long i = 0; i < static_cast<long long>(m); ++i) {
      matmul_row(a, b, out, static_cast<std::size_t>(i));
    }
  } else {
    for (std::size_t i = 0; i < m; ++i) matmul_row(a, b, out, i);
  }
  return DenseMatrix(m, n, std::move(out));
}

DenseMatrix add(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError("add shape mismatch: " + shape_str(a.rows(), a.cols()) +
                     " vs " + shape_str(b.rows(), b.cols()));
  }
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a.data()[i] + b.data()[i];
  return DenseMatrix(a.rows(), a.cols(), std::move(out));
}

DenseMatrix sub(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError("sub shape mismatch: " + shape_str(a.rows(), a.cols()) +
                     " vs " + shape_str(b.rows(), b.cols()));
  }
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a.data()[i] - b.data()[i];
  return DenseMatrix(a.rows(), a.cols(), std::move(out));
}

DenseMatrix mean(std::span<const DenseMatrix> mats) {
  if (mats.empty()) throw ParamError("mean of zero matrices");
  const std::size_t r = mats[0].rows(), c = mats[0].cols();
  bool all_same = true;
  for (const DenseMatrix& m : mats) {
    if (m.rows() != r || m.cols() != c) {
      throw ShapeError("mean shape mismatch: " + shape_str(r, c) + " vs " +
                       shape_str(m.rows(), m.cols()));
    }
    all_same = all_same && m == mats[0];
  }
  // N copies average to the copy, exactly (sum-then-divide can round).
  if (all_same) return mats[0];
  std::vector<double> out(r * c, 0.0);
  for (const DenseMatrix& m : mats) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += m.data()[i];
  }
  const double inv = 1.0 / static_cast<double>(mats.size());
  for (double& v : out) v *= inv;
  return DenseMatrix(r, c, std::move(out));
}

double dot(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size()) {
    throw ShapeError("dot length mismatch: " + std::to_string(u.size()) +
                     " vs " + std::to_string(v.size()));
  }
  double s = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) s += u[i] * v[i];
  return s;
}

double norm2(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

double cosine(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size()) {
    throw ShapeError("cosine length mismatch: " + std::to_string(u.size()) +
                     " vs " + std::to_string(v.size()));
  }
  const double nu = norm2(u), nv = norm2(v);
  if (nu < kZeroNormTol || nv < kZeroNormTol) return 0.0;
  return std::clamp(dot(u, v) / (nu * nv), -1.0, 1.0);
}

}  // namespace lorafuse
