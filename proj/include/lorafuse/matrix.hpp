#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "lorafuse/rng.hpp"

namespace lorafuse {

/// Dense row-major matrix of doubles. Values are treated as immutable once
/// built: operations return new matrices, so instances can be shared across
/// threads freely. Constructors reject NaN/Inf entries.
class DenseMatrix {
 public:
  DenseMatrix() : rows_(0), cols_(0) {}

  // Zero-filled.
  DenseMatrix(std::size_t rows, std::size_t cols);

  // Takes ownership of row-major data; validates size and finiteness.
  DenseMatrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  static DenseMatrix identity(std::size_t n);
  static DenseMatrix gaussian(std::size_t rows, std::size_t cols, Rng& rng,
                              double stddev = 1.0);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double operator()(std::size_t i, std::size_t j) const {
    return data_[i * cols_ + j];
  }
  double& operator()(std::size_t i, std::size_t j) {
    return data_[i * cols_ + j];
  }

  std::span<const double> data() const { return data_; }
  std::span<const double> row(std::size_t i) const {
    return std::span<const double>(data_.data() + i * cols_, cols_);
  }

  DenseMatrix transpose() const;
  DenseMatrix scaled(double t) const;
  DenseMatrix take_rows(const std::vector<std::size_t>& idx) const;
  DenseMatrix take_cols(const std::vector<std::size_t>& idx) const;
  DenseMatrix submatrix(const std::vector<std::size_t>& row_idx,
                        const std::vector<std::size_t>& col_idx) const;
  std::vector<double> col(std::size_t j) const;

  double frobenius_norm() const;
  double max_abs() const;

  bool operator==(const DenseMatrix& o) const {
    return rows_ == o.rows_ && cols_ == o.cols_ && data_ == o.data_;
  }

 private:
  std::size_t rows_, cols_;
  std::vector<double> data_;
};

/// Matrix product. Production kernel; parallelized over output rows when the
/// work is large enough. Bitwise identical to matmul_serial for any thread
/// count (each output element keeps its serial accumulation order).
DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b);

/// Plain triple-loop reference kernel, kept for tests and the benchmark.
DenseMatrix matmul_serial(const DenseMatrix& a, const DenseMatrix& b);

DenseMatrix add(const DenseMatrix& a, const DenseMatrix& b);
DenseMatrix sub(const DenseMatrix& a, const DenseMatrix& b);

/// Mean of equally-shaped matrices.
DenseMatrix mean(std::span<const DenseMatrix> mats);

double dot(std::span<const double> u, std::span<const double> v);
double norm2(std::span<const double> v);

/// Cosine similarity in [-1, 1]. Returns 0 when either vector's norm is
/// below 1e-12 (declared convention for degenerate directions).
double cosine(std::span<const double> u, std::span<const double> v);

inline constexpr double kZeroNormTol = 1e-12;

}  // namespace lorafuse
