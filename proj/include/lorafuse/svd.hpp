#pragma once

#include <vector>

#include "lorafuse/matrix.hpp"

namespace lorafuse {

/// Thin SVD of an m x n matrix: U is m x k, V is n x k, k = min(m, n),
/// with input = U * diag(singular_values) * V^T.
struct SvdResult {
  DenseMatrix U;
  std::vector<double> singular_values;  // nonincreasing, >= 0
  DenseMatrix V;
};

/// One-sided Jacobi SVD. `tol` bounds the relative off-diagonal mass at
/// which column rotations stop. Outputs are deterministic: singular values
/// sorted nonincreasing (ties keep the lower original index first) and each
/// U column's largest-magnitude entry is nonnegative (ties broken by lowest
/// index). Columns paired with zero singular values are completed to an
/// orthonormal basis.
SvdResult svd_thin(const DenseMatrix& m, double tol);

/// Reconstructs U * diag(s) * V^T; test and diagnostics helper.
DenseMatrix svd_reconstruct(const SvdResult& svd);

}  // namespace lorafuse
