#include "lorafuse/svd.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "lorafuse/error.hpp"

namespace lorafuse {

namespace {

constexpr int kMaxSweeps = 100;

// One-sided Jacobi on a tall (m >= n) matrix held column-major in `w`
// (n columns of length m). Rotations accumulate into `v` (n x n,
// column-major as well).
void jacobi_columns(std::vector<std::vector<double>>& w,
                    std::vector<std::vector<double>>& v, double tol) {
  const std::size_t n = w.size();
  if (n < 2) return;
  const std::size_t m = w[0].size();

  // Columns this far below the matrix norm are numerically zero; chasing
  // their angles stalls convergence on rank-deficient inputs.
  double total = 0.0;
  for (const auto& col : w) {
    for (double x : col) total += x * x;
  }
  const double negligible = total * 1e-28;

  for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
    bool rotated = false;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        double alpha = 0.0, beta = 0.0, gamma = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
          alpha += w[p][i] * w[p][i];
          beta += w[q][i] * w[q][i];
          gamma += w[p][i] * w[q][i];
        }
        if (alpha <= negligible || beta <= negligible) continue;
        if (std::abs(gamma) <= tol * std::sqrt(alpha * beta)) continue;
        rotated = true;
        const double tau = (beta - alpha) / (2.0 * gamma);
        const double t = (tau >= 0.0 ? 1.0 : -1.0) /
                         (std::abs(tau) + std::sqrt(1.0 + tau * tau));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        for (std::size_t i = 0; i < m; ++i) {
          const double wp = w[p][i], wq = w[q][i];
          w[p][i] = c * wp - s * wq;
          w[q][i] = s * wp + c * wq;
        }
        for (std::size_t i = 0; i < n; ++i) {
          const double vp = v[p][i], vq = v[q][i];
          v[p][i] = c * vp - s * vq;
          v[q][i] = s * vp + c * vq;
        }
      }
    }
    if (!rotated) return;
  }
  throw DataError("svd_thin: Jacobi sweep limit reached without convergence");
}

// Deterministic completion of a zero-norm U column: first canonical basis
// vector whose residual against the already-built columns stays large.
std::vector<double> complete_column(
    const std::vector<std::vector<double>>& built, std::size_t m) {
  for (std::size_t cand = 0; cand < m; ++cand) {
    std::vector<double> vcol(m, 0.0);
    vcol[cand] = 1.0;
    for (const auto& u : built) {
      double proj = 0.0;
      for (std::size_t i = 0; i < m; ++i) proj += u[i] * vcol[i];
      for (std::size_t i = 0; i < m; ++i) vcol[i] -= proj * u[i];
    }
    double norm = 0.0;
    for (double x : vcol) norm += x * x;
    norm = std::sqrt(norm);
    if (norm > 0.5) {
      for (double& x : vcol) x /= norm;
      return vcol;
    }
  }
  throw DataError("svd_thin: failed to complete orthonormal basis");
}

}  // namespace

SvdResult svd_thin(const DenseMatrix& input, double tol) {
  if (input.empty()) throw ParamError("svd_thin: empty matrix");
  if (tol <= 0.0) throw ParamError("svd_thin: tol must be positive");

  const bool transposed = input.rows() < input.cols();
  const DenseMatrix m = transposed ? input.transpose() : input;
  const std::size_t rows = m.rows(), cols = m.cols();  // rows >= cols

  // Column-major working copies.
  std::vector<std::vector<double>> w(cols, std::vector<double>(rows));
  std::vector<std::vector<double>> v(cols, std::vector<double>(cols, 0.0));
  for (std::size_t j = 0; j < cols; ++j) {
    for (std::size_t i = 0; i < rows; ++i) w[j][i] = m(i, j);
    v[j][j] = 1.0;
  }

  jacobi_columns(w, v, tol);

  std::vector<double> sigma(cols);
  for (std::size_t j = 0; j < cols; ++j) sigma[j] = norm2(w[j]);
  double sigma_max = 0.0;
  for (double s : sigma) sigma_max = std::max(sigma_max, s);

  // Nonincreasing order, stable so equal values keep their lower index.
  std::vector<std::size_t> order(cols);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return sigma[a] > sigma[b]; });

  const double rank_cut = sigma_max * 1e-13;
  std::vector<std::vector<double>> left_cols;
  std::vector<std::vector<double>> right_cols;
  std::vector<double> s_sorted(cols);
  left_cols.reserve(cols);
  for (std::size_t r = 0; r < cols; ++r) {
    const std::size_t j = order[r];
    s_sorted[r] = sigma[j];
    std::vector<double> lcol;
    if (sigma[j] > rank_cut && sigma[j] > 0.0) {
      lcol = w[j];
      for (double& x : lcol) x /= sigma[j];
    } else {
      lcol = complete_column(left_cols, rows);
    }
    left_cols.push_back(std::move(lcol));
    right_cols.push_back(v[j]);
  }

  // For a wide input the factors swap roles: input = (V')(S)(U')^T.
  auto& u_cols = transposed ? right_cols : left_cols;
  auto& v_cols = transposed ? left_cols : right_cols;

  // Sign convention: the largest-magnitude entry of each final U column is
  // nonnegative, ties resolved toward the lowest index.
  for (std::size_t j = 0; j < cols; ++j) {
    auto& ucol = u_cols[j];
    std::size_t imax = 0;
    for (std::size_t i = 1; i < ucol.size(); ++i) {
      if (std::abs(ucol[i]) > std::abs(ucol[imax])) imax = i;
    }
    if (ucol[imax] < 0.0) {
      for (double& x : ucol) x = -x;
      for (double& x : v_cols[j]) x = -x;
    }
  }

  const std::size_t urows = u_cols[0].size(), vrows = v_cols[0].size();
  DenseMatrix U(urows, cols), V(vrows, cols);
  for (std::size_t j = 0; j < cols; ++j) {
    for (std::size_t i = 0; i < urows; ++i) U(i, j) = u_cols[j][i];
    for (std::size_t i = 0; i < vrows; ++i) V(i, j) = v_cols[j][i];
  }
  return SvdResult{std::move(U), std::move(s_sorted), std::move(V)};
}

DenseMatrix svd_reconstruct(const SvdResult& svd) {
  DenseMatrix us(svd.U.rows(), svd.singular_values.size());
  for (std::size_t i = 0; i < us.rows(); ++i) {
    for (std::size_t j = 0; j < us.cols(); ++j) {
      us(i, j) = svd.U(i, j) * svd.singular_values[j];
    }
  }
  return matmul(us, svd.V.transpose());
}

}  // namespace lorafuse
