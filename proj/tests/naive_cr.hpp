// Test-side scalar-loop reimplementation of the de-confliction pass.
// Deliberately independent of the production matrix-op path: apart from the
// subspace basis (whose SVD has its own reconstruction-based tests), every
// projection, norm, cosine, gate and reconstruction below is an explicit
// loop over scalars.
#pragma once

#include <cmath>
#include <vector>

#include "lorafuse/matrix.hpp"
#include "lorafuse/rng.hpp"
#include "lorafuse/svd.hpp"

namespace naive_cr {

struct NaiveResult {
  std::vector<lorafuse::DenseMatrix> updates;
  std::vector<double> conflict;
};

inline double naive_cos(const std::vector<double>& u,
                        const std::vector<double>& v) {
  double uu = 0, vv = 0, uv = 0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    uu += u[i] * u[i];
    vv += v[i] * v[i];
    uv += u[i] * v[i];
  }
  const double nu = std::sqrt(uu), nv = std::sqrt(vv);
  if (nu < 1e-12 || nv < 1e-12) return 0.0;
  double c = uv / (nu * nv);
  if (c > 1.0) c = 1.0;
  if (c < -1.0) c = -1.0;
  return c;
}

inline NaiveResult naive_deconflict(
    const std::vector<lorafuse::DenseMatrix>& updates, std::size_t max_dirs,
    double tol) {
  using lorafuse::DenseMatrix;
  const std::size_t n = updates.size();
  const std::size_t d_out = updates[0].rows();
  const std::size_t d_in = updates[0].cols();

  DenseMatrix concat(d_out, d_in * n);
  for (std::size_t u = 0; u < n; ++u) {
    for (std::size_t i = 0; i < d_out; ++i) {
      for (std::size_t j = 0; j < d_in; ++j) {
        concat(i, u * d_in + j) = updates[u](i, j);
      }
    }
  }
  const lorafuse::SvdResult svd = lorafuse::svd_thin(concat, 1e-12);
  std::size_t keep = 0;
  for (double s : svd.singular_values) {
    if (s >= tol * svd.singular_values[0]) ++keep;
  }
  if (keep > max_dirs) keep = max_dirs;
  if (keep == 0) keep = 1;

  std::vector<std::vector<std::vector<double>>> z(
      n, std::vector<std::vector<double>>(keep, std::vector<double>(d_in, 0)));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < keep; ++k) {
      for (std::size_t j = 0; j < d_in; ++j) {
        double acc = 0;
        for (std::size_t r = 0; r < d_out; ++r) {
          acc += svd.U(r, k) * updates[i](r, j);
        }
        z[i][k][j] = acc;
      }
    }
  }

  NaiveResult out;
  out.conflict.resize(keep);
  std::vector<std::vector<std::vector<double>>> zfuse = z;
  for (std::size_t k = 0; k < keep; ++k) {
    std::vector<double> alpha(n);
    double alpha_sum = 0;
    for (std::size_t i = 0; i < n; ++i) {
      double acc = 0;
      for (double x : z[i][k]) acc += x * x;
      alpha[i] = std::sqrt(acc);
      alpha_sum += alpha[i];
    }
    std::vector<double> zbar(d_in, 0);
    if (alpha_sum > 1e-12) {
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < d_in; ++j) {
          zbar[j] += alpha[i] * z[i][k][j];
        }
      }
      for (double& x : zbar) x /= alpha_sum;
    }
    double ck = 0;
    for (std::size_t i = 0; i < n; ++i) {
      ck += alpha[i] * (1.0 - naive_cos(z[i][k], zbar));
    }
    ck = alpha_sum > 1e-12 ? ck / (2.0 * alpha_sum) : 0.0;
    out.conflict[k] = ck;
    const double gk = 1.0 - ck;
    for (std::size_t i = 0; i < n; ++i) {
      const double sik = std::max(0.0, naive_cos(z[i][k], zbar));
      for (std::size_t j = 0; j < d_in; ++j) {
        zfuse[i][k][j] = gk * sik * z[i][k][j];
      }
    }
  }

  for (std::size_t i = 0; i < n; ++i) {
    DenseMatrix rec(d_out, d_in);
    for (std::size_t r = 0; r < d_out; ++r) {
      for (std::size_t j = 0; j < d_in; ++j) {
        double acc = 0;
        for (std::size_t k = 0; k < keep; ++k) {
          acc += svd.U(r, k) * zfuse[i][k][j];
        }
        rec(r, j) = acc;
      }
    }
    out.updates.push_back(std::move(rec));
  }
  return out;
}

inline std::vector<lorafuse::DenseMatrix> random_updates(
    lorafuse::Rng& rng, std::size_t n, std::size_t d_out, std::size_t d_in,
    std::size_t rank) {
  std::vector<lorafuse::DenseMatrix> updates;
  for (std::size_t i = 0; i < n; ++i) {
    updates.push_back(
        lorafuse::matmul(lorafuse::DenseMatrix::gaussian(d_out, rank, rng),
                         lorafuse::DenseMatrix::gaussian(rank, d_in, rng)));
  }
  return updates;
}

}  // namespace naive_cr
