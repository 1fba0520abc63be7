#include "lorafuse/conflict.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "lorafuse/error.hpp"
#include "lorafuse/svd.hpp"

namespace lorafuse {

namespace {

constexpr double kJacobiTol = 1e-12;

void check_common_shape(std::span<const DenseMatrix> mats, const char* what) {
  if (mats.empty()) throw ParamError(std::string(what) + ": empty input set");
  for (const DenseMatrix& m : mats) {
    if (m.rows() != mats[0].rows() || m.cols() != mats[0].cols()) {
      throw ShapeError(std::string(what) + ": shape mismatch, " +
                       std::to_string(mats[0].rows()) + "x" +
                       std::to_string(mats[0].cols()) + " vs " +
                       std::to_string(m.rows()) + "x" +
                       std::to_string(m.cols()));
    }
  }
}

}  // namespace

SharedSubspace shared_subspace(std::span<const DenseMatrix> updates,
                               std::size_t max_dirs, double tol) {
  check_common_shape(updates, "shared_subspace");
  if (max_dirs == 0) throw ParamError("shared_subspace: max_dirs must be >= 1");

  const std::size_t d_out = updates[0].rows();
  const std::size_t d_in = updates[0].cols();
  DenseMatrix concat(d_out, d_in * updates.size());
  for (std::size_t u = 0; u < updates.size(); ++u) {
    for (std::size_t i = 0; i < d_out; ++i) {
      for (std::size_t j = 0; j < d_in; ++j) {
        concat(i, u * d_in + j) = updates[u](i, j);
      }
    }
  }

  SvdResult svd = svd_thin(concat, kJacobiTol);
  const double sigma_max = svd.singular_values.empty()
                               ? 0.0
                               : svd.singular_values.front();
  std::size_t keep = 0;
  for (double s : svd.singular_values) {
    if (s >= tol * sigma_max) ++keep;
  }
  keep = std::min(keep, max_dirs);
  keep = std::max<std::size_t>(keep, 1);
  keep = std::min(keep, svd.singular_values.size());

  SharedSubspace sub;
  sub.basis = DenseMatrix(d_out, keep);
  sub.singular_values.assign(svd.singular_values.begin(),
                             svd.singular_values.begin() + keep);
  for (std::size_t i = 0; i < d_out; ++i) {
    for (std::size_t j = 0; j < keep; ++j) sub.basis(i, j) = svd.U(i, j);
  }
  return sub;
}

DenseMatrix project(const SharedSubspace& subspace, const DenseMatrix& update) {
  if (subspace.basis.rows() != update.rows()) {
    throw ShapeError("project: update has " + std::to_string(update.rows()) +
                     " rows, basis has " +
                     std::to_string(subspace.basis.rows()));
  }
  return matmul(subspace.basis.transpose(), update);
}

ConflictReport conflict_scores(std::span<const DenseMatrix> projections) {
  check_common_shape(projections, "conflict_scores");
  const std::size_t n_adapters = projections.size();
  const std::size_t n_dirs = projections[0].rows();
  const std::size_t d_in = projections[0].cols();

  ConflictReport report;
  report.conflict.resize(n_dirs);
  report.gate.resize(n_dirs);
  report.consensus.assign(n_dirs, std::vector<double>(d_in, 0.0));
  report.energy.assign(n_adapters, std::vector<double>(n_dirs, 0.0));
  report.consistency.assign(n_adapters, std::vector<double>(n_dirs, 0.0));

  for (std::size_t k = 0; k < n_dirs; ++k) {
    double energy_sum = 0.0;
    for (std::size_t i = 0; i < n_adapters; ++i) {
      report.energy[i][k] = norm2(projections[i].row(k));
      energy_sum += report.energy[i][k];
    }

    std::vector<double>& zbar = report.consensus[k];
    if (energy_sum > kZeroNormTol) {
      for (std::size_t i = 0; i < n_adapters; ++i) {
        const auto zrow = projections[i].row(k);
        for (std::size_t j = 0; j < d_in; ++j) {
          zbar[j] += report.energy[i][k] * zrow[j];
        }
      }
      for (double& x : zbar) x /= energy_sum;
    }
    // else: consensus stays the zero vector (declared convention).

    double conflict = 0.0;
    for (std::size_t i = 0; i < n_adapters; ++i) {
      const double cos_ik = cosine(projections[i].row(k), zbar);
      report.consistency[i][k] = std::max(0.0, cos_ik);
      conflict += report.energy[i][k] * (1.0 - cos_ik);
    }
    report.conflict[k] =
        energy_sum > kZeroNormTol ? conflict / (2.0 * energy_sum) : 0.0;
    report.gate[k] = 1.0 - report.conflict[k];
  }

  double total = 0.0;
  for (double c : report.conflict) total += c;
  report.mean_conflict = n_dirs > 0 ? total / static_cast<double>(n_dirs) : 0.0;
  return report;
}

DeconflictedAdapterSet deconflict_in_subspace(
    const SharedSubspace& subspace, std::span<const DenseMatrix> updates) {
  check_common_shape(updates, "deconflict");
  std::vector<DenseMatrix> projections;
  projections.reserve(updates.size());
  for (const DenseMatrix& u : updates) projections.push_back(project(subspace, u));

  ConflictReport report = conflict_scores(projections);

  DeconflictedAdapterSet out;
  out.report = report;
  out.subspace = subspace;
  out.updates.reserve(updates.size());
  for (std::size_t i = 0; i < updates.size(); ++i) {
    DenseMatrix fused(projections[i].rows(), projections[i].cols());
    for (std::size_t k = 0; k < fused.rows(); ++k) {
      const double w = report.gate[k] * report.consistency[i][k];
      for (std::size_t j = 0; j < fused.cols(); ++j) {
        fused(k, j) = w * projections[i](k, j);
      }
    }
    out.updates.push_back(matmul(subspace.basis, fused));
  }
  return out;
}

DeconflictedAdapterSet deconflict(std::span<const DenseMatrix> updates,
                                  std::size_t max_dirs, double tol) {
  return deconflict_in_subspace(shared_subspace(updates, max_dirs, tol),
                                updates);
}

double mean_conflict(const ConflictReport& report) {
  if (report.conflict.empty()) {
    throw AccountingError("mean_conflict: report has no directions");
  }
  double total = 0.0;
  for (double c : report.conflict) total += c;
  return total / static_cast<double>(report.conflict.size());
}

LoraAdapter refactor_update(const DenseMatrix& update,
                            const std::string& layer_name,
                            std::size_t max_rank) {
  if (update.empty()) throw ParamError("refactor_update: empty update");
  SvdResult svd = svd_thin(update, kJacobiTol);
  std::size_t rank = std::min({max_rank, update.rows(), update.cols()});
  rank = std::max<std::size_t>(rank, 1);

  LoraAdapter adapter;
  adapter.layer_name = layer_name;
  adapter.rank = rank;
  adapter.alpha = static_cast<double>(rank);  // scale folded in: alpha/rank = 1
  adapter.B = DenseMatrix(update.rows(), rank);
  adapter.A = DenseMatrix(rank, update.cols());
  for (std::size_t i = 0; i < update.rows(); ++i) {
    for (std::size_t r = 0; r < rank; ++r) {
      adapter.B(i, r) = svd.U(i, r) * svd.singular_values[r];
    }
  }
  for (std::size_t r = 0; r < rank; ++r) {
    for (std::size_t j = 0; j < update.cols(); ++j) {
      adapter.A(r, j) = svd.V(j, r);
    }
  }
  validate_adapter(adapter);
  return adapter;
}

}  // namespace lorafuse
