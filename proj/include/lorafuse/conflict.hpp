#pragma once

#include <span>
#include <vector>

#include "lorafuse/lora.hpp"
#include "lorafuse/matrix.hpp"

namespace lorafuse {

/// Leading left singular directions of the column-concatenated updates.
struct SharedSubspace {
  DenseMatrix basis;                    // d_out x r_sub, orthonormal columns
  std::vector<double> singular_values;  // retained, nonincreasing
  std::size_t dims() const { return basis.cols(); }
};

/// Per-direction conflict diagnostics for one parameter matrix.
struct ConflictReport {
  std::vector<double> conflict;                     // c_k in [0,1]
  std::vector<double> gate;                         // g_k = 1 - c_k
  std::vector<std::vector<double>> consensus;       // z_bar_k, length d_in
  std::vector<std::vector<double>> energy;          // alpha[i][k]
  std::vector<std::vector<double>> consistency;     // s[i][k] in [0,1]
  double mean_conflict = 0.0;

  std::size_t num_directions() const { return conflict.size(); }
  std::size_t num_adapters() const { return energy.size(); }
};

/// De-conflicted updates plus the report that produced them. Every update
/// lies in the span of the shared basis.
struct DeconflictedAdapterSet {
  std::vector<DenseMatrix> updates;
  ConflictReport report;
  SharedSubspace subspace;
};

/// SVD of [dW_1, ..., dW_N] concatenated along columns; keeps at most
/// max_dirs leading directions and drops those with sigma < tol * sigma_max.
SharedSubspace shared_subspace(std::span<const DenseMatrix> updates,
                               std::size_t max_dirs, double tol);

/// Z_i = basis^T * update, one row per shared direction.
DenseMatrix project(const SharedSubspace& subspace, const DenseMatrix& update);

/// Direction-wise scores over the projections: energies alpha[i][k],
/// energy-weighted consensus rows, conflict c_k and its gate, and the
/// clipped-cosine consistency of every adapter row.
ConflictReport conflict_scores(std::span<const DenseMatrix> projections);

/// Full de-confliction against an externally supplied basis; exposed so the
/// invariance tests can perturb the basis. `deconflict` composes
/// shared_subspace + this.
DeconflictedAdapterSet deconflict_in_subspace(
    const SharedSubspace& subspace, std::span<const DenseMatrix> updates);

/// Conflict-resolution pass: shared subspace, per-direction gating and
/// consistency attenuation, reconstruction of de-conflicted updates.
DeconflictedAdapterSet deconflict(std::span<const DenseMatrix> updates,
                                  std::size_t max_dirs, double tol);

/// Arithmetic mean of the per-direction conflict scores.
double mean_conflict(const ConflictReport& report);

/// Exact (B, A) refactoring of a de-conflicted update via truncated SVD at
/// rank min(max_rank, min dims); the returned adapter carries alpha == rank
/// so its materialization reproduces the input to fp accuracy.
LoraAdapter refactor_update(const DenseMatrix& update,
                            const std::string& layer_name,
                            std::size_t max_rank);

}  // namespace lorafuse
