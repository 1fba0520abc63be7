#pragma once

#include <span>
#include <string>

#include "lorafuse/matrix.hpp"
#include "lorafuse/prune.hpp"

namespace lorafuse {

enum class FusionMethod { kFedAvg, kFfa, kFedSa };

FusionMethod fusion_method_from_string(const std::string& name);
std::string fusion_method_name(FusionMethod method);

/// Entrywise mean of the updates.
DenseMatrix fedavg(std::span<const DenseMatrix> updates);

/// Frozen-A aggregation: scale * mean(B_i) * A0. The caller is responsible
/// for checking that every client carried the identical frozen A0; see
/// check_identical_frozen_a.
DenseMatrix ffa_fuse(std::span<const DenseMatrix> b_factors,
                     const DenseMatrix& a_frozen, double scale);

/// One-shot selective aggregation: scale * mean(B_i) * mean(A_i).
DenseMatrix fedsa_fuse(std::span<const DenseMatrix> a_factors,
                       std::span<const DenseMatrix> b_factors, double scale);

/// Factor-averaging variant of FedAvg (mean-B times mean-A); numerically the
/// same composition as fedsa_fuse but exposed under its own name because it
/// is a different baseline than entrywise averaging.
DenseMatrix factor_avg_fuse(std::span<const DenseMatrix> b_factors,
                            std::span<const DenseMatrix> a_factors,
                            double scale);

/// Raises ProtocolError unless all clients hold the bitwise-identical frozen
/// A factor. `labels` name the offending sources in the error message.
void check_identical_frozen_a(std::span<const DenseMatrix> a_factors,
                              std::span<const std::string> labels);

/// W_new = W0 + fused, layer by layer; the input backbone is not modified.
Backbone apply_fusion(const Backbone& backbone,
                      std::span<const DenseMatrix> fused_per_layer);

}  // namespace lorafuse
