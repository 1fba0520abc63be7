#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "lorafuse/config.hpp"
#include "lorafuse/conflict.hpp"
#include "lorafuse/lora.hpp"
#include "lorafuse/matrix.hpp"
#include "lorafuse/prune.hpp"
#include "lorafuse/recover.hpp"

namespace lorafuse {

inline constexpr const char* kLayerName = "layer0";

struct Batch {
  DenseMatrix inputs;   // d_in x S, one sample per column
  DenseMatrix targets;  // d_out x S
  std::size_t samples() const { return inputs.cols(); }
};

/// One edge domain: targets come from W0 + delta_teacher plus observation
/// noise; the teacher delta has the configured rank.
struct SyntheticDomain {
  int domain_id = 0;
  DenseMatrix delta_teacher;
  Batch train;
  Batch test;
};

/// Cross-domain probe: targets require the sum of both domains' deltas.
struct CrossDomainTask {
  int domain_a = 0;
  int domain_b = 0;
  Batch test;
};

struct Generated {
  Backbone backbone;
  std::vector<SyntheticDomain> domains;
  std::vector<CrossDomainTask> tasks;
};

/// Local optimization knobs. Full-batch gradient descent on the MSE
/// surrogate; freeze_a implements the frozen-A training protocol used by
/// the ffa fusion method.
struct TrainConfig {
  double learning_rate = 0.08;
  std::size_t steps = 800;
  std::size_t rank = 8;
  double alpha = 16.0;
  std::uint64_t seed = 0;
  bool freeze_a = false;
};

struct TrainResult {
  LoraAdapter adapter;
  std::vector<double> loss_trace;  // steps + 1 entries
};

/// Deterministic world build: seeded backbone, per-domain teacher deltas
/// with the configured left-subspace overlap, train/test batches, and one
/// cross-domain task per domain pair (verified against the hardness floor).
Generated gen_domains(const Config& cfg, std::uint64_t seed);

/// Calibration batch for cloud-side importance estimation: Gaussian probes
/// with targets drawn from the domain teachers in round-robin. Empty when
/// cfg.prune.calibration_size == 0 (magnitude fallback).
std::optional<CalibrationBatch> make_calibration(const Config& cfg,
                                                 const Generated& gen);

/// Cloud pruning decision: importance scores + quantile retention.
PruneMap compute_prune_map(const Config& cfg, const Generated& gen);

/// The edge-side view of a batch/domain: rows of the targets restricted to
/// the retained output rows, inputs to the retained input columns.
Batch restrict_batch(const Batch& batch, const LayerPrune& lp);
SyntheticDomain restrict_domain(const SyntheticDomain& domain,
                                const LayerPrune& lp);

/// Full-batch gradient descent on MSE over (B, A); the pruned backbone
/// stays frozen. The trace holds the loss before each step plus the final
/// loss. Divergence (loss non-finite or > 1e12) raises TrainingError with
/// the step index.
TrainResult local_train(const Backbone& pruned, const LoraAdapter& adapter,
                        const SyntheticDomain& domain, const TrainConfig& cfg);

/// Mean over samples of squared residual norm / output dimension.
double evaluate(const Backbone& backbone, const Batch& batch);

/// Fusion of recovered adapters per the configured method (no CR).
DenseMatrix fuse_recovered(const Config& cfg,
                           const std::vector<LoraAdapter>& recovered);

/// Fusion of de-conflicted updates: fedavg consumes the matrices directly;
/// ffa refits per-client B factors onto the shared frozen A; fedsa consumes
/// the truncated-SVD refactored (B, A) pairs.
DenseMatrix fuse_deconflicted(const Config& cfg,
                              const std::vector<DenseMatrix>& cr_updates,
                              const DenseMatrix* frozen_a_recovered);

struct StageTimings {
  double generate_s = 0, prune_s = 0, train_s = 0, recover_s = 0, cr_s = 0,
         fuse_s = 0, evaluate_s = 0, total_s = 0;
};

struct ClientReport {
  std::size_t client = 0;
  int domain_id = 0;
  double initial_loss = 0;
  double final_loss = 0;
};

struct InDomainEval {
  int domain_id = 0;
  double base = 0, fused = 0;
  std::optional<double> fused_cr;
};

struct CrossDomainEval {
  int domain_a = 0, domain_b = 0;
  double base = 0, fused = 0;
  std::optional<double> fused_cr;
};

struct RunReport {
  Config config;  // echo, defaults applied
  std::uint64_t seed = 0;
  std::size_t params_before = 0, params_after = 0;
  double prune_ratio_requested = 0, prune_ratio_actual = 0;
  std::vector<ClientReport> clients;
  double pre_cr_mean_conflict = 0;
  std::vector<double> pre_cr_per_direction;
  std::optional<double> post_cr_mean_conflict;
  std::vector<double> post_cr_per_direction;  // empty unless CR enabled
  std::vector<InDomainEval> in_domain;
  std::vector<CrossDomainEval> cross_domain;
  StageTimings timings;
};

/// Everything the pipeline produced, for callers that persist artifacts.
struct PipelineResult {
  RunReport report;
  PruneMap map;
  std::vector<LoraAdapter> trained;          // pruned dims
  std::vector<LoraAdapter> recovered;        // full dims
  std::vector<DenseMatrix> deconflicted;     // empty unless CR enabled
  ConflictReport conflict_pre;               // detection, always present
  std::optional<ConflictReport> conflict_post;
  DenseMatrix fused;
  std::optional<DenseMatrix> fused_cr;
};

/// prune -> per-client init+train -> recover -> (deconflict) -> fuse ->
/// apply -> evaluate, fully deterministic for a given config + seed.
PipelineResult run_pipeline(const Config& cfg);

}  // namespace lorafuse
