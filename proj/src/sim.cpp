#include "lorafuse/sim.hpp"

#include <chrono>
#include <cmath>
#include <numeric>

#include "lorafuse/error.hpp"
#include "lorafuse/fusion.hpp"
#include "lorafuse/rng.hpp"
#include "lorafuse/svd.hpp"

namespace lorafuse {

namespace {

double now_s() {
  using clock = std::chrono::steady_clock;
  return std::chrono::duration<double>(clock::now().time_since_epoch()).count();
}

// Modified Gram-Schmidt over the columns of a Gaussian draw; deterministic
// for a given rng state.
DenseMatrix orthonormal_columns(std::size_t rows, std::size_t cols, Rng& rng) {
  DenseMatrix q = DenseMatrix::gaussian(rows, cols, rng);
  for (std::size_t j = 0; j < cols; ++j) {
    for (std::size_t p = 0; p < j; ++p) {
      double proj = 0.0;
      for (std::size_t i = 0; i < rows; ++i) proj += q(i, p) * q(i, j);
      for (std::size_t i = 0; i < rows; ++i) q(i, j) -= proj * q(i, p);
    }
    double norm = 0.0;
    for (std::size_t i = 0; i < rows; ++i) norm += q(i, j) * q(i, j);
    norm = std::sqrt(norm);
    if (norm < 1e-10) {
      throw DataError("orthonormal basis construction degenerated");
    }
    for (std::size_t i = 0; i < rows; ++i) q(i, j) /= norm;
  }
  return q;
}

Batch draw_batch(const DenseMatrix& effective_w, std::size_t samples,
                 double noise_sigma, Rng& rng) {
  DenseMatrix inputs =
      DenseMatrix::gaussian(effective_w.cols(), samples, rng);
  DenseMatrix targets = matmul(effective_w, inputs);
  if (noise_sigma > 0.0) {
    DenseMatrix noise =
        DenseMatrix::gaussian(targets.rows(), targets.cols(), rng, noise_sigma);
    targets = add(targets, noise);
  }
  return Batch{std::move(inputs), std::move(targets)};
}

}  // namespace

Generated gen_domains(const Config& cfg, std::uint64_t seed) {
  validate_config(cfg);
  const std::size_t d_out = cfg.domains.d_out;
  const std::size_t d_in = cfg.domains.d_in;
  const std::size_t t_rank = cfg.domains.teacher_rank;
  const std::size_t n = cfg.num_clients;

  Rng backbone_rng(mix_seed(seed, seed_stream::kBackbone));
  DenseMatrix w0 = DenseMatrix::gaussian(
      d_out, d_in, backbone_rng, 1.0 / std::sqrt(static_cast<double>(d_in)));
  Backbone backbone(Topology::kSingleLayer, {{kLayerName, w0}});

  // Teacher left factors: sqrt(overlap) of a shared orthonormal block plus
  // sqrt(1 - overlap) of a per-domain block; all blocks mutually orthogonal,
  // so pairwise column inner products are exactly `overlap`.
  Rng teacher_rng(mix_seed(seed, seed_stream::kTeachers));
  DenseMatrix blocks = orthonormal_columns(d_out, (n + 1) * t_rank, teacher_rng);
  const double w_shared = std::sqrt(cfg.domains.overlap);
  const double w_private = std::sqrt(1.0 - cfg.domains.overlap);

  Generated gen{std::move(backbone), {}, {}};
  std::vector<DenseMatrix> adapted;  // W0 + dT_i per domain
  for (std::size_t i = 0; i < n; ++i) {
    DenseMatrix left(d_out, t_rank);
    for (std::size_t r = 0; r < d_out; ++r) {
      for (std::size_t c = 0; c < t_rank; ++c) {
        left(r, c) = w_shared * blocks(r, c) +
                     w_private * blocks(r, (i + 1) * t_rank + c);
      }
    }
    DenseMatrix right = DenseMatrix::gaussian(
        t_rank, d_in, teacher_rng, 1.0 / std::sqrt(static_cast<double>(d_in)));
    // Unit-ish singular values: scale rows of `right` to unit norm so the
    // teacher rank is exactly t_rank with comparable direction energies.
    for (std::size_t r = 0; r < t_rank; ++r) {
      const double rn = norm2(right.row(r));
      if (rn < 1e-12) throw DataError("degenerate teacher right factor");
      for (std::size_t c = 0; c < d_in; ++c) right(r, c) /= rn;
    }
    DenseMatrix delta = matmul(left, right);

    SyntheticDomain dom;
    dom.domain_id = static_cast<int>(i);
    dom.delta_teacher = delta;
    DenseMatrix effective = add(gen.backbone.layer(0).weight, delta);
    Rng data_rng(mix_seed(seed, seed_stream::kDomainData + i));
    dom.train = draw_batch(effective, cfg.domains.train_samples,
                           cfg.domains.noise_sigma, data_rng);
    dom.test = draw_batch(effective, cfg.domains.test_samples,
                          cfg.domains.noise_sigma, data_rng);
    adapted.push_back(std::move(effective));
    gen.domains.push_back(std::move(dom));
  }

  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = a + 1; b < n; ++b) {
      DenseMatrix joint = add(adapted[a], gen.domains[b].delta_teacher);
      Rng task_rng(mix_seed(seed, seed_stream::kCrossTasks + a * n + b));
      CrossDomainTask task;
      task.domain_a = static_cast<int>(a);
      task.domain_b = static_cast<int>(b);
      task.test = draw_batch(joint, cfg.domains.test_samples, 0.0, task_rng);

      // A task must not be solvable by either single-domain model alone.
      for (std::size_t side : {a, b}) {
        Backbone single(Topology::kSingleLayer, {{kLayerName, adapted[side]}});
        const double residual = evaluate(single, task.test);
        if (residual < cfg.eval.hardness_floor) {
          throw ConfigError(
              "cross-domain task (" + std::to_string(a) + "," +
              std::to_string(b) + ") is solvable by domain " +
              std::to_string(side) + " alone (residual " +
              std::to_string(residual) + " < hardness floor " +
              std::to_string(cfg.eval.hardness_floor) + ")");
        }
      }
      gen.tasks.push_back(std::move(task));
    }
  }
  return gen;
}

std::optional<CalibrationBatch> make_calibration(const Config& cfg,
                                                 const Generated& gen) {
  if (cfg.prune.calibration_size == 0) return std::nullopt;
  Rng rng(mix_seed(cfg.seed, seed_stream::kCalibration));
  const std::size_t d_in = cfg.domains.d_in;
  const std::size_t count = cfg.prune.calibration_size;
  DenseMatrix inputs = DenseMatrix::gaussian(d_in, count, rng);
  DenseMatrix targets(cfg.domains.d_out, count);
  const DenseMatrix& w0 = gen.backbone.layer(0).weight;
  for (std::size_t s = 0; s < count; ++s) {
    const SyntheticDomain& dom = gen.domains[s % gen.domains.size()];
    for (std::size_t i = 0; i < targets.rows(); ++i) {
      double acc = 0.0;
      for (std::size_t j = 0; j < d_in; ++j) {
        acc += (w0(i, j) + dom.delta_teacher(i, j)) * inputs(j, s);
      }
      targets(i, s) = acc;
    }
  }
  return CalibrationBatch{std::move(inputs), std::move(targets)};
}

PruneMap compute_prune_map(const Config& cfg, const Generated& gen) {
  const auto calib = make_calibration(cfg, gen);
  GroupImportance imp =
      group_importance(gen.backbone, calib, SurrogateLoss::kSquaredError);
  return select_groups(imp, cfg.prune.ratio);
}

Batch restrict_batch(const Batch& batch, const LayerPrune& lp) {
  return Batch{batch.inputs.take_rows(lp.retained_cols),
               batch.targets.take_rows(lp.retained_rows)};
}

SyntheticDomain restrict_domain(const SyntheticDomain& domain,
                                const LayerPrune& lp) {
  SyntheticDomain out;
  out.domain_id = domain.domain_id;
  out.delta_teacher =
      domain.delta_teacher.submatrix(lp.retained_rows, lp.retained_cols);
  out.train = restrict_batch(domain.train, lp);
  out.test = restrict_batch(domain.test, lp);
  return out;
}

TrainResult local_train(const Backbone& pruned, const LoraAdapter& adapter,
                        const SyntheticDomain& domain, const TrainConfig& cfg) {
  if (pruned.num_layers() != 1) {
    throw ParamError("local_train expects a single-layer backbone");
  }
  validate_adapter(adapter);
  const DenseMatrix& w = pruned.layer(0).weight;
  const Batch& batch = domain.train;
  if (adapter.d_out() != w.rows() || adapter.d_in() != w.cols() ||
      batch.inputs.rows() != w.cols() || batch.targets.rows() != w.rows() ||
      batch.inputs.cols() != batch.targets.cols()) {
    throw ShapeError("local_train: adapter/batch shapes inconsistent with "
                     "pruned backbone " +
                     std::to_string(w.rows()) + "x" + std::to_string(w.cols()));
  }
  if (batch.samples() == 0) throw ParamError("local_train: empty batch");

  const double scale = adapter.scale();
  const double grad_c = 2.0 * scale /
                        (static_cast<double>(batch.samples()) *
                         static_cast<double>(w.rows()));
  const DenseMatrix wx = matmul(w, batch.inputs);  // frozen part, hoisted
  const DenseMatrix xt = batch.inputs.transpose();

  TrainResult result{adapter, {}};
  result.loss_trace.reserve(cfg.steps + 1);

  for (std::size_t step = 0; step <= cfg.steps; ++step) {
    try {
      const DenseMatrix delta =
          matmul(result.adapter.B, result.adapter.A).scaled(scale);
      const DenseMatrix resid =
          sub(add(wx, matmul(delta, batch.inputs)), batch.targets);
      const double fro = resid.frobenius_norm();
      const double loss = fro * fro /
                          (static_cast<double>(batch.samples()) *
                           static_cast<double>(w.rows()));
      if (!std::isfinite(loss) || loss > 1e12) {
        throw TrainingError("local training diverged, loss " +
                            std::to_string(loss), step);
      }
      result.loss_trace.push_back(loss);
      if (step == cfg.steps) break;

      const DenseMatrix rxt = matmul(resid, xt);
      const DenseMatrix grad_b =
          matmul(rxt, result.adapter.A.transpose()).scaled(grad_c);
      const DenseMatrix grad_a =
          matmul(result.adapter.B.transpose(), rxt).scaled(grad_c);
      result.adapter.B =
          sub(result.adapter.B, grad_b.scaled(cfg.learning_rate));
      if (!cfg.freeze_a) {
        result.adapter.A =
            sub(result.adapter.A, grad_a.scaled(cfg.learning_rate));
      }
    } catch (const DataError&) {
      throw TrainingError("local training produced non-finite values", step);
    }
  }
  return result;
}

double evaluate(const Backbone& backbone, const Batch& batch) {
  return backbone_mse(backbone, batch.inputs, batch.targets);
}

DenseMatrix fuse_recovered(const Config& cfg,
                           const std::vector<LoraAdapter>& recovered) {
  if (recovered.empty()) throw ParamError("fuse_recovered: no adapters");
  const FusionMethod method = fusion_method_from_string(cfg.fusion.method);
  const double scale = recovered[0].scale();

  std::vector<DenseMatrix> a_factors, b_factors;
  for (const LoraAdapter& ad : recovered) {
    a_factors.push_back(ad.A);
    b_factors.push_back(ad.B);
  }

  switch (method) {
    case FusionMethod::kFedAvg: {
      if (cfg.fusion.factor_avg) {
        return factor_avg_fuse(b_factors, a_factors, scale);
      }
      std::vector<DenseMatrix> updates;
      for (const LoraAdapter& ad : recovered) updates.push_back(materialize(ad));
      return fedavg(updates);
    }
    case FusionMethod::kFfa: {
      std::vector<std::string> labels;
      for (std::size_t i = 0; i < recovered.size(); ++i) {
        labels.push_back("client " + std::to_string(i));
      }
      check_identical_frozen_a(a_factors, labels);
      return ffa_fuse(b_factors, a_factors[0], scale);
    }
    case FusionMethod::kFedSa:
      return fedsa_fuse(a_factors, b_factors, scale);
  }
  throw ParamError("unreachable fusion method");
}

namespace {

// Least-squares refit of B so that scale * B * a_frozen reproduces the
// update; exact when the update's rows lie in the row span of a_frozen,
// which holds for de-conflicted ffa updates.
DenseMatrix refit_b_onto_frozen_a(const DenseMatrix& update,
                                  const DenseMatrix& a_frozen, double scale) {
  SvdResult svd = svd_thin(a_frozen, 1e-12);
  const double cut = svd.singular_values.empty()
                         ? 0.0
                         : svd.singular_values[0] * 1e-12;
  // pinv(A) = V * diag(1/sigma) * U^T
  DenseMatrix v_scaled(svd.V.rows(), svd.V.cols());
  for (std::size_t j = 0; j < svd.V.cols(); ++j) {
    const double inv =
        svd.singular_values[j] > cut ? 1.0 / svd.singular_values[j] : 0.0;
    for (std::size_t i = 0; i < svd.V.rows(); ++i) {
      v_scaled(i, j) = svd.V(i, j) * inv;
    }
  }
  const DenseMatrix pinv = matmul(v_scaled, svd.U.transpose());
  return matmul(update, pinv).scaled(1.0 / scale);
}

}  // namespace

DenseMatrix fuse_deconflicted(const Config& cfg,
                              const std::vector<DenseMatrix>& cr_updates,
                              const DenseMatrix* frozen_a_recovered) {
  if (cr_updates.empty()) throw ParamError("fuse_deconflicted: no updates");
  const FusionMethod method = fusion_method_from_string(cfg.fusion.method);
  const double scale =
      cfg.lora.alpha / static_cast<double>(cfg.lora.rank);

  switch (method) {
    case FusionMethod::kFedAvg: {
      if (!cfg.fusion.factor_avg) return fedavg(cr_updates);
      std::vector<DenseMatrix> a_factors, b_factors;
      for (const DenseMatrix& u : cr_updates) {
        LoraAdapter ad = refactor_update(u, kLayerName, cfg.cr.max_dirs);
        b_factors.push_back(std::move(ad.B));
        a_factors.push_back(std::move(ad.A));
      }
      return factor_avg_fuse(b_factors, a_factors, 1.0);
    }
    case FusionMethod::kFfa: {
      if (frozen_a_recovered == nullptr) {
        throw ProtocolError("ffa fusion after CR requires the frozen A");
      }
      std::vector<DenseMatrix> b_factors;
      for (const DenseMatrix& u : cr_updates) {
        b_factors.push_back(refit_b_onto_frozen_a(u, *frozen_a_recovered, scale));
      }
      return ffa_fuse(b_factors, *frozen_a_recovered, scale);
    }
    case FusionMethod::kFedSa: {
      std::vector<DenseMatrix> a_factors, b_factors;
      for (const DenseMatrix& u : cr_updates) {
        LoraAdapter ad = refactor_update(u, kLayerName, cfg.cr.max_dirs);
        b_factors.push_back(std::move(ad.B));
        a_factors.push_back(std::move(ad.A));
      }
      return fedsa_fuse(a_factors, b_factors, 1.0);
    }
  }
  throw ParamError("unreachable fusion method");
}

PipelineResult run_pipeline(const Config& cfg) {
  validate_config(cfg);
  PipelineResult out;
  RunReport& report = out.report;
  report.config = cfg;
  report.seed = cfg.seed;

  const double t_start = now_s();
  double t0 = t_start;

  const Generated gen = gen_domains(cfg, cfg.seed);
  report.timings.generate_s = now_s() - t0;

  t0 = now_s();
  out.map = compute_prune_map(cfg, gen);
  const Backbone pruned = apply_prune(gen.backbone, out.map);
  report.params_before = out.map.params_before;
  report.params_after = out.map.params_after;
  report.prune_ratio_requested = cfg.prune.ratio;
  report.prune_ratio_actual =
      pruning_ratio(out.map.params_before, out.map.params_after);
  report.timings.prune_s = now_s() - t0;

  const LayerPrune& lp = out.map.layers[0];
  const std::size_t m_pruned = lp.retained_rows.size();
  const std::size_t n_pruned = lp.retained_cols.size();

  t0 = now_s();
  TrainConfig tcfg;
  tcfg.learning_rate = cfg.train.lr;
  tcfg.steps = cfg.train.steps;
  tcfg.rank = cfg.lora.rank;
  tcfg.alpha = cfg.lora.alpha;
  tcfg.seed = mix_seed(cfg.seed, seed_stream::kAdapterInit);  // shared init
  tcfg.freeze_a = cfg.fusion.method == "ffa";

  for (std::size_t i = 0; i < cfg.num_clients; ++i) {
    const SyntheticDomain local = restrict_domain(gen.domains[i], lp);
    LoraAdapter init = init_adapter(kLayerName, m_pruned, n_pruned,
                                    tcfg.rank, tcfg.alpha, tcfg.seed);
    TrainResult tr = local_train(pruned, init, local, tcfg);
    report.clients.push_back({i, local.domain_id, tr.loss_trace.front(),
                              tr.loss_trace.back()});
    out.trained.push_back(std::move(tr.adapter));
  }
  report.timings.train_s = now_s() - t0;

  t0 = now_s();
  std::vector<DenseMatrix> updates;
  for (const LoraAdapter& ad : out.trained) {
    RecoveredAdapter rec =
        recover(ad, out.map, cfg.domains.d_out, cfg.domains.d_in);
    updates.push_back(materialize(rec.adapter));
    out.recovered.push_back(std::move(rec.adapter));
  }
  report.timings.recover_s = now_s() - t0;

  // Conflict detection runs regardless of resolution so every report
  // carries the pre-CR score.
  t0 = now_s();
  DeconflictedAdapterSet pre =
      deconflict(updates, cfg.cr.max_dirs, cfg.cr.tol);
  out.conflict_pre = pre.report;
  report.pre_cr_mean_conflict = pre.report.mean_conflict;
  report.pre_cr_per_direction = pre.report.conflict;
  if (cfg.cr.enabled) {
    out.deconflicted = pre.updates;
    DeconflictedAdapterSet post =
        deconflict(out.deconflicted, cfg.cr.max_dirs, cfg.cr.tol);
    out.conflict_post = post.report;
    report.post_cr_mean_conflict = post.report.mean_conflict;
    report.post_cr_per_direction = post.report.conflict;
    report.timings.cr_s = now_s() - t0;
  }

  t0 = now_s();
  out.fused = fuse_recovered(cfg, out.recovered);
  if (cfg.cr.enabled) {
    const DenseMatrix* frozen_a =
        cfg.fusion.method == "ffa" ? &out.recovered[0].A : nullptr;
    out.fused_cr = fuse_deconflicted(cfg, out.deconflicted, frozen_a);
  }
  report.timings.fuse_s = now_s() - t0;

  t0 = now_s();
  const Backbone fused_model = apply_fusion(gen.backbone, {{out.fused}});
  std::optional<Backbone> fused_cr_model;
  if (out.fused_cr) {
    fused_cr_model = apply_fusion(gen.backbone, {{*out.fused_cr}});
  }
  for (const SyntheticDomain& dom : gen.domains) {
    InDomainEval e;
    e.domain_id = dom.domain_id;
    e.base = evaluate(gen.backbone, dom.test);
    e.fused = evaluate(fused_model, dom.test);
    if (fused_cr_model) e.fused_cr = evaluate(*fused_cr_model, dom.test);
    report.in_domain.push_back(e);
  }
  for (const CrossDomainTask& task : gen.tasks) {
    CrossDomainEval e;
    e.domain_a = task.domain_a;
    e.domain_b = task.domain_b;
    e.base = evaluate(gen.backbone, task.test);
    e.fused = evaluate(fused_model, task.test);
    if (fused_cr_model) e.fused_cr = evaluate(*fused_cr_model, task.test);
    report.cross_domain.push_back(e);
  }
  report.timings.evaluate_s = now_s() - t0;
  report.timings.total_s = now_s() - t_start;
  return out;
}

}  // namespace lorafuse
