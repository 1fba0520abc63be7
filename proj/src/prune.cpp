#include "lorafuse/prune.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "lorafuse/error.hpp"

namespace lorafuse {

Backbone::Backbone(Topology topo, std::vector<Layer> layers)
    : topo_(topo), layers_(std::move(layers)) {
  if (topo_ == Topology::kSingleLayer) {
    if (layers_.size() != 1) {
      throw ParamError("single-layer backbone needs exactly one layer, got " +
                       std::to_string(layers_.size()));
    }
  } else {
    if (layers_.size() != 2) {
      throw ParamError("two-layer chain needs exactly two layers, got " +
                       std::to_string(layers_.size()));
    }
    if (layers_[1].weight.cols() != layers_[0].weight.rows()) {
      throw ShapeError("chain inner dims incompatible: layer '" +
                       layers_[0].name + "' has " +
                       std::to_string(layers_[0].weight.rows()) +
                       " rows but layer '" + layers_[1].name + "' has " +
                       std::to_string(layers_[1].weight.cols()) + " cols");
    }
  }
  for (const Layer& l : layers_) {
    if (l.weight.empty()) {
      throw ParamError("backbone layer '" + l.name + "' is empty");
    }
  }
}

std::size_t Backbone::total_params() const {
  std::size_t s = 0;
  for (const Layer& l : layers_) s += l.weight.size();
  return s;
}

DenseMatrix Backbone::forward(const DenseMatrix& inputs) const {
  DenseMatrix out = matmul(layers_[0].weight, inputs);
  for (std::size_t i = 1; i < layers_.size(); ++i) {
    out = matmul(layers_[i].weight, out);
  }
  return out;
}

const LayerPrune& PruneMap::find(const std::string& layer_name) const {
  for (const LayerPrune& lp : layers) {
    if (lp.layer_name == layer_name) return lp;
  }
  throw MapError("prune map has no layer named '" + layer_name + "'");
}

namespace {

double row_abs_grad_weight(const DenseMatrix& grad, const DenseMatrix& w,
                           std::size_t row) {
  double s = 0.0;
  for (std::size_t j = 0; j < w.cols(); ++j) {
    s += std::abs(grad(row, j) * w(row, j));
  }
  return s;
}

double col_abs_grad_weight(const DenseMatrix& grad, const DenseMatrix& w,
                           std::size_t col) {
  double s = 0.0;
  for (std::size_t i = 0; i < w.rows(); ++i) {
    s += std::abs(grad(i, col) * w(i, col));
  }
  return s;
}

double row_norm(const DenseMatrix& w, std::size_t row) {
  return norm2(w.row(row));
}

double col_norm(const DenseMatrix& w, std::size_t col) {
  double s = 0.0;
  for (std::size_t i = 0; i < w.rows(); ++i) s += w(i, col) * w(i, col);
  return std::sqrt(s);
}

void check_calibration(const Backbone& backbone, const CalibrationBatch& c) {
  const std::size_t d_in = backbone.layer(0).weight.cols();
  const std::size_t d_out = backbone.layers().back().weight.rows();
  if (c.inputs.rows() != d_in || c.targets.rows() != d_out ||
      c.inputs.cols() != c.targets.cols() || c.inputs.cols() == 0) {
    throw ShapeError("calibration batch inconsistent with backbone: inputs " +
                     std::to_string(c.inputs.rows()) + "x" +
                     std::to_string(c.inputs.cols()) + ", targets " +
                     std::to_string(c.targets.rows()) + "x" +
                     std::to_string(c.targets.cols()));
  }
}

}  // namespace

double backbone_mse(const Backbone& backbone, const DenseMatrix& inputs,
                    const DenseMatrix& targets) {
  if (inputs.cols() == 0) throw AccountingError("mse over an empty batch");
  const DenseMatrix resid = sub(backbone.forward(inputs), targets);
  const double fro = resid.frobenius_norm();
  return fro * fro /
         (static_cast<double>(inputs.cols()) * static_cast<double>(resid.rows()));
}

std::vector<DenseMatrix> backbone_loss_gradients(const Backbone& backbone,
                                                 const CalibrationBatch& batch) {
  check_calibration(backbone, batch);
  const double smp = static_cast<double>(batch.inputs.cols());
  const double d_out = static_cast<double>(batch.targets.rows());
  const double c = 2.0 / (smp * d_out);

  if (backbone.topology() == Topology::kSingleLayer) {
    const DenseMatrix resid =
        sub(matmul(backbone.layer(0).weight, batch.inputs), batch.targets);
    return {matmul(resid, batch.inputs.transpose()).scaled(c)};
  }
  const DenseMatrix& w1 = backbone.layer(0).weight;
  const DenseMatrix& w2 = backbone.layer(1).weight;
  const DenseMatrix hidden = matmul(w1, batch.inputs);
  const DenseMatrix resid = sub(matmul(w2, hidden), batch.targets);
  DenseMatrix g1 =
      matmul(w2.transpose(), matmul(resid, batch.inputs.transpose())).scaled(c);
  DenseMatrix g2 = matmul(resid, hidden.transpose()).scaled(c);
  return {std::move(g1), std::move(g2)};
}

GroupImportance group_importance(const Backbone& backbone,
                                 const std::optional<CalibrationBatch>& calib,
                                 SurrogateLoss /*loss*/) {
  if (backbone.num_layers() == 0) throw ParamError("empty backbone");

  GroupImportance imp;
  imp.topology = backbone.topology();
  for (const Layer& l : backbone.layers()) {
    imp.layer_shapes.emplace_back(l.weight.rows(), l.weight.cols());
    imp.layer_names.push_back(l.name);
  }

  std::vector<DenseMatrix> grads;
  if (calib) grads = backbone_loss_gradients(backbone, *calib);

  if (backbone.topology() == Topology::kSingleLayer) {
    const DenseMatrix& w = backbone.layer(0).weight;
    imp.scores.assign(w.rows(), 0.0);
#pragma omp parallel for schedule(static)
    for (long long g = 0; g < static_cast<long long>(w.rows()); ++g) {
      const auto i = static_cast<std::size_t>(g);
      imp.scores[i] =
          calib ? row_abs_grad_weight(grads[0], w, i) : row_norm(w, i);
    }
    return imp;
  }

  const DenseMatrix& w1 = backbone.layer(0).weight;
  const DenseMatrix& w2 = backbone.layer(1).weight;
  imp.scores.assign(w1.rows(), 0.0);
#pragma omp parallel for schedule(static)
  for (long long g = 0; g < static_cast<long long>(w1.rows()); ++g) {
    const auto h = static_cast<std::size_t>(g);
    // Hidden-unit group spans a W1 row and a W2 column; the group score is
    // the product of the member scores.
    const double s1 =
        calib ? row_abs_grad_weight(grads[0], w1, h) : row_norm(w1, h);
    const double s2 =
        calib ? col_abs_grad_weight(grads[1], w2, h) : col_norm(w2, h);
    imp.scores[h] = s1 * s2;
  }
  return imp;
}

PruneMap select_groups(const GroupImportance& importance, double prune_ratio) {
  if (importance.scores.empty()) throw ParamError("empty importance scores");
  if (!(prune_ratio >= 0.0 && prune_ratio <= 1.0)) {
    throw ParamError("prune ratio " + std::to_string(prune_ratio) +
                     " outside [0,1]");
  }
  const std::size_t groups = importance.scores.size();
  // The 1e-9 slack absorbs fp representation of human ratios like 2/3
  // before ceil; at least one group is always retained.
  double want = std::ceil((1.0 - prune_ratio) * static_cast<double>(groups) -
                          1e-9);
  auto keep = static_cast<std::size_t>(std::max(1.0, want));
  keep = std::min(keep, groups);

  std::vector<std::size_t> order(groups);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return importance.scores[a] > importance.scores[b];
  });
  std::vector<std::size_t> retained(order.begin(), order.begin() + keep);
  std::sort(retained.begin(), retained.end());

  PruneMap map;
  map.params_before = 0;
  for (const auto& [r, c] : importance.layer_shapes) map.params_before += r * c;

  auto full = [](std::size_t n) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    return idx;
  };

  if (importance.topology == Topology::kSingleLayer) {
    const auto [rows, cols] = importance.layer_shapes[0];
    (void)rows;
    map.layers.push_back(
        {importance.layer_names[0], retained, full(cols)});
  } else {
    const auto [r1, c1] = importance.layer_shapes[0];
    const auto [r2, c2] = importance.layer_shapes[1];
    (void)r1;
    (void)c2;
    map.layers.push_back({importance.layer_names[0], retained, full(c1)});
    map.layers.push_back({importance.layer_names[1], full(r2), retained});
  }
  map.params_after = 0;
  for (const LayerPrune& lp : map.layers) {
    map.params_after += lp.retained_rows.size() * lp.retained_cols.size();
  }
  return map;
}

namespace {

void check_indices(const std::vector<std::size_t>& idx, std::size_t bound,
                   const std::string& what, const std::string& layer) {
  if (idx.empty()) {
    throw MapError("layer '" + layer + "': empty " + what + " index set");
  }
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] >= bound) {
      throw MapError("layer '" + layer + "': " + what + " index " +
                     std::to_string(idx[i]) + " out of bounds " +
                     std::to_string(bound));
    }
    if (i > 0 && idx[i] <= idx[i - 1]) {
      throw MapError("layer '" + layer + "': " + what +
                     " indices not strictly increasing");
    }
  }
}

}  // namespace

Backbone apply_prune(const Backbone& backbone, const PruneMap& map) {
  if (map.layers.size() != backbone.num_layers()) {
    throw MapError("prune map covers " + std::to_string(map.layers.size()) +
                   " layers, backbone has " +
                   std::to_string(backbone.num_layers()));
  }
  std::size_t total_after = 0;
  std::vector<Layer> pruned;
  for (std::size_t i = 0; i < backbone.num_layers(); ++i) {
    const Layer& l = backbone.layer(i);
    const LayerPrune& lp = map.layers[i];
    if (lp.layer_name != l.name) {
      throw MapError("prune map layer '" + lp.layer_name +
                     "' does not match backbone layer '" + l.name + "'");
    }
    check_indices(lp.retained_rows, l.weight.rows(), "row", l.name);
    check_indices(lp.retained_cols, l.weight.cols(), "col", l.name);
    pruned.push_back(
        {l.name, l.weight.submatrix(lp.retained_rows, lp.retained_cols)});
    total_after += lp.retained_rows.size() * lp.retained_cols.size();
  }
  if (backbone.topology() == Topology::kTwoLayerChain &&
      map.layers[0].retained_rows != map.layers[1].retained_cols) {
    throw MapError("chain coupling broken: layer-1 retained rows differ from "
                   "layer-2 retained cols");
  }
  if (total_after != map.params_after) {
    throw MapError("prune map accounting mismatch: counted " +
                   std::to_string(total_after) + ", recorded " +
                   std::to_string(map.params_after));
  }
  return Backbone(backbone.topology(), std::move(pruned));
}

double pruning_ratio(std::size_t s_before, std::size_t s_after) {
  if (s_before == 0) throw AccountingError("pruning_ratio: S must be > 0");
  if (s_after > s_before) {
    throw AccountingError("pruning_ratio: pruned size " +
                          std::to_string(s_after) + " exceeds original " +
                          std::to_string(s_before));
  }
  return static_cast<double>(s_before - s_after) / static_cast<double>(s_before);
}

}  // namespace lorafuse
