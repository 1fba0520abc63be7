#pragma once

#include <optional>
#include <string>
#include <vector>

#include "lorafuse/matrix.hpp"

namespace lorafuse {

/// Weight stack under pruning: a single matrix, or a two-layer chain
/// y = W2 * (W1 * x) whose hidden units couple W1 rows with W2 columns.
enum class Topology { kSingleLayer, kTwoLayerChain };

struct Layer {
  std::string name;
  DenseMatrix weight;
};

class Backbone {
 public:
  Backbone(Topology topo, std::vector<Layer> layers);

  Topology topology() const { return topo_; }
  const std::vector<Layer>& layers() const { return layers_; }
  const Layer& layer(std::size_t i) const { return layers_[i]; }
  std::size_t num_layers() const { return layers_.size(); }
  std::size_t total_params() const;

  /// Forward map (W for single layer, W2*W1*x for the chain), applied to
  /// a d_in x S batch of column vectors.
  DenseMatrix forward(const DenseMatrix& inputs) const;

 private:
  Topology topo_;
  std::vector<Layer> layers_;
};

/// Retained index sets per layer plus parameter accounting.
struct LayerPrune {
  std::string layer_name;
  std::vector<std::size_t> retained_rows;  // sorted, unique, nonempty
  std::vector<std::size_t> retained_cols;
};

struct PruneMap {
  std::vector<LayerPrune> layers;
  std::size_t params_before = 0;
  std::size_t params_after = 0;

  const LayerPrune& find(const std::string& layer_name) const;
};

/// Per-group importance scores. Groups are output rows for a single layer
/// and hidden units for the two-layer chain; shape context is carried so
/// selection can materialize a PruneMap on its own.
struct GroupImportance {
  std::vector<double> scores;
  Topology topology = Topology::kSingleLayer;
  std::vector<std::pair<std::size_t, std::size_t>> layer_shapes;
  std::vector<std::string> layer_names;
};

enum class SurrogateLoss { kSquaredError };

struct CalibrationBatch {
  DenseMatrix inputs;   // d_in x S
  DenseMatrix targets;  // d_out x S
};

/// First-order importance |grad * weight| summed per group under the
/// surrogate loss on the calibration batch; group L2 norms when no
/// calibration is given. Chain groups multiply the two member scores.
GroupImportance group_importance(const Backbone& backbone,
                                 const std::optional<CalibrationBatch>& calib,
                                 SurrogateLoss loss);

/// Retains the top ceil((1 - prune_ratio) * G) groups by score, ties broken
/// toward the lower index; never retains fewer than one group.
PruneMap select_groups(const GroupImportance& importance, double prune_ratio);

/// Slices every layer to its retained index grid.
Backbone apply_prune(const Backbone& backbone, const PruneMap& map);

/// Overall pruning ratio (S - S_pruned) / S.
double pruning_ratio(std::size_t s_before, std::size_t s_after);

/// Analytic MSE-loss gradients of the backbone weights on a batch,
/// one matrix per layer. Exposed for the importance path and its
/// finite-difference oracle tests.
std::vector<DenseMatrix> backbone_loss_gradients(const Backbone& backbone,
                                                 const CalibrationBatch& batch);

/// Mean squared error of backbone predictions against targets:
/// mean over samples of squared residual norm / output dimension.
double backbone_mse(const Backbone& backbone, const DenseMatrix& inputs,
                    const DenseMatrix& targets);

}  // namespace lorafuse
