#include "lorafuse/recover.hpp"

#include "lorafuse/error.hpp"

namespace lorafuse {

RecoveredAdapter recover(const LoraAdapter& adapter, const PruneMap& map,
                         std::size_t d_out, std::size_t d_in) {
  validate_adapter(adapter);
  const LayerPrune* lp = nullptr;
  for (const LayerPrune& l : map.layers) {
    if (l.layer_name == adapter.layer_name) {
      lp = &l;
      break;
    }
  }
  if (lp == nullptr) {
    throw RecoveryError("recover: prune map has no layer '" +
                        adapter.layer_name + "'");
  }
  if (adapter.B.rows() != lp->retained_rows.size() ||
      adapter.A.cols() != lp->retained_cols.size()) {
    throw RecoveryError(
        "recover: layer '" + adapter.layer_name + "' factors are " +
        std::to_string(adapter.B.rows()) + "x" + std::to_string(adapter.rank) +
        " / " + std::to_string(adapter.rank) + "x" +
        std::to_string(adapter.A.cols()) + " but the map retains " +
        std::to_string(lp->retained_rows.size()) + " rows and " +
        std::to_string(lp->retained_cols.size()) + " cols");
  }
  if (!lp->retained_rows.empty() && lp->retained_rows.back() >= d_out) {
    throw RecoveryError("recover: layer '" + adapter.layer_name +
                        "' row index " +
                        std::to_string(lp->retained_rows.back()) +
                        " out of bounds for d_out " + std::to_string(d_out));
  }
  if (!lp->retained_cols.empty() && lp->retained_cols.back() >= d_in) {
    throw RecoveryError("recover: layer '" + adapter.layer_name +
                        "' col index " +
                        std::to_string(lp->retained_cols.back()) +
                        " out of bounds for d_in " + std::to_string(d_in));
  }

  LoraAdapter full;
  full.layer_name = adapter.layer_name;
  full.rank = adapter.rank;
  full.alpha = adapter.alpha;
  full.B = DenseMatrix(d_out, adapter.rank);
  full.A = DenseMatrix(adapter.rank, d_in);
  for (std::size_t i = 0; i < lp->retained_rows.size(); ++i) {
    for (std::size_t r = 0; r < adapter.rank; ++r) {
      full.B(lp->retained_rows[i], r) = adapter.B(i, r);
    }
  }
  for (std::size_t j = 0; j < lp->retained_cols.size(); ++j) {
    for (std::size_t r = 0; r < adapter.rank; ++r) {
      full.A(r, lp->retained_cols[j]) = adapter.A(r, j);
    }
  }
  return RecoveredAdapter{std::move(full), map};
}

}  // namespace lorafuse
