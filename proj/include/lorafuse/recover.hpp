#pragma once

#include "lorafuse/lora.hpp"
#include "lorafuse/prune.hpp"

namespace lorafuse {

/// Adapter embedded back into full backbone dimensions: rows of B outside
/// the retained row set and columns of A outside the retained column set
/// are exactly zero.
struct RecoveredAdapter {
  LoraAdapter adapter;
  PruneMap provenance;
};

/// Zero-pad a pruned-space adapter into (d_out, d_in) using the retained
/// index sets of its layer. The selection matrices of the recovery rule are
/// realized as index scatters; rank and alpha carry over unchanged.
RecoveredAdapter recover(const LoraAdapter& adapter, const PruneMap& map,
                         std::size_t d_out, std::size_t d_in);

}  // namespace lorafuse
