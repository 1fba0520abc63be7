#include "lorafuse/lora.hpp"

#include <algorithm>
#include <cmath>

#include "lorafuse/error.hpp"

namespace lorafuse {

void validate_adapter(const LoraAdapter& adapter) {
  if (adapter.rank == 0) {
    throw ParamError("adapter '" + adapter.layer_name + "': rank must be >= 1");
  }
  if (adapter.B.cols() != adapter.rank || adapter.A.rows() != adapter.rank) {
    throw ShapeError("adapter '" + adapter.layer_name +
                     "': factor inner dims do not match rank " +
                     std::to_string(adapter.rank));
  }
  if (adapter.rank > std::min(adapter.B.rows(), adapter.A.cols())) {
    throw ParamError("adapter '" + adapter.layer_name + "': rank " +
                     std::to_string(adapter.rank) + " exceeds min dim " +
                     std::to_string(std::min(adapter.B.rows(), adapter.A.cols())));
  }
  if (!(adapter.alpha > 0.0)) {
    throw ParamError("adapter '" + adapter.layer_name + "': alpha must be > 0");
  }
}

LoraAdapter init_adapter(const std::string& layer_name, std::size_t d_out,
                         std::size_t d_in, std::size_t rank, double alpha,
                         std::uint64_t seed) {
  if (rank == 0 || rank > std::min(d_out, d_in)) {
    throw ParamError("init_adapter '" + layer_name + "': rank " +
                     std::to_string(rank) + " invalid for " +
                     std::to_string(d_out) + "x" + std::to_string(d_in));
  }
  Rng rng(seed);
  LoraAdapter adapter;
  adapter.layer_name = layer_name;
  adapter.B = DenseMatrix(d_out, rank);
  adapter.A = DenseMatrix::gaussian(rank, d_in, rng,
                                    1.0 / std::sqrt(static_cast<double>(d_in)));
  adapter.rank = rank;
  adapter.alpha = alpha;
  validate_adapter(adapter);
  return adapter;
}

DenseMatrix materialize(const LoraAdapter& adapter) {
  validate_adapter(adapter);
  return matmul(adapter.B, adapter.A).scaled(adapter.scale());
}

}  // namespace lorafuse
