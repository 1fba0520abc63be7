#pragma once

#include <cstdint>
#include <string>

#include "lorafuse/matrix.hpp"

namespace lorafuse {

/// Low-rank adapter: the effective update is (alpha / rank) * B * A.
/// B is d_out x rank, A is rank x d_in; dimensions may be the pruned ones.
struct LoraAdapter {
  std::string layer_name;
  DenseMatrix B;
  DenseMatrix A;
  std::size_t rank = 0;
  double alpha = 1.0;

  std::size_t d_out() const { return B.rows(); }
  std::size_t d_in() const { return A.cols(); }
  double scale() const { return alpha / static_cast<double>(rank); }
};

/// Validates the factor shapes, rank bounds and alpha > 0.
void validate_adapter(const LoraAdapter& adapter);

/// Fresh adapter: B = 0, A ~ Gaussian(0, 1/d_in), reproducible per seed.
LoraAdapter init_adapter(const std::string& layer_name, std::size_t d_out,
                         std::size_t d_in, std::size_t rank, double alpha,
                         std::uint64_t seed);

/// Effective update (alpha / rank) * B * A as a dense d_out x d_in matrix.
DenseMatrix materialize(const LoraAdapter& adapter);

}  // namespace lorafuse
