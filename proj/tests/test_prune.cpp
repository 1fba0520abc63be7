#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "lorafuse/error.hpp"
#include "lorafuse/prune.hpp"
#include "lorafuse/rng.hpp"

using namespace lorafuse;

namespace {

Backbone single(const DenseMatrix& w) {
  return Backbone(Topology::kSingleLayer, {{"w", w}});
}

// Central finite-difference gradient of the batch MSE w.r.t. one weight.
double fd_gradient(Backbone backbone, std::size_t layer, std::size_t i,
                   std::size_t j, const CalibrationBatch& batch, double h) {
  std::vector<Layer> layers = backbone.layers();
  DenseMatrix wp = layers[layer].weight;
  wp(i, j) += h;
  std::vector<Layer> lp = layers;
  lp[layer].weight = wp;
  const double up = backbone_mse(Backbone(backbone.topology(), lp),
                                 batch.inputs, batch.targets);
  DenseMatrix wm = layers[layer].weight;
  wm(i, j) -= h;
  std::vector<Layer> lm = layers;
  lm[layer].weight = wm;
  const double down = backbone_mse(Backbone(backbone.topology(), lm),
                                   batch.inputs, batch.targets);
  return (up - down) / (2.0 * h);
}

}  // namespace

TEST_CASE("magnitude fallback scores") {
  SUBCASE("all-zero weights give zero scores") {
    const GroupImportance imp =
        group_importance(single(DenseMatrix(3, 4)), std::nullopt,
                         SurrogateLoss::kSquaredError);
    for (double s : imp.scores) CHECK(s == 0.0);
  }
  SUBCASE("row norms") {
    const DenseMatrix w(2, 2, {1, 0, 0, -3});
    const GroupImportance imp =
        group_importance(single(w), std::nullopt, SurrogateLoss::kSquaredError);
    REQUIRE(imp.scores.size() == 2);
    CHECK(imp.scores[0] == doctest::Approx(1.0));
    CHECK(imp.scores[1] == doctest::Approx(3.0));
  }
}

TEST_CASE("calibrated scores match the finite-difference oracle") {
  Rng rng(31);
  for (int it = 0; it < 20; ++it) {
    const std::size_t m = 2 + rng.next_u64() % 4;
    const std::size_t n = 2 + rng.next_u64() % 4;
    const Backbone bb = single(DenseMatrix::gaussian(m, n, rng));
    CalibrationBatch batch{DenseMatrix::gaussian(n, 3, rng),
                           DenseMatrix::gaussian(m, 3, rng)};
    const GroupImportance imp =
        group_importance(bb, batch, SurrogateLoss::kSquaredError);
    for (std::size_t i = 0; i < m; ++i) {
      double oracle = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        const double g = fd_gradient(bb, 0, i, j, batch, 1e-5);
        oracle += std::abs(g * bb.layer(0).weight(i, j));
      }
      CHECK(imp.scores[i] == doctest::Approx(oracle).epsilon(1e-6));
    }
  }
}

TEST_CASE("two-layer chain: product of member scores, fd-checked") {
  Rng rng(77);
  const std::size_t d_in = 3, hidden = 4, d_out = 2;
  const Backbone bb(Topology::kTwoLayerChain,
                    {{"w1", DenseMatrix::gaussian(hidden, d_in, rng)},
                     {"w2", DenseMatrix::gaussian(d_out, hidden, rng)}});
  CalibrationBatch batch{DenseMatrix::gaussian(d_in, 5, rng),
                         DenseMatrix::gaussian(d_out, 5, rng)};
  const GroupImportance imp =
      group_importance(bb, batch, SurrogateLoss::kSquaredError);
  REQUIRE(imp.scores.size() == hidden);
  for (std::size_t h = 0; h < hidden; ++h) {
    double s1 = 0.0, s2 = 0.0;
    for (std::size_t j = 0; j < d_in; ++j) {
      s1 += std::abs(fd_gradient(bb, 0, h, j, batch, 1e-5) *
                     bb.layer(0).weight(h, j));
    }
    for (std::size_t i = 0; i < d_out; ++i) {
      s2 += std::abs(fd_gradient(bb, 1, i, h, batch, 1e-5) *
                     bb.layer(1).weight(i, h));
    }
    CHECK(imp.scores[h] == doctest::Approx(s1 * s2).epsilon(1e-5));
  }
}

TEST_CASE("select_groups quantile retention and tie rule") {
  GroupImportance imp;
  imp.topology = Topology::kSingleLayer;
  imp.layer_shapes = {{4, 5}};
  imp.layer_names = {"w"};

  SUBCASE("ratio 0 retains everything") {
    imp.scores = {3, 1, 2, 4};
    const PruneMap map = select_groups(imp, 0.0);
    CHECK(map.layers[0].retained_rows == std::vector<std::size_t>{0, 1, 2, 3});
    CHECK(map.params_after == map.params_before);
  }
  SUBCASE("top-2 by score") {
    imp.scores = {3, 1, 2, 4};
    const PruneMap map = select_groups(imp, 0.5);
    CHECK(map.layers[0].retained_rows == std::vector<std::size_t>{0, 3});
  }
  SUBCASE("stable tie-break toward the lower index") {
    imp.layer_shapes = {{3, 5}};
    imp.scores = {1, 1, 2};
    CHECK(select_groups(imp, 2.0 / 3.0).layers[0].retained_rows ==
          std::vector<std::size_t>{2});
    CHECK(select_groups(imp, 1.0 / 3.0).layers[0].retained_rows ==
          std::vector<std::size_t>{0, 2});
  }
  SUBCASE("ratio 1 keeps one group") {
    imp.scores = {3, 1, 2, 4};
    const PruneMap map = select_groups(imp, 1.0);
    CHECK(map.layers[0].retained_rows == std::vector<std::size_t>{3});
  }
  SUBCASE("ratio outside range rejected") {
    imp.scores = {1};
    CHECK_THROWS_AS(select_groups(imp, 1.5), ParamError);
    CHECK_THROWS_AS(select_groups(imp, -0.1), ParamError);
  }
}

TEST_CASE("select_groups against a stable-sort oracle on random scores") {
  Rng rng(13);
  for (int it = 0; it < 200; ++it) {
    const std::size_t g = 1 + rng.next_u64() % 12;
    GroupImportance imp;
    imp.topology = Topology::kSingleLayer;
    imp.layer_shapes = {{g, 3}};
    imp.layer_names = {"w"};
    for (std::size_t i = 0; i < g; ++i) {
      // Coarse grid of scores to force ties.
      imp.scores.push_back(static_cast<double>(rng.next_u64() % 4));
    }
    const double ratio = rng.uniform();
    const PruneMap map = select_groups(imp, ratio);

    const std::size_t keep = map.layers[0].retained_rows.size();
    CHECK(keep >= 1);
    CHECK(keep <= g);
    // Oracle: every retained group beats every dropped one under
    // (score desc, index asc) ordering.
    std::vector<bool> retained(g, false);
    for (std::size_t idx : map.layers[0].retained_rows) retained[idx] = true;
    for (std::size_t a = 0; a < g; ++a) {
      for (std::size_t b = 0; b < g; ++b) {
        if (!retained[a] || retained[b]) continue;
        const bool a_wins = imp.scores[a] > imp.scores[b] ||
                            (imp.scores[a] == imp.scores[b] && a < b);
        CHECK(a_wins);
      }
    }
  }
}

TEST_CASE("select_groups idempotent at ratio 0 over the retained set") {
  GroupImportance imp;
  imp.topology = Topology::kSingleLayer;
  imp.layer_shapes = {{6, 2}};
  imp.layer_names = {"w"};
  imp.scores = {5, 1, 4, 2, 3, 0};
  const PruneMap first = select_groups(imp, 0.5);

  GroupImportance restricted;
  restricted.topology = Topology::kSingleLayer;
  restricted.layer_names = {"w"};
  restricted.layer_shapes = {
      {first.layers[0].retained_rows.size(), 2}};
  for (std::size_t idx : first.layers[0].retained_rows) {
    restricted.scores.push_back(imp.scores[idx]);
  }
  const PruneMap again = select_groups(restricted, 0.0);
  CHECK(again.layers[0].retained_rows.size() ==
        first.layers[0].retained_rows.size());
}

TEST_CASE("apply_prune basics") {
  const DenseMatrix w(3, 3, {0, 1, 2, 3, 4, 5, 6, 7, 8});
  const Backbone bb = single(w);

  SUBCASE("full index sets give back the identical backbone") {
    PruneMap map;
    map.layers = {{"w", {0, 1, 2}, {0, 1, 2}}};
    map.params_before = 9;
    map.params_after = 9;
    const Backbone pruned = apply_prune(bb, map);
    CHECK(pruned.layer(0).weight == w);
  }
  SUBCASE("row/col slice reads off the retained grid") {
    PruneMap map;
    map.layers = {{"w", {0, 2}, {1}}};
    map.params_before = 9;
    map.params_after = 2;
    const Backbone pruned = apply_prune(bb, map);
    CHECK(pruned.layer(0).weight == DenseMatrix(2, 1, {1, 7}));
  }
  SUBCASE("out-of-bounds index rejected") {
    PruneMap map;
    map.layers = {{"w", {0, 5}, {1}}};
    map.params_before = 9;
    map.params_after = 2;
    CHECK_THROWS_AS(apply_prune(bb, map), MapError);
  }
}

TEST_CASE("two-layer chain coupling") {
  Rng rng(3);
  const Backbone bb(Topology::kTwoLayerChain,
                    {{"w1", DenseMatrix::gaussian(4, 3, rng)},
                     {"w2", DenseMatrix::gaussian(2, 4, rng)}});
  const GroupImportance imp =
      group_importance(bb, std::nullopt, SurrogateLoss::kSquaredError);
  const PruneMap map = select_groups(imp, 0.5);
  CHECK(map.layers[0].retained_rows == map.layers[1].retained_cols);
  const Backbone pruned = apply_prune(bb, map);
  CHECK(pruned.layer(0).weight.rows() == 2);
  CHECK(pruned.layer(1).weight.cols() == 2);
  // Retained hidden {0,2} of 4 style read-off.
  for (std::size_t h = 0; h < 2; ++h) {
    const std::size_t src = map.layers[0].retained_rows[h];
    for (std::size_t j = 0; j < 3; ++j) {
      CHECK(pruned.layer(0).weight(h, j) == bb.layer(0).weight(src, j));
    }
    for (std::size_t i = 0; i < 2; ++i) {
      CHECK(pruned.layer(1).weight(i, h) == bb.layer(1).weight(i, src));
    }
  }

  SUBCASE("broken coupling rejected") {
    PruneMap bad = map;
    bad.layers[1].retained_cols = {0, 1};
    bad.layers[1].retained_cols[0] = bad.layers[0].retained_rows[0] == 0 ? 1 : 0;
    CHECK_THROWS_AS(apply_prune(bb, bad), MapError);
  }
}

TEST_CASE("pruned entries read back exactly") {
  Rng rng(41);
  for (int it = 0; it < 100; ++it) {
    const std::size_t m = 2 + rng.next_u64() % 8;
    const std::size_t n = 2 + rng.next_u64() % 8;
    const DenseMatrix w = DenseMatrix::gaussian(m, n, rng);
    const GroupImportance imp =
        group_importance(single(w), std::nullopt, SurrogateLoss::kSquaredError);
    const PruneMap map = select_groups(imp, rng.uniform());
    const Backbone pruned = apply_prune(single(w), map);
    const auto& lp = map.layers[0];
    for (std::size_t i = 0; i < lp.retained_rows.size(); ++i) {
      for (std::size_t j = 0; j < lp.retained_cols.size(); ++j) {
        CHECK(pruned.layer(0).weight(i, j) ==
              w(lp.retained_rows[i], lp.retained_cols[j]));
      }
    }
  }
}

TEST_CASE("pruning_ratio accounting") {
  CHECK(pruning_ratio(100, 100) == 0.0);
  CHECK(pruning_ratio(100, 0) == 1.0);
  CHECK_THROWS_AS(pruning_ratio(10, 11), AccountingError);
  CHECK_THROWS_AS(pruning_ratio(0, 0), AccountingError);

  // Published 8B model accounting: ratio 0.6 prunes to 3.9B parameters,
  // an exact ratio of 0.5048 (0.50 at two decimals).
  const double r = pruning_ratio(8030261248ULL, 3976728576ULL);
  CHECK(r == doctest::Approx(0.5048).epsilon(5e-5));
  CHECK(std::round(r * 100.0) / 100.0 == doctest::Approx(0.50));
}

TEST_CASE("pruning_ratio grows as retained groups shrink") {
  GroupImportance imp;
  imp.topology = Topology::kSingleLayer;
  imp.layer_shapes = {{10, 4}};
  imp.layer_names = {"w"};
  for (int i = 0; i < 10; ++i) imp.scores.push_back(i);
  double prev = -1.0;
  for (double ratio : {0.0, 0.2, 0.4, 0.6, 0.8, 1.0}) {
    const PruneMap map = select_groups(imp, ratio);
    const double actual = pruning_ratio(map.params_before, map.params_after);
    CHECK(actual >= prev);
    prev = actual;
  }
}

TEST_CASE("empty importance and empty backbone rejected") {
  GroupImportance imp;
  CHECK_THROWS_AS(select_groups(imp, 0.5), ParamError);
}
