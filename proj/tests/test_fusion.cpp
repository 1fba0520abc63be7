#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "lorafuse/conflict.hpp"
#include "lorafuse/error.hpp"
#include "lorafuse/fusion.hpp"
#include "lorafuse/rng.hpp"

using namespace lorafuse;

TEST_CASE("fedavg basics") {
  const DenseMatrix w(2, 2, {1, 2, 3, 4});
  const std::vector<DenseMatrix> copies{w, w, w};
  CHECK(fedavg(copies) == w);

  const std::vector<DenseMatrix> pair{DenseMatrix(2, 2, {1, 0, 0, 1}),
                                      DenseMatrix(2, 2, {3, 2, 2, 3})};
  CHECK(fedavg(pair) == DenseMatrix(2, 2, {2, 1, 1, 2}));

  const std::vector<DenseMatrix> cancelling{w, w.scaled(-1.0), w,
                                            w.scaled(-1.0)};
  CHECK(fedavg(cancelling).max_abs() == 0.0);

  const std::vector<DenseMatrix> bad{DenseMatrix(2, 2), DenseMatrix(2, 3)};
  CHECK_THROWS_AS(fedavg(bad), ShapeError);
}

TEST_CASE("fedavg is permutation-invariant and linear") {
  Rng rng(9);
  std::vector<DenseMatrix> updates;
  for (int i = 0; i < 3; ++i) {
    updates.push_back(DenseMatrix::gaussian(4, 3, rng));
  }
  std::vector<DenseMatrix> permuted{updates[2], updates[0], updates[1]};
  CHECK(sub(fedavg(updates), fedavg(permuted)).max_abs() < 1e-15);

  const double t = 2.5;
  std::vector<DenseMatrix> scaled;
  for (const auto& u : updates) scaled.push_back(u.scaled(t));
  CHECK(sub(fedavg(scaled), fedavg(updates).scaled(t)).max_abs() < 1e-12);
}

TEST_CASE("ffa_fuse hand cases") {
  const DenseMatrix a0(1, 2, {1, 1});
  const std::vector<DenseMatrix> bs{DenseMatrix(1, 1, {2}),
                                    DenseMatrix(1, 1, {4})};
  CHECK(ffa_fuse(bs, a0, 1.0) == DenseMatrix(1, 2, {3, 3}));

  const std::vector<DenseMatrix> zeros{DenseMatrix(3, 2), DenseMatrix(3, 2)};
  CHECK(ffa_fuse(zeros, DenseMatrix(2, 4), 1.0).max_abs() == 0.0);

  Rng rng(4);
  const DenseMatrix b = DenseMatrix::gaussian(3, 2, rng);
  const DenseMatrix a = DenseMatrix::gaussian(2, 5, rng);
  const std::vector<DenseMatrix> same{b, b, b};
  const std::vector<DenseMatrix> one{b};
  CHECK(ffa_fuse(same, a, 2.0) == ffa_fuse(one, a, 2.0));
}

TEST_CASE("ffa protocol check names the offender") {
  Rng rng(6);
  const DenseMatrix a = DenseMatrix::gaussian(2, 4, rng);
  DenseMatrix a_drifted = a;
  a_drifted(0, 0) += 1e-16;  // any bitwise difference counts
  const std::vector<DenseMatrix> factors{a, a, a_drifted};
  const std::vector<std::string> labels{"file0.lcra", "file1.lcra",
                                        "file2.lcra"};
  try {
    check_identical_frozen_a(factors, labels);
    FAIL("expected ProtocolError");
  } catch (const ProtocolError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("file2.lcra") != std::string::npos);
    CHECK(msg.find("file0.lcra") != std::string::npos);
  }
  const std::vector<DenseMatrix> fine{a, a};
  CHECK_NOTHROW(check_identical_frozen_a(fine, labels));
}

TEST_CASE("fedsa_fuse hand case and identities") {
  const std::vector<DenseMatrix> bs{DenseMatrix(2, 1, {1, 0}),
                                    DenseMatrix(2, 1, {0, 1})};
  const std::vector<DenseMatrix> as{DenseMatrix(1, 2, {2, 0}),
                                    DenseMatrix(1, 2, {0, 2})};
  CHECK(fedsa_fuse(as, bs, 1.0) == DenseMatrix(2, 2, {0.5, 0.5, 0.5, 0.5}));

  // Identical clients reduce to a single client's scaled product.
  Rng rng(10);
  const DenseMatrix b = DenseMatrix::gaussian(3, 2, rng);
  const DenseMatrix a = DenseMatrix::gaussian(2, 4, rng);
  const std::vector<DenseMatrix> bs3{b, b, b};
  const std::vector<DenseMatrix> as3{a, a, a};
  CHECK(sub(fedsa_fuse(as3, bs3, 2.0), matmul(b, a).scaled(2.0)).max_abs() <
        1e-12);
}

TEST_CASE("fedsa with shared A equals fedavg of per-client products") {
  Rng rng(11);
  for (int it = 0; it < 20; ++it) {
    const DenseMatrix a = DenseMatrix::gaussian(3, 3, rng);
    std::vector<DenseMatrix> bs, as, products;
    for (int i = 0; i < 3; ++i) {
      bs.push_back(DenseMatrix::gaussian(3, 3, rng));
      as.push_back(a);
      products.push_back(matmul(bs.back(), a).scaled(1.7));
    }
    CHECK(sub(fedsa_fuse(as, bs, 1.7), fedavg(products)).max_abs() < 1e-12);
  }
}

TEST_CASE("single client: all operators reduce to that client's update") {
  Rng rng(12);
  const DenseMatrix b = DenseMatrix::gaussian(4, 2, rng);
  const DenseMatrix a = DenseMatrix::gaussian(2, 5, rng);
  const double scale = 2.0;
  const DenseMatrix update = matmul(b, a).scaled(scale);
  const std::vector<DenseMatrix> ub{b};
  const std::vector<DenseMatrix> ua{a};
  const std::vector<DenseMatrix> uu{update};
  CHECK(sub(fedavg(uu), update).max_abs() == 0.0);
  CHECK(sub(ffa_fuse(ub, a, scale), update).max_abs() < 1e-12);
  CHECK(sub(fedsa_fuse(ua, ub, scale), update).max_abs() < 1e-12);
}

TEST_CASE("apply_fusion") {
  const Backbone bb(Topology::kSingleLayer,
                    {{"w", DenseMatrix::identity(2)}});
  SUBCASE("zero update leaves the backbone unchanged") {
    const std::vector<DenseMatrix> zero{DenseMatrix(2, 2)};
    CHECK(apply_fusion(bb, zero).layer(0).weight == bb.layer(0).weight);
  }
  SUBCASE("identity plus antidiagonal is all ones") {
    const std::vector<DenseMatrix> f{DenseMatrix(2, 2, {0, 1, 1, 0})};
    CHECK(apply_fusion(bb, f).layer(0).weight ==
          DenseMatrix(2, 2, {1, 1, 1, 1}));
  }
  SUBCASE("apply then subtract recovers the original") {
    // Dyadic values keep the additive inverse exact in floating point.
    const DenseMatrix f(2, 2, {0.5, -0.25, 1.75, -2.125});
    const std::vector<DenseMatrix> fs{f};
    const Backbone applied = apply_fusion(bb, fs);
    CHECK(sub(applied.layer(0).weight, f) == bb.layer(0).weight);
  }
  SUBCASE("shape mismatch names the layer") {
    const std::vector<DenseMatrix> bad{DenseMatrix(3, 2)};
    try {
      apply_fusion(bb, bad);
      FAIL("expected ShapeError");
    } catch (const ShapeError& e) {
      CHECK(std::string(e.what()).find("'w'") != std::string::npos);
    }
  }
  SUBCASE("input backbone is untouched") {
    const std::vector<DenseMatrix> f{DenseMatrix(2, 2, {5, 5, 5, 5})};
    (void)apply_fusion(bb, f);
    CHECK(bb.layer(0).weight == DenseMatrix::identity(2));
  }
}

TEST_CASE("fedavg of de-conflicted updates stays in the shared span") {
  Rng rng(14);
  for (int it = 0; it < 20; ++it) {
    std::vector<DenseMatrix> updates;
    for (int i = 0; i < 3; ++i) {
      updates.push_back(matmul(DenseMatrix::gaussian(6, 2, rng),
                               DenseMatrix::gaussian(2, 5, rng)));
    }
    const DeconflictedAdapterSet out = deconflict(updates, 4, 1e-9);
    const DenseMatrix fused = fedavg(out.updates);
    const DenseMatrix proj =
        matmul(out.subspace.basis, out.subspace.basis.transpose());
    const DenseMatrix outside = sub(fused, matmul(proj, fused));
    CHECK(outside.frobenius_norm() <=
          1e-8 * (fused.frobenius_norm() + 1.0));
  }
}

TEST_CASE("fusion method names") {
  CHECK(fusion_method_from_string("fedavg") == FusionMethod::kFedAvg);
  CHECK(fusion_method_from_string("ffa") == FusionMethod::kFfa);
  CHECK(fusion_method_from_string("fedsa") == FusionMethod::kFedSa);
  CHECK_THROWS_AS(fusion_method_from_string("ties"), ParamError);
  CHECK(fusion_method_name(FusionMethod::kFedSa) == "fedsa");
}
