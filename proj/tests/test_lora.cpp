#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "lorafuse/error.hpp"
#include "lorafuse/lora.hpp"
#include "lorafuse/rng.hpp"
#include "lorafuse/svd.hpp"

using namespace lorafuse;

TEST_CASE("init_adapter: zero update, determinism, shapes") {
  const LoraAdapter a = init_adapter("w", 4, 6, 2, 16.0, 99);
  CHECK(a.B.rows() == 4);
  CHECK(a.B.cols() == 2);
  CHECK(a.A.rows() == 2);
  CHECK(a.A.cols() == 6);
  CHECK(materialize(a) == DenseMatrix(4, 6));  // B = 0 forces a zero update

  const LoraAdapter b = init_adapter("w", 4, 6, 2, 16.0, 99);
  CHECK(a.A == b.A);  // bitwise

  const LoraAdapter c = init_adapter("w", 4, 6, 2, 16.0, 100);
  CHECK(!(c.A == a.A));
}

TEST_CASE("init_adapter rejects bad ranks") {
  CHECK_THROWS_AS(init_adapter("w", 4, 6, 0, 16.0, 1), ParamError);
  CHECK_THROWS_AS(init_adapter("w", 4, 6, 5, 16.0, 1), ParamError);
}

TEST_CASE("materialize: hand product and scale law") {
  LoraAdapter a;
  a.layer_name = "w";
  a.B = DenseMatrix(2, 1, {1, 2});
  a.A = DenseMatrix(1, 2, {3, 4});
  a.rank = 1;
  a.alpha = 1.0;
  CHECK(materialize(a) == DenseMatrix(2, 2, {3, 4, 6, 8}));
}

TEST_CASE("alpha 16 rank 8 doubles the raw product") {
  Rng rng(5);
  const DenseMatrix b = DenseMatrix::gaussian(10, 8, rng);
  const DenseMatrix a = DenseMatrix::gaussian(8, 9, rng);
  LoraAdapter raw{"w", b, a, 8, 8.0};   // scale 1
  LoraAdapter dbl{"w", b, a, 8, 16.0};  // scale 2
  const DenseMatrix m1 = materialize(raw);
  const DenseMatrix m2 = materialize(dbl);
  for (std::size_t i = 0; i < m1.size(); ++i) {
    CHECK(m2.data()[i] == doctest::Approx(2.0 * m1.data()[i]).epsilon(1e-14));
  }
}

TEST_CASE("materialized rank is bounded by the adapter rank") {
  Rng rng(17);
  for (int it = 0; it < 50; ++it) {
    const std::size_t d_out = 3 + rng.next_u64() % 8;
    const std::size_t d_in = 3 + rng.next_u64() % 8;
    const std::size_t r =
        1 + rng.next_u64() % std::min({d_out, d_in, std::size_t{3}});
    LoraAdapter ad{"w", DenseMatrix::gaussian(d_out, r, rng),
                   DenseMatrix::gaussian(r, d_in, rng), r, 4.0};
    const SvdResult svd = svd_thin(materialize(ad), 1e-12);
    for (std::size_t k = r; k < svd.singular_values.size(); ++k) {
      CHECK(svd.singular_values[k] < 1e-8);
    }
  }
}

TEST_CASE("materialize is linear in B for fixed A and vice versa") {
  Rng rng(23);
  const std::size_t d_out = 6, d_in = 5, r = 2;
  const DenseMatrix a = DenseMatrix::gaussian(r, d_in, rng);
  const DenseMatrix b1 = DenseMatrix::gaussian(d_out, r, rng);
  const DenseMatrix b2 = DenseMatrix::gaussian(d_out, r, rng);
  LoraAdapter sum{"w", add(b1, b2), a, r, 3.0};
  LoraAdapter first{"w", b1, a, r, 3.0};
  LoraAdapter second{"w", b2, a, r, 3.0};
  CHECK(sub(materialize(sum), add(materialize(first), materialize(second)))
            .max_abs() < 1e-12);

  const DenseMatrix a2 = DenseMatrix::gaussian(r, d_in, rng);
  LoraAdapter asum{"w", b1, add(a, a2), r, 3.0};
  LoraAdapter aone{"w", b1, a, r, 3.0};
  LoraAdapter atwo{"w", b1, a2, r, 3.0};
  CHECK(sub(materialize(asum), add(materialize(aone), materialize(atwo)))
            .max_abs() < 1e-12);
}

TEST_CASE("validate_adapter rejects inconsistent factors") {
  LoraAdapter bad{"w", DenseMatrix(4, 2), DenseMatrix(3, 6), 2, 1.0};
  CHECK_THROWS_AS(validate_adapter(bad), ShapeError);
  LoraAdapter nonpos{"w", DenseMatrix(4, 2), DenseMatrix(2, 6), 2, 0.0};
  CHECK_THROWS_AS(validate_adapter(nonpos), ParamError);
}
