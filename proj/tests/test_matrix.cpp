#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "lorafuse/error.hpp"
#include "lorafuse/matrix.hpp"
#include "lorafuse/rng.hpp"

using namespace lorafuse;

TEST_CASE("constructor validates size and finiteness") {
  CHECK_THROWS_AS(DenseMatrix(2, 2, {1.0, 2.0, 3.0}), ShapeError);
  CHECK_THROWS_AS(DenseMatrix(1, 2, {1.0, std::nan("")}), DataError);
  CHECK_THROWS_AS(DenseMatrix(1, 1, {INFINITY}), DataError);
  DenseMatrix ok(2, 2, {1, 2, 3, 4});
  CHECK(ok(1, 0) == 3.0);
}

TEST_CASE("matmul identity, outer product, annihilator") {
  const DenseMatrix m(2, 3, {1, 2, 3, 4, 5, 6});
  CHECK(matmul(DenseMatrix::identity(2), m) == m);

  const DenseMatrix col(2, 1, {1, 2});
  const DenseMatrix row(1, 2, {3, 4});
  const DenseMatrix outer = matmul(col, row);
  CHECK(outer == DenseMatrix(2, 2, {3, 4, 6, 8}));

  const DenseMatrix zero(3, 2);
  CHECK(matmul(m, zero) == DenseMatrix(2, 2));
}

TEST_CASE("matmul rejects mismatched shapes with both reported") {
  const DenseMatrix a(2, 3), b(2, 3);
  try {
    matmul(a, b);
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("2x3") != std::string::npos);
  }
}

TEST_CASE("parallel kernel is bitwise identical to the serial reference") {
  Rng rng(11);
  // Sizes straddling the parallelization threshold.
  for (auto [m, k, n] : {std::array<std::size_t, 3>{3, 4, 5},
                         {17, 9, 23},
                         {40, 41, 42},
                         {64, 64, 64}}) {
    const DenseMatrix a = DenseMatrix::gaussian(m, k, rng);
    const DenseMatrix b = DenseMatrix::gaussian(k, n, rng);
    CHECK(matmul(a, b) == matmul_serial(a, b));
  }
}

TEST_CASE("cosine basics") {
  const std::vector<double> e1{1, 0}, e2{0, 1}, ones{1, 1}, twos{2, 2};
  CHECK(cosine(e1, e2) == 0.0);
  CHECK(cosine(ones, twos) == doctest::Approx(1.0).epsilon(1e-12));
  const std::vector<double> z{0, 0}, v{1, 2};
  CHECK(cosine(v, z) == 0.0);
  CHECK(cosine(z, v) == 0.0);
  const std::vector<double> len3{1, 2, 3};
  CHECK_THROWS_AS(cosine(e1, len3), ShapeError);
}

TEST_CASE("cosine symmetry and positive-scale invariance") {
  Rng rng(3);
  for (int it = 0; it < 200; ++it) {
    const std::size_t n = 1 + rng.next_u64() % 8;
    std::vector<double> u(n), v(n);
    for (auto& x : u) x = rng.gaussian();
    for (auto& x : v) x = rng.gaussian();
    const double c = cosine(u, v);
    CHECK(c >= -1.0);
    CHECK(c <= 1.0);
    CHECK(cosine(v, u) == doctest::Approx(c).epsilon(1e-12));
    const double t = 0.25 + 4.0 * rng.uniform();
    std::vector<double> us(n);
    for (std::size_t i = 0; i < n; ++i) us[i] = t * u[i];
    CHECK(cosine(us, v) == doctest::Approx(c).epsilon(1e-10));
  }
}

TEST_CASE("mean and add/sub") {
  const DenseMatrix a(2, 2, {1, 0, 0, 1});
  const DenseMatrix b(2, 2, {3, 2, 2, 3});
  const std::vector<DenseMatrix> mats{a, b};
  CHECK(mean(mats) == DenseMatrix(2, 2, {2, 1, 1, 2}));
  CHECK(sub(add(a, b), b) == a);
}

TEST_CASE("take_rows / take_cols bounds") {
  const DenseMatrix m(3, 3, {0, 1, 2, 3, 4, 5, 6, 7, 8});
  CHECK(m.take_rows({0, 2}) == DenseMatrix(2, 3, {0, 1, 2, 6, 7, 8}));
  CHECK(m.take_cols({1}) == DenseMatrix(3, 1, {1, 4, 7}));
  CHECK_THROWS_AS(m.take_rows({3}), MapError);
  CHECK_THROWS_AS(m.take_cols({7}), MapError);
}
