#include <cmath>

#include "doctest.h"
#include "drive/numerics.hpp"

using namespace drive;

TEST_CASE("matmul by identity is exact") {
  const Matrix a(2, 2, {1, 2, 3, 4});
  CHECK(matmul(Matrix::identity(2), a) == a);
  CHECK(matmul(a, Matrix::identity(2)) == a);
}

TEST_CASE("matmul row by column") {
  const auto c = matmul(Matrix(1, 2, {1, 2}), Matrix(2, 1, {3, 4}));
  REQUIRE(c.rows() == 1);
  REQUIRE(c.cols() == 1);
  CHECK(c(0, 0) == 11.0);
}

TEST_CASE("matmul shape mismatch names both shapes") {
  try {
    matmul(Matrix(2, 3), Matrix(2, 3));
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("2x3") != std::string::npos);
    CHECK(msg.find("by 2x3") != std::string::npos);
  }
}

TEST_CASE("transposed products agree with explicit transposes") {
  Rng rng(5);
  const Matrix a(4, 3, rng_uniform(rng, 12, -1, 1));
  const Matrix b(4, 2, rng_uniform(rng, 8, -1, 1));
  const Matrix c(5, 3, rng_uniform(rng, 15, -1, 1));
  auto transpose = [](const Matrix& m) {
    Matrix t(m.cols(), m.rows());
    for (std::size_t i = 0; i < m.rows(); ++i)
      for (std::size_t j = 0; j < m.cols(); ++j) t(j, i) = m(i, j);
    return t;
  };
  const auto tn = matmul_tn(a, b);
  const auto ref_tn = matmul(transpose(a), b);
  for (std::size_t i = 0; i < tn.size(); ++i) {
    CHECK(tn.values()[i] == doctest::Approx(ref_tn.values()[i]).epsilon(1e-14));
  }
  const auto nt = matmul_nt(a, c);
  const auto ref_nt = matmul(a, transpose(c));
  for (std::size_t i = 0; i < nt.size(); ++i) {
    CHECK(nt.values()[i] == doctest::Approx(ref_nt.values()[i]).epsilon(1e-14));
  }
}

TEST_CASE("matmul is associative on random triples") {
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t m = 1 + rng.next_below(5), k = 1 + rng.next_below(5),
                      l = 1 + rng.next_below(5), n = 1 + rng.next_below(5);
    const Matrix a(m, k, rng_uniform(rng, m * k, -2, 2));
    const Matrix b(k, l, rng_uniform(rng, k * l, -2, 2));
    const Matrix c(l, n, rng_uniform(rng, l * n, -2, 2));
    const auto left = matmul(matmul(a, b), c);
    const auto right = matmul(a, matmul(b, c));
    for (std::size_t i = 0; i < left.size(); ++i) {
      const double x = left.values()[i], y = right.values()[i];
      CHECK(std::abs(x - y) <= 1e-9 * std::max(1.0, std::abs(x)));
    }
  }
}

TEST_CASE("matrix rejects mismatched data length") {
  CHECK_THROWS_AS(Matrix(2, 2, std::vector<double>{1, 2, 3}), ShapeError);
}

TEST_CASE("rng golden sequence") {
  // Computed with an independent Python implementation of splitmix64 + xoshiro256**.
  const double golden[8] = {0.08386297105988216, 0.3789802506626686, 0.6800434110281394,
                            0.9246929453253876,  0.9918039142821028, 0.7697394604342425,
                            0.7192585778779156,  0.8500084439109727};
  Rng rng(42);
  for (double g : golden) CHECK(rng.next_double() == g);
  Rng raw(42);
  CHECK(raw.next_u64() == 0x15780b2e0c2ec716ULL);
}

TEST_CASE("rng_uniform determinism and range") {
  Rng a(42), b(42);
  CHECK(rng_uniform(a, 3, 0, 1) == rng_uniform(b, 3, 0, 1));
  CHECK(rng_uniform(a, 0, 0, 1).empty());
  CHECK_THROWS_AS(rng_uniform(a, 3, 1.0, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(rng_uniform(a, 3, 2.0, 1.0), std::invalid_argument);

  Rng big(7);
  const auto draws = rng_uniform(big, 100000, 0, 1);
  double sum = 0;
  for (double v : draws) {
    REQUIRE(v >= 0.0);
    REQUIRE(v < 1.0);
    sum += v;
  }
  CHECK(std::abs(sum / draws.size() - 0.5) < 0.01);

  const auto shifted = rng_uniform(big, 1000, -3, -2);
  for (double v : shifted) CHECK((v >= -3.0 && v < -2.0));
}

TEST_CASE("next_below stays in range") {
  Rng rng(3);
  for (int i = 0; i < 1000; ++i) CHECK(rng.next_below(7) < 7);
  CHECK_THROWS(rng.next_below(0));
}

TEST_CASE("init_weights bounds, determinism and mean") {
  Rng a(1);
  const auto w = init_weights(a, 4, 10);
  CHECK(w.rows() == 4);
  CHECK(w.cols() == 10);
  for (double v : w.values()) CHECK((v >= -0.5 && v <= 0.5));

  Rng b(1);
  CHECK(init_weights(b, 4, 10) == w);

  Rng c(2);
  const auto big = init_weights(c, 16384, 64);
  double sum = 0;
  for (double v : big.values()) sum += v;
  CHECK(std::abs(sum / static_cast<double>(big.size())) < 0.001);

  CHECK_THROWS_AS(init_weights(c, 0, 3), std::invalid_argument);
  CHECK_THROWS_AS(init_weights(c, 3, 0), std::invalid_argument);
}

TEST_CASE("mix_seed separates streams") {
  CHECK(mix_seed(1, 0) != mix_seed(1, 1));
  CHECK(mix_seed(1, 0) != mix_seed(2, 0));
  CHECK(mix_seed(9, 4) == mix_seed(9, 4));
}
