#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numbers>

#include "framepick/matrix.hpp"
#include "framepick/rng.hpp"

using namespace framepick;

namespace {

// Straight-loop oracle, no shared code with matmul.
Matrix naive_matmul(const Matrix& a, const Matrix& b) {
  Matrix c(a.rows, b.cols);
  for (std::size_t i = 0; i < a.rows; ++i)
    for (std::size_t j = 0; j < b.cols; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < a.cols; ++k) s += a.at(i, k) * b.at(k, j);
      c.at(i, j) = s;
    }
  return c;
}

}  // namespace

TEST_CASE("matmul matches scalar loop oracle") {
  Rng rng(17);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t m = 1 + rng.next_below(6);
    const std::size_t k = 1 + rng.next_below(6);
    const std::size_t n = 1 + rng.next_below(6);
    Matrix a(m, k), b(k, n);
    for (auto& v : a.data) v = rng.next_gaussian();
    for (auto& v : b.data) v = rng.next_gaussian();
    auto got = matmul(a, b);
    auto want = naive_matmul(a, b);
    REQUIRE(got.rows == want.rows);
    REQUIRE(got.cols == want.cols);
    for (std::size_t i = 0; i < got.data.size(); ++i)
      REQUIRE_THAT(got.data[i], Catch::Matchers::WithinAbs(want.data[i], 1e-12));
  }
}

TEST_CASE("matmul identity and shape errors") {
  Matrix a(3, 4);
  Rng rng(5);
  for (auto& v : a.data) v = rng.next_gaussian();
  auto eye = Matrix::identity(3);
  REQUIRE(matmul(eye, a) == a);
  Matrix bad(3, 2);
  REQUIRE_THROWS_AS(matmul(a, bad), std::invalid_argument);
}

TEST_CASE("softmax rows sum to one and are shift invariant") {
  Matrix m(2, 3, {1.0, 2.0, 3.0, -5.0, 0.0, 5.0});
  auto s = softmax_rows(m);
  for (std::size_t i = 0; i < 2; ++i) {
    double sum = 0.0;
    for (std::size_t j = 0; j < 3; ++j) sum += s.at(i, j);
    REQUIRE_THAT(sum, Catch::Matchers::WithinAbs(1.0, 1e-12));
  }
  Matrix shifted = m;
  for (auto& v : shifted.data) v += 100.0;
  auto s2 = softmax_rows(shifted);
  for (std::size_t i = 0; i < s.data.size(); ++i)
    REQUIRE_THAT(s2.data[i], Catch::Matchers::WithinAbs(s.data[i], 1e-12));
}

TEST_CASE("softmax survives extreme magnitudes") {
  Matrix m(1, 3, {1e308, 1e308, -1e308});
  auto s = softmax_rows(m);
  REQUIRE_THAT(s.at(0, 0), Catch::Matchers::WithinAbs(0.5, 1e-12));
  REQUIRE_THAT(s.at(0, 1), Catch::Matchers::WithinAbs(0.5, 1e-12));
  REQUIRE_THAT(s.at(0, 2), Catch::Matchers::WithinAbs(0.0, 1e-12));
  for (double v : s.data) REQUIRE(std::isfinite(v));
}

TEST_CASE("layer_norm produces zero mean unit variance before affine") {
  Rng rng(3);
  std::vector<double> v(16), gain(16, 1.0), bias(16, 0.0);
  for (auto& x : v) x = 3.0 + 2.0 * rng.next_gaussian();
  auto out = layer_norm(v, gain, bias, 1e-12);
  double mean = 0.0;
  for (double x : out) mean += x;
  mean /= 16.0;
  double var = 0.0;
  for (double x : out) var += (x - mean) * (x - mean);
  var /= 16.0;
  REQUIRE_THAT(mean, Catch::Matchers::WithinAbs(0.0, 1e-10));
  REQUIRE_THAT(var, Catch::Matchers::WithinAbs(1.0, 1e-6));
}

TEST_CASE("layer_norm applies gain and bias") {
  std::vector<double> v = {1.0, 3.0};
  std::vector<double> gain = {2.0, 2.0}, bias = {10.0, 10.0};
  auto out = layer_norm(v, gain, bias, 1e-12);
  // normalized values are -1 and +1 up to the tiny eps
  REQUIRE_THAT(out[0], Catch::Matchers::WithinAbs(8.0, 1e-9));
  REQUIRE_THAT(out[1], Catch::Matchers::WithinAbs(12.0, 1e-9));
  REQUIRE_THROWS_AS(layer_norm(v, gain, bias, 0.0), std::invalid_argument);
}

TEST_CASE("cosine basics") {
  std::vector<double> x = {1.0, 0.0}, y = {0.0, 2.0}, z = {3.0, 0.0};
  REQUIRE_THAT(cosine(x, y), Catch::Matchers::WithinAbs(0.0, 1e-15));
  REQUIRE_THAT(cosine(x, z), Catch::Matchers::WithinAbs(1.0, 1e-15));
  std::vector<double> nx = {-1.0, 0.0};
  REQUIRE_THAT(cosine(x, nx), Catch::Matchers::WithinAbs(-1.0, 1e-15));
  std::vector<double> zero = {0.0, 0.0};
  REQUIRE(cosine(x, zero) == 0.0);
  REQUIRE(cosine(zero, zero) == 0.0);
}

TEST_CASE("cosine stays within [-1, 1]") {
  Rng rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> a(4), b(4);
    for (auto& v : a) v = rng.next_gaussian() * 1e-3;
    b = a;  // parallel vectors stress the clamp
    double c = cosine(a, b);
    REQUIRE(c <= 1.0);
    REQUIRE(c >= -1.0);
  }
}

TEST_CASE("gelu exact values and derivative by finite difference") {
  REQUIRE_THAT(gelu(0.0), Catch::Matchers::WithinAbs(0.0, 1e-15));
  // gelu(x) = x/2 (1 + erf(x/sqrt 2)); at x=1: 0.5*(1+erf(1/sqrt2))
  const double want = 0.5 * (1.0 + std::erf(1.0 / std::numbers::sqrt2));
  REQUIRE_THAT(gelu(1.0), Catch::Matchers::WithinAbs(want, 1e-15));
  for (double x : {-3.0, -1.0, -0.1, 0.0, 0.5, 2.0, 4.0}) {
    const double h = 1e-6;
    const double fd = (gelu(x + h) - gelu(x - h)) / (2.0 * h);
    REQUIRE_THAT(gelu_grad(x), Catch::Matchers::WithinAbs(fd, 1e-8));
  }
}

TEST_CASE("rng is deterministic and serializable") {
  Rng a(123), b(123);
  for (int i = 0; i < 100; ++i) REQUIRE(a.next_u64() == b.next_u64());
  const auto saved = a.state();
  std::vector<std::uint64_t> expect;
  for (int i = 0; i < 10; ++i) expect.push_back(a.next_u64());
  Rng c(0);
  c.set_state(saved);
  for (int i = 0; i < 10; ++i) REQUIRE(c.next_u64() == expect[i]);
}

TEST_CASE("rng doubles in [0,1) and gaussian moments") {
  Rng rng(9);
  double sum = 0.0, sq = 0.0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    double u = rng.next_double();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
  }
  for (int i = 0; i < n; ++i) {
    double g = rng.next_gaussian();
    sum += g;
    sq += g * g;
  }
  REQUIRE_THAT(sum / n, Catch::Matchers::WithinAbs(0.0, 0.05));
  REQUIRE_THAT(sq / n, Catch::Matchers::WithinAbs(1.0, 0.05));
}

TEST_CASE("hash_combine separates nearby inputs") {
  REQUIRE(hash_combine(1, 2) != hash_combine(2, 1));
  REQUIRE(hash_combine(0, 0) != hash_combine(0, 1));
  REQUIRE(hash_combine(7, 9) == hash_combine(7, 9));
}
