#include <doctest.h>

#include <array>
#include <cmath>
#include <random>
#include <vector>

#include "deltalag/kernels.hpp"

namespace k = deltalag::kernels;

namespace {

std::vector<double> randn(std::size_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> d(0.0, 1.0);
  std::vector<double> v(n);
  for (double& x : v) x = d(rng);
  return v;
}

}  // namespace

TEST_CASE("parallel matmul variants match the serial reference bit for bit") {
  std::mt19937_64 rng(5);
  // Shapes on both sides of the threading threshold.
  for (auto [m, kk, n] : {std::array<std::size_t, 3>{3, 4, 5}, {64, 64, 64}, {130, 70, 33}, {1, 300, 400}}) {
    const auto a = randn(m * kk, rng);
    const auto b = randn(kk * n, rng);
    const auto bt = randn(n * kk, rng);
    const auto at = randn(kk * m, rng);
    std::vector<double> c1(m * n, 0.5), c2(m * n, 0.5);
    for (bool acc : {false, true}) {
      k::matmul(a.data(), b.data(), c1.data(), m, kk, n, acc);
      k::reference::matmul(a.data(), b.data(), c2.data(), m, kk, n, acc);
      CHECK(c1 == c2);
      k::matmul_nt(a.data(), bt.data(), c1.data(), m, kk, n, acc);
      k::reference::matmul_nt(a.data(), bt.data(), c2.data(), m, kk, n, acc);
      CHECK(c1 == c2);
      k::matmul_tn(at.data(), b.data(), c1.data(), m, kk, n, acc);
      k::reference::matmul_tn(at.data(), b.data(), c2.data(), m, kk, n, acc);
      CHECK(c1 == c2);
    }
  }
}

TEST_CASE("matmul on a hand example") {
  const double a[] = {1, 2, 3, 4};     // 2 x 2
  const double b[] = {5, 6, 7, 8};     // 2 x 2
  double c[4];
  k::matmul(a, b, c, 2, 2, 2);
  CHECK(c[0] == 19);
  CHECK(c[1] == 22);
  CHECK(c[2] == 43);
  CHECK(c[3] == 50);
}

TEST_CASE("column correlation agrees with the two-pass reference") {
  std::mt19937_64 rng(9);
  for (auto [rows, p, q] : {std::array<std::size_t, 3>{10, 3, 4}, {250, 40, 40}}) {
    const auto x = randn(rows * p, rng);
    const auto y = randn(rows * q, rng);
    std::vector<double> fast(p * q), slow(p * q);
    k::column_correlation(x.data(), y.data(), fast.data(), rows, p, q);
    k::reference::column_correlation(x.data(), y.data(), slow.data(), rows, p, q);
    for (std::size_t i = 0; i < fast.size(); ++i) {
      CHECK(fast[i] == doctest::Approx(slow[i]).epsilon(1e-12));
      CHECK(std::abs(fast[i]) <= 1.0);
    }
  }
}

TEST_CASE("column correlation marks degenerate columns as NaN") {
  // Column 0 of x is constant, column 1 holds a NaN.
  const std::size_t rows = 4;
  const double x[] = {1, 1, 1, NAN, 1, 3, 1, 4};
  const double y[] = {1, 2, 3, 4};
  double fast[2], slow[2];
  k::column_correlation(x, y, fast, rows, 2, 1);
  k::reference::column_correlation(x, y, slow, rows, 2, 1);
  CHECK(std::isnan(fast[0]));
  CHECK(std::isnan(fast[1]));
  CHECK(std::isnan(slow[0]));
  CHECK(std::isnan(slow[1]));
  // A constant whose mean does not round back to itself.
  const double c[] = {0.01, 0.01, 0.01, 0.01, 0.01, 0.01, 0.01};
  const double w[] = {1, 5, 2, 8, 3, 3, 9};
  double cf, cs;
  k::column_correlation(c, w, &cf, 7, 1, 1);
  k::reference::column_correlation(c, w, &cs, 7, 1, 1);
  CHECK(std::isnan(cf));
  CHECK(std::isnan(cs));
  // Perfectly dependent columns.
  const double z[] = {2, 4, 6, 8};
  double r;
  k::column_correlation(y, z, &r, rows, 1, 1);
  CHECK(r == doctest::Approx(1.0).epsilon(1e-14));
}
