#include <doctest.h>

#include <cmath>
#include <random>

#include "milatp/metrics.hpp"

using namespace milatp;

namespace {

// Textbook formulas written out long-hand, used as the oracle.
double brute_mae(const Vecd& t, const Vecd& p) {
  double s = 0.0;
  for (Index i = 0; i < t.size(); ++i) s += std::abs(p[i] - t[i]);
  return s / static_cast<double>(t.size());
}

double brute_pearson(const Vecd& x, const Vecd& y) {
  const Index n = x.size();
  double mx = 0.0, my = 0.0;
  for (Index i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double num = 0.0, dx2 = 0.0, dy2 = 0.0;
  for (Index i = 0; i < n; ++i) {
    num += (x[i] - mx) * (y[i] - my);
    dx2 += (x[i] - mx) * (x[i] - mx);
    dy2 += (y[i] - my) * (y[i] - my);
  }
  return num / std::sqrt(dx2 * dy2);
}

}  // namespace

TEST_SUITE("metrics") {

TEST_CASE("exact predictions give MAE 0 and rho 1") {
  Vecd t(4);
  t << 1.0, 5.0, 9.0, 2.0;
  CHECK(mean_absolute_error(t, t) == 0.0);
  auto rho = pearson(t, t);
  REQUIRE(rho.has_value());
  CHECK(*rho == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("negated predictions give rho -1") {
  Vecd t(5);
  t << 1.0, 2.0, 4.0, 8.0, 16.0;
  Vecd p = -t.array() + 3.0;
  auto rho = pearson(t, p);
  REQUIRE(rho.has_value());
  CHECK(*rho == doctest::Approx(-1.0).epsilon(1e-12));
}

TEST_CASE("hand example truths 1,2,3 vs preds 2,4,6") {
  Vecd t(3), p(3);
  t << 1.0, 2.0, 3.0;
  p << 2.0, 4.0, 6.0;
  CHECK(mean_absolute_error(t, p) == doctest::Approx(2.0).epsilon(1e-15));
  auto rho = pearson(t, p);
  REQUIRE(rho.has_value());
  CHECK(*rho == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("single sample and constant vectors are undefined, not NaN") {
  Vecd one(1), c(3);
  one << 5.0;
  c << 2.0, 2.0, 2.0;
  CHECK(!pearson(one, one).has_value());
  Vecd t(3);
  t << 1.0, 2.0, 3.0;
  CHECK(!pearson(c, t).has_value());
  CHECK(!pearson(t, c).has_value());
  CHECK(mean_absolute_error(one, one) == 0.0);  // MAE is fine with one sample
}

TEST_CASE("matches brute-force recomputation on random vectors") {
  std::mt19937_64 rng(71);
  std::uniform_real_distribution<double> dist(-1e5, 4e5);
  for (int k = 0; k < 100; ++k) {
    const Index n = 2 + static_cast<Index>(rng() % 64);
    Vecd x = Vecd::NullaryExpr(n, [&](Index) { return dist(rng); });
    Vecd y = Vecd::NullaryExpr(n, [&](Index) { return dist(rng); });
    CHECK(mean_absolute_error(x, y) ==
          doctest::Approx(brute_mae(x, y)).epsilon(1e-9));
    auto rho = pearson(x, y);
    REQUIRE(rho.has_value());
    CHECK(*rho == doctest::Approx(brute_pearson(x, y)).epsilon(1e-9));
  }
}

}  // TEST_SUITE
