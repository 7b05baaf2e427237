#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include <doctest.h>
#include <Eigen/Dense>

#include "hwdiff/metrics.hpp"
#include "hwdiff/rng.hpp"

using namespace hwdiff;

namespace {

// Brute-force W1 for equal-size samples: min over permutations of the mean
// absolute pairing cost. Feasible for n <= 8 and known to equal the sorted
// pairing in one dimension, which is what we verify.
double w1_bruteforce(std::vector<double> a, std::vector<double> b) {
  std::sort(b.begin(), b.end());
  std::vector<int> idx(b.size());
  std::iota(idx.begin(), idx.end(), 0);
  double best = 1e300;
  do {
    double cost = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      cost += std::abs(a[i] - b[static_cast<std::size_t>(idx[i])]);
    }
    best = std::min(best, cost / a.size());
  } while (std::next_permutation(idx.begin(), idx.end()));
  return best;
}

std::vector<double> random_sample(int n, std::uint64_t seed, double scale = 1.0) {
  auto eng = rng::make_engine(seed);
  std::vector<double> out(static_cast<std::size_t>(n));
  for (auto& v : out) v = scale * rng::standard_normal(eng);
  return out;
}

}  // namespace

TEST_CASE("sorted pairing equals the assignment optimum in 1-D") {
  auto eng = rng::make_engine(17);
  for (int trial = 0; trial < 30; ++trial) {
    const int n = 2 + static_cast<int>(eng() % 7);  // up to 8
    std::vector<double> a(static_cast<std::size_t>(n)), b(a.size());
    for (auto& v : a) v = 4.0 * (rng::uniform_unit(eng) - 0.5);
    for (auto& v : b) v = 4.0 * (rng::uniform_unit(eng) - 0.5);
    const double oracle = w1_bruteforce(a, b);
    CHECK(metrics::w1_sorted_1d(a, b) == doctest::Approx(oracle).epsilon(1e-12));
  }
}

TEST_CASE("W1 satisfies the metric axioms on random triples") {
  for (std::uint64_t s = 0; s < 10; ++s) {
    const auto a = random_sample(256, 100 + s);
    const auto b = random_sample(256, 200 + s, 1.5);
    const auto c = random_sample(256, 300 + s, 0.5);
    const double dab = metrics::w1_sorted_1d(a, b);
    const double dba = metrics::w1_sorted_1d(b, a);
    const double dac = metrics::w1_sorted_1d(a, c);
    const double dcb = metrics::w1_sorted_1d(c, b);
    CHECK(dab == doctest::Approx(dba).epsilon(1e-12));
    CHECK(dab >= 0.0);
    CHECK(metrics::w1_sorted_1d(a, a) == doctest::Approx(0.0).epsilon(1e-14));
    CHECK(dab <= dac + dcb + 1e-10);
  }
}

TEST_CASE("degenerate two-point checks") {
  CHECK(metrics::w1_sorted_1d(std::vector<double>{0.0, 1.0},
                              std::vector<double>{0.0, 1.0}) ==
        doctest::Approx(0.0).epsilon(1e-14));
  CHECK(metrics::w1_sorted_1d(std::vector<double>{0.0}, std::vector<double>{1.0}) ==
        doctest::Approx(1.0).epsilon(1e-14));
  // Translation: W1(X, X + s) = |s|.
  const auto a = random_sample(1000, 5);
  auto shifted = a;
  for (auto& v : shifted) v += 0.75;
  CHECK(metrics::w1_sorted_1d(a, shifted) == doctest::Approx(0.75).epsilon(1e-10));
}

TEST_CASE("closed-form density integrates to one and has a monotone CDF") {
  for (auto [beta, alpha, s2] : {std::tuple{1.0, 0.5, 2.0}, std::tuple{0.0, 1.0, 2.0},
                                 std::tuple{-0.5, 2.0, 1.5}, std::tuple{2.0, 0.25, 3.0}}) {
    const metrics::Benchmark1D bench(beta, alpha, s2);
    // CDF at the far tails.
    CHECK(bench.cdf(-40.0) == doctest::Approx(0.0).epsilon(1e-10));
    CHECK(bench.cdf(40.0) == doctest::Approx(1.0).epsilon(1e-10));
    double prev = 0.0;
    for (int i = 0; i <= 200; ++i) {
      const double x = -10.0 + 20.0 * i / 200.0;
      const double cur = bench.cdf(x);
      CHECK(cur >= prev - 1e-12);
      prev = cur;
    }
    // Midpoint-rule mass over a wide window ~ 1.
    double mass = 0.0;
    const int n = 20000;
    for (int i = 0; i < n; ++i) {
      const double x = -25.0 + 50.0 * (i + 0.5) / n;
      mass += bench.pdf(x) * 50.0 / n;
    }
    CHECK(mass == doctest::Approx(1.0).epsilon(1e-6));
  }
}

TEST_CASE("quantile inverts the CDF") {
  const metrics::Benchmark1D bench(1.0, 0.5, 2.0);
  for (double q : {0.001, 0.01, 0.1, 0.3, 0.5, 0.7, 0.9, 0.99, 0.999}) {
    const double x = bench.quantile(q);
    CHECK(bench.cdf(x) == doctest::Approx(q).epsilon(1e-6));
  }
}

TEST_CASE("closed-form mean for symmetric parameter choices") {
  // beta = 0, alpha = 1: density is a centered normal, mean 0.
  const metrics::Benchmark1D sym(0.0, 1.0, 2.0);
  CHECK(sym.mean() == doctest::Approx(0.0).epsilon(1e-10));
  // beta = 1, alpha = 1, sigma2 = 2: N(-1, 1), mean -1.
  const metrics::Benchmark1D gauss(1.0, 1.0, 2.0);
  CHECK(gauss.mean() == doctest::Approx(-1.0).epsilon(1e-10));
  // Mean also matches direct quadrature for an asymmetric case.
  const metrics::Benchmark1D bench(1.0, 0.5, 2.0);
  double m1 = 0.0;
  const int n = 400000;
  for (int i = 0; i < n; ++i) {
    const double x = -30.0 + 60.0 * (i + 0.5) / n;
    m1 += x * bench.pdf(x) * 60.0 / n;
  }
  CHECK(bench.mean() == doctest::Approx(m1).epsilon(1e-5));
}

TEST_CASE("normalizer cross-check is frozen") {
  // Independent closed-form evaluation: exp((-2 beta x - x^2)/s2) on x<=0
  // contributes e^{1/2} sqrt(2 pi) Phi(1) = 3.477061 and the x>0 piece
  // e sqrt(4 pi) (1 - Phi(sqrt 2)) = 0.757863, so Z = 4.234924 for beta=1,
  // alpha=0.5, s2=2.
  const metrics::Benchmark1D bench(1.0, 0.5, 2.0);
  CHECK(bench.normalizer() == doctest::Approx(4.234924).epsilon(2e-6));
}

TEST_CASE("sample-vs-density distance vanishes on matched quantiles") {
  const metrics::Benchmark1D bench(1.0, 0.5, 2.0);
  const int n = 40000;
  std::vector<double> sample(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    sample[static_cast<std::size_t>(i)] = bench.quantile((i + 0.5) / n);
  }
  // Inverse-transform draws match the density, so the distance is at the
  // level of the sample/grid discretization.
  CHECK(metrics::w1_sorted_1d(sample, bench, 4096) < 1e-3);

  // On a genuinely displaced sample the distance is dominated by the shift,
  // so doubling the quantile grid must leave it stable to 0.5%.
  std::vector<double> displaced = sample;
  for (double& x : displaced) x += 0.05;
  const double w_a = metrics::w1_sorted_1d(displaced, bench, 4096);
  const double w_b = metrics::w1_sorted_1d(displaced, bench, 8192);
  CHECK(w_a > 0.04);
  CHECK(std::abs(w_a - w_b) <= 0.005 * w_a);
}

TEST_CASE("weighted empirical samples reduce to replicated points") {
  metrics::EmpiricalSample a;
  a.points = Eigen::MatrixXd(3, 1);
  a.points << 0.0, 1.0, 2.0;
  a.weights = Eigen::VectorXd(3);
  a.weights << 0.5, 0.25, 0.25;

  metrics::EmpiricalSample b;
  b.points = Eigen::MatrixXd(4, 1);
  b.points << 0.0, 0.0, 1.0, 2.0;
  b.weights = Eigen::VectorXd();

  CHECK(metrics::w1_sorted_1d(a, b, 4096) == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("sliced distance obeys translation and permutation bounds") {
  const int n = 500, d = 3;
  auto eng = rng::make_engine(909);
  metrics::EmpiricalSample a;
  a.points = Eigen::MatrixXd(n, d);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < d; ++j) a.points(i, j) = rng::standard_normal(eng);
  }
  metrics::EmpiricalSample shifted = a;
  const double s = 0.6;
  shifted.points.array() += s / std::sqrt(static_cast<double>(d));
  // |shift| = s; sliced W1 under translation is bounded by the shift norm.
  const double dist = metrics::sliced_w1(a, shifted, 64, 4);
  CHECK(dist <= s + 1e-9);
  CHECK(dist > 0.1 * s);

  // Permuting the rows leaves the empirical law unchanged.
  metrics::EmpiricalSample perm = a;
  perm.points = a.points.colwise().reverse().eval();
  CHECK(metrics::sliced_w1(a, perm, 32, 5) == doctest::Approx(0.0).epsilon(1e-10));
}

TEST_CASE("rate fit recovers exact power laws") {
  std::vector<std::pair<double, double>> half;
  for (double eta : {0.1, 0.05, 0.025, 0.0125}) half.emplace_back(eta, std::sqrt(eta));
  const auto fit = metrics::rate_fit(half);
  CHECK(fit.slope == doctest::Approx(0.5).epsilon(1e-10));
  CHECK(fit.intercept == doctest::Approx(0.0).epsilon(1e-10));
  CHECK(fit.r2 == doctest::Approx(1.0).epsilon(1e-10));

  std::vector<std::pair<double, double>> flat;
  for (double eta : {0.1, 0.05, 0.025}) flat.emplace_back(eta, 0.37);
  CHECK(metrics::rate_fit(flat).slope == doctest::Approx(0.0).epsilon(1e-10));

  CHECK_THROWS_AS((void)metrics::rate_fit({{0.1, 1.0}}), metrics::DegenerateInput);
  CHECK_THROWS_AS((void)metrics::rate_fit({{0.1, 1.0}, {0.1, 2.0}}),
                  metrics::DegenerateInput);
  CHECK_THROWS_AS((void)metrics::rate_fit({{0.1, -1.0}, {0.05, 1.0}}),
                  metrics::DegenerateInput);
}

TEST_CASE("dimension mismatches are rejected") {
  metrics::EmpiricalSample a;
  a.points = Eigen::MatrixXd::Zero(4, 2);
  metrics::EmpiricalSample b;
  b.points = Eigen::MatrixXd::Zero(4, 3);
  CHECK_THROWS_AS((void)metrics::sliced_w1(a, b, 8, 1), metrics::DimensionMismatch);
  CHECK_THROWS_AS((void)metrics::w1_sorted_1d(std::vector<double>{},
                                              std::vector<double>{1.0}),
                  metrics::DegenerateInput);
}
