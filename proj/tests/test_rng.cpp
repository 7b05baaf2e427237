#include <cmath>
#include <set>
#include <vector>

#include <doctest.h>

#include "hwdiff/rng.hpp"

using namespace hwdiff;

TEST_CASE("inverse normal CDF inverts the normal CDF") {
  // Round-trip oracle: normal_cdf is an independent implementation (erfc),
  // so agreement pins both down.
  for (double p : {1e-10, 1e-6, 0.01, 0.1, 0.25, 0.5, 0.75, 0.9, 0.99, 1.0 - 1e-6}) {
    const double z = rng::inverse_normal_cdf(p);
    CHECK(rng::normal_cdf(z) == doctest::Approx(p).epsilon(1e-9));
  }
  CHECK(rng::inverse_normal_cdf(0.5) == doctest::Approx(0.0).epsilon(1e-14));
  // Known quantile values.
  CHECK(rng::inverse_normal_cdf(0.975) == doctest::Approx(1.959963984540054).epsilon(1e-12));
  CHECK(rng::inverse_normal_cdf(0.84134474606854293) == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(std::isnan(rng::inverse_normal_cdf(0.0)) == false);
  CHECK(rng::inverse_normal_cdf(1e-300) < -30.0);
}

TEST_CASE("derived stream seeds are distinct and deterministic") {
  std::set<std::uint64_t> seen;
  for (std::uint64_t s = 0; s < 64; ++s) {
    seen.insert(rng::derive_stream_seed(12345, s));
  }
  CHECK(seen.size() == 64);
  CHECK(rng::derive_stream_seed(12345, 7) == rng::derive_stream_seed(12345, 7));
  CHECK(rng::derive_stream_seed(12345, 7) != rng::derive_stream_seed(12346, 7));
}

TEST_CASE("engines from different streams produce different sequences") {
  auto e0 = rng::make_engine(99, 0);
  auto e1 = rng::make_engine(99, 1);
  int differ = 0;
  for (int i = 0; i < 16; ++i) {
    if (e0() != e1()) ++differ;
  }
  CHECK(differ > 0);

  auto e0b = rng::make_engine(99, 0);
  auto e0c = rng::make_engine(99, 0);
  for (int i = 0; i < 16; ++i) CHECK(e0b() == e0c());
}

TEST_CASE("uniform_unit stays in the open unit interval") {
  auto eng = rng::make_engine(7);
  double lo = 1.0, hi = 0.0, sum = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double u = rng::uniform_unit(eng);
    CHECK(u > 0.0);
    CHECK(u < 1.0);
    lo = std::min(lo, u);
    hi = std::max(hi, u);
    sum += u;
  }
  CHECK(lo < 0.01);
  CHECK(hi > 0.99);
  CHECK(sum / n == doctest::Approx(0.5).epsilon(0.01));
}

TEST_CASE("standard normals have the right first moments") {
  auto eng = rng::make_engine(11);
  const int n = 400000;
  double s1 = 0.0, s2 = 0.0, s3 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double z = rng::standard_normal(eng);
    s1 += z;
    s2 += z * z;
    s3 += z * z * z;
  }
  s1 /= n;
  s2 /= n;
  s3 /= n;
  // SE of the mean is ~1/sqrt(n) = 1.6e-3; allow 4 sigma.
  CHECK(std::abs(s1) < 6.5e-3);
  CHECK(s2 == doctest::Approx(1.0).epsilon(0.01));
  CHECK(std::abs(s3) < 0.04);
}
