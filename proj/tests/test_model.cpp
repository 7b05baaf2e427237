#include <cmath>
#include <fstream>

#include <doctest.h>
#include <Eigen/Dense>

#include "hwdiff/model.hpp"
#include "hwdiff/rng.hpp"

using namespace hwdiff;

namespace {

model::PhaseTypeModel one_phase_model(double alpha = 1.0, double beta = 1.0, double ca2 = 1.0) {
  model::PhaseTypeModel m;
  m.d = 1;
  m.P = Eigen::MatrixXd::Zero(1, 1);
  m.v = Eigen::VectorXd::Ones(1);
  m.p = Eigen::VectorXd::Ones(1);
  m.alpha = alpha;
  m.beta = beta;
  m.ca2 = ca2;
  return m;
}

model::PhaseTypeModel two_phase_example() {
  model::PhaseTypeModel m;
  m.d = 2;
  m.P = Eigen::MatrixXd::Zero(2, 2);
  m.P(0, 1) = 0.2;
  m.v = Eigen::VectorXd(2);
  m.v << 1.0, 2.0;
  m.p = Eigen::VectorXd(2);
  m.p << 1.0, 0.0;
  m.alpha = 0.5;
  m.beta = 1.0;
  m.ca2 = 1.0;
  return m;
}

model::PhaseTypeModel random_model(int d, std::uint64_t seed) {
  auto eng = rng::make_engine(seed);
  model::PhaseTypeModel m;
  m.d = d;
  m.P = Eigen::MatrixXd::Zero(d, d);
  for (int i = 0; i < d; ++i) {
    double total = 0.0;
    for (int j = 0; j < d; ++j) {
      if (j == i) continue;
      m.P(i, j) = 0.5 * rng::uniform_unit(eng) / d;
      total += m.P(i, j);
    }
    CHECK(total < 1.0);
  }
  m.v = Eigen::VectorXd(d);
  m.p = Eigen::VectorXd(d);
  double psum = 0.0;
  for (int i = 0; i < d; ++i) {
    m.v[i] = 0.5 + 2.0 * rng::uniform_unit(eng);
    m.p[i] = rng::uniform_unit(eng);
    psum += m.p[i];
  }
  m.p /= psum;
  m.alpha = 0.25 + rng::uniform_unit(eng);
  m.beta = -1.0 + 2.0 * rng::uniform_unit(eng);
  m.ca2 = 0.5 + rng::uniform_unit(eng);
  return m;
}

}  // namespace

TEST_CASE("single-phase derivation is exact") {
  // Frozen by hand: R = [v1] = [1], zeta = 1, gamma = [1],
  // Sigma = p ca2 + gamma v = ca2 + 1 = 2.
  const auto params = model::derive_params(one_phase_model());
  CHECK(params.d == 1);
  CHECK(params.R(0, 0) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(params.zeta == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(params.gamma[0] == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(params.Sigma(0, 0) == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(params.min_eig == doctest::Approx(2.0).epsilon(1e-12));
  // sigma_factor squares back to Sigma.
  CHECK(params.sigma_factor(0, 0) * params.sigma_factor(0, 0) ==
        doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("two-phase example matches the hand derivation") {
  // R = (I - P') diag(v): R = [[1, 0], [-0.2, 2]].
  // R^{-1} p = [1, 0.1]', so 1/zeta = 1.1.
  const auto m = two_phase_example();
  const auto raw = model::derive_params_unchecked(m);
  CHECK(raw.R(0, 0) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(raw.R(0, 1) == doctest::Approx(0.0).epsilon(1e-14));
  CHECK(raw.R(1, 0) == doctest::Approx(-0.2).epsilon(1e-14));
  CHECK(raw.R(1, 1) == doctest::Approx(2.0).epsilon(1e-14));
  CHECK(raw.zeta == doctest::Approx(1.0 / 1.1).epsilon(1e-12));
  CHECK(raw.gamma.sum() == doctest::Approx(1.0).epsilon(1e-12));

  // Unit-mean gate: raw model must be rejected, normalization must fix it.
  CHECK_THROWS_AS((void)model::derive_params(m, false), model::NonUnitMeanPhase);
  const auto norm = model::derive_params(m, true);
  CHECK(norm.zeta == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(norm.gamma.sum() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("gamma sums to one for random valid models") {
  for (std::uint64_t s = 0; s < 20; ++s) {
    const int d = 1 + static_cast<int>(s % 5);
    const auto m = random_model(d, 1000 + s);
    const auto params = model::derive_params_unchecked(m);
    CHECK(params.gamma.sum() == doctest::Approx(1.0).epsilon(1e-10));
    // Sigma is symmetric PSD with a strictly positive smallest eigenvalue.
    CHECK((params.Sigma - params.Sigma.transpose()).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(params.min_eig > 0.0);
    // sigma_factor * sigma_factor' == Sigma.
    const Eigen::MatrixXd rec = params.sigma_factor * params.sigma_factor.transpose();
    CHECK((rec - params.Sigma).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("drift satisfies its Lipschitz and growth bounds") {
  for (std::uint64_t s = 0; s < 10; ++s) {
    const int d = 2 + static_cast<int>(s % 3);
    const auto m = random_model(d, 2000 + s);
    const auto params = model::derive_params(m, true);
    const auto bounds = model::linear_growth_bound(params);
    auto eng = rng::make_engine(500 + s);
    for (int trial = 0; trial < 200; ++trial) {
      Eigen::VectorXd x(d), y(d);
      for (int i = 0; i < d; ++i) {
        x[i] = 10.0 * (rng::uniform_unit(eng) - 0.5);
        y[i] = 10.0 * (rng::uniform_unit(eng) - 0.5);
      }
      const Eigen::VectorXd gx = model::drift(params, x);
      const Eigen::VectorXd gy = model::drift(params, y);
      CHECK((gx - gy).norm() <= bounds.c_op * (x - y).norm() * (1.0 + 1e-12) + 1e-12);
      CHECK(gx.norm() <= bounds.c_tilde_op * (1.0 + x.norm()) * (1.0 + 1e-12));
    }
  }
}

TEST_CASE("operator constant is exact in one dimension") {
  // d=1, R=[1], p=[1]: C_op = ||R|| + |(R - alpha I) p| * 1 = 1 + |1 - alpha|.
  for (double alpha : {0.25, 1.0, 3.0}) {
    const auto params = model::derive_params(one_phase_model(alpha));
    const auto bounds = model::linear_growth_bound(params);
    CHECK(bounds.c_op == doctest::Approx(1.0 + std::abs(1.0 - alpha)).epsilon(1e-12));
  }
}

TEST_CASE("validation rejects malformed models") {
  auto m = two_phase_example();
  m.v[0] = -1.0;
  CHECK_THROWS_AS(m.validate(), model::ValidationError);

  m = two_phase_example();
  m.P(0, 1) = 1.5;  // row sum >= 1
  CHECK_THROWS_AS(m.validate(), model::ValidationError);

  m = two_phase_example();
  m.p[0] = 0.5;  // p no longer sums to 1
  CHECK_THROWS_AS(m.validate(), model::ValidationError);

  m = two_phase_example();
  m.alpha = 0.0;
  CHECK_THROWS_AS(m.validate(), model::ValidationError);

  m = two_phase_example();
  m.ca2 = -0.5;
  CHECK_THROWS_AS(m.validate(), model::ValidationError);
}

TEST_CASE("model JSON round trip and error paths") {
  const char* good = R"({"d":2,"P":[[0,0.2],[0,0]],"v":[1,2],"p":[1,0],
                         "alpha":0.5,"beta":1.0,"ca2":1.0})";
  const auto m = model::parse_model_json(good);
  CHECK(m.d == 2);
  CHECK(m.P(0, 1) == doctest::Approx(0.2));
  CHECK(m.v[1] == doctest::Approx(2.0));

  CHECK_THROWS_AS((void)model::parse_model_json("{not json"), model::ValidationError);
  CHECK_THROWS_AS((void)model::parse_model_json(R"({"d":2})"), model::ValidationError);
  const char* bad_shape = R"({"d":2,"P":[[0,0.2]],"v":[1,2],"p":[1,0],
                              "alpha":0.5,"beta":1.0,"ca2":1.0})";
  CHECK_THROWS_AS((void)model::parse_model_json(bad_shape), model::ValidationError);
  CHECK_THROWS_AS((void)model::load_model_file("/nonexistent/path/model.json"),
                  model::ValidationError);
}

TEST_CASE("drift kink sits on the total-headcount hyperplane") {
  const auto m = random_model(3, 77);
  const auto params = model::derive_params(m, true);
  auto eng = rng::make_engine(78);
  for (int trial = 0; trial < 50; ++trial) {
    Eigen::VectorXd x(3);
    for (int i = 0; i < 3; ++i) x[i] = 4.0 * (rng::uniform_unit(eng) - 0.5);
    // Where e'x <= 0 the drift is affine: g(x) = -beta p - R x.
    const double s = x.sum();
    const Eigen::VectorXd g = model::drift(params, x);
    const Eigen::VectorXd affine = params.drift_constant + params.drift_linear * x;
    if (s <= 0.0) {
      CHECK((g - affine).cwiseAbs().maxCoeff() < 1e-14);
    } else {
      const Eigen::VectorXd expect = affine + s * params.drift_kink;
      CHECK((g - expect).cwiseAbs().maxCoeff() < 1e-12);
    }
  }
}
