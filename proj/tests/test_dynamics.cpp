#include <cmath>

#include <doctest.h>
#include <Eigen/Dense>

#include "hwdiff/dynamics.hpp"
#include "hwdiff/model.hpp"
#include "hwdiff/rng.hpp"

using namespace hwdiff;

namespace {

model::DiffusionParams make_params(int d, std::uint64_t seed) {
  auto eng = rng::make_engine(seed);
  model::PhaseTypeModel m;
  m.d = d;
  m.P = Eigen::MatrixXd::Zero(d, d);
  for (int i = 0; i < d; ++i) {
    for (int j = 0; j < d; ++j) {
      if (i != j) m.P(i, j) = 0.4 * rng::uniform_unit(eng) / d;
    }
  }
  m.v = Eigen::VectorXd(d);
  m.p = Eigen::VectorXd(d);
  double ps = 0.0;
  for (int i = 0; i < d; ++i) {
    m.v[i] = 0.5 + rng::uniform_unit(eng);
    m.p[i] = 0.1 + rng::uniform_unit(eng);
    ps += m.p[i];
  }
  m.p /= ps;
  m.alpha = 0.5 + rng::uniform_unit(eng);
  m.beta = 1.0;
  m.ca2 = 1.0;
  return model::derive_params(m, true);
}

}  // namespace

TEST_CASE("mollifier values at the landmark points") {
  for (double eps : {0.5, 0.1, 0.01}) {
    CHECK(dynamics::rho_eps(-2.0 * eps, eps) == doctest::Approx(0.0));
    CHECK(dynamics::rho_eps(-eps, eps) == doctest::Approx(0.0).epsilon(1e-14));
    CHECK(dynamics::rho_eps(0.0, eps) == doctest::Approx(3.0 * eps / 16.0).epsilon(1e-14));
    CHECK(dynamics::rho_eps(eps, eps) == doctest::Approx(eps).epsilon(1e-14));
    CHECK(dynamics::rho_eps(2.0 * eps, eps) == doctest::Approx(2.0 * eps).epsilon(1e-14));
    CHECK(dynamics::rho_eps_prime(0.0, eps) == doctest::Approx(0.5).epsilon(1e-14));
    CHECK(dynamics::rho_eps_prime(-eps, eps) == doctest::Approx(0.0).epsilon(1e-14));
    CHECK(dynamics::rho_eps_prime(eps, eps) == doctest::Approx(1.0).epsilon(1e-14));
  }
}

TEST_CASE("mollifier is C1 across the junctions") {
  const double eps = 0.05;
  const double h = 1e-7;
  for (double y0 : {-eps, eps}) {
    const double left = dynamics::rho_eps(y0 - h, eps);
    const double right = dynamics::rho_eps(y0 + h, eps);
    CHECK(std::abs(right - left) < 1e-6);
    const double dl = dynamics::rho_eps_prime(y0 - h, eps);
    const double dr = dynamics::rho_eps_prime(y0 + h, eps);
    CHECK(std::abs(dr - dl) < 1e-5);
  }
  // Derivative stays in [0, 1] over a fine grid (monotone, 1-Lipschitz limit).
  for (int i = 0; i <= 10000; ++i) {
    const double y = -2.0 * eps + 4.0 * eps * i / 10000.0;
    const double dv = dynamics::rho_eps_prime(y, eps);
    CHECK(dv >= -1e-12);
    CHECK(dv <= 1.0 + 1e-12);
  }
}

TEST_CASE("mollifier derivative matches finite differences") {
  const double eps = 0.1;
  const double h = 1e-6;
  for (int i = 0; i <= 200; ++i) {
    const double y = -0.3 + 0.6 * i / 200.0;
    const double fd = (dynamics::rho_eps(y + h, eps) - dynamics::rho_eps(y - h, eps)) / (2 * h);
    CHECK(dynamics::rho_eps_prime(y, eps) == doctest::Approx(fd).epsilon(1e-4));
  }
}

TEST_CASE("mollified drift approximates the exact drift linearly in eps") {
  const auto params = make_params(3, 42);
  const auto bounds = model::linear_growth_bound(params);
  auto eng = rng::make_engine(43);
  for (double eps : {0.1, 0.01}) {
    const dynamics::MollifiedDrift md{params, eps};
    double worst = 0.0;
    for (int trial = 0; trial < 500; ++trial) {
      Eigen::VectorXd x(3);
      for (int i = 0; i < 3; ++i) x[i] = 6.0 * (rng::uniform_unit(eng) - 0.5);
      const double diff =
          (dynamics::mollified_drift(md, x) - model::drift(params, x)).norm();
      worst = std::max(worst, diff);
    }
    CHECK(worst <= bounds.c_op * eps * (1.0 + 1e-10));
  }
}

TEST_CASE("mollified drift error shrinks monotonically in eps at fixed points") {
  const auto params = make_params(2, 99);
  auto eng = rng::make_engine(100);
  for (int trial = 0; trial < 100; ++trial) {
    Eigen::VectorXd x(2);
    x[0] = 2.0 * (rng::uniform_unit(eng) - 0.5);
    x[1] = 2.0 * (rng::uniform_unit(eng) - 0.5);
    double prev = 1e300;
    for (double eps : {0.1, 0.05, 0.025}) {
      const dynamics::MollifiedDrift md{params, eps};
      const double err =
          (dynamics::mollified_drift(md, x) - model::drift(params, x)).norm();
      CHECK(err <= prev + 1e-12);
      prev = err;
    }
  }
}

TEST_CASE("mollified Jacobian matches finite differences") {
  const auto params = make_params(3, 7);
  const dynamics::MollifiedDrift md{params, 0.05};
  auto eng = rng::make_engine(8);
  const double h = 1e-6;
  for (int trial = 0; trial < 50; ++trial) {
    Eigen::VectorXd x(3);
    for (int i = 0; i < 3; ++i) x[i] = 2.0 * (rng::uniform_unit(eng) - 0.5);
    const Eigen::MatrixXd J = dynamics::mollified_jacobian(md, x);
    for (int j = 0; j < 3; ++j) {
      Eigen::VectorXd xp = x, xm = x;
      xp[j] += h;
      xm[j] -= h;
      const Eigen::VectorXd col =
          (dynamics::mollified_drift(md, xp) - dynamics::mollified_drift(md, xm)) / (2 * h);
      for (int i = 0; i < 3; ++i) {
        CHECK(J(i, j) == doctest::Approx(col[i]).epsilon(5e-5));
      }
    }
  }
}

TEST_CASE("generator on coordinate functions returns the drift") {
  const auto params = make_params(3, 55);
  auto eng = rng::make_engine(56);
  for (int trial = 0; trial < 20; ++trial) {
    Eigen::VectorXd x(3);
    for (int i = 0; i < 3; ++i) x[i] = 4.0 * (rng::uniform_unit(eng) - 0.5);
    const Eigen::VectorXd g = model::drift(params, x);
    for (int i = 0; i < 3; ++i) {
      dynamics::C2Function f = [i](const Eigen::VectorXd& y) {
        dynamics::C2Eval e;
        e.value = y[i];
        e.grad = Eigen::VectorXd::Zero(y.size());
        e.grad[i] = 1.0;
        e.hess = Eigen::MatrixXd::Zero(y.size(), y.size());
        return e;
      };
      const double av = dynamics::generator_apply(params, {f, x});
      CHECK(av == doctest::Approx(g[i]).epsilon(1e-12));
    }
  }
}

TEST_CASE("generator on the squared norm matches the closed form") {
  // f = |x|^2: A f = 2 <x, g(x)> + tr(Sigma).
  const auto params = make_params(2, 31);
  auto eng = rng::make_engine(32);
  dynamics::C2Function f = [](const Eigen::VectorXd& y) {
    dynamics::C2Eval e;
    e.value = y.squaredNorm();
    e.grad = 2.0 * y;
    e.hess = 2.0 * Eigen::MatrixXd::Identity(y.size(), y.size());
    return e;
  };
  for (int trial = 0; trial < 20; ++trial) {
    Eigen::VectorXd x(2);
    x[0] = 3.0 * (rng::uniform_unit(eng) - 0.5);
    x[1] = 3.0 * (rng::uniform_unit(eng) - 0.5);
    const double expect = 2.0 * x.dot(model::drift(params, x)) + params.Sigma.trace();
    CHECK(dynamics::generator_apply(params, {f, x}) ==
          doctest::Approx(expect).epsilon(1e-10));
  }
}

TEST_CASE("generator rejects asymmetric Hessians") {
  const auto params = make_params(2, 61);
  dynamics::C2Function bad = [](const Eigen::VectorXd& y) {
    dynamics::C2Eval e;
    e.value = 0.0;
    e.grad = Eigen::VectorXd::Zero(y.size());
    e.hess = Eigen::MatrixXd::Zero(y.size(), y.size());
    e.hess(0, 1) = 1.0;  // not mirrored
    return e;
  };
  CHECK_THROWS_AS((void)dynamics::generator_apply(params, {bad, Eigen::VectorXd::Zero(2)}),
                  dynamics::AsymmetricHessian);
}

TEST_CASE("bad mollifier widths are rejected") {
  const auto params = make_params(1, 3);
  CHECK_THROWS_AS((dynamics::MollifiedDrift{params, 0.0}), dynamics::BadEpsilon);
  CHECK_THROWS_AS((dynamics::MollifiedDrift{params, -0.1}), dynamics::BadEpsilon);
  CHECK_THROWS_AS((dynamics::MollifiedDrift{params, 1.0}), dynamics::BadEpsilon);
}
