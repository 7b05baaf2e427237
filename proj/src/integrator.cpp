#include "hwdiff/integrator.hpp"

#include <algorithm>
#include <cmath>

namespace hwdiff::integrator {

Schedule plan_schedule(double delta, double varsigma, double safety) {
  if (!(delta > 0.0) || !(delta < 1.0)) {
    throw BadDelta("plan_schedule: delta must lie in (0,1)");
  }
  if (!(varsigma > 0.0) || !(varsigma < 1.0)) {
    throw BadVarsigma("plan_schedule: varsigma must lie in (0,1)");
  }
  if (!(safety > 0.0)) {
    throw BadDelta("plan_schedule: safety must be positive");
  }
  Schedule s;
  s.delta = delta;
  s.varsigma = varsigma;
  s.safety = safety;
  s.eta = std::pow(delta, 2.0 / (1.0 - varsigma));
  const double horizon = safety * std::abs(std::log(delta)) / s.eta;
  s.n_steps = static_cast<std::uint64_t>(std::ceil(horizon));
  return s;
}

void EmScheduleConfig::validate(int d) const {
  if (!(eta > 0.0) || !(eta < 1.0)) {
    throw std::invalid_argument("EmScheduleConfig: eta must lie in (0,1)");
  }
  if (n_steps > 0 && burn_in >= n_steps) {
    throw std::invalid_argument("EmScheduleConfig: burn_in must be < n_steps");
  }
  if (x0.size() != d) {
    throw std::invalid_argument("EmScheduleConfig: x0 dimension mismatch");
  }
  if (!x0.allFinite()) {
    throw std::invalid_argument("EmScheduleConfig: x0 must be finite");
  }
}

Eigen::VectorXd em_step(const model::DiffusionParams& params, const Eigen::VectorXd& x,
                        double eta, const Eigen::VectorXd& xi) {
  if (xi.size() != x.size()) {
    throw std::invalid_argument("em_step: xi dimension mismatch");
  }
  Eigen::VectorXd out = x + eta * model::drift(params, x);
  out.noalias() += std::sqrt(eta) * (params.sigma_factor * xi);
  if (!out.allFinite()) throw NonFinite(0);
  return out;
}

ChainRunner::ChainRunner(const model::DiffusionParams& params, double eta,
                         const Eigen::VectorXd& x0, std::uint64_t seed, std::uint64_t stream)
    : params_(params),
      eta_(eta),
      x_(x0),
      gx_(params.d),
      xi_(params.d),
      noise_(params.d),
      eng_(rng::make_engine(seed, stream)) {
  if (!(eta > 0.0) || !std::isfinite(eta)) {
    throw std::invalid_argument("ChainRunner: eta must be positive and finite");
  }
  if (x0.size() != params.d) {
    throw std::invalid_argument("ChainRunner: x0 dimension mismatch");
  }
  max_abs_ = x0.size() > 0 ? x0.cwiseAbs().maxCoeff() : 0.0;
}

std::uint64_t default_burn_in(std::uint64_t n_steps, double eta, std::optional<double> c1) {
  const std::uint64_t tenth = n_steps / 10;
  if (c1 && *c1 > 0.0 && eta > 0.0) {
    const double relax = std::ceil(10.0 / (*c1 * eta));
    const auto cap = static_cast<std::uint64_t>(std::min(relax, 9.0e18));
    return std::min(tenth, cap);
  }
  return tenth;
}

}  // namespace hwdiff::integrator
