#include "hwdiff/dynamics.hpp"

#include <cmath>
#include <string>

namespace hwdiff::dynamics {

namespace {

void check_epsilon(double eps) {
  if (!(eps > 0.0) || !(eps < 1.0) || !std::isfinite(eps))
    throw BadEpsilon("epsilon must lie in (0,1), got " + std::to_string(eps));
}

}  // namespace

double rho_eps(double y, double eps) {
  check_epsilon(eps);
  if (y < -eps) return 0.0;
  if (y > eps) return y;
  const double y2 = y * y;
  return 3.0 * eps / 16.0 - y2 * y2 / (16.0 * eps * eps * eps) + 3.0 * y2 / (8.0 * eps) +
         0.5 * y;
}

double rho_eps_prime(double y, double eps) {
  check_epsilon(eps);
  if (y < -eps) return 0.0;
  if (y > eps) return 1.0;
  return -y * y * y / (4.0 * eps * eps * eps) + 3.0 * y / (4.0 * eps) + 0.5;
}

MollifiedDrift::MollifiedDrift(model::DiffusionParams params_in, double epsilon_in)
    : params(std::move(params_in)), epsilon(epsilon_in) {
  check_epsilon(epsilon);
}

Eigen::VectorXd mollified_drift(const MollifiedDrift& md, const Eigen::VectorXd& x) {
  Eigen::VectorXd out = md.params.drift_constant;
  out.noalias() += md.params.drift_linear * x;
  out.noalias() += rho_eps(x.sum(), md.epsilon) * md.params.drift_kink;
  return out;
}

Eigen::MatrixXd mollified_jacobian(const MollifiedDrift& md, const Eigen::VectorXd& x) {
  Eigen::MatrixXd jac = md.params.drift_linear;
  const double slope = rho_eps_prime(x.sum(), md.epsilon);
  if (slope != 0.0) jac.noalias() += slope * md.params.drift_kink * Eigen::RowVectorXd::Ones(md.params.d);
  return jac;
}

double generator_apply(const model::DiffusionParams& params, const GeneratorInput& gi) {
  const C2Eval ev = gi.f(gi.x);
  const double scale = std::max(1.0, ev.hess.cwiseAbs().maxCoeff());
  const double asym = (ev.hess - ev.hess.transpose()).cwiseAbs().maxCoeff();
  if (asym > 1e-9 * scale)
    throw AsymmetricHessian("generator_apply(): Hessian asymmetry " + std::to_string(asym) +
                            " exceeds tolerance");
  const Eigen::VectorXd g = model::drift(params, gi.x);
  return ev.grad.dot(g) + 0.5 * params.Sigma.cwiseProduct(ev.hess).sum();
}

}  // namespace hwdiff::dynamics
