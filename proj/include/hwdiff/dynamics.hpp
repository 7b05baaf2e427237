#pragma once

#include <Eigen/Dense>
#include <functional>
#include <stdexcept>

#include "hwdiff/model.hpp"

// Exact and mollified drift fields, their Jacobians, and the diffusion
// generator A f = <grad f, g> + 1/2 <sigma sigma', hess f>_HS.
//
// The mollification replaces the hinge (e'x)^+ in the drift by the C^1 ramp
// rho_eps, which matches the hinge outside [-eps, eps] and interpolates with
// a quartic inside, so the smoothed field g_eps stays within c_op * eps of g
// everywhere and has a globally bounded Jacobian.
namespace hwdiff::dynamics {

class BadEpsilon : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class AsymmetricHessian : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Smoothed hinge: 0 for y < -eps, y for y > eps, and
// 3eps/16 - y^4/(16 eps^3) + 3y^2/(8 eps) + y/2 on [-eps, eps].
// Requires eps in (0,1); derivative is bounded by 1.
double rho_eps(double y, double eps);
double rho_eps_prime(double y, double eps);

struct MollifiedDrift {
  model::DiffusionParams params;
  double epsilon = 0.0;  // mollification width, in (0,1)

  MollifiedDrift(model::DiffusionParams params_in, double epsilon_in);
};

// g_eps(x) = -beta p - R x + rho_eps(e'x) (R - alpha I) p.
Eigen::VectorXd mollified_drift(const MollifiedDrift& md, const Eigen::VectorXd& x);

// Exact Jacobian of the mollified field:
// grad g_eps(x) = -R + rho_eps'(e'x) (R - alpha I) p e'.
Eigen::MatrixXd mollified_jacobian(const MollifiedDrift& md, const Eigen::VectorXd& x);

// Caller-supplied second-order data of a test function at a point.
struct C2Eval {
  double value = 0.0;
  Eigen::VectorXd grad;
  Eigen::MatrixXd hess;
};

using C2Function = std::function<C2Eval(const Eigen::VectorXd&)>;

struct GeneratorInput {
  C2Function f;       // supplies value/gradient/Hessian
  Eigen::VectorXd x;  // evaluation point
};

// A f(x) with the exact (unmollified) drift.  Throws AsymmetricHessian if the
// supplied Hessian is asymmetric beyond 1e-9 (relative to its magnitude).
double generator_apply(const model::DiffusionParams& params, const GeneratorInput& gi);

}  // namespace hwdiff::dynamics
