#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <vector>

#include "hwdiff/dynamics.hpp"
#include "hwdiff/model.hpp"

// Quantitative validators for the diffusion: a Lyapunov drift certificate
// (quadratic form glued through a C^2 spline), Jacobian flows of the
// mollified dynamics, an integration-by-parts (Bismut-type) gradient
// estimator, and the weighted occupation time of the kink band.
namespace hwdiff::diagnostics {

class NoFeasibleQ : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DriftConditionViolated : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class BadInterval : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// C^2 spline used to blend the quadratic Lyapunov form across the kink:
// phi(z) = z for z >= 0, -1/2 for z <= -1, and -z^4/2 - z^3 + z between.
double phi_spline(double z);
double phi_spline_prime(double z);
double phi_spline_second(double z);

// ---------------------------------------------------------------------------
// Lyapunov certificate

struct LyapunovSpec {
  Eigen::MatrixXd Qtilde;  // symmetric positive definite, sum |Q_ij| = 1
  double kappa = 1.0;
  double c2hat = 0.0;
  double cond1_eig = 0.0;  // max eigenvalue of Q(-R) + (-R)'Q   (< 0 required)
  double cond2_eig = 0.0;  // max eigenvalue of the projected form (<= tol required)
};

// Solves Q(-R) + (-R)'Q = -D (D = I first, then a small diagonal grid),
// normalizes by the entrywise 1-norm, and returns the first candidate
// satisfying both eigenvalue conditions.
LyapunovSpec solve_qtilde(const model::DiffusionParams& params);

struct LyapunovEval {
  double value = 0.0;
  Eigen::VectorXd grad;
  Eigen::MatrixXd hess;
};

// V(y) = (e'y)^2 + kappa * w'Qw + c2hat with w = y - p*phi(e'y); exact
// analytic gradient and Hessian.
LyapunovEval lyapunov_value_grad_hess(const LyapunovSpec& spec,
                                      const model::DiffusionParams& params,
                                      const Eigen::VectorXd& y);

// Radial evaluation grid: n_radii shells up to r_max crossed with
// n_directions unit vectors (signs for d=1, uniform angles for d=2, seeded
// random directions for d >= 3).
std::vector<Eigen::VectorXd> make_radial_grid(int d, double r_max, int n_radii,
                                              int n_directions, std::uint64_t seed);

struct DriftReport {
  double c1 = 0.0;       // drift rate: AV <= -c1 V + c1_breve holds on the grid
  double c1_breve = 0.0;
  double margin = 0.0;   // reported stability margin (= c1)
  double c1_hat = 0.0;   // fitted lower quadratic bound: V >= c1_hat |y|^2 (+shift)
  double C1_hat = 0.0;   // fitted upper quadratic bound coefficient
  double C2_hat = 0.0;   // fitted upper bound offset
  std::size_t n_grid = 0;
  std::size_t shell_count = 0;
  double r_max = 0.0;
};

// Evaluates the generator on V across the grid and fits the drift
// inequality.  c1 is the largest rate for which AV + c1 V <= 0 on the outer
// shell (|y| >= r_max/2); c1_breve is then the smallest feasible offset over
// the whole grid.  Throws DriftConditionViolated when no positive rate fits.
DriftReport lyapunov_check(const LyapunovSpec& spec, const model::DiffusionParams& params,
                           std::span<const Eigen::VectorXd> grid);

// ---------------------------------------------------------------------------
// Jacobian flow of the mollified dynamics

// Matrix exponential: closed form for d <= 2, Pade scaling-and-squaring above.
Eigen::MatrixXd matrix_exp(const Eigen::MatrixXd& m);

// Time-ordered product of per-step factors exp(Dg_eps(X_k) * eta) for
// k = s_idx .. t_idx-1 (later times multiply on the left), i.e. the solution
// of dJ/dr = Dg_eps(X_r) J along the recorded path.  exact=false replaces
// each factor with the first-order Euler factor I + eta * Dg_eps.
Eigen::MatrixXd jacobian_flow(const dynamics::MollifiedDrift& md,
                              std::span<const Eigen::VectorXd> path, double eta,
                              std::size_t s_idx, std::size_t t_idx, bool exact = true);

struct GradientEstimate {
  double estimate = 0.0;
  double std_error = 0.0;
  std::uint64_t n_paths = 0;
};

// Directional derivative grad_u E[psi(X_t^x)] of the mollified dynamics via
// the integration-by-parts weight
//   I_u(t) = (1/t) sum_k < sigma^{-1} J_{0,k eta} u, Delta B_{k+1} >,
// computed with the SAME Brownian increments that drive the path (the
// coupling is the point of the formula; fresh noise would be silently wrong).
GradientEstimate bismut_gradient(const model::DiffusionParams& params, double eps,
                                 const Eigen::VectorXd& x, const Eigen::VectorXd& u,
                                 double t, std::uint64_t n_paths, double eta,
                                 const std::function<double(const Eigen::VectorXd&)>& psi,
                                 std::uint64_t seed, int threads = 1, bool exact = true);

// Central finite difference (E[psi(X_t^{x+delta u})] - E[psi(X_t^{x-delta u})])
// / (2 delta) with common random numbers across the two branches.
GradientEstimate fd_gradient(const model::DiffusionParams& params, double eps,
                             const Eigen::VectorXd& x, const Eigen::VectorXd& u, double t,
                             std::uint64_t n_paths, double eta,
                             const std::function<double(const Eigen::VectorXd&)>& psi,
                             std::uint64_t seed, double delta, int threads = 1);

// ---------------------------------------------------------------------------
// Occupation time of the kink band

struct OccupationEstimate {
  double estimate = 0.0;
  double std_error = 0.0;
  std::uint64_t n_paths = 0;
};

// E[ L_t ] with L_t = eta * sum_k (1 - (e'X_k)^2/eps^2) 1{|e'X_k| <= eps}
// along the exact (non-mollified) chain started at x.
OccupationEstimate occupation_time(const model::DiffusionParams& params,
                                   const Eigen::VectorXd& x, double t, double eps_occ,
                                   std::uint64_t n_paths, double eta, std::uint64_t seed,
                                   int threads = 1);

struct PhiEpsEval {
  double value = 0.0;
  double first = 0.0;
  double second = 0.0;
};

// Antiderivative pair for the occupation integrand: second derivative equals
// (1 - y^2/eps^2) 1{|y| <= eps} exactly.
PhiEpsEval occupation_phi_eps(double y, double eps);

}  // namespace hwdiff::diagnostics
