#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>

// Phase-type queue primitives and the parameters of the limiting diffusion
//
//   dX_t = g(X_t) dt + sigma dB_t,
//   g(x) = -beta*p - R*x + (e'x)^+ (R - alpha*I)*p,
//
// which arises for G/Ph/n+GI queues in the Halfin-Whitt regime.  This module
// validates the primitives (routing matrix P, service rates v, initial phase
// distribution p, patience rate alpha, slack beta, arrival variability c_a^2)
// and derives R, the phase-mix vector gamma, and the diffusion covariance
// sigma*sigma'.
namespace hwdiff::model {

class ModelError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A field of the model fails its domain invariant; the message carries the
// JSON-style path of the offending entry (e.g. "$.P[0][1]").
class ValidationError : public ModelError {
 public:
  using ModelError::ModelError;
};

// The phase distribution does not have unit mean (zeta != 1) and automatic
// rescaling was not requested.
class NonUnitMeanPhase : public ModelError {
 public:
  using ModelError::ModelError;
};

// I - P is singular or too ill-conditioned to invert reliably.
class SingularRouting : public ModelError {
 public:
  using ModelError::ModelError;
};

// The derived covariance sigma*sigma' is not uniformly elliptic.
class NonEllipticCovariance : public ModelError {
 public:
  using ModelError::ModelError;
};

struct PhaseTypeModel {
  int d = 0;               // number of phases (>= 1)
  Eigen::MatrixXd P;       // d x d sub-stochastic routing matrix, zero diagonal
  Eigen::VectorXd v;       // service rate per phase (> 0)
  Eigen::VectorXd p;       // initial phase distribution (simplex)
  double alpha = 0.0;      // patience rate (> 0)
  double beta = 0.0;       // capacity slack (any sign)
  double ca2 = 0.0;        // arrival variability c_a^2 (> 0)

  // Throws ValidationError naming the offending field if any invariant fails.
  void validate() const;
};

struct DiffusionParams {
  int d = 0;
  Eigen::MatrixXd R;               // (I - P') diag(v)
  Eigen::VectorXd p;               // initial phase distribution (carried through)
  double zeta = 0.0;               // 1 / (e' R^{-1} p): reciprocal mean phase time
  Eigen::VectorXd gamma;           // zeta * R^{-1} p, satisfies e'gamma = 1
  Eigen::MatrixXd Sigma;           // diffusion covariance sigma*sigma'
  Eigen::MatrixXd sigma_factor;    // symmetric PSD square root of Sigma
  Eigen::VectorXd drift_constant;  // -beta * p
  Eigen::MatrixXd drift_linear;    // -R
  Eigen::VectorXd drift_kink;      // (R - alpha I) p, switched on by (e'x)^+
  double min_eig = 0.0;            // smallest eigenvalue of Sigma
  double alpha = 0.0;              // retained for reporting and 1-D reductions
  double beta = 0.0;
};

// Derives R, zeta, gamma and Sigma from the primitives.  The limiting
// diffusion assumes a unit-mean phase distribution; if zeta != 1 (beyond
// 1e-9) the call throws NonUnitMeanPhase unless `normalize` is set, in which
// case v is rescaled to v/zeta (which forces zeta = 1) and the derivation is
// repeated.
DiffusionParams derive_params(const PhaseTypeModel& m, bool normalize = false);

// Same derivation but without the unit-mean gate; used for reporting tools
// that must show zeta for models that have not been normalized yet.
DiffusionParams derive_params_unchecked(const PhaseTypeModel& m);

// Piecewise-linear drift g(x) = -beta*p - R*x + (e'x)^+ (R - alpha I) p.
// `drift_into` is the allocation-free form used inside step loops.
inline void drift_into(const DiffusionParams& params, const Eigen::VectorXd& x,
                       Eigen::VectorXd& out) {
  out.noalias() = params.drift_linear * x;
  out += params.drift_constant;
  const double s = x.sum();
  if (s > 0.0) out.noalias() += s * params.drift_kink;
}

Eigen::VectorXd drift(const DiffusionParams& params, const Eigen::VectorXd& x);

// Growth/Lipschitz constants of the drift:
//   c_op       = ||R||_op + ||(R - alpha I) p e'||_op   (Lipschitz bound)
//   c_tilde_op = c_op + ||Sigma||_F + 1 + ||R - alpha I||_op + |beta|,
// so |g(x)| <= c_tilde_op * (1 + |x|).  c_m(m) = 2 m^2 c_tilde_op is the
// moment-growth constant used by diagnostics.
struct GrowthBounds {
  double c_op = 0.0;
  double c_tilde_op = 0.0;
  double c_m(double m) const { return 2.0 * m * m * c_tilde_op; }
};

GrowthBounds linear_growth_bound(const DiffusionParams& params);

// JSON ingestion.  The document must be an object with keys
// {"d","P","v","p","alpha","beta","ca2"}; P is row-major (array of rows).
// Validation errors carry the JSON path of the offending field.
PhaseTypeModel parse_model_json(const std::string& json_text);
PhaseTypeModel load_model_file(const std::string& path);

}  // namespace hwdiff::model
