#include "hwdiff/model.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace hwdiff::model {

namespace {

constexpr double kUnitMeanTol = 1e-9;      // |zeta - 1| beyond this needs normalize
constexpr double kConditionBound = 1e12;   // invertibility gate for I - P
constexpr double kSimplexTol = 1e-9;       // |sum p - 1|
constexpr double kDiagonalTol = 1e-15;     // |P_ii|
constexpr double kRowSumTol = 1e-12;       // row sums of P may exceed 1 by this

std::string ordinal(int i) { return std::to_string(i); }

// Largest singular value = operator 2-norm.
double operator_norm(const Eigen::MatrixXd& m) {
  if (m.rows() == 1 && m.cols() == 1) return std::fabs(m(0, 0));
  return m.jacobiSvd().singularValues()(0);
}

// Rank-one covariance block from a probability row q: diag(q) - q q'.
Eigen::MatrixXd multinomial_cov(const Eigen::VectorXd& q) {
  Eigen::MatrixXd h = -q * q.transpose();
  h.diagonal() += q;
  return h;
}

}  // namespace

void PhaseTypeModel::validate() const {
  if (d < 1) throw ValidationError("$.d: must be >= 1, got " + std::to_string(d));
  if (P.rows() != d || P.cols() != d)
    throw ValidationError("$.P: expected " + std::to_string(d) + "x" + std::to_string(d) +
                          " matrix, got " + std::to_string(P.rows()) + "x" +
                          std::to_string(P.cols()));
  if (v.size() != d)
    throw ValidationError("$.v: expected length " + std::to_string(d) + ", got " +
                          std::to_string(v.size()));
  if (p.size() != d)
    throw ValidationError("$.p: expected length " + std::to_string(d) + ", got " +
                          std::to_string(p.size()));
  for (int i = 0; i < d; ++i) {
    if (!(std::fabs(P(i, i)) <= kDiagonalTol))
      throw ValidationError("$.P[" + ordinal(i) + "][" + ordinal(i) + "]: diagonal must be 0");
    double row_sum = 0.0;
    for (int j = 0; j < d; ++j) {
      if (!(P(i, j) >= 0.0) || !std::isfinite(P(i, j)))
        throw ValidationError("$.P[" + ordinal(i) + "][" + ordinal(j) +
                              "]: entries must be finite and >= 0");
      row_sum += P(i, j);
    }
    if (row_sum > 1.0 + kRowSumTol)
      throw ValidationError("$.P[" + ordinal(i) + "]: row sum " + std::to_string(row_sum) +
                            " exceeds 1 (P must be sub-stochastic)");
  }
  double p_sum = 0.0;
  for (int i = 0; i < d; ++i) {
    if (!(p(i) >= 0.0) || !std::isfinite(p(i)))
      throw ValidationError("$.p[" + ordinal(i) + "]: entries must be finite and >= 0");
    p_sum += p(i);
    if (!(v(i) > 0.0) || !std::isfinite(v(i)))
      throw ValidationError("$.v[" + ordinal(i) + "]: rates must be finite and > 0");
  }
  if (std::fabs(p_sum - 1.0) > kSimplexTol)
    throw ValidationError("$.p: entries must sum to 1, got " + std::to_string(p_sum));
  if (!(alpha > 0.0) || !std::isfinite(alpha))
    throw ValidationError("$.alpha: must be finite and > 0");
  if (!std::isfinite(beta)) throw ValidationError("$.beta: must be finite");
  if (!(ca2 > 0.0) || !std::isfinite(ca2))
    throw ValidationError("$.ca2: must be finite and > 0");

  // Invertibility of I - P, via its condition number.
  Eigen::MatrixXd ip = Eigen::MatrixXd::Identity(d, d) - P;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(ip);
  const double smin = svd.singularValues()(d - 1);
  const double smax = svd.singularValues()(0);
  if (!(smin > 0.0) || smax / smin > kConditionBound)
    throw SingularRouting("validate(): I - P is singular or ill-conditioned (cond > 1e12)");
}

namespace {

DiffusionParams derive_impl(const PhaseTypeModel& m) {
  const int d = m.d;
  const Eigen::MatrixXd identity = Eigen::MatrixXd::Identity(d, d);

  DiffusionParams out;
  out.d = d;
  out.alpha = m.alpha;
  out.beta = m.beta;
  out.p = m.p;
  out.R = (identity - m.P.transpose()) * m.v.asDiagonal();

  // Mean phase time 1/zeta = e' R^{-1} p, phase mix gamma = zeta R^{-1} p.
  Eigen::PartialPivLU<Eigen::MatrixXd> lu(out.R);
  const Eigen::VectorXd rinv_p = lu.solve(m.p);
  const double mean_phase_time = rinv_p.sum();
  if (!(mean_phase_time > 0.0) || !std::isfinite(mean_phase_time))
    throw SingularRouting("derive_params(): e'R^{-1}p = " + std::to_string(mean_phase_time) +
                          " is not positive; routing primitives are inconsistent");
  out.zeta = 1.0 / mean_phase_time;
  out.gamma = out.zeta * rinv_p;

  // Covariance: arrival term, initial-phase multinomial term, per-phase
  // routing multinomial terms weighted by gamma_k v_k, and the service-flow
  // term (I-P') diag(v) diag(gamma) (I-P).
  Eigen::MatrixXd sigma2 = m.ca2 * Eigen::MatrixXd(m.p.asDiagonal());
  sigma2 += multinomial_cov(m.p);
  for (int k = 0; k < d; ++k) {
    const Eigen::VectorXd row = m.P.row(k).transpose();
    if (row.isZero(0.0)) continue;  // absorbing phase contributes nothing
    sigma2 += out.gamma(k) * m.v(k) * multinomial_cov(row);
  }
  const Eigen::VectorXd vg = m.v.cwiseProduct(out.gamma);
  sigma2 += (identity - m.P.transpose()) * vg.asDiagonal() * (identity - m.P);
  out.Sigma = 0.5 * (sigma2 + sigma2.transpose());  // numerical symmetrization

  // Symmetric PSD square root (unique, basis-stable).
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(out.Sigma);
  out.min_eig = es.eigenvalues()(0);
  const double ellipticity_floor = 1e-10 * out.Sigma.trace() / d;
  if (!(out.min_eig > ellipticity_floor))
    throw NonEllipticCovariance(
        "derive_params(): smallest eigenvalue of sigma*sigma' is " +
        std::to_string(out.min_eig) + ", below the ellipticity floor " +
        std::to_string(ellipticity_floor));
  out.sigma_factor = es.eigenvectors() *
                     es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal() *
                     es.eigenvectors().transpose();

  out.drift_constant = -m.beta * m.p;
  out.drift_linear = -out.R;
  out.drift_kink = (out.R - m.alpha * identity) * m.p;
  return out;
}

}  // namespace

DiffusionParams derive_params(const PhaseTypeModel& m, bool normalize) {
  m.validate();
  DiffusionParams params = derive_impl(m);
  if (std::fabs(params.zeta - 1.0) <= kUnitMeanTol) return params;
  if (!normalize)
    throw NonUnitMeanPhase("derive_params(): phase distribution has mean " +
                           std::to_string(1.0 / params.zeta) +
                           " (zeta = " + std::to_string(params.zeta) +
                           "); pass normalize to rescale v <- v/zeta");
  PhaseTypeModel scaled = m;
  scaled.v /= params.zeta;
  params = derive_impl(scaled);
  return params;
}

DiffusionParams derive_params_unchecked(const PhaseTypeModel& m) {
  m.validate();
  return derive_impl(m);
}

Eigen::VectorXd drift(const DiffusionParams& params, const Eigen::VectorXd& x) {
  Eigen::VectorXd out(params.d);
  drift_into(params, x, out);
  return out;
}

GrowthBounds linear_growth_bound(const DiffusionParams& params) {
  GrowthBounds b;
  const Eigen::MatrixXd r_shift =
      params.R - params.alpha * Eigen::MatrixXd::Identity(params.d, params.d);
  // (R - alpha I) p e' is rank one: ||.||_op = |(R - alpha I)p| * sqrt(d).
  b.c_op = operator_norm(params.R) +
           params.drift_kink.norm() * std::sqrt(static_cast<double>(params.d));
  b.c_tilde_op = b.c_op + params.Sigma.norm() + 1.0 + operator_norm(r_shift) +
                 std::fabs(params.beta);
  return b;
}

namespace {

using nlohmann::json;

double number_at(const json& j, const std::string& path) {
  if (!j.is_number())
    throw ValidationError(path + ": expected a number");
  return j.get<double>();
}

}  // namespace

PhaseTypeModel parse_model_json(const std::string& json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ValidationError(std::string("model JSON is not parseable: ") + e.what());
  }
  if (!doc.is_object()) throw ValidationError("$: model document must be a JSON object");
  for (const char* key : {"d", "P", "v", "p", "alpha", "beta", "ca2"}) {
    if (!doc.contains(key)) throw ValidationError(std::string("$.") + key + ": missing");
  }

  PhaseTypeModel m;
  if (!doc["d"].is_number_integer())
    throw ValidationError("$.d: expected an integer");
  m.d = doc["d"].get<int>();
  if (m.d < 1) throw ValidationError("$.d: must be >= 1");

  const json& jp = doc["P"];
  if (!jp.is_array() || static_cast<int>(jp.size()) != m.d)
    throw ValidationError("$.P: expected an array of " + std::to_string(m.d) + " rows");
  m.P.resize(m.d, m.d);
  for (int i = 0; i < m.d; ++i) {
    const json& row = jp[i];
    if (!row.is_array() || static_cast<int>(row.size()) != m.d)
      throw ValidationError("$.P[" + std::to_string(i) + "]: expected a row of length " +
                            std::to_string(m.d));
    for (int j = 0; j < m.d; ++j)
      m.P(i, j) = number_at(row[j], "$.P[" + std::to_string(i) + "][" + std::to_string(j) + "]");
  }

  auto read_vector = [&](const char* key) {
    const json& jv = doc[key];
    if (!jv.is_array() || static_cast<int>(jv.size()) != m.d)
      throw ValidationError(std::string("$.") + key + ": expected an array of length " +
                            std::to_string(m.d));
    Eigen::VectorXd out(m.d);
    for (int i = 0; i < m.d; ++i)
      out(i) = number_at(jv[i], std::string("$.") + key + "[" + std::to_string(i) + "]");
    return out;
  };
  m.v = read_vector("v");
  m.p = read_vector("p");
  m.alpha = number_at(doc["alpha"], "$.alpha");
  m.beta = number_at(doc["beta"], "$.beta");
  m.ca2 = number_at(doc["ca2"], "$.ca2");

  m.validate();
  return m;
}

PhaseTypeModel load_model_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open model file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_model_json(buf.str());
}

}  // namespace hwdiff::model
