#include "hwdiff/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <numeric>

#include "hwdiff/rng.hpp"

namespace hwdiff::metrics {

namespace {

constexpr double kPi = 3.14159265358979323846;

double normal_pdf(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * kPi); }

// Adaptive Simpson quadrature with absolute tolerance `eps` on [a, b].
double adaptive_simpson_rec(const std::function<double(double)>& f, double a, double b,
                            double fa, double fm, double fb, double whole, double eps,
                            int depth) {
  const double m = 0.5 * (a + b);
  const double lm = 0.5 * (a + m);
  const double rm = 0.5 * (m + b);
  const double flm = f(lm);
  const double frm = f(rm);
  const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
  const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
  const double delta = left + right - whole;
  if (depth <= 0 || std::abs(delta) <= 15.0 * eps) {
    return left + right + delta / 15.0;
  }
  return adaptive_simpson_rec(f, a, m, fa, flm, fm, left, 0.5 * eps, depth - 1) +
         adaptive_simpson_rec(f, m, b, fm, frm, fb, right, 0.5 * eps, depth - 1);
}

double adaptive_simpson(const std::function<double(double)>& f, double a, double b,
                        double eps) {
  const double fa = f(a);
  const double fb = f(b);
  const double fm = f(0.5 * (a + b));
  const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
  return adaptive_simpson_rec(f, a, b, fa, fm, fb, whole, eps, 48);
}

// Order statistic of a sorted sample at level q: the standard left-continuous
// empirical quantile x_(ceil(q n)).
double sorted_quantile(const std::vector<double>& sorted, double q) {
  const auto n = static_cast<std::ptrdiff_t>(sorted.size());
  auto idx = static_cast<std::ptrdiff_t>(std::ceil(q * static_cast<double>(n))) - 1;
  idx = std::clamp<std::ptrdiff_t>(idx, 0, n - 1);
  return sorted[static_cast<std::size_t>(idx)];
}

struct WeightedSorted {
  std::vector<double> values;
  std::vector<double> cum;  // inclusive cumulative weights, last == 1
};

WeightedSorted sort_weighted(const Eigen::VectorXd& values, const Eigen::VectorXd& weights) {
  const auto n = static_cast<std::size_t>(values.size());
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) {
    return values[static_cast<Eigen::Index>(i)] < values[static_cast<Eigen::Index>(j)];
  });
  WeightedSorted out;
  out.values.resize(n);
  out.cum.resize(n);
  double acc = 0.0;
  const bool uniform = weights.size() == 0;
  const double w0 = uniform ? 1.0 / static_cast<double>(n) : 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto src = static_cast<Eigen::Index>(order[i]);
    out.values[i] = values[src];
    acc += uniform ? w0 : weights[src];
    out.cum[i] = acc;
  }
  out.cum.back() = 1.0;  // guard against rounding drift
  return out;
}

double weighted_quantile(const WeightedSorted& ws, double q) {
  const auto it = std::lower_bound(ws.cum.begin(), ws.cum.end(), q);
  const auto idx = static_cast<std::size_t>(
      it == ws.cum.end() ? ws.cum.size() - 1
                         : static_cast<std::size_t>(it - ws.cum.begin()));
  return ws.values[idx];
}

Eigen::VectorXd column_1d(const EmpiricalSample& s, const char* which) {
  s.validate();
  if (s.points.cols() != 1) {
    throw DimensionMismatch(std::string("w1_sorted_1d: sample '") + which +
                            "' must be one-dimensional");
  }
  return s.points.col(0);
}

}  // namespace

// ---------------------------------------------------------------------------
// Benchmark1D

Benchmark1D::Benchmark1D(double beta, double alpha, double sigma2)
    : beta_(beta), alpha_(alpha), sigma2_(sigma2) {
  if (!(alpha > 0.0) || !(sigma2 > 0.0) || !std::isfinite(beta)) {
    throw DegenerateInput("Benchmark1D: requires alpha > 0, sigma2 > 0, finite beta");
  }
  sl_ = std::sqrt(0.5 * sigma2_);
  sr_ = std::sqrt(0.5 * sigma2_ / alpha_);
  // Peak of the unnormalized log-density: at x = -beta (left piece) if
  // beta >= 0, else at x = -beta/alpha (right piece).  Subtracting it keeps
  // every exponent <= 0.
  scale_exp_ = (beta_ >= 0.0) ? beta_ * beta_ / sigma2_ : beta_ * beta_ / (alpha_ * sigma2_);

  kl_ = std::exp(beta_ * beta_ / sigma2_ - scale_exp_) * std::sqrt(2.0 * kPi) * sl_;
  kr_ = std::exp(beta_ * beta_ / (alpha_ * sigma2_) - scale_exp_) * std::sqrt(2.0 * kPi) * sr_;

  mass_left_ = kl_ * rng::normal_cdf(beta_ / sl_);
  const double mass_right = kr_ * (1.0 - rng::normal_cdf((beta_ / alpha_) / sr_));
  const double z_closed = mass_left_ + mass_right;

  // Normalizer by adaptive quadrature over a generously padded support.
  const double lo = std::min(0.0, -beta_) - 14.0 * sl_;
  const double hi = std::max(0.0, -beta_ / alpha_) + 14.0 * sr_;
  auto updf = [this](double x) { return unnormalized_pdf(x); };
  const double eps = 1e-12 * std::max(1.0, z_closed);
  // Split at the kink so Simpson never straddles the non-smooth point.
  z_ = adaptive_simpson(updf, lo, 0.0, 0.5 * eps) + adaptive_simpson(updf, 0.0, hi, 0.5 * eps);
  if (!(z_ > 0.0) || std::abs(z_ - z_closed) > 1e-8 * z_closed) {
    throw DegenerateInput("Benchmark1D: quadrature normalizer disagrees with closed form");
  }

  // Mean via truncated-Gaussian first moments of each piece.
  const double zl0 = beta_ / sl_;             // (0 - mu_l)/s_l with mu_l = -beta
  const double zr0 = (beta_ / alpha_) / sr_;  // (0 - mu_r)/s_r with mu_r = -beta/alpha
  const double left_first =
      kl_ * (-beta_ * rng::normal_cdf(zl0) - sl_ * normal_pdf(zl0));
  const double right_first =
      kr_ * ((-beta_ / alpha_) * (1.0 - rng::normal_cdf(zr0)) + sr_ * normal_pdf(zr0));
  mean_ = (left_first + right_first) / z_;
}

double Benchmark1D::unnormalized_pdf(double x) const {
  const double e = (x <= 0.0) ? (-2.0 * beta_ * x - x * x) / sigma2_
                              : (-2.0 * beta_ * x - alpha_ * x * x) / sigma2_;
  return std::exp(e - scale_exp_);
}

double Benchmark1D::pdf(double x) const { return unnormalized_pdf(x) / z_; }

double Benchmark1D::unnormalized_mass(double x) const {
  if (x <= 0.0) {
    return kl_ * rng::normal_cdf((x + beta_) / sl_);
  }
  return mass_left_ +
         kr_ * (rng::normal_cdf((x + beta_ / alpha_) / sr_) -
                rng::normal_cdf((beta_ / alpha_) / sr_));
}

double Benchmark1D::cdf(double x) const {
  return std::clamp(unnormalized_mass(x) / z_, 0.0, 1.0);
}

double Benchmark1D::quantile(double q) const {
  if (!(q > 0.0 && q < 1.0)) {
    throw DegenerateInput("Benchmark1D::quantile: q must lie in (0,1)");
  }
  const double target = q * z_;
  if (target <= mass_left_) {
    return -beta_ + sl_ * rng::inverse_normal_cdf(target / kl_);
  }
  const double base = rng::normal_cdf((beta_ / alpha_) / sr_);
  return -beta_ / alpha_ +
         sr_ * rng::inverse_normal_cdf((target - mass_left_) / kr_ + base);
}

double Benchmark1D::mean() const { return mean_; }

Benchmark1D analytic_density_1d(double beta, double alpha, double sigma2) {
  return Benchmark1D(beta, alpha, sigma2);
}

// ---------------------------------------------------------------------------
// Samples and distances

void EmpiricalSample::validate() const {
  if (points.rows() == 0 || points.cols() == 0) {
    throw DegenerateInput("EmpiricalSample: needs at least one point");
  }
  if (!points.allFinite()) {
    throw DegenerateInput("EmpiricalSample: points must be finite");
  }
  if (weights.size() != 0) {
    if (weights.size() != points.rows()) {
      throw DimensionMismatch("EmpiricalSample: weights length must match point count");
    }
    if ((weights.array() < 0.0).any()) {
      throw DegenerateInput("EmpiricalSample: weights must be nonnegative");
    }
    if (std::abs(weights.sum() - 1.0) > 1e-9) {
      throw DegenerateInput("EmpiricalSample: weights must sum to 1");
    }
  }
}

double w1_sorted_1d(std::vector<double> a, std::vector<double> b, int grid) {
  if (a.empty() || b.empty()) {
    throw DegenerateInput("w1_sorted_1d: empty sample");
  }
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  if (a.size() == b.size()) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += std::abs(a[i] - b[i]);
    return acc / static_cast<double>(a.size());
  }
  if (grid < 2) throw DegenerateInput("w1_sorted_1d: grid must be >= 2");
  double acc = 0.0;
  for (int j = 0; j < grid; ++j) {
    const double q = (static_cast<double>(j) + 0.5) / static_cast<double>(grid);
    acc += std::abs(sorted_quantile(a, q) - sorted_quantile(b, q));
  }
  return acc / static_cast<double>(grid);
}

double w1_sorted_1d(std::vector<double> a, const Benchmark1D& b, int grid) {
  if (a.empty()) throw DegenerateInput("w1_sorted_1d: empty sample");
  if (grid < 2) throw DegenerateInput("w1_sorted_1d: grid must be >= 2");
  std::sort(a.begin(), a.end());
  double acc = 0.0;
  for (int j = 0; j < grid; ++j) {
    const double q = (static_cast<double>(j) + 0.5) / static_cast<double>(grid);
    acc += std::abs(sorted_quantile(a, q) - b.quantile(q));
  }
  return acc / static_cast<double>(grid);
}

double w1_sorted_1d(const EmpiricalSample& a, const EmpiricalSample& b, int grid) {
  const Eigen::VectorXd xa = column_1d(a, "a");
  const Eigen::VectorXd xb = column_1d(b, "b");
  const bool uniform = a.weights.size() == 0 && b.weights.size() == 0;
  if (uniform) {
    return w1_sorted_1d(std::vector<double>(xa.data(), xa.data() + xa.size()),
                        std::vector<double>(xb.data(), xb.data() + xb.size()), grid);
  }
  if (grid < 2) throw DegenerateInput("w1_sorted_1d: grid must be >= 2");
  const WeightedSorted wa = sort_weighted(xa, a.weights);
  const WeightedSorted wb = sort_weighted(xb, b.weights);
  double acc = 0.0;
  for (int j = 0; j < grid; ++j) {
    const double q = (static_cast<double>(j) + 0.5) / static_cast<double>(grid);
    acc += std::abs(weighted_quantile(wa, q) - weighted_quantile(wb, q));
  }
  return acc / static_cast<double>(grid);
}

double w1_sorted_1d(const EmpiricalSample& a, const Benchmark1D& b, int grid) {
  const Eigen::VectorXd xa = column_1d(a, "a");
  if (a.weights.size() == 0) {
    return w1_sorted_1d(std::vector<double>(xa.data(), xa.data() + xa.size()), b, grid);
  }
  if (grid < 2) throw DegenerateInput("w1_sorted_1d: grid must be >= 2");
  const WeightedSorted wa = sort_weighted(xa, a.weights);
  double acc = 0.0;
  for (int j = 0; j < grid; ++j) {
    const double q = (static_cast<double>(j) + 0.5) / static_cast<double>(grid);
    acc += std::abs(weighted_quantile(wa, q) - b.quantile(q));
  }
  return acc / static_cast<double>(grid);
}

double sliced_w1(const EmpiricalSample& a, const EmpiricalSample& b, int n_directions,
                 std::uint64_t seed) {
  a.validate();
  b.validate();
  if (a.points.cols() != b.points.cols()) {
    throw DimensionMismatch("sliced_w1: samples must share the ambient dimension");
  }
  if (n_directions < 1) throw DegenerateInput("sliced_w1: n_directions must be >= 1");
  const Eigen::Index d = a.points.cols();
  rng::Engine eng = rng::make_engine(seed);
  double acc = 0.0;
  for (int k = 0; k < n_directions; ++k) {
    Eigen::VectorXd dir(d);
    double norm2 = 0.0;
    do {
      for (Eigen::Index i = 0; i < d; ++i) dir[i] = rng::standard_normal(eng);
      norm2 = dir.squaredNorm();
    } while (norm2 < 1e-24);
    dir /= std::sqrt(norm2);
    EmpiricalSample pa{a.points * dir, a.weights};
    EmpiricalSample pb{b.points * dir, b.weights};
    acc += w1_sorted_1d(pa, pb);
  }
  return acc / static_cast<double>(n_directions);
}

RateFit rate_fit(const std::vector<std::pair<double, double>>& eta_distance) {
  if (eta_distance.size() < 2) {
    throw DegenerateInput("rate_fit: needs at least two (eta, distance) pairs");
  }
  std::vector<double> lx, ly;
  lx.reserve(eta_distance.size());
  ly.reserve(eta_distance.size());
  for (const auto& [eta, dist] : eta_distance) {
    if (!(eta > 0.0) || !(dist > 0.0)) {
      throw DegenerateInput("rate_fit: eta and distance must be positive");
    }
    lx.push_back(std::log(eta));
    ly.push_back(std::log(dist));
  }
  const double n = static_cast<double>(lx.size());
  const double mx = std::accumulate(lx.begin(), lx.end(), 0.0) / n;
  const double my = std::accumulate(ly.begin(), ly.end(), 0.0) / n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    sxx += (lx[i] - mx) * (lx[i] - mx);
    sxy += (lx[i] - mx) * (ly[i] - my);
    syy += (ly[i] - my) * (ly[i] - my);
  }
  if (sxx <= 0.0) {
    throw DegenerateInput("rate_fit: eta values must not all coincide");
  }
  RateFit out;
  out.slope = sxy / sxx;
  out.intercept = my - out.slope * mx;
  out.r2 = (syy > 0.0) ? (sxy * sxy) / (sxx * syy) : 1.0;
  return out;
}

}  // namespace hwdiff::metrics
