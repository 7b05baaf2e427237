#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "hwdiff/model.hpp"
#include "hwdiff/rng.hpp"

// Time-average statistics of the Euler-Maruyama chain: mergeable accumulators
// (moments, histograms, reservoir subsample, batch sums), three estimators of
// the asymptotic variance of ergodic averages (batch means, truncated
// autocovariance series, and a Monte-Carlo solution of the discrete Poisson
// equation), the moderate-deviation rate function, and a normality check for
// standardized batch means.
namespace hwdiff::ergodic {

class EmptyAccumulator : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class TooFewBatches : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class LagTooLarge : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ZeroVariance : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DepthTooSmall : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class UnknownTestFunction : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class MergeMismatch : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Test functions

struct TestFunction {
  std::string name;
  std::function<double(const Eigen::VectorXd&)> fn;
  bool bounded = true;
  bool lipschitz = true;
};

// Registry: tanh-sum, indicator-positive, coordinate-tanh-<i>, sum,
// coordinate-<i> (indices 0-based, < d).
TestFunction make_test_function(const std::string& name, int d);
std::vector<std::string> test_function_names();

// ---------------------------------------------------------------------------
// Histograms

struct HistogramSpec {
  double lo = 0.0;
  double hi = 1.0;
  int bins = 512;
};

struct Histogram {
  HistogramSpec spec;
  std::vector<std::uint64_t> counts;
  std::uint64_t underflow = 0;
  std::uint64_t overflow = 0;

  explicit Histogram(HistogramSpec s = {});
  void add(double x);
  void merge(const Histogram& other);
  std::uint64_t total() const;  // includes under/overflow
};

// ---------------------------------------------------------------------------
// Accumulator

struct AccumulatorConfig {
  int d = 0;
  std::vector<TestFunction> test_functions;
  std::uint64_t batch_length = 0;           // 0 disables batch tracking
  std::size_t reservoir_capacity = 100000;  // 0 disables the reservoir
  std::uint64_t reservoir_seed = 0;         // must differ across merged accumulators
  std::vector<HistogramSpec> coord_histograms;  // empty or size d
  std::optional<HistogramSpec> sum_histogram;   // histogram of e'x
};

// Single-writer accumulator over chain states; merge after workers join.
// Merge is exact (additive) for count, moments, h-sums and histograms.  The
// reservoir uses keyed subsampling (every state gets a uniform key from the
// accumulator's private stream; the global smallest-key states are kept), so
// merged reservoirs are distributed as a uniform subsample of the union.
// Completed batch sums concatenate in merge order; partial batches at merge
// boundaries are dropped.
class ErgodicAccumulator {
 public:
  explicit ErgodicAccumulator(AccumulatorConfig cfg);

  void add(const Eigen::VectorXd& x);
  void operator()(const Eigen::VectorXd& x) { add(x); }
  void merge(const ErgodicAccumulator& other);

  std::uint64_t count() const { return n_; }
  int dimension() const { return cfg_.d; }
  const AccumulatorConfig& config() const { return cfg_; }

  // Raw moment E_n[coord^order]; coord in [0,d) or coord == d for e'x.
  double moment(int coord, int order) const;

  std::size_t n_test_functions() const { return cfg_.test_functions.size(); }
  double h_sum(std::size_t f) const;
  double h_mean(std::size_t f) const;
  double h_stddev(std::size_t f) const;  // population sd of recorded h values

  std::uint64_t batch_length() const { return cfg_.batch_length; }
  // Completed batch means of test function f, in recording/merge order.
  const std::vector<double>& batch_means(std::size_t f) const;

  // Reservoir states sorted by subsampling key (deterministic given seeds).
  std::vector<Eigen::VectorXd> reservoir_states() const;
  std::size_t reservoir_size() const { return reservoir_.size(); }

  const Histogram* coordinate_histogram(int i) const;
  const Histogram* sum_histogram() const;

 private:
  struct Keyed {
    double key;
    Eigen::VectorXd state;
  };

  AccumulatorConfig cfg_;
  std::uint64_t n_ = 0;
  Eigen::MatrixXd moment_sums_;  // (d+1) x 8 raw power sums; row d is e'x
  std::vector<double> h_sums_, h_sq_sums_;
  std::vector<double> batch_partial_;
  std::uint64_t batch_fill_ = 0;
  std::vector<std::vector<double>> batch_means_;
  std::vector<Keyed> reservoir_;  // max-heap on key
  rng::Engine reservoir_eng_;
  std::vector<Histogram> coord_hists_;
  std::optional<Histogram> sum_hist_;

  void reservoir_offer(double key, const Eigen::VectorXd& x);
};

double empirical_mean(const ErgodicAccumulator& acc, std::size_t f_index);

// ---------------------------------------------------------------------------
// Variance estimators

struct VarianceEstimate {
  double estimate = 0.0;  // clamped at 0; raw value kept in raw_estimate
  std::string method;
  double std_error = 0.0;
  double raw_estimate = 0.0;
  std::uint64_t n = 0;
  int n_batches = 0;
  std::uint64_t batch_length = 0;
  int truncation_lag = -1;
  int depth = -1;
};

// Batch-means estimator with B batches of length floor(n/B) (remainder
// dropped).  Optionally returns the standardized batch means for normality
// testing.
VarianceEstimate variance_batch_means(std::span<const double> h, int n_batches,
                                      std::vector<double>* standardized = nullptr);

// Batch-means estimator on precomputed batch means with known batch length.
VarianceEstimate variance_from_batch_means(std::span<const double> means,
                                           std::uint64_t batch_length,
                                           std::vector<double>* standardized = nullptr);

// Truncated autocovariance series c0 + 2*sum_{k<=K*} c_k, with K* chosen by
// the initial-positive-sequence rule within [0, max_lag].
VarianceEstimate variance_autocovariance(std::span<const double> h, int max_lag);

// Empirical autocovariances c_0..c_K (FFT-based, divisor n).
std::vector<double> autocovariances(std::span<const double> h, int max_lag);

// ---------------------------------------------------------------------------
// Stein (Poisson-equation) series

// One transition of a discrete Markov kernel, in place.
using StepKernel = std::function<void(Eigen::VectorXd&, rng::Engine&)>;

StepKernel em_kernel(const model::DiffusionParams& params, double eta);
// AR(1) surrogate y' = a y + sqrt(1-a^2) xi on R^1 (stationary N(0,1)).
StepKernel ar1_kernel(double a);

struct SteinConfig {
  int depth = 0;            // series truncation K
  int n_inner = 32;         // fresh chains per query point
  double mu_hat = 0.0;      // pre-estimated stationary mean of h
  std::uint64_t seed = 0;
  double decay_rate = 0.0;  // per-step correlation decay in (0,1); 0 skips the check
  double tail_tol = 0.05;   // bound on rho^{K+1}/(1-rho) before DepthTooSmall
};

struct SteinPointEstimate {
  double value = 0.0;
  double std_error = 0.0;
};

// Monte-Carlo value of the truncated series
//   f_K(x) = -sum_{k=0}^{K} (P^k h(x) - mu_hat)
// using n_inner independent depth-K chains started at x.
SteinPointEstimate stein_value_at(const StepKernel& kernel,
                                  const std::function<double(const Eigen::VectorXd&)>& h,
                                  const SteinConfig& cfg, const Eigen::VectorXd& x,
                                  rng::Engine& eng);

struct SteinSeries {
  std::vector<Eigen::VectorXd> query_points;
  std::vector<double> values;
  std::vector<double> std_errors;
  int depth = 0;
  double mu_hat = 0.0;
};

SteinSeries stein_series_solve(const StepKernel& kernel,
                               const std::function<double(const Eigen::VectorXd&)>& h,
                               const SteinConfig& cfg,
                               std::span<const Eigen::VectorXd> query_points);

struct SteinResidualReport {
  int n_points = 0;
  int n_within = 0;  // points with |residual - (h - mu_hat)| < 3 combined SE
  std::vector<double> residual;     // (A f)(x_i), nested Monte-Carlo
  std::vector<double> target;       // h(x_i) - mu_hat
  std::vector<double> combined_se;
};

// Verifies A f_K = P f_K - f_K against h - mu_hat at the given points using
// n_nested fresh one-step transitions and independent inner chains.
SteinResidualReport stein_residual_check(const StepKernel& kernel,
                                         const std::function<double(const Eigen::VectorXd&)>& h,
                                         const SteinConfig& cfg,
                                         std::span<const Eigen::VectorXd> points, int n_nested);

// Poisson-equation variance estimator: averages
//   -2 f(x_i)(h(x_i)-mu_hat) - (h(x_i)-mu_hat)^2
// over approximately stationary points x_i, with f estimated by independent
// inner chains (their noise is independent of h(x_i), keeping the product
// unbiased up to series truncation).
VarianceEstimate variance_stein_series(const StepKernel& kernel,
                                       const std::function<double(const Eigen::VectorXd&)>& h,
                                       const SteinConfig& cfg,
                                       std::span<const Eigen::VectorXd> points);

// Geometric-decay estimate from the autocovariance sequence: smallest lag k
// with c_k <= c_0/e gives rho = exp(-1/k).
double estimate_decay_rate(std::span<const double> h, int max_lag);

// ---------------------------------------------------------------------------
// Rate function and normality diagnostics

double mdp_rate(double z, const VarianceEstimate& v);

struct NormalityReport {
  int n = 0;
  double ks_statistic = 0.0;
  double p_value = 0.0;
};

NormalityReport clt_normality_check(std::span<const double> standardized);

}  // namespace hwdiff::ergodic
