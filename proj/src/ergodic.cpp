#include "hwdiff/ergodic.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <complex>
#include <numeric>

#include <unsupported/Eigen/FFT>

namespace hwdiff::ergodic {

namespace {

bool parse_index(const std::string& s, std::size_t prefix_len, int d, int& out) {
  const char* first = s.data() + prefix_len;
  const char* last = s.data() + s.size();
  int idx = -1;
  const auto res = std::from_chars(first, last, idx);
  if (res.ec != std::errc{} || res.ptr != last) return false;
  if (idx < 0 || idx >= d) {
    throw UnknownTestFunction("test function '" + s + "': coordinate index out of range for d=" +
                              std::to_string(d));
  }
  out = idx;
  return true;
}

double sum_of(const Eigen::VectorXd& x) { return x.sum(); }

std::size_t next_pow2(std::size_t v) {
  std::size_t p = 1;
  while (p < v) p <<= 1;
  return p;
}

}  // namespace

// ---------------------------------------------------------------------------
// Test functions

TestFunction make_test_function(const std::string& name, int d) {
  if (d < 1) throw UnknownTestFunction("test function registry requires d >= 1");
  if (name == "tanh-sum") {
    return {name, [](const Eigen::VectorXd& x) { return std::tanh(sum_of(x)); }, true, true};
  }
  if (name == "indicator-positive") {
    return {name, [](const Eigen::VectorXd& x) { return sum_of(x) > 0.0 ? 1.0 : 0.0; }, true,
            false};
  }
  if (name == "sum") {
    return {name, [](const Eigen::VectorXd& x) { return sum_of(x); }, false, true};
  }
  constexpr const char* kCoordTanh = "coordinate-tanh-";
  constexpr const char* kCoord = "coordinate-";
  if (name.rfind(kCoordTanh, 0) == 0) {
    int i = -1;
    if (parse_index(name, std::string(kCoordTanh).size(), d, i)) {
      return {name, [i](const Eigen::VectorXd& x) { return std::tanh(x[i]); }, true, true};
    }
  } else if (name.rfind(kCoord, 0) == 0) {
    int i = -1;
    if (parse_index(name, std::string(kCoord).size(), d, i)) {
      return {name, [i](const Eigen::VectorXd& x) { return x[i]; }, false, true};
    }
  }
  throw UnknownTestFunction(
      "unknown test function '" + name +
      "'; expected one of: tanh-sum, indicator-positive, sum, coordinate-tanh-<i>, "
      "coordinate-<i>");
}

std::vector<std::string> test_function_names() {
  return {"tanh-sum", "indicator-positive", "sum", "coordinate-tanh-<i>", "coordinate-<i>"};
}

// ---------------------------------------------------------------------------
// Histogram

Histogram::Histogram(HistogramSpec s) : spec(s) {
  if (spec.bins < 1 || !(spec.hi > spec.lo)) {
    throw std::invalid_argument("Histogram: needs bins >= 1 and hi > lo");
  }
  counts.assign(static_cast<std::size_t>(spec.bins), 0);
}

void Histogram::add(double x) {
  if (x < spec.lo) {
    ++underflow;
    return;
  }
  const double w = (spec.hi - spec.lo) / static_cast<double>(spec.bins);
  const auto bin = static_cast<std::ptrdiff_t>((x - spec.lo) / w);
  if (bin >= spec.bins) {
    ++overflow;
  } else {
    ++counts[static_cast<std::size_t>(bin)];
  }
}

void Histogram::merge(const Histogram& other) {
  if (other.spec.bins != spec.bins || other.spec.lo != spec.lo || other.spec.hi != spec.hi) {
    throw MergeMismatch("Histogram::merge: bin layout differs");
  }
  for (std::size_t i = 0; i < counts.size(); ++i) counts[i] += other.counts[i];
  underflow += other.underflow;
  overflow += other.overflow;
}

std::uint64_t Histogram::total() const {
  return underflow + overflow + std::accumulate(counts.begin(), counts.end(), std::uint64_t{0});
}

// ---------------------------------------------------------------------------
// ErgodicAccumulator

ErgodicAccumulator::ErgodicAccumulator(AccumulatorConfig cfg)
    : cfg_(std::move(cfg)), reservoir_eng_(rng::make_engine(cfg_.reservoir_seed)) {
  if (cfg_.d < 1) throw std::invalid_argument("ErgodicAccumulator: d must be >= 1");
  moment_sums_ = Eigen::MatrixXd::Zero(cfg_.d + 1, 8);
  h_sums_.assign(cfg_.test_functions.size(), 0.0);
  h_sq_sums_.assign(cfg_.test_functions.size(), 0.0);
  batch_partial_.assign(cfg_.test_functions.size(), 0.0);
  batch_means_.resize(cfg_.test_functions.size());
  if (!cfg_.coord_histograms.empty()) {
    if (cfg_.coord_histograms.size() != static_cast<std::size_t>(cfg_.d)) {
      throw std::invalid_argument("ErgodicAccumulator: coord_histograms must have size d");
    }
    for (const auto& s : cfg_.coord_histograms) coord_hists_.emplace_back(s);
  }
  if (cfg_.sum_histogram) sum_hist_.emplace(*cfg_.sum_histogram);
  if (cfg_.reservoir_capacity > 0) reservoir_.reserve(cfg_.reservoir_capacity);
}

void ErgodicAccumulator::reservoir_offer(double key, const Eigen::VectorXd& x) {
  auto by_key = [](const Keyed& a, const Keyed& b) { return a.key < b.key; };
  if (reservoir_.size() < cfg_.reservoir_capacity) {
    reservoir_.push_back({key, x});
    std::push_heap(reservoir_.begin(), reservoir_.end(), by_key);
    return;
  }
  if (key < reservoir_.front().key) {
    std::pop_heap(reservoir_.begin(), reservoir_.end(), by_key);
    reservoir_.back() = {key, x};
    std::push_heap(reservoir_.begin(), reservoir_.end(), by_key);
  }
}

void ErgodicAccumulator::add(const Eigen::VectorXd& x) {
  if (x.size() != cfg_.d) throw std::invalid_argument("ErgodicAccumulator::add: bad dimension");
  ++n_;
  double s = 0.0;
  for (int c = 0; c < cfg_.d; ++c) {
    const double val = x[c];
    s += val;
    double p = 1.0;
    for (int k = 0; k < 8; ++k) {
      p *= val;
      moment_sums_(c, k) += p;
    }
  }
  {
    double p = 1.0;
    for (int k = 0; k < 8; ++k) {
      p *= s;
      moment_sums_(cfg_.d, k) += p;
    }
  }
  for (std::size_t f = 0; f < cfg_.test_functions.size(); ++f) {
    const double h = cfg_.test_functions[f].fn(x);
    h_sums_[f] += h;
    h_sq_sums_[f] += h * h;
    if (cfg_.batch_length > 0) batch_partial_[f] += h;
  }
  if (cfg_.batch_length > 0) {
    if (++batch_fill_ == cfg_.batch_length) {
      const double L = static_cast<double>(cfg_.batch_length);
      for (std::size_t f = 0; f < batch_partial_.size(); ++f) {
        batch_means_[f].push_back(batch_partial_[f] / L);
        batch_partial_[f] = 0.0;
      }
      batch_fill_ = 0;
    }
  }
  if (!coord_hists_.empty()) {
    for (int c = 0; c < cfg_.d; ++c) coord_hists_[static_cast<std::size_t>(c)].add(x[c]);
  }
  if (sum_hist_) sum_hist_->add(s);
  if (cfg_.reservoir_capacity > 0) {
    reservoir_offer(rng::uniform_unit(reservoir_eng_), x);
  }
}

void ErgodicAccumulator::merge(const ErgodicAccumulator& other) {
  if (other.cfg_.d != cfg_.d ||
      other.cfg_.test_functions.size() != cfg_.test_functions.size() ||
      other.cfg_.batch_length != cfg_.batch_length ||
      other.cfg_.reservoir_capacity != cfg_.reservoir_capacity) {
    throw MergeMismatch("ErgodicAccumulator::merge: configurations differ");
  }
  if (cfg_.reservoir_capacity > 0 && other.cfg_.reservoir_seed == cfg_.reservoir_seed &&
      other.n_ > 0 && n_ > 0) {
    throw MergeMismatch(
        "ErgodicAccumulator::merge: reservoir seeds must differ between merged accumulators");
  }
  n_ += other.n_;
  moment_sums_ += other.moment_sums_;
  for (std::size_t f = 0; f < h_sums_.size(); ++f) {
    h_sums_[f] += other.h_sums_[f];
    h_sq_sums_[f] += other.h_sq_sums_[f];
    batch_means_[f].insert(batch_means_[f].end(), other.batch_means_[f].begin(),
                           other.batch_means_[f].end());
    // other's partial batch (if any) is dropped by design
  }
  if (!coord_hists_.empty()) {
    if (other.coord_hists_.size() != coord_hists_.size()) {
      throw MergeMismatch("ErgodicAccumulator::merge: histogram layouts differ");
    }
    for (std::size_t c = 0; c < coord_hists_.size(); ++c) {
      coord_hists_[c].merge(other.coord_hists_[c]);
    }
  }
  if (sum_hist_ && other.sum_hist_) sum_hist_->merge(*other.sum_hist_);
  for (const auto& kv : other.reservoir_) reservoir_offer(kv.key, kv.state);
}

double ErgodicAccumulator::moment(int coord, int order) const {
  if (n_ == 0) throw EmptyAccumulator("moment: no recorded states");
  if (coord < 0 || coord > cfg_.d || order < 1 || order > 8) {
    throw std::invalid_argument("moment: coord in [0,d], order in [1,8]");
  }
  return moment_sums_(coord, order - 1) / static_cast<double>(n_);
}

double ErgodicAccumulator::h_sum(std::size_t f) const { return h_sums_.at(f); }

double ErgodicAccumulator::h_mean(std::size_t f) const {
  if (n_ == 0) throw EmptyAccumulator("h_mean: no recorded states");
  return h_sums_.at(f) / static_cast<double>(n_);
}

double ErgodicAccumulator::h_stddev(std::size_t f) const {
  if (n_ == 0) throw EmptyAccumulator("h_stddev: no recorded states");
  const double m = h_mean(f);
  const double msq = h_sq_sums_.at(f) / static_cast<double>(n_);
  return std::sqrt(std::max(0.0, msq - m * m));
}

const std::vector<double>& ErgodicAccumulator::batch_means(std::size_t f) const {
  return batch_means_.at(f);
}

std::vector<Eigen::VectorXd> ErgodicAccumulator::reservoir_states() const {
  std::vector<Keyed> sorted = reservoir_;
  std::sort(sorted.begin(), sorted.end(),
            [](const Keyed& a, const Keyed& b) { return a.key < b.key; });
  std::vector<Eigen::VectorXd> out;
  out.reserve(sorted.size());
  for (auto& kv : sorted) out.push_back(std::move(kv.state));
  return out;
}

const Histogram* ErgodicAccumulator::coordinate_histogram(int i) const {
  if (coord_hists_.empty() || i < 0 || i >= cfg_.d) return nullptr;
  return &coord_hists_[static_cast<std::size_t>(i)];
}

const Histogram* ErgodicAccumulator::sum_histogram() const {
  return sum_hist_ ? &*sum_hist_ : nullptr;
}

double empirical_mean(const ErgodicAccumulator& acc, std::size_t f_index) {
  if (acc.count() == 0) throw EmptyAccumulator("empirical_mean: no recorded states");
  return acc.h_mean(f_index);
}

// ---------------------------------------------------------------------------
// Batch means

VarianceEstimate variance_from_batch_means(std::span<const double> means,
                                           std::uint64_t batch_length,
                                           std::vector<double>* standardized) {
  const auto b = static_cast<int>(means.size());
  if (b < 8) throw TooFewBatches("variance estimation needs at least 8 batches");
  if (batch_length == 0) throw std::invalid_argument("batch_length must be positive");
  const double bd = static_cast<double>(b);
  const double grand = std::accumulate(means.begin(), means.end(), 0.0) / bd;
  double ss = 0.0;
  for (double m : means) ss += (m - grand) * (m - grand);
  const double sample_var = ss / (bd - 1.0);
  const double ld = static_cast<double>(batch_length);
  VarianceEstimate out;
  out.raw_estimate = ld * sample_var;
  out.estimate = std::max(0.0, out.raw_estimate);
  out.method = "batch-means";
  out.std_error = out.estimate * std::sqrt(2.0 / (bd - 1.0));
  out.n = batch_length * static_cast<std::uint64_t>(b);
  out.n_batches = b;
  out.batch_length = batch_length;
  if (standardized != nullptr) {
    standardized->clear();
    standardized->reserve(means.size());
    const double scale = out.estimate > 0.0 ? std::sqrt(ld / out.estimate) : 0.0;
    for (double m : means) standardized->push_back((m - grand) * scale);
  }
  return out;
}

VarianceEstimate variance_batch_means(std::span<const double> h, int n_batches,
                                      std::vector<double>* standardized) {
  if (n_batches < 8) throw TooFewBatches("variance_batch_means: needs B >= 8");
  if (h.size() < static_cast<std::size_t>(n_batches)) {
    throw TooFewBatches("variance_batch_means: needs n >= B");
  }
  const std::uint64_t L = h.size() / static_cast<std::uint64_t>(n_batches);
  std::vector<double> means(static_cast<std::size_t>(n_batches));
  for (int j = 0; j < n_batches; ++j) {
    const std::uint64_t off = static_cast<std::uint64_t>(j) * L;
    double acc = 0.0;
    for (std::uint64_t k = 0; k < L; ++k) acc += h[off + k];
    means[static_cast<std::size_t>(j)] = acc / static_cast<double>(L);
  }
  return variance_from_batch_means(means, L, standardized);
}

// ---------------------------------------------------------------------------
// Autocovariance series

std::vector<double> autocovariances(std::span<const double> h, int max_lag) {
  const std::size_t n = h.size();
  if (n < 2) throw std::invalid_argument("autocovariances: series too short");
  if (max_lag < 0 || static_cast<std::size_t>(max_lag) >= n) {
    throw LagTooLarge("autocovariances: max_lag must be < n");
  }
  const auto k1 = static_cast<std::size_t>(max_lag) + 1;
  const double mean = std::accumulate(h.begin(), h.end(), 0.0) / static_cast<double>(n);
  std::vector<double> y(n);
  for (std::size_t i = 0; i < n; ++i) y[i] = h[i] - mean;

  // Blocked FFT cross-correlation: exact lag sums with bounded memory.  The
  // series is cut into blocks of length L; products x_t x_{t+k} with t in a
  // block reach at most max_lag into the next block, so correlating each
  // block against itself plus the following max_lag values covers every term
  // exactly once.
  std::size_t m = next_pow2(std::max<std::size_t>(4 * k1, 1024));
  m = std::max(m, std::min<std::size_t>(std::size_t{1} << 20, next_pow2(2 * (n + k1))));
  const std::size_t L = m / 2 - static_cast<std::size_t>(max_lag);

  Eigen::FFT<double> fft;
  std::vector<double> acc(k1, 0.0);
  std::vector<double> buf_a(m), buf_c(m), corr(m);
  std::vector<std::complex<double>> spec_a(m), spec_c(m);
  for (std::size_t b0 = 0; b0 < n; b0 += L) {
    const std::size_t la = std::min(L, n - b0);
    const std::size_t lc = std::min(L + static_cast<std::size_t>(max_lag), n - b0);
    std::fill(buf_a.begin(), buf_a.end(), 0.0);
    std::fill(buf_c.begin(), buf_c.end(), 0.0);
    std::copy(y.begin() + static_cast<std::ptrdiff_t>(b0),
              y.begin() + static_cast<std::ptrdiff_t>(b0 + la), buf_a.begin());
    std::copy(y.begin() + static_cast<std::ptrdiff_t>(b0),
              y.begin() + static_cast<std::ptrdiff_t>(b0 + lc), buf_c.begin());
    fft.fwd(spec_a, buf_a);
    fft.fwd(spec_c, buf_c);
    for (std::size_t i = 0; i < m; ++i) spec_a[i] = std::conj(spec_a[i]) * spec_c[i];
    fft.inv(corr, spec_a);
    for (std::size_t k = 0; k < k1; ++k) acc[k] += corr[k];
  }
  for (std::size_t k = 0; k < k1; ++k) acc[k] /= static_cast<double>(n);
  return acc;
}

VarianceEstimate variance_autocovariance(std::span<const double> h, int max_lag) {
  const std::size_t n = h.size();
  if (max_lag < 1) throw LagTooLarge("variance_autocovariance: max_lag must be >= 1");
  if (static_cast<std::size_t>(max_lag) * 10 >= n) {
    throw LagTooLarge("variance_autocovariance: requires max_lag < n/10");
  }
  const std::vector<double> c = autocovariances(h, max_lag);
  // Initial-positive-sequence truncation: stop before the first nonpositive
  // pair sum c_{2j} + c_{2j+1}.
  int kstar = 0;
  for (std::size_t j = 0; 2 * j + 1 < c.size(); ++j) {
    if (c[2 * j] + c[2 * j + 1] <= 0.0) break;
    kstar = static_cast<int>(2 * j + 1);
  }
  double est = c[0];
  for (int k = 1; k <= kstar; ++k) est += 2.0 * c[static_cast<std::size_t>(k)];
  VarianceEstimate out;
  out.raw_estimate = est;
  out.estimate = std::max(0.0, est);
  out.method = "autocovariance";
  out.std_error =
      out.estimate * std::sqrt(2.0 * (2.0 * kstar + 1.0) / static_cast<double>(n));
  out.n = n;
  out.truncation_lag = kstar;
  return out;
}

// ---------------------------------------------------------------------------
// Stein series

StepKernel em_kernel(const model::DiffusionParams& params, double eta) {
  if (!(eta > 0.0) || !(eta < 1.0)) {
    throw std::invalid_argument("em_kernel: eta must lie in (0,1)");
  }
  const double sqrt_eta = std::sqrt(eta);
  return [params, eta, sqrt_eta, gx = Eigen::VectorXd(), xi = Eigen::VectorXd(),
          noise = Eigen::VectorXd()](Eigen::VectorXd& x, rng::Engine& eng) mutable {
    gx.resize(x.size());
    xi.resize(x.size());
    noise.resize(x.size());
    model::drift_into(params, x, gx);
    for (Eigen::Index i = 0; i < xi.size(); ++i) xi[i] = rng::standard_normal(eng);
    noise.noalias() = params.sigma_factor * xi;
    x += eta * gx + sqrt_eta * noise;
  };
}

StepKernel ar1_kernel(double a) {
  if (!(std::abs(a) < 1.0)) throw std::invalid_argument("ar1_kernel: |a| < 1 required");
  const double s = std::sqrt(1.0 - a * a);
  return [a, s](Eigen::VectorXd& x, rng::Engine& eng) {
    x[0] = a * x[0] + s * rng::standard_normal(eng);
  };
}

namespace {

void check_depth(const SteinConfig& cfg) {
  if (cfg.depth < 0) throw std::invalid_argument("SteinConfig: depth must be >= 0");
  if (cfg.n_inner < 2) throw std::invalid_argument("SteinConfig: n_inner must be >= 2");
  if (cfg.decay_rate > 0.0) {
    if (!(cfg.decay_rate < 1.0)) {
      throw std::invalid_argument("SteinConfig: decay_rate must lie in (0,1)");
    }
    const double tail =
        std::pow(cfg.decay_rate, cfg.depth + 1) / (1.0 - cfg.decay_rate);
    if (tail > cfg.tail_tol) {
      throw DepthTooSmall("stein series depth " + std::to_string(cfg.depth) +
                          " leaves geometric tail " + std::to_string(tail) +
                          " above tolerance " + std::to_string(cfg.tail_tol));
    }
  }
}

}  // namespace

SteinPointEstimate stein_value_at(const StepKernel& kernel,
                                  const std::function<double(const Eigen::VectorXd&)>& h,
                                  const SteinConfig& cfg, const Eigen::VectorXd& x,
                                  rng::Engine& eng) {
  check_depth(cfg);
  const double h0 = h(x);
  double sum = 0.0, sum_sq = 0.0;
  Eigen::VectorXd y(x.size());
  for (int j = 0; j < cfg.n_inner; ++j) {
    y = x;
    double s = h0;
    for (int k = 1; k <= cfg.depth; ++k) {
      kernel(y, eng);
      s += h(y);
    }
    sum += s;
    sum_sq += s * s;
  }
  const double nj = static_cast<double>(cfg.n_inner);
  const double mean_s = sum / nj;
  const double var_s = std::max(0.0, (sum_sq - nj * mean_s * mean_s) / (nj - 1.0));
  SteinPointEstimate out;
  out.value = -(mean_s - static_cast<double>(cfg.depth + 1) * cfg.mu_hat);
  out.std_error = std::sqrt(var_s / nj);
  return out;
}

SteinSeries stein_series_solve(const StepKernel& kernel,
                               const std::function<double(const Eigen::VectorXd&)>& h,
                               const SteinConfig& cfg,
                               std::span<const Eigen::VectorXd> query_points) {
  check_depth(cfg);
  SteinSeries out;
  out.depth = cfg.depth;
  out.mu_hat = cfg.mu_hat;
  out.query_points.assign(query_points.begin(), query_points.end());
  out.values.reserve(query_points.size());
  out.std_errors.reserve(query_points.size());
  for (std::size_t i = 0; i < query_points.size(); ++i) {
    rng::Engine eng = rng::make_engine(cfg.seed, i);
    const SteinPointEstimate e = stein_value_at(kernel, h, cfg, query_points[i], eng);
    out.values.push_back(e.value);
    out.std_errors.push_back(e.std_error);
  }
  return out;
}

SteinResidualReport stein_residual_check(const StepKernel& kernel,
                                         const std::function<double(const Eigen::VectorXd&)>& h,
                                         const SteinConfig& cfg,
                                         std::span<const Eigen::VectorXd> points,
                                         int n_nested) {
  check_depth(cfg);
  if (n_nested < 2) throw std::invalid_argument("stein_residual_check: n_nested >= 2");
  SteinResidualReport rep;
  rep.n_points = static_cast<int>(points.size());
  constexpr std::uint64_t kResidualStreamBase = std::uint64_t{1} << 40;
  for (std::size_t i = 0; i < points.size(); ++i) {
    rng::Engine eng = rng::make_engine(cfg.seed, kResidualStreamBase + i);
    const Eigen::VectorXd& x = points[i];
    const SteinPointEstimate fx = stein_value_at(kernel, h, cfg, x, eng);
    double sum_fy = 0.0, sum_fy_sq = 0.0;
    Eigen::VectorXd y(x.size());
    for (int l = 0; l < n_nested; ++l) {
      y = x;
      kernel(y, eng);
      const SteinPointEstimate fy = stein_value_at(kernel, h, cfg, y, eng);
      sum_fy += fy.value;
      sum_fy_sq += fy.value * fy.value;
    }
    const double nl = static_cast<double>(n_nested);
    const double mean_fy = sum_fy / nl;
    const double var_fy =
        std::max(0.0, (sum_fy_sq - nl * mean_fy * mean_fy) / (nl - 1.0));
    const double se =
        std::sqrt(fx.std_error * fx.std_error + var_fy / nl);
    rep.residual.push_back(mean_fy - fx.value);
    rep.target.push_back(h(x) - cfg.mu_hat);
    rep.combined_se.push_back(se);
    if (std::abs(rep.residual.back() - rep.target.back()) <= 3.0 * se + 1e-12) {
      ++rep.n_within;
    }
  }
  return rep;
}

VarianceEstimate variance_stein_series(const StepKernel& kernel,
                                       const std::function<double(const Eigen::VectorXd&)>& h,
                                       const SteinConfig& cfg,
                                       std::span<const Eigen::VectorXd> points) {
  check_depth(cfg);
  if (points.size() < 2) {
    throw std::invalid_argument("variance_stein_series: needs at least 2 sample points");
  }
  constexpr std::uint64_t kVarianceStreamBase = std::uint64_t{1} << 41;
  double sum = 0.0, sum_sq = 0.0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    rng::Engine eng = rng::make_engine(cfg.seed, kVarianceStreamBase + i);
    const SteinPointEstimate f = stein_value_at(kernel, h, cfg, points[i], eng);
    const double hc = h(points[i]) - cfg.mu_hat;
    const double v = -2.0 * f.value * hc - hc * hc;
    sum += v;
    sum_sq += v * v;
  }
  const double m = static_cast<double>(points.size());
  const double mean_v = sum / m;
  const double var_v = std::max(0.0, (sum_sq - m * mean_v * mean_v) / (m - 1.0));
  VarianceEstimate out;
  out.raw_estimate = mean_v;
  out.estimate = std::max(0.0, mean_v);
  out.method = "stein-series";
  out.std_error = std::sqrt(var_v / m);
  out.n = points.size();
  out.depth = cfg.depth;
  return out;
}

double estimate_decay_rate(std::span<const double> h, int max_lag) {
  const std::vector<double> c = autocovariances(h, max_lag);
  if (!(c[0] > 0.0)) return 0.0;
  const double target = c[0] / std::exp(1.0);
  for (std::size_t k = 1; k < c.size(); ++k) {
    if (c[k] <= target) {
      return std::clamp(std::exp(-1.0 / static_cast<double>(k)), 1e-12, 1.0 - 1e-12);
    }
  }
  return std::clamp(std::exp(-1.0 / static_cast<double>(max_lag)), 1e-12, 1.0 - 1e-12);
}

// ---------------------------------------------------------------------------
// Rate function and normality

double mdp_rate(double z, const VarianceEstimate& v) {
  if (!(v.estimate > 0.0)) throw ZeroVariance("mdp_rate: variance estimate must be positive");
  return z * z / (2.0 * v.estimate);
}

namespace {

// Complement of the Kolmogorov distribution, two-branch evaluation.
double kolmogorov_q(double lambda) {
  if (lambda <= 0.0) return 1.0;
  if (lambda < 1.18) {
    const double pi = 3.14159265358979323846;
    const double t = std::exp(-pi * pi / (8.0 * lambda * lambda));
    // K(lambda) = sqrt(2 pi)/lambda * sum over odd j of t^{j^2}
    const double series = t * (1.0 + std::pow(t, 8.0) + std::pow(t, 24.0) + std::pow(t, 48.0));
    const double k = std::sqrt(2.0 * pi) / lambda * series;
    return std::clamp(1.0 - k, 0.0, 1.0);
  }
  double sum = 0.0;
  for (int j = 1; j <= 100; ++j) {
    const double term = std::exp(-2.0 * j * j * lambda * lambda);
    sum += (j % 2 == 1) ? term : -term;
    if (term < 1e-14) break;
  }
  return std::clamp(2.0 * sum, 0.0, 1.0);
}

}  // namespace

NormalityReport clt_normality_check(std::span<const double> standardized) {
  if (standardized.size() < 32) {
    throw TooFewBatches("clt_normality_check: needs at least 32 batch means");
  }
  std::vector<double> z(standardized.begin(), standardized.end());
  std::sort(z.begin(), z.end());
  const double n = static_cast<double>(z.size());
  double d = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    const double cdf = rng::normal_cdf(z[i]);
    const double hi = (static_cast<double>(i) + 1.0) / n - cdf;
    const double lo = cdf - static_cast<double>(i) / n;
    d = std::max({d, hi, lo});
  }
  NormalityReport rep;
  rep.n = static_cast<int>(z.size());
  rep.ks_statistic = d;
  const double lambda = (std::sqrt(n) + 0.12 + 0.11 / std::sqrt(n)) * d;
  rep.p_value = kolmogorov_q(lambda);
  return rep;
}

}  // namespace hwdiff::ergodic
