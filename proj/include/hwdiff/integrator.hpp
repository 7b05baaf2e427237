#pragma once

#include <Eigen/Dense>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "hwdiff/model.hpp"
#include "hwdiff/rng.hpp"

// Euler-Maruyama discretization of the limiting diffusion.  One chain is a
// deterministic function of (model, config, seed, stream); replicas split a
// base seed into independent streams so results are reproducible at any
// thread count.
namespace hwdiff::integrator {

class BadDelta : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class BadVarsigma : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Thrown when the chain state stops being finite; carries the step index.
class NonFinite : public std::runtime_error {
 public:
  explicit NonFinite(std::uint64_t step)
      : std::runtime_error("chain state became non-finite at step " + std::to_string(step)),
        step_(step) {}
  std::uint64_t step() const { return step_; }

 private:
  std::uint64_t step_;
};

// Step-size / step-count schedule meeting a target Wasserstein accuracy
// delta:  eta = delta^(2/(1-varsigma)),  horizon n = ceil(K * eta^{-1} |ln delta|)
// for a safety factor K.  varsigma in (0,1) trades step size against horizon.
struct Schedule {
  double eta = 0.0;
  std::uint64_t n_steps = 0;
  double delta = 0.0;
  double varsigma = 0.0;
  double safety = 0.0;
};

Schedule plan_schedule(double delta, double varsigma, double safety = 10.0);

struct EmScheduleConfig {
  double eta = 0.0;            // step size, in (0,1)
  std::uint64_t n_steps = 0;   // total steps including burn-in
  std::uint64_t burn_in = 0;   // discarded prefix, < n_steps unless n_steps == 0
  std::uint64_t seed = 0;
  Eigen::VectorXd x0;          // initial state, size d
  double varsigma = 0.0;       // informational: schedule exponent that produced eta
  double delta = 0.0;          // informational: schedule target error

  void validate(int d) const;
};

struct TrajectorySummary {
  Eigen::VectorXd x0;
  Eigen::VectorXd final_state;
  std::uint64_t n_steps = 0;
  std::uint64_t burn_in = 0;
  double eta = 0.0;
  std::uint64_t seed = 0;
  double max_abs = 0.0;  // max over steps of the sup-norm of the state
};

// One explicit Euler-Maruyama update (caller supplies the standard-normal
// vector xi):  returns x + eta * g(x) + sqrt(eta) * sigma_factor * xi.
// Throws NonFinite(0) if the result is not finite.
Eigen::VectorXd em_step(const model::DiffusionParams& params, const Eigen::VectorXd& x,
                        double eta, const Eigen::VectorXd& xi);

// Stateful single-chain driver.  Keeps all step workspace preallocated; the
// sink sees every retained (post-burn-in) state exactly once, in order.
class ChainRunner {
 public:
  ChainRunner(const model::DiffusionParams& params, double eta, const Eigen::VectorXd& x0,
              std::uint64_t seed, std::uint64_t stream = 0);

  const Eigen::VectorXd& state() const { return x_; }
  std::uint64_t step_index() const { return step_; }
  double max_abs() const { return max_abs_; }

  // Advances `n` steps, handing each new state to `sink(state)`.
  template <typename Sink>
  void advance(std::uint64_t n, Sink&& sink) {
    const double sqrt_eta = std::sqrt(eta_);
    for (std::uint64_t k = 0; k < n; ++k) {
      model::drift_into(params_, x_, gx_);
      for (Eigen::Index i = 0; i < xi_.size(); ++i) xi_[i] = rng::standard_normal(eng_);
      noise_.noalias() = params_.sigma_factor * xi_;
      x_ += eta_ * gx_ + sqrt_eta * noise_;
      ++step_;
      if (!x_.allFinite()) throw NonFinite(step_);
      const double m = x_.cwiseAbs().maxCoeff();
      if (m > max_abs_) max_abs_ = m;
      sink(static_cast<const Eigen::VectorXd&>(x_));
    }
  }

  // Advances `n` steps discarding the states (burn-in).
  void advance_discard(std::uint64_t n) {
    advance(n, [](const Eigen::VectorXd&) {});
  }

 private:
  model::DiffusionParams params_;
  double eta_;
  Eigen::VectorXd x_, gx_, xi_, noise_;
  rng::Engine eng_;
  std::uint64_t step_ = 0;
  double max_abs_ = 0.0;
};

// Runs one chain for cfg.n_steps total steps (burn-in discarded), feeding
// retained states to the sink.
template <typename Sink>
TrajectorySummary run_chain(const model::DiffusionParams& params, const EmScheduleConfig& cfg,
                            Sink&& sink, std::uint64_t stream = 0) {
  cfg.validate(params.d);
  ChainRunner runner(params, cfg.eta, cfg.x0, cfg.seed, stream);
  runner.advance_discard(cfg.burn_in);
  runner.advance(cfg.n_steps - cfg.burn_in, sink);
  TrajectorySummary s;
  s.x0 = cfg.x0;
  s.final_state = runner.state();
  s.n_steps = cfg.n_steps;
  s.burn_in = cfg.burn_in;
  s.eta = cfg.eta;
  s.seed = cfg.seed;
  s.max_abs = runner.max_abs();
  return s;
}

// Runs `n_replicas` independent chains (streams 0..n-1 derived from
// cfg.seed).  make_sink(replica_index) builds each replica's sink; sinks are
// returned in replica order so the caller can merge them deterministically.
// `threads` <= 1 runs serially; otherwise replicas are distributed over
// worker threads with identical per-replica results.
template <typename SinkFactory>
auto run_replicas(const model::DiffusionParams& params, const EmScheduleConfig& cfg,
                  int n_replicas, SinkFactory&& make_sink, int threads,
                  std::vector<TrajectorySummary>* summaries = nullptr)
    -> std::vector<decltype(make_sink(0))> {
  using SinkT = decltype(make_sink(0));
  if (n_replicas < 1) throw std::invalid_argument("run_replicas: n_replicas must be >= 1");
  std::vector<SinkT> sinks;
  sinks.reserve(static_cast<std::size_t>(n_replicas));
  for (int r = 0; r < n_replicas; ++r) sinks.push_back(make_sink(r));
  std::vector<TrajectorySummary> local(static_cast<std::size_t>(n_replicas));

  auto work = [&](int r) {
    local[static_cast<std::size_t>(r)] =
        run_chain(params, cfg, std::ref(sinks[static_cast<std::size_t>(r)]),
                  static_cast<std::uint64_t>(r));
  };

  if (threads <= 1 || n_replicas == 1) {
    for (int r = 0; r < n_replicas; ++r) work(r);
  } else {
    const int n_workers = std::min(threads, n_replicas);
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(n_workers));
    std::exception_ptr first_error;
    std::mutex error_mutex;
    std::atomic<int> next{0};
    for (int w = 0; w < n_workers; ++w) {
      pool.emplace_back([&]() {
        for (int r = next.fetch_add(1); r < n_replicas; r = next.fetch_add(1)) {
          try {
            work(r);
          } catch (...) {
            std::lock_guard<std::mutex> lock(error_mutex);
            if (!first_error) first_error = std::current_exception();
          }
        }
      });
    }
    for (auto& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
  }
  if (summaries != nullptr) *summaries = std::move(local);
  return sinks;
}

// Burn-in heuristic: a tenth of the run, capped by ~10 relaxation times of
// the drift when a contraction rate estimate c1 is available.
std::uint64_t default_burn_in(std::uint64_t n_steps, double eta, std::optional<double> c1);

}  // namespace hwdiff::integrator
