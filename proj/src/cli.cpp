#include "hwdiff/cli.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "hwdiff/diagnostics.hpp"
#include "hwdiff/dynamics.hpp"
#include "hwdiff/ergodic.hpp"
#include "hwdiff/integrator.hpp"
#include "hwdiff/metrics.hpp"
#include "hwdiff/model.hpp"
#include "hwdiff/version.hpp"

namespace hwdiff::cli {

namespace {

using nlohmann::json;

std::string iso_timestamp_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t tt = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&tt, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

struct CommonOptions {
  int threads = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  std::uint64_t seed = 0;
  std::string out;
  bool quiet = false;
};

void add_common(CLI::App* sub, CommonOptions& c) {
  sub->add_option("--threads", c.threads, "Worker pool size")->check(CLI::PositiveNumber);
  sub->add_option("--seed", c.seed, "Base RNG seed");
  sub->add_option("--out", c.out, "Output artifact path");
  sub->add_flag("--quiet", c.quiet, "Suppress the stdout summary");
}

void say(const CommonOptions& c, const std::string& line) {
  if (!c.quiet) std::cout << line << "\n";
}

// Writes the artifact byte-for-byte plus a timestamp sidecar (the sidecar is
// the only place wall-clock data lives, keeping the artifact reproducible).
void write_artifact(const std::string& path, const std::string& content, double wall_seconds) {
  const std::filesystem::path p(path);
  if (p.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(p.parent_path(), ec);
  }
  {
    std::ofstream f(p, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open output file: " + path);
    f.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!f) throw std::runtime_error("failed writing output file: " + path);
  }
  json meta;
  meta["written_at"] = iso_timestamp_now();
  meta["wall_seconds"] = wall_seconds;
  std::ofstream mf(path + ".meta.json", std::ios::binary);
  if (mf) mf << meta.dump(2) << "\n";
}

std::string header_comment(const std::string& tool, const json& config) {
  std::string out;
  out += "# tool: hwdiff " + tool + "\n";
  out += "# version: " + std::string(hwdiff::kVersion) + "\n";
  out += "# config: " + config.dump() + "\n";
  return out;
}

json meta_block(const std::string& tool, const json& config) {
  json meta;
  meta["tool"] = "hwdiff " + tool;
  meta["version"] = hwdiff::kVersion;
  meta["config"] = config;
  return meta;
}

std::vector<double> parse_double_list(const std::string& csv, const char* what) {
  std::vector<double> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t pos = 0;
      const double v = std::stod(item, &pos);
      if (pos != item.size()) throw std::invalid_argument(item);
      out.push_back(v);
    } catch (const std::exception&) {
      throw std::invalid_argument(std::string(what) + ": cannot parse '" + item +
                                  "' as a number");
    }
  }
  if (out.empty()) throw std::invalid_argument(std::string(what) + ": empty list");
  return out;
}

Eigen::VectorXd parse_x0(const std::string& csv, int d) {
  if (csv.empty()) return Eigen::VectorXd::Zero(d);
  const std::vector<double> vals = parse_double_list(csv, "--x0");
  if (static_cast<int>(vals.size()) != d) {
    throw std::invalid_argument("--x0: expected " + std::to_string(d) + " components, got " +
                                std::to_string(vals.size()));
  }
  return Eigen::Map<const Eigen::VectorXd>(vals.data(), d);
}

std::string join_row(const std::vector<std::string>& cells) {
  std::string row;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i > 0) row += ',';
    row += cells[i];
  }
  row += '\n';
  return row;
}

double wall_since(const std::chrono::steady_clock::time_point& t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---------------------------------------------------------------------------
// model-check

int cmd_model_check(const std::string& model_path, const CommonOptions& c) {
  const auto t0 = std::chrono::steady_clock::now();
  const model::PhaseTypeModel m = model::load_model_file(model_path);
  const model::DiffusionParams raw = model::derive_params_unchecked(m);
  const double e_gamma = raw.gamma.sum();
  const model::GrowthBounds bounds = model::linear_growth_bound(raw);

  json config;
  config["model"] = model_path;
  json results;
  results["d"] = raw.d;
  results["zeta"] = raw.zeta;
  results["e_gamma"] = e_gamma;
  results["min_eig"] = raw.min_eig;
  results["c_op"] = bounds.c_op;
  results["c_tilde_op"] = bounds.c_tilde_op;
  results["unit_mean"] = std::abs(raw.zeta - 1.0) <= 1e-9;

  say(c, "model-check: d=" + std::to_string(raw.d) + " zeta=" + format_double(raw.zeta) +
             " e_gamma=" + format_double(e_gamma) + " min_eig=" + format_double(raw.min_eig));
  if (!c.out.empty()) {
    json doc;
    doc["meta"] = meta_block("model-check", config);
    doc["results"] = results;
    write_artifact(c.out, doc.dump(2) + "\n", wall_since(t0));
  }
  return 0;
}

// ---------------------------------------------------------------------------
// schedule

int cmd_schedule(double delta, double varsigma, double safety, const CommonOptions& c) {
  const auto t0 = std::chrono::steady_clock::now();
  const integrator::Schedule s = integrator::plan_schedule(delta, varsigma, safety);
  say(c, "schedule: eta=" + format_double(s.eta) + " n_steps=" + std::to_string(s.n_steps));
  if (!c.out.empty()) {
    json config;
    config["delta"] = delta;
    config["varsigma"] = varsigma;
    config["safety"] = safety;
    json doc;
    doc["meta"] = meta_block("schedule", config);
    doc["results"] = {{"eta", s.eta}, {"n_steps", s.n_steps}};
    write_artifact(c.out, doc.dump(2) + "\n", wall_since(t0));
  }
  return 0;
}

// ---------------------------------------------------------------------------
// simulate

struct SimulateArgs {
  std::string model_path;
  double eta = 1e-3;
  std::uint64_t steps = 0;
  std::int64_t burn_in = -1;  // -1: default heuristic
  int replicas = 1;
  std::string x0_csv;
  std::uint64_t checkpoint = 0;  // 0: ~20 checkpoints
  std::vector<std::string> h_names{"tanh-sum"};
  bool normalize = false;
};

struct CheckpointRow {
  int replica;
  std::uint64_t n;
  std::vector<double> mean;
  std::vector<double> m2;
};

// Sink recording an accumulator plus running-statistics checkpoints.
struct SimulateSink {
  ergodic::ErgodicAccumulator acc;
  std::uint64_t interval = 0;
  std::uint64_t next = 0;
  int replica = 0;
  int d = 0;
  std::vector<CheckpointRow> rows;

  void operator()(const Eigen::VectorXd& x) {
    acc.add(x);
    if (interval > 0 && acc.count() == next) {
      CheckpointRow row;
      row.replica = replica;
      row.n = acc.count();
      for (int i = 0; i <= d; ++i) {
        row.mean.push_back(acc.moment(i, 1));
        row.m2.push_back(acc.moment(i, 2));
      }
      rows.push_back(std::move(row));
      next += interval;
    }
  }
};

int cmd_simulate(const SimulateArgs& a, const CommonOptions& c) {
  const auto t0 = std::chrono::steady_clock::now();
  const model::PhaseTypeModel m = model::load_model_file(a.model_path);
  const model::DiffusionParams params = model::derive_params(m, a.normalize);
  const int d = params.d;
  if (a.steps == 0) throw std::invalid_argument("simulate: --steps must be positive");
  if (a.replicas < 1) throw std::invalid_argument("simulate: --replicas must be >= 1");

  integrator::EmScheduleConfig cfg;
  cfg.eta = a.eta;
  cfg.n_steps = a.steps;
  cfg.burn_in = a.burn_in >= 0 ? static_cast<std::uint64_t>(a.burn_in)
                               : integrator::default_burn_in(a.steps, a.eta, std::nullopt);
  cfg.seed = c.seed;
  cfg.x0 = parse_x0(a.x0_csv, d);
  cfg.validate(d);

  std::vector<ergodic::TestFunction> hs;
  for (const auto& name : a.h_names) hs.push_back(ergodic::make_test_function(name, d));

  // Pilot run (its own stream, after all replica streams) to size histograms.
  const std::uint64_t pilot_steps =
      std::min<std::uint64_t>(65536, std::max<std::uint64_t>(1024, a.steps / 100));
  Eigen::VectorXd psum = Eigen::VectorXd::Zero(d + 1), psq = Eigen::VectorXd::Zero(d + 1);
  {
    integrator::ChainRunner pilot(params, cfg.eta, cfg.x0, cfg.seed,
                                  static_cast<std::uint64_t>(a.replicas));
    pilot.advance(pilot_steps, [&](const Eigen::VectorXd& x) {
      const double s = x.sum();
      for (int i = 0; i < d; ++i) {
        psum[i] += x[i];
        psq[i] += x[i] * x[i];
      }
      psum[d] += s;
      psq[d] += s * s;
    });
  }
  std::vector<ergodic::HistogramSpec> coord_specs;
  ergodic::HistogramSpec sum_spec;
  for (int i = 0; i <= d; ++i) {
    const double mean = psum[i] / static_cast<double>(pilot_steps);
    const double var =
        std::max(1e-12, psq[i] / static_cast<double>(pilot_steps) - mean * mean);
    const double sd = std::sqrt(var);
    ergodic::HistogramSpec spec{mean - 8.0 * sd, mean + 8.0 * sd, 512};
    if (i < d) {
      coord_specs.push_back(spec);
    } else {
      sum_spec = spec;
    }
  }

  const std::uint64_t retained = a.steps - cfg.burn_in;
  const std::uint64_t interval =
      a.checkpoint > 0 ? a.checkpoint : std::max<std::uint64_t>(1, retained / 20);

  auto make_sink = [&](int r) {
    ergodic::AccumulatorConfig ac;
    ac.d = d;
    ac.test_functions = hs;
    ac.batch_length = std::max<std::uint64_t>(1, retained / 64);
    ac.reservoir_capacity = 100000 / static_cast<std::size_t>(a.replicas) + 1;
    ac.reservoir_seed =
        rng::derive_stream_seed(c.seed, (std::uint64_t{1} << 32) + static_cast<std::uint64_t>(r));
    ac.coord_histograms = coord_specs;
    ac.sum_histogram = sum_spec;
    SimulateSink sink{ergodic::ErgodicAccumulator(ac), interval, interval, r, d, {}};
    return sink;
  };

  std::vector<integrator::TrajectorySummary> summaries;
  std::vector<SimulateSink> sinks =
      integrator::run_replicas(params, cfg, a.replicas, make_sink, c.threads, &summaries);

  // Merge replica accumulators in replica order.
  ergodic::ErgodicAccumulator grand = sinks[0].acc;
  for (std::size_t r = 1; r < sinks.size(); ++r) grand.merge(sinks[r].acc);

  // CSV artifact: per-checkpoint running statistics.
  json config;
  config["model"] = a.model_path;
  config["eta"] = a.eta;
  config["steps"] = a.steps;
  config["burn_in"] = cfg.burn_in;
  config["replicas"] = a.replicas;
  config["seed"] = c.seed;
  config["checkpoint"] = interval;
  config["h"] = a.h_names;
  config["normalize"] = a.normalize;
  config["x0"] = a.x0_csv.empty() ? "0" : a.x0_csv;

  std::string csv = header_comment("simulate", config);
  {
    std::vector<std::string> head{"replica", "step"};
    for (int i = 0; i < d; ++i) head.push_back("mean_" + std::to_string(i));
    head.push_back("mean_sum");
    for (int i = 0; i < d; ++i) head.push_back("m2_" + std::to_string(i));
    head.push_back("m2_sum");
    csv += join_row(head);
    for (const auto& sink : sinks) {
      for (const auto& row : sink.rows) {
        std::vector<std::string> cells{std::to_string(row.replica), std::to_string(row.n)};
        for (int i = 0; i <= d; ++i) cells.push_back(format_double(row.mean[static_cast<std::size_t>(i)]));
        for (int i = 0; i <= d; ++i) cells.push_back(format_double(row.m2[static_cast<std::size_t>(i)]));
        csv += join_row(cells);
      }
    }
  }
  if (!c.out.empty()) write_artifact(c.out, csv, wall_since(t0));

  // Two distinct summaries: the time average over retained states, and the
  // ensemble over replica final states (they estimate different objects).
  std::string line = "simulate: n=" + std::to_string(grand.count());
  for (std::size_t f = 0; f < hs.size(); ++f) {
    line += " ergodic[" + hs[f].name + "]=" + format_double(grand.h_mean(f));
  }
  Eigen::VectorXd final_mean = Eigen::VectorXd::Zero(d);
  for (const auto& s : summaries) final_mean += s.final_state;
  final_mean /= static_cast<double>(summaries.size());
  line += " final_ensemble_mean=[";
  for (int i = 0; i < d; ++i) line += (i ? "," : "") + format_double(final_mean[i]);
  line += "]";
  say(c, line);
  return 0;
}

// ---------------------------------------------------------------------------
// variance

struct VarianceArgs {
  std::string model_path;
  std::string h_name = "tanh-sum";
  std::string method = "all";  // all | batch-means | autocovariance | stein
  double eta = 0.01;
  std::uint64_t steps = 2000000;
  std::int64_t burn_in = -1;
  int batches = 64;
  int max_lag = 0;    // 0: auto
  int depth = 0;      // 0: auto from fitted decay
  int n_inner = 64;
  int n_outer = 512;
  bool check_stein = false;
  bool normalize = false;
};

int cmd_variance(const VarianceArgs& a, const CommonOptions& c) {
  const auto t0 = std::chrono::steady_clock::now();
  const model::PhaseTypeModel m = model::load_model_file(a.model_path);
  const model::DiffusionParams params = model::derive_params(m, a.normalize);
  const int d = params.d;
  const ergodic::TestFunction h = ergodic::make_test_function(a.h_name, d);
  if (a.method != "all" && a.method != "batch-means" && a.method != "autocovariance" &&
      a.method != "stein") {
    throw std::invalid_argument("variance: unknown --method '" + a.method + "'");
  }

  integrator::EmScheduleConfig cfg;
  cfg.eta = a.eta;
  cfg.n_steps = a.steps;
  cfg.burn_in = a.burn_in >= 0 ? static_cast<std::uint64_t>(a.burn_in)
                               : integrator::default_burn_in(a.steps, a.eta, std::nullopt);
  cfg.seed = c.seed;
  cfg.x0 = Eigen::VectorXd::Zero(d);
  cfg.validate(d);

  // One long chain; h-values kept densely, states subsampled via reservoir.
  std::vector<double> hvals;
  hvals.reserve(a.steps - cfg.burn_in);
  ergodic::AccumulatorConfig ac;
  ac.d = d;
  ac.test_functions = {h};
  ac.reservoir_capacity = static_cast<std::size_t>(std::max(a.n_outer, 32));
  ac.reservoir_seed = rng::derive_stream_seed(c.seed, std::uint64_t{1} << 33);
  ergodic::ErgodicAccumulator acc(ac);
  integrator::run_chain(params, cfg, [&](const Eigen::VectorXd& x) {
    acc.add(x);
    hvals.push_back(h.fn(x));
  });

  const double mu_hat = acc.h_mean(0);
  const auto n = hvals.size();
  const int max_lag = a.max_lag > 0
                          ? a.max_lag
                          : static_cast<int>(std::min<std::uint64_t>(5000, n / 10 - 1));

  json results;
  results["mu_hat"] = mu_hat;
  results["n"] = n;

  auto encode = [](const ergodic::VarianceEstimate& v) {
    json j;
    j["estimate"] = v.estimate;
    j["std_error"] = v.std_error;
    j["method"] = v.method;
    j["raw_estimate"] = v.raw_estimate;
    j["n"] = v.n;
    if (v.n_batches > 0) j["n_batches"] = v.n_batches;
    if (v.batch_length > 0) j["batch_length"] = v.batch_length;
    if (v.truncation_lag >= 0) j["truncation_lag"] = v.truncation_lag;
    if (v.depth >= 0) j["depth"] = v.depth;
    return j;
  };

  std::string summary = "variance[" + a.h_name + "]: mu_hat=" + format_double(mu_hat);

  if (a.method == "all" || a.method == "batch-means") {
    std::vector<double> standardized;
    const auto v = ergodic::variance_batch_means(hvals, a.batches, &standardized);
    results["batch_means"] = encode(v);
    // The KS side-check needs a reasonable sample of batch means; below that
    // the estimate stands on its own and the check is reported as skipped.
    if (standardized.size() >= 32) {
      const auto rep = ergodic::clt_normality_check(standardized);
      results["batch_means"]["normality"] =
          json{{"ks_statistic", rep.ks_statistic}, {"p_value", rep.p_value}, {"n", rep.n}};
    } else {
      results["batch_means"]["normality"] = nullptr;
    }
    summary += " batch=" + format_double(v.estimate);
  }
  if (a.method == "all" || a.method == "autocovariance") {
    const auto v = ergodic::variance_autocovariance(hvals, max_lag);
    results["autocovariance"] = encode(v);
    summary += " autocov=" + format_double(v.estimate);
  }
  if (a.method == "all" || a.method == "stein") {
    const double rho = ergodic::estimate_decay_rate(
        hvals, std::min<int>(max_lag, static_cast<int>(n / 10 - 1)));
    ergodic::SteinConfig sc;
    sc.n_inner = a.n_inner;
    sc.mu_hat = mu_hat;
    sc.seed = rng::derive_stream_seed(c.seed, std::uint64_t{1} << 34);
    sc.decay_rate = rho;
    if (a.depth > 0) {
      sc.depth = a.depth;
    } else {
      // smallest K with rho^(K+1)/(1-rho) <= tail_tol
      const double k = std::log(sc.tail_tol * (1.0 - rho)) / std::log(rho) - 1.0;
      sc.depth = static_cast<int>(std::clamp(std::ceil(k), 8.0, 20000.0));
    }
    const ergodic::StepKernel kernel = ergodic::em_kernel(params, a.eta);
    std::vector<Eigen::VectorXd> points = acc.reservoir_states();
    if (points.size() > static_cast<std::size_t>(a.n_outer)) {
      points.resize(static_cast<std::size_t>(a.n_outer));
    }
    const auto v = ergodic::variance_stein_series(kernel, h.fn, sc, points);
    results["stein_series"] = encode(v);
    results["stein_series"]["decay_rate"] = rho;
    summary += " stein=" + format_double(v.estimate);
    if (a.check_stein) {
      const std::size_t n_check = std::min<std::size_t>(points.size(), 20);
      const auto rep = ergodic::stein_residual_check(
          kernel, h.fn, sc, std::span(points.data(), n_check), 64);
      results["stein_series"]["residual_check"] = {
          {"n_points", rep.n_points}, {"n_within_3se", rep.n_within}};
    }
  }

  json config;
  config["model"] = a.model_path;
  config["h"] = a.h_name;
  config["method"] = a.method;
  config["eta"] = a.eta;
  config["steps"] = a.steps;
  config["burn_in"] = cfg.burn_in;
  config["seed"] = c.seed;
  config["batches"] = a.batches;
  config["max_lag"] = max_lag;
  config["n_inner"] = a.n_inner;
  config["n_outer"] = a.n_outer;

  if (!c.out.empty()) {
    json doc;
    doc["meta"] = meta_block("variance", config);
    doc["results"] = results;
    write_artifact(c.out, doc.dump(2) + "\n", wall_since(t0));
  }
  say(c, summary);
  return 0;
}

// ---------------------------------------------------------------------------
// lyapunov

int cmd_lyapunov(const std::string& model_path, double grid_radius, int radii, int directions,
                 bool normalize, const CommonOptions& c) {
  const auto t0 = std::chrono::steady_clock::now();
  const model::PhaseTypeModel m = model::load_model_file(model_path);
  const model::DiffusionParams params = model::derive_params(m, normalize);
  const diagnostics::LyapunovSpec spec = diagnostics::solve_qtilde(params);
  const auto grid =
      diagnostics::make_radial_grid(params.d, grid_radius, radii, directions, c.seed);
  const diagnostics::DriftReport rep = diagnostics::lyapunov_check(spec, params, grid);

  json config;
  config["model"] = model_path;
  config["grid_radius"] = grid_radius;
  config["radii"] = radii;
  config["directions"] = directions;
  config["seed"] = c.seed;

  json results;
  results["qtilde"] = json::array();
  for (int i = 0; i < params.d; ++i) {
    json row = json::array();
    for (int j = 0; j < params.d; ++j) row.push_back(spec.Qtilde(i, j));
    results["qtilde"].push_back(row);
  }
  results["kappa"] = spec.kappa;
  results["c2hat"] = spec.c2hat;
  results["cond1_eig"] = spec.cond1_eig;
  results["cond2_eig"] = spec.cond2_eig;
  results["c1"] = rep.c1;
  results["c1_breve"] = rep.c1_breve;
  results["margin"] = rep.margin;
  results["c1_hat_fitted"] = rep.c1_hat;
  results["C1_hat_fitted"] = rep.C1_hat;
  results["C2_hat_fitted"] = rep.C2_hat;
  results["n_grid"] = rep.n_grid;

  say(c, "lyapunov: c1=" + format_double(rep.c1) + " c1_breve=" + format_double(rep.c1_breve) +
             " margin=" + format_double(rep.margin) + " (fitted constants, not ground truth)");
  if (!c.out.empty()) {
    json doc;
    doc["meta"] = meta_block("lyapunov", config);
    doc["results"] = results;
    write_artifact(c.out, doc.dump(2) + "\n", wall_since(t0));
  }
  return 0;
}

// ---------------------------------------------------------------------------
// gradient-check

struct GradientArgs {
  std::string model_path;
  double eps = 0.01;
  double t = 1.0;
  std::uint64_t paths = 100000;
  double eta = 1e-3;
  std::string psi_name = "tanh-sum";
  std::string u_csv;
  std::string x0_csv;
  double fd_step = 1e-2;
  bool normalize = false;
};

int cmd_gradient_check(const GradientArgs& a, const CommonOptions& c) {
  const auto t0 = std::chrono::steady_clock::now();
  const model::PhaseTypeModel m = model::load_model_file(a.model_path);
  const model::DiffusionParams params = model::derive_params(m, a.normalize);
  const int d = params.d;
  const ergodic::TestFunction psi = ergodic::make_test_function(a.psi_name, d);
  if (!psi.lipschitz) {
    throw std::invalid_argument("gradient-check: psi must be Lipschitz; '" + a.psi_name +
                                "' is not");
  }
  Eigen::VectorXd u;
  if (a.u_csv.empty()) {
    u = Eigen::VectorXd::Constant(d, 1.0 / std::sqrt(static_cast<double>(d)));
  } else {
    const auto vals = parse_double_list(a.u_csv, "--u");
    if (static_cast<int>(vals.size()) != d) {
      throw std::invalid_argument("--u: expected " + std::to_string(d) + " components");
    }
    u = Eigen::Map<const Eigen::VectorXd>(vals.data(), d);
  }
  const Eigen::VectorXd x0 = parse_x0(a.x0_csv, d);

  const auto bis = diagnostics::bismut_gradient(params, a.eps, x0, u, a.t, a.paths, a.eta,
                                                psi.fn, c.seed, c.threads);
  const auto fd =
      diagnostics::fd_gradient(params, a.eps, x0, u, a.t, a.paths, a.eta, psi.fn,
                               rng::derive_stream_seed(c.seed, std::uint64_t{1} << 35),
                               a.fd_step, c.threads);
  const double combined_se = std::hypot(bis.std_error, fd.std_error);
  const double gap = std::abs(bis.estimate - fd.estimate);

  json config;
  config["model"] = a.model_path;
  config["eps"] = a.eps;
  config["t"] = a.t;
  config["paths"] = a.paths;
  config["eta"] = a.eta;
  config["psi"] = a.psi_name;
  config["fd_step"] = a.fd_step;
  config["seed"] = c.seed;

  json results;
  results["bismut"] = {{"estimate", bis.estimate}, {"std_error", bis.std_error},
                       {"n_paths", bis.n_paths}};
  results["finite_difference"] = {{"estimate", fd.estimate}, {"std_error", fd.std_error},
                                  {"n_paths", fd.n_paths}};
  results["gap"] = gap;
  results["combined_se"] = combined_se;
  results["gap_over_se"] = combined_se > 0.0 ? gap / combined_se : 0.0;

  say(c, "gradient-check: bismut=" + format_double(bis.estimate) + "+-" +
             format_double(bis.std_error) + " fd=" + format_double(fd.estimate) + "+-" +
             format_double(fd.std_error) + " gap/se=" +
             format_double(combined_se > 0.0 ? gap / combined_se : 0.0));
  if (!c.out.empty()) {
    json doc;
    doc["meta"] = meta_block("gradient-check", config);
    doc["results"] = results;
    write_artifact(c.out, doc.dump(2) + "\n", wall_since(t0));
  }
  return 0;
}

// ---------------------------------------------------------------------------
// occupation

int cmd_occupation(const std::string& model_path, const std::string& eps_sweep, double t,
                   std::uint64_t paths, double eta, const std::string& x0_csv, bool normalize,
                   const CommonOptions& c) {
  const auto t0 = std::chrono::steady_clock::now();
  const model::PhaseTypeModel m = model::load_model_file(model_path);
  const model::DiffusionParams params = model::derive_params(m, normalize);
  const std::vector<double> sweep = parse_double_list(eps_sweep, "--eps-sweep");
  const Eigen::VectorXd x0 = parse_x0(x0_csv, params.d);

  json config;
  config["model"] = model_path;
  config["eps_sweep"] = sweep;
  config["t"] = t;
  config["paths"] = paths;
  config["eta"] = eta;
  config["seed"] = c.seed;
  config["x0"] = x0_csv.empty() ? "0" : x0_csv;

  std::string csv = header_comment("occupation", config);
  csv += join_row({"eps", "estimate", "std_error", "ratio_to_previous"});
  std::string summary = "occupation:";
  double prev = 0.0;
  bool have_prev = false;
  for (double eps : sweep) {
    const auto est = diagnostics::occupation_time(params, x0, t, eps, paths, eta,
                                                  rng::derive_stream_seed(c.seed, std::uint64_t{1} << 36),
                                                  c.threads);
    std::vector<std::string> cells{format_double(eps), format_double(est.estimate),
                                   format_double(est.std_error)};
    if (have_prev && prev > 0.0) {
      cells.push_back(format_double(est.estimate / prev));
    } else {
      cells.push_back("");
    }
    csv += join_row(cells);
    summary += " L(" + format_double(eps) + ")=" + format_double(est.estimate);
    prev = est.estimate;
    have_prev = true;
  }
  if (!c.out.empty()) write_artifact(c.out, csv, wall_since(t0));
  say(c, summary);
  return 0;
}

// ---------------------------------------------------------------------------
// benchmark-1d

struct BenchmarkArgs {
  double beta = 1.0;
  double alpha = 0.5;
  double ca2 = 1.0;
  std::string eta_sweep = "0.1,0.05,0.025,0.0125";
  std::string steps_per_eta = "auto";  // "auto" or an integer
  std::uint64_t seed = 7;
};

// Fixed time budget per sweep entry when --steps-per-eta auto: the sample
// count scales like 1/eta, matching the rate experiment's design.
constexpr double kBenchmarkTimeBudget = 4.0e5;
constexpr double kBenchmarkBurnTime = 200.0;
constexpr std::uint64_t kBenchmarkMaxKept = 4000000;

struct SweepPoint {
  double eta = 0.0;
  double w1 = 0.0;
  double se = 0.0;
};

model::PhaseTypeModel benchmark_model(double beta, double alpha, double ca2) {
  model::PhaseTypeModel m;
  m.d = 1;
  m.P = Eigen::MatrixXd::Zero(1, 1);
  m.v = Eigen::VectorXd::Ones(1);
  m.p = Eigen::VectorXd::Ones(1);
  m.alpha = alpha;
  m.beta = beta;
  m.ca2 = ca2;
  return m;
}

SweepPoint run_benchmark_point(const model::DiffusionParams& params,
                               const metrics::Benchmark1D& density, double eta,
               std::uint64_t n_steps, std::uint64_t burn_in,
                               std::uint64_t seed, std::uint64_t stream) {
  integrator::EmScheduleConfig cfg;
  cfg.eta = eta;
  cfg.n_steps = n_steps;
  cfg.burn_in = burn_in;
  cfg.seed = seed;
  cfg.x0 = Eigen::VectorXd::Zero(1);
  cfg.validate(1);

  const std::uint64_t retained = n_steps - burn_in;
  const std::uint64_t stride = std::max<std::uint64_t>(1, retained / kBenchmarkMaxKept);
  std::vector<double> kept;
  kept.reserve(static_cast<std::size_t>(retained / stride + 1));
  std::uint64_t i = 0;
  integrator::run_chain(
      params, cfg,
      [&](const Eigen::VectorXd& x) {
        if (i++ % stride == 0) kept.push_back(x[0]);
      },
      stream);

  SweepPoint pt;
  pt.eta = eta;
  pt.w1 = metrics::w1_sorted_1d(kept, density);
  // Error bar from 8 consecutive blocks: sd of block-level W1 scaled to the
  // full sample (the statistic's noise scales like 1/sqrt(n)).
  const std::size_t nb = 8;
  const std::size_t block = kept.size() / nb;
  if (block >= 16) {
    std::vector<double> bw;
    for (std::size_t b = 0; b < nb; ++b) {
      std::vector<double> chunk(kept.begin() + static_cast<std::ptrdiff_t>(b * block),
                                kept.begin() + static_cast<std::ptrdiff_t>((b + 1) * block));
      bw.push_back(metrics::w1_sorted_1d(chunk, density));
    }
    const double mean = std::accumulate(bw.begin(), bw.end(), 0.0) / static_cast<double>(nb);
    double ss = 0.0;
    for (double v : bw) ss += (v - mean) * (v - mean);
    const double sd = std::sqrt(ss / static_cast<double>(nb - 1));
    pt.se = sd / std::sqrt(static_cast<double>(nb));
  }
  return pt;
}

int cmd_benchmark_1d(const BenchmarkArgs& a, const CommonOptions& c) {
  const auto t0 = std::chrono::steady_clock::now();
  const std::vector<double> etas = parse_double_list(a.eta_sweep, "--eta-sweep");
  const model::PhaseTypeModel m = benchmark_model(a.beta, a.alpha, a.ca2);
  const model::DiffusionParams params = model::derive_params(m);
  const double sigma2 = params.Sigma(0, 0);
  const metrics::Benchmark1D density(a.beta, a.alpha, sigma2);

  std::optional<std::uint64_t> fixed_steps;
  if (a.steps_per_eta != "auto") {
    std::uint64_t v = 0;
    const auto res = std::from_chars(a.steps_per_eta.data(),
                                     a.steps_per_eta.data() + a.steps_per_eta.size(), v);
    if (res.ec != std::errc{} || res.ptr != a.steps_per_eta.data() + a.steps_per_eta.size() ||
        v == 0) {
      throw std::invalid_argument("--steps-per-eta: expected 'auto' or a positive integer");
    }
    fixed_steps = v;
  }

  const std::uint64_t seed = c.seed != 0 ? c.seed : a.seed;
  std::vector<SweepPoint> points;
  for (std::size_t i = 0; i < etas.size(); ++i) {
    const double eta = etas[i];
    if (!(eta > 0.0) || !(eta < 1.0)) {
      throw std::invalid_argument("--eta-sweep: eta values must lie in (0,1)");
    }
    std::uint64_t steps = fixed_steps
                              ? *fixed_steps
                              : static_cast<std::uint64_t>(std::ceil(kBenchmarkTimeBudget / eta));
    std::uint64_t burn = static_cast<std::uint64_t>(std::ceil(kBenchmarkBurnTime / eta));
    if (burn >= steps) burn = steps / 10;
    points.push_back(run_benchmark_point(params, density, eta, steps, burn, seed, i));
  }

  metrics::RateFit fit;
  bool have_fit = false;
  if (points.size() >= 2) {
    std::vector<std::pair<double, double>> pairs;
    for (const auto& p : points) {
      if (p.w1 > 0.0) pairs.emplace_back(p.eta, p.w1);
    }
    if (pairs.size() >= 2) {
      fit = metrics::rate_fit(pairs);
      have_fit = true;
    }
  }

  json config;
  config["beta"] = a.beta;
  config["alpha"] = a.alpha;
  config["ca2"] = a.ca2;
  config["sigma2"] = sigma2;
  config["eta_sweep"] = etas;
  config["steps_per_eta"] = a.steps_per_eta;
  config["seed"] = seed;

  std::string csv = header_comment("benchmark-1d", config);
  csv += join_row({"eta", "w1", "std_error", "slope", "intercept", "r2"});
  std::string summary = "benchmark-1d:";
  for (const auto& p : points) {
    csv += join_row({format_double(p.eta), format_double(p.w1), format_double(p.se),
                     have_fit ? format_double(fit.slope) : "",
                     have_fit ? format_double(fit.intercept) : "",
                     have_fit ? format_double(fit.r2) : ""});
    summary += " W1(" + format_double(p.eta) + ")=" + format_double(p.w1);
  }
  if (have_fit) summary += " slope=" + format_double(fit.slope);
  if (!c.out.empty()) write_artifact(c.out, csv, wall_since(t0));
  say(c, summary);
  return 0;
}

}  // namespace

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0.0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

int run_command(const std::vector<std::string>& args) {
  CLI::App app{"limiting-diffusion toolkit for many-server queues"};
  // Keep help on --help only: the short -h would collide with the --h option
  // that names test functions, and subcommands inherit this flag spelling.
  app.set_help_flag("--help", "Print this help message and exit");
  app.require_subcommand(1);

  CommonOptions c_check, c_sched, c_sim, c_var, c_lyap, c_grad, c_occ, c_bench;

  // model-check
  std::string mc_model;
  auto* sub_check = app.add_subcommand("model-check", "Validate a model file and report "
                                                      "derived constants");
  sub_check->add_option("--model", mc_model, "Model JSON path")->required();
  add_common(sub_check, c_check);

  // schedule
  double sc_delta = 0.0, sc_varsigma = 0.0, sc_safety = 10.0;
  auto* sub_sched = app.add_subcommand("schedule", "Plan step size and horizon for a target "
                                                   "accuracy");
  sub_sched->add_option("--delta", sc_delta, "Target accuracy in (0,1)")->required();
  sub_sched->add_option("--varsigma", sc_varsigma, "Schedule exponent in (0,1)")->required();
  sub_sched->add_option("--safety", sc_safety, "Safety factor K");
  add_common(sub_sched, c_sched);

  // simulate
  SimulateArgs sim;
  auto* sub_sim = app.add_subcommand("simulate", "Run EM replicas and record running "
                                                 "statistics");
  sub_sim->add_option("--model", sim.model_path, "Model JSON path")->required();
  sub_sim->add_option("--eta", sim.eta, "Step size");
  sub_sim->add_option("--steps", sim.steps, "Total steps per replica (including burn-in)")
      ->required();
  sub_sim->add_option("--burn-in", sim.burn_in, "Discarded prefix steps");
  sub_sim->add_option("--replicas", sim.replicas, "Independent chains");
  sub_sim->add_option("--x0", sim.x0_csv, "Comma-separated initial state");
  sub_sim->add_option("--checkpoint", sim.checkpoint, "Steps between checkpoint rows");
  sub_sim->add_option("--h", sim.h_names, "Test function names");
  sub_sim->add_flag("--normalize", sim.normalize, "Rescale v if the phase mean is not 1");
  add_common(sub_sim, c_sim);

  // variance
  VarianceArgs var;
  auto* sub_var = app.add_subcommand("variance", "Estimate the asymptotic variance of an "
                                                 "ergodic average");
  sub_var->add_option("--model", var.model_path, "Model JSON path")->required();
  sub_var->add_option("--h", var.h_name, "Test function");
  sub_var->add_option("--method", var.method, "all|batch-means|autocovariance|stein");
  sub_var->add_option("--eta", var.eta, "Step size");
  sub_var->add_option("--steps", var.steps, "Total chain steps");
  sub_var->add_option("--burn-in", var.burn_in, "Discarded prefix steps");
  sub_var->add_option("--batches", var.batches, "Batch count");
  sub_var->add_option("--max-lag", var.max_lag, "Autocovariance truncation window");
  sub_var->add_option("--depth", var.depth, "Stein series depth (0 = auto)");
  sub_var->add_option("--n-inner", var.n_inner, "Inner chains per Stein point");
  sub_var->add_option("--n-outer", var.n_outer, "Stein sample points");
  sub_var->add_flag("--check-stein", var.check_stein, "Run the Stein residual self-check");
  sub_var->add_flag("--normalize", var.normalize, "Rescale v if the phase mean is not 1");
  add_common(sub_var, c_var);

  // lyapunov
  std::string ly_model;
  double ly_radius = 20.0;
  int ly_radii = 40, ly_dirs = 64;
  bool ly_norm = false;
  auto* sub_lyap = app.add_subcommand("lyapunov", "Verify the drift condition on a radial "
                                                  "grid");
  sub_lyap->add_option("--model", ly_model, "Model JSON path")->required();
  sub_lyap->add_option("--grid-radius", ly_radius, "Maximum grid radius");
  sub_lyap->add_option("--radii", ly_radii, "Number of radial shells");
  sub_lyap->add_option("--directions", ly_dirs, "Directions per shell");
  sub_lyap->add_flag("--normalize", ly_norm, "Rescale v if the phase mean is not 1");
  add_common(sub_lyap, c_lyap);

  // gradient-check
  GradientArgs grad;
  auto* sub_grad = app.add_subcommand("gradient-check", "Compare the integration-by-parts "
                                                        "gradient against finite differences");
  sub_grad->add_option("--model", grad.model_path, "Model JSON path")->required();
  sub_grad->add_option("--eps", grad.eps, "Mollifier width");
  sub_grad->add_option("--t", grad.t, "Horizon");
  sub_grad->add_option("--paths", grad.paths, "Monte-Carlo paths");
  sub_grad->add_option("--eta", grad.eta, "Step size");
  sub_grad->add_option("--psi", grad.psi_name, "Payoff from the test-function registry");
  sub_grad->add_option("--u", grad.u_csv, "Direction vector (comma-separated)");
  sub_grad->add_option("--x0", grad.x0_csv, "Initial state (comma-separated)");
  sub_grad->add_option("--fd-step", grad.fd_step, "Finite-difference step");
  sub_grad->add_flag("--normalize", grad.normalize, "Rescale v if the phase mean is not 1");
  add_common(sub_grad, c_grad);

  // occupation
  std::string oc_model, oc_sweep = "0.2,0.1,0.05", oc_x0;
  double oc_t = 10.0, oc_eta = 1e-3;
  std::uint64_t oc_paths = 2000;
  bool oc_norm = false;
  auto* sub_occ = app.add_subcommand("occupation", "Estimate the weighted occupation time of "
                                                   "the kink band");
  sub_occ->add_option("--model", oc_model, "Model JSON path")->required();
  sub_occ->add_option("--eps-sweep", oc_sweep, "Comma-separated band widths");
  sub_occ->add_option("--t", oc_t, "Horizon");
  sub_occ->add_option("--paths", oc_paths, "Monte-Carlo paths");
  sub_occ->add_option("--eta", oc_eta, "Step size");
  sub_occ->add_option("--x0", oc_x0, "Initial state (comma-separated)");
  sub_occ->add_flag("--normalize", oc_norm, "Rescale v if the phase mean is not 1");
  add_common(sub_occ, c_occ);

  // benchmark-1d
  BenchmarkArgs bench;
  auto* sub_bench = app.add_subcommand("benchmark-1d", "Wasserstein error sweep against the "
                                                       "closed-form 1-D stationary density");
  sub_bench->add_option("--beta", bench.beta, "Slack parameter");
  sub_bench->add_option("--alpha", bench.alpha, "Patience rate");
  sub_bench->add_option("--ca2", bench.ca2, "Arrival variability");
  sub_bench->add_option("--eta-sweep", bench.eta_sweep, "Comma-separated step sizes");
  sub_bench->add_option("--steps-per-eta", bench.steps_per_eta, "'auto' or step count");
  add_common(sub_bench, c_bench);

  try {
    // CLI11's vector overload consumes arguments from the back.
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (sub_check->parsed()) return cmd_model_check(mc_model, c_check);
    if (sub_sched->parsed()) return cmd_schedule(sc_delta, sc_varsigma, sc_safety, c_sched);
    if (sub_sim->parsed()) return cmd_simulate(sim, c_sim);
    if (sub_var->parsed()) return cmd_variance(var, c_var);
    if (sub_lyap->parsed()) {
      return cmd_lyapunov(ly_model, ly_radius, ly_radii, ly_dirs, ly_norm, c_lyap);
    }
    if (sub_grad->parsed()) return cmd_gradient_check(grad, c_grad);
    if (sub_occ->parsed()) {
      return cmd_occupation(oc_model, oc_sweep, oc_t, oc_paths, oc_eta, oc_x0, oc_norm, c_occ);
    }
    if (sub_bench->parsed()) return cmd_benchmark_1d(bench, c_bench);
    std::cerr << "error: no subcommand selected\n";
    return 1;
  } catch (const model::ModelError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const metrics::DimensionMismatch& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const metrics::DegenerateInput& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const integrator::BadDelta& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const integrator::BadVarsigma& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const dynamics::BadEpsilon& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const ergodic::UnknownTestFunction& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const ergodic::TooFewBatches& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const ergodic::LagTooLarge& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const ergodic::DepthTooSmall& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "runtime error: " << e.what() << "\n";
    return 2;
  }
}

}  // namespace hwdiff::cli
