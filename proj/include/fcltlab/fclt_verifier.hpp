// Copyright (c) the fcltlab contributors.
// SPDX-License-Identifier: Apache-2.0
//
// Aggregation of replicate simulations into quantitative FCLT verdicts:
// variance scaling against a closed-form covariance-integral oracle,
// one-dimensional normality by Kolmogorov-Smirnov, collapse of the
// resolvent term under a λ_n = o(1/n) schedule, convergence of σ²_λ, and a
// trace of the ε-bookkeeping that stitches those pieces together.

#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <limits>
#include <mutex>
#include <optional>
#include <thread>
#include <vector>

#include "fcltlab/chain_model.hpp"
#include "fcltlab/errors.hpp"
#include "fcltlab/path_simulator.hpp"
#include "fcltlab/spectral_calculus.hpp"

namespace fcltlab {

namespace detail {

/// x − 1 + e^{−x}, series-evaluated below x = 0.5 where the direct form
/// cancels catastrophically.
inline double expm1_remainder(double x) {
  if (x >= 0.5) return x - 1.0 + std::exp(-x);
  double term = 0.5 * x * x;  // x²/2
  double sum = term;
  for (int k = 3; k < 40; ++k) {
    term *= -x / k;
    sum += term;
    if (std::abs(term) < 1e-18 * std::abs(sum)) break;
  }
  return sum;
}

inline double quantile_sorted(const std::vector<double>& sorted, double p) {
  if (sorted.empty()) return std::numeric_limits<double>::quiet_NaN();
  double idx = p * static_cast<double>(sorted.size() - 1);
  std::size_t lo = static_cast<std::size_t>(std::floor(idx));
  std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  double w = idx - static_cast<double>(lo);
  return (1.0 - w) * sorted[lo] + w * sorted[hi];
}

} // namespace detail

/// Stationary variance of the unscaled additive functional,
/// Var[∫_0^t f(X(s)) ds] = 2 Σ_{k≥2} c_k² (s_k t − 1 + e^{−s_k t}) / s_k².
/// Independent oracle for the simulated variances: Var[I_n(f,t)] equals
/// this at time n·t divided by n, and value/t → σ²(f) as t → ∞.
inline double finite_t_variance_oracle(const SpectralData& spectrum,
                                       const Observable& f, double t) {
  if (t < 0.0)
    throw std::invalid_argument("finite_t_variance_oracle: t must be ≥ 0");
  detail::require_centered(f.values, spectrum.model, "finite_t_variance_oracle");
  Eigen::VectorXd c = spectrum.coefficients(f.values);
  double acc = 0.0;
  for (Eigen::Index k = 1; k < spectrum.size(); ++k) {
    double s = -spectrum.eigenvalues(k);
    acc += c(k) * c(k) * detail::expm1_remainder(s * t) / (s * s);
  }
  return 2.0 * acc;
}

// ---------------------------------------------------------------------------
// Kolmogorov-Smirnov test against a normal reference
// ---------------------------------------------------------------------------

inline double normal_cdf(double x, double mean, double stddev) {
  return 0.5 * std::erfc(-(x - mean) / (stddev * std::sqrt(2.0)));
}

/// P(K > z) for the asymptotic Kolmogorov distribution,
/// 2 Σ_{k≥1} (−1)^{k−1} e^{−2k²z²}, truncated once terms drop below 1e-10.
inline double ks_asymptotic_pvalue(double z) {
  if (z <= 0.0) return 1.0;
  double sum = 0.0;
  double sign = 1.0;
  for (int k = 1; k <= 100000; ++k) {
    double term = std::exp(-2.0 * static_cast<double>(k) * k * z * z);
    sum += sign * term;
    if (term < 1e-10) break;
    sign = -sign;
  }
  return std::clamp(2.0 * sum, 0.0, 1.0);
}

struct KsResult {
  double statistic = 0.0;  // sup-distance in [0,1]
  double p_value = 1.0;    // asymptotic
  int sample_count = 0;
  bool p_value_valid = false;  // asymptotic p needs ≥ 1000 samples
};

/// Two-sided KS test of the samples against Normal(mean, variance).
inline KsResult ks_test_normal(std::vector<double> samples, double mean,
                               double variance) {
  if (samples.empty()) throw std::invalid_argument("ks_test_normal: no samples");
  if (!(variance > 0.0))
    throw DegenerateObservable("ks_test_normal: reference variance is 0");
  std::sort(samples.begin(), samples.end());
  const double n = static_cast<double>(samples.size());
  const double sd = std::sqrt(variance);
  double d = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    double cdf = normal_cdf(samples[i], mean, sd);
    double below = static_cast<double>(i) / n;
    double above = static_cast<double>(i + 1) / n;
    d = std::max({d, cdf - below, above - cdf});
  }
  KsResult out;
  out.statistic = d;
  out.p_value = ks_asymptotic_pvalue(std::sqrt(n) * d);
  out.sample_count = static_cast<int>(samples.size());
  out.p_value_valid = samples.size() >= 1000;
  return out;
}

// ---------------------------------------------------------------------------
// Replicate experiment harness
// ---------------------------------------------------------------------------

/// Configuration of one replicate sweep. Immutable once validated; the
/// runner reads it from many worker threads concurrently.
struct FcltExperiment {
  GeneratorModel model;
  Observable f;
  std::vector<int> n_list;
  int replicates = 1000;
  std::uint64_t seed = 0;
  double schedule_exponent = 1.5;
  double schedule_c = 1.0;
  std::vector<double> t_grid = default_t_grid();
  int threads = 0;  // 0 = hardware concurrency

  void validate() const {
    if (n_list.empty()) throw ConfigError("experiment: n list is empty");
    for (std::size_t i = 0; i < n_list.size(); ++i) {
      if (n_list[i] < 1) throw ConfigError("experiment: n must be ≥ 1");
      if (i > 0 && n_list[i] <= n_list[i - 1])
        throw ConfigError("experiment: n list must be strictly increasing");
    }
    if (replicates < 100) throw ConfigError("experiment: need ≥ 100 replicates");
    if (t_grid.empty()) throw ConfigError("experiment: empty t grid");
    for (std::size_t i = 0; i < t_grid.size(); ++i) {
      if (t_grid[i] < 0.0) throw ConfigError("experiment: t grid must be ≥ 0");
      if (i > 0 && t_grid[i] <= t_grid[i - 1])
        throw ConfigError("experiment: t grid must be strictly increasing");
    }
    if (!(t_grid.back() > 0.0)) throw ConfigError("experiment: horizon T must be > 0");
    lambda_schedule(n_list.front(), schedule_exponent, schedule_c);  // throws if bad
  }
};

/// Aggregated statistics of one n in the sweep. Quantities that need the
/// spectral route (oracle variance, collapse envelope) are NaN for
/// non-reversible models.
struct ReplicateStats {
  int n = 0;
  double lambda_n = 0.0;
  int replicates = 0;
  double horizon_T = 1.0;
  std::vector<double> t_grid;
  std::vector<double> mean_total;  // E[I_n(f,t)] per grid t
  std::vector<double> var_total;   // Var[I_n(f,t)] per grid t
  double sup_resolvent_q25 = 0.0;  // quartiles of sup_{[0,T]} |Λ_n|
  double sup_resolvent_median = 0.0;
  double sup_resolvent_q75 = 0.0;
  double mean_sup_sq = 0.0;  // E[sup² |Λ_n|]
  double se_sup_sq = 0.0;
  double envelope_bound = std::numeric_limits<double>::quiet_NaN();
  double ks_statistic = 0.0;  // I_n(f,T) against Normal(0, σ²T)
  double ks_pvalue = 1.0;
  bool ks_pvalue_valid = false;
  // max over replicates of max_t |I−Λ−A| / (1 + max_t |I|)
  double max_identity_residual = 0.0;
  double oracle_variance = std::numeric_limits<double>::quiet_NaN();
  double sigma2_ref = 0.0;
};

/// Runs the sweep: for each n, `replicates` independent stationary paths of
/// horizon n·T, each integrated exactly against the three decomposition
/// vectors. Workers own their RNG streams and write into per-replicate
/// slots; aggregation is a single sequential fold, so results are
/// bit-identical for a given (config, seed) regardless of thread count.
inline std::vector<ReplicateStats> run_experiment(const FcltExperiment& experiment) {
  experiment.validate();
  const GeneratorModel& model = experiment.model;
  const Observable& f = experiment.f;
  const int reps = experiment.replicates;
  const std::vector<double>& t_grid = experiment.t_grid;
  const double horizon_T = t_grid.back();

  const double sigma2 = 2.0 * pi_inner(potential_apply(model, f.values),
                                       f.values, model);
  std::optional<SpectralData> spectrum;
  double half_power_norm_sq = std::numeric_limits<double>::quiet_NaN();
  if (model.reversible) {
    spectrum = decompose(model);
    Eigen::VectorXd hp = fractional_power_apply(*spectrum, -0.5, f.values);
    half_power_norm_sq = pi_inner(hp, hp, model);
  }

  int n_threads = experiment.threads > 0
                      ? experiment.threads
                      : static_cast<int>(std::thread::hardware_concurrency());
  n_threads = std::clamp(n_threads, 1, 64);

  std::vector<ReplicateStats> all_stats;
  all_stats.reserve(experiment.n_list.size());

  for (std::size_t ni = 0; ni < experiment.n_list.size(); ++ni) {
    const int n = experiment.n_list[ni];
    const double lambda_n =
        lambda_schedule(n, experiment.schedule_exponent, experiment.schedule_c);
    Eigen::VectorXd x = resolvent_apply(model, lambda_n, f.values);
    Eigen::MatrixXd integrands(model.size(), 3);
    integrands.col(0) = f.values;
    integrands.col(1) = lambda_n * x;
    integrands.col(2) = f.values - integrands.col(1);
    const Eigen::VectorXd resolvent_vec = integrands.col(1);

    std::vector<double> scaled_times(t_grid.size());
    for (std::size_t j = 0; j < t_grid.size(); ++j)
      scaled_times[j] = static_cast<double>(n) * t_grid[j];
    const double horizon = static_cast<double>(n) * horizon_T;
    const double scale = 1.0 / std::sqrt(static_cast<double>(n));

    Eigen::MatrixXd totals(reps, static_cast<Eigen::Index>(t_grid.size()));
    std::vector<double> sup_vals(static_cast<std::size_t>(reps));
    std::vector<double> residuals(static_cast<std::size_t>(reps));

    std::atomic<int> cursor{0};
    std::exception_ptr first_error;
    std::mutex error_mutex;
    auto worker = [&]() {
      try {
        for (int r = cursor.fetch_add(1); r < reps; r = cursor.fetch_add(1)) {
          std::uint64_t stream =
              (static_cast<std::uint64_t>(ni) << 32) |
              static_cast<std::uint64_t>(r);
          TrajectorySample path = sample_path(model, horizon, experiment.seed, stream);
          Eigen::MatrixXd vals =
              detail::integrate_along_path(path, integrands, scaled_times);
          double worst = 0.0;
          double largest = 0.0;
          for (Eigen::Index j = 0; j < vals.rows(); ++j) {
            totals(r, j) = scale * vals(j, 0);
            largest = std::max(largest, std::abs(totals(r, j)));
            worst = std::max(worst, std::abs(vals(j, 0) - vals(j, 1) - vals(j, 2)));
          }
          // Residual relative to the path scale, 1 + max_t |I_n(f,t)|.
          residuals[static_cast<std::size_t>(r)] = scale * worst / (1.0 + largest);
          sup_vals[static_cast<std::size_t>(r)] =
              sup_abs_scaled_integral(path, resolvent_vec, n, horizon_T);
        }
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
      }
    };
    std::vector<std::thread> pool;
    for (int w = 1; w < n_threads; ++w) pool.emplace_back(worker);
    worker();
    for (auto& th : pool) th.join();
    if (first_error) std::rethrow_exception(first_error);

    ReplicateStats stats;
    stats.n = n;
    stats.lambda_n = lambda_n;
    stats.replicates = reps;
    stats.horizon_T = horizon_T;
    stats.t_grid = t_grid;
    stats.sigma2_ref = sigma2;
    stats.mean_total.resize(t_grid.size());
    stats.var_total.resize(t_grid.size());
    for (std::size_t j = 0; j < t_grid.size(); ++j) {
      const auto col = totals.col(static_cast<Eigen::Index>(j));
      double mean = col.mean();
      double ss = (col.array() - mean).square().sum();
      stats.mean_total[j] = mean;
      stats.var_total[j] = reps > 1 ? ss / (reps - 1) : 0.0;
    }

    std::vector<double> sorted_sup = sup_vals;
    std::sort(sorted_sup.begin(), sorted_sup.end());
    stats.sup_resolvent_q25 = detail::quantile_sorted(sorted_sup, 0.25);
    stats.sup_resolvent_median = detail::quantile_sorted(sorted_sup, 0.5);
    stats.sup_resolvent_q75 = detail::quantile_sorted(sorted_sup, 0.75);
    double mean_sq = 0.0;
    for (double s : sup_vals) mean_sq += s * s;
    mean_sq /= reps;
    double ss_sq = 0.0;
    for (double s : sup_vals) ss_sq += (s * s - mean_sq) * (s * s - mean_sq);
    stats.mean_sup_sq = mean_sq;
    stats.se_sup_sq = reps > 1
                          ? std::sqrt(ss_sq / (reps - 1)) /
                                std::sqrt(static_cast<double>(reps))
                          : 0.0;
    if (model.reversible)
      stats.envelope_bound =
          0.25 * n * horizon_T * horizon_T * lambda_n * half_power_norm_sq;

    stats.max_identity_residual =
        *std::max_element(residuals.begin(), residuals.end());

    if (sigma2 > 0.0) {
      std::vector<double> terminal(static_cast<std::size_t>(reps));
      for (int r = 0; r < reps; ++r)
        terminal[static_cast<std::size_t>(r)] =
            totals(r, static_cast<Eigen::Index>(t_grid.size()) - 1);
      KsResult ks = ks_test_normal(std::move(terminal), 0.0, sigma2 * horizon_T);
      stats.ks_statistic = ks.statistic;
      stats.ks_pvalue = ks.p_value;
      stats.ks_pvalue_valid = ks.p_value_valid;
    }
    if (spectrum)
      stats.oracle_variance =
          finite_t_variance_oracle(*spectrum, f, static_cast<double>(n) * horizon_T) /
          static_cast<double>(n);
    all_stats.push_back(std::move(stats));
  }
  return all_stats;
}

// ---------------------------------------------------------------------------
// Verdicts
// ---------------------------------------------------------------------------

struct VarianceScalingRow {
  double t = 0.0;
  double empirical = 0.0;
  double sigma2_t = 0.0;     // asymptotic target σ²t
  double oracle = 0.0;       // exact finite-n target (NaN when unavailable)
  double band = 0.0;         // 3·SE of the empirical variance
  bool pass_sigma2_band = false;
  bool pass_oracle_band = false;
};

struct VarianceScalingVerdict {
  std::vector<VarianceScalingRow> rows;
  bool pass = false;  // oracle band everywhere it exists + σ²t band at t = T
};

/// Checks Var[I_n(f,t)] against σ²t and against the exact finite-n oracle,
/// with a 3·SE band where SE uses the normal-theory variance of a sample
/// variance, √(2/(R−1))·s². The σ²t band carries an O(1/(nt)) bias and is
/// gated only at the horizon; the oracle band is bias-free and gates every
/// grid point.
inline VarianceScalingVerdict variance_scaling_test(
    const ReplicateStats& stats, double sigma2,
    const SpectralData* spectrum = nullptr, const Observable* f = nullptr) {
  if (stats.replicates < 100)
    throw std::invalid_argument("variance_scaling_test: need ≥ 100 replicates");
  const double se_factor = 3.0 * std::sqrt(2.0 / (stats.replicates - 1));
  VarianceScalingVerdict verdict;
  verdict.pass = true;
  for (std::size_t j = 0; j < stats.t_grid.size(); ++j) {
    VarianceScalingRow row;
    row.t = stats.t_grid[j];
    row.empirical = stats.var_total[j];
    row.sigma2_t = sigma2 * row.t;
    row.band = se_factor * row.empirical;
    row.oracle = std::numeric_limits<double>::quiet_NaN();
    if (spectrum && f)
      row.oracle = finite_t_variance_oracle(*spectrum, *f,
                                            static_cast<double>(stats.n) * row.t) /
                   static_cast<double>(stats.n);
    row.pass_sigma2_band = std::abs(row.empirical - row.sigma2_t) <= row.band + 1e-300;
    row.pass_oracle_band =
        !std::isnan(row.oracle) &&
        std::abs(row.empirical - row.oracle) <= row.band + 1e-300;
    if (!std::isnan(row.oracle) && !row.pass_oracle_band) verdict.pass = false;
    if (j + 1 == stats.t_grid.size() && !row.pass_sigma2_band) verdict.pass = false;
    verdict.rows.push_back(row);
  }
  return verdict;
}

struct CollapseRow {
  int n = 0;
  double lambda_n = 0.0;
  double median_sup = 0.0;
  double mean_sup_sq = 0.0;
  double se_sup_sq = 0.0;
  double envelope = 0.0;
  bool envelope_pass = false;
};

struct CollapseReport {
  std::vector<CollapseRow> rows;
  bool medians_decreasing = false;
  bool pass = false;
};

/// The resolvent term must collapse along the schedule: replicate medians of
/// sup|Λ_n| strictly decreasing in n, and the second-moment envelope
/// E[sup²] ≤ ¼ n T² λ_n ‖(−Q)^{-1/2}f‖²_π honored within 3·SE.
inline CollapseReport lambda_collapse_test(const std::vector<ReplicateStats>& by_n) {
  if (by_n.empty())
    throw std::invalid_argument("lambda_collapse_test: no statistics supplied");
  CollapseReport report;
  report.medians_decreasing = true;
  report.pass = true;
  for (std::size_t i = 0; i < by_n.size(); ++i) {
    const ReplicateStats& s = by_n[i];
    CollapseRow row;
    row.n = s.n;
    row.lambda_n = s.lambda_n;
    row.median_sup = s.sup_resolvent_median;
    row.mean_sup_sq = s.mean_sup_sq;
    row.se_sup_sq = s.se_sup_sq;
    row.envelope = s.envelope_bound;
    row.envelope_pass = !std::isnan(s.envelope_bound) &&
                        s.mean_sup_sq <= s.envelope_bound + 3.0 * s.se_sup_sq;
    if (!std::isnan(s.envelope_bound) && !row.envelope_pass) report.pass = false;
    if (i > 0 && !(row.median_sup < by_n[i - 1].sup_resolvent_median))
      report.medians_decreasing = false;
    report.rows.push_back(row);
  }
  if (!report.medians_decreasing) report.pass = false;
  return report;
}

struct Sigma2ConvergenceRow {
  double lambda = 0.0;
  double sigma2_lambda = 0.0;
  double gap = 0.0;  // σ² − σ²_λ
};

/// Tabulates σ²_λ against σ² over a λ-grid; for reversible models the gap
/// is nonnegative, nonincreasing as λ decreases, and converges to 0.
inline std::vector<Sigma2ConvergenceRow> sigma2_convergence_report(
    const GeneratorModel& model, const Observable& f,
    const std::vector<double>& lambda_grid) {
  detail::require_centered(f.values, model, "sigma2_convergence_report");
  const double sigma2 = 2.0 * pi_inner(potential_apply(model, f.values),
                                       f.values, model);
  std::vector<Sigma2ConvergenceRow> rows;
  rows.reserve(lambda_grid.size());
  for (double lambda : lambda_grid) {
    double value = sigma2_lambda(model, f, lambda);
    rows.push_back({lambda, value, sigma2 - value});
  }
  return rows;
}

struct DiagonalTraceRow {
  int n = 0;
  double lambda_n = 0.0;
  double median_sup_resolvent = 0.0;  // Monte Carlo
  double cauchy_bound = 0.0;          // √n·√λ_n·‖(−Q)^{-1/2}f‖_π·T/2
  double sigma2_gap = 0.0;            // σ² − σ²_{λ_n}, exact
  double ks_range_term = 0.0;         // KS(A_n(λ_ℓ, T), Normal(0, σ²_{λ_ℓ}T))
};

struct DiagonalTrace {
  double epsilon = 0.0;
  double sigma2 = 0.0;
  int ell = 0;               // tuning index: first n with σ² − σ²_{λ_n} ≤ ε
  double lambda_ell = 0.0;
  double sigma2_lambda_ell = 0.0;
  int n1 = 0;  // first n with median sup|Λ_n(λ_n)| ≤ ε (0 = not reached)
  int n2 = 0;  // first n with the closed-form Cauchy bound ≤ ε
  int n3 = 0;  // first n with the KS proxy distance ≤ ε
  std::vector<DiagonalTraceRow> rows;
};

/// Instantiates the four-threshold ε-bookkeeping with the KS distance at
/// t = T as the weak-convergence proxy. Emits a trace, never a pass/fail:
/// achieved distances are reported alongside the thresholds.
inline DiagonalTrace diagonal_argument_trace(
    const GeneratorModel& model, const Observable& f, double epsilon,
    const std::vector<int>& n_ladder, int replicates, std::uint64_t seed,
    double schedule_exponent = 1.5, double schedule_c = 1.0, double horizon_T = 1.0) {
  if (!(epsilon > 0.0))
    throw std::invalid_argument("diagonal_argument_trace: ε must be > 0");
  if (n_ladder.empty())
    throw std::invalid_argument("diagonal_argument_trace: empty n ladder");
  detail::require_centered(f.values, model, "diagonal_argument_trace");
  SpectralData spectrum = decompose(model);  // NotReversible for general models
  Eigen::VectorXd hp = fractional_power_apply(spectrum, -0.5, f.values);
  const double half_power_norm = pi_norm(hp, model);
  const double sigma2 = 2.0 * half_power_norm * half_power_norm;

  DiagonalTrace trace;
  trace.epsilon = epsilon;
  trace.sigma2 = sigma2;

  // Tuning index first: exact spectral computation, no simulation needed.
  for (int n : n_ladder) {
    double lambda = lambda_schedule(n, schedule_exponent, schedule_c);
    double s2l = sigma2_lambda_spectral(spectrum, f, lambda);
    if (sigma2 - s2l <= epsilon) {
      trace.ell = n;
      trace.lambda_ell = lambda;
      trace.sigma2_lambda_ell = s2l;
      break;
    }
  }
  if (trace.ell == 0) {  // fall back to the deepest rung for the KS column
    trace.ell = n_ladder.back();
    trace.lambda_ell = lambda_schedule(trace.ell, schedule_exponent, schedule_c);
    trace.sigma2_lambda_ell = sigma2_lambda_spectral(spectrum, f, trace.lambda_ell);
  }

  Eigen::VectorXd x_ell = resolvent_apply(model, trace.lambda_ell, f.values);
  Eigen::VectorXd range_integrand = f.values - trace.lambda_ell * x_ell;

  for (std::size_t ni = 0; ni < n_ladder.size(); ++ni) {
    const int n = n_ladder[ni];
    DiagonalTraceRow row;
    row.n = n;
    row.lambda_n = lambda_schedule(n, schedule_exponent, schedule_c);
    row.cauchy_bound = std::sqrt(static_cast<double>(n)) *
                       std::sqrt(row.lambda_n) * half_power_norm * horizon_T / 2.0;
    row.sigma2_gap = sigma2 - sigma2_lambda_spectral(spectrum, f, row.lambda_n);

    Eigen::VectorXd x_n = resolvent_apply(model, row.lambda_n, f.values);
    Eigen::VectorXd resolvent_integrand = row.lambda_n * x_n;
    const double horizon = static_cast<double>(n) * horizon_T;
    const double scale = 1.0 / std::sqrt(static_cast<double>(n));
    std::vector<double> sups(static_cast<std::size_t>(replicates));
    std::vector<double> range_samples(static_cast<std::size_t>(replicates));
    Eigen::MatrixXd one_col = range_integrand;
    for (int r = 0; r < replicates; ++r) {
      std::uint64_t stream = (0xD1A6ull << 40) |
                             (static_cast<std::uint64_t>(ni) << 32) |
                             static_cast<std::uint64_t>(r);
      TrajectorySample path = sample_path(model, horizon, seed, stream);
      sups[static_cast<std::size_t>(r)] =
          sup_abs_scaled_integral(path, resolvent_integrand, n, horizon_T);
      range_samples[static_cast<std::size_t>(r)] =
          scale * detail::integrate_along_path(path, one_col, {horizon})(0, 0);
    }
    std::sort(sups.begin(), sups.end());
    row.median_sup_resolvent = detail::quantile_sorted(sups, 0.5);
    row.ks_range_term =
        trace.sigma2_lambda_ell > 0.0
            ? ks_test_normal(std::move(range_samples), 0.0,
                             trace.sigma2_lambda_ell * horizon_T)
                  .statistic
            : 0.0;

    if (trace.n1 == 0 && row.median_sup_resolvent <= epsilon) trace.n1 = n;
    if (trace.n2 == 0 && row.cauchy_bound <= epsilon) trace.n2 = n;
    if (trace.n3 == 0 && row.ks_range_term <= epsilon) trace.n3 = n;
    trace.rows.push_back(row);
  }
  return trace;
}

} // namespace fcltlab
