// Copyright (c) the fcltlab contributors.
// SPDX-License-Identifier: Apache-2.0
//
// Stationary continuous-time trajectories by the jump-chain construction,
// exact event-driven integration of additive functionals (no time
// discretization anywhere), and the rescaled decomposition
// I_n = Λ_n + A_n obtained by splitting the integrand with a resolvent.

#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "fcltlab/chain_model.hpp"
#include "fcltlab/errors.hpp"
#include "fcltlab/rng.hpp"
#include "fcltlab/spectral_calculus.hpp"

namespace fcltlab {

/// One continuous-time path: states[k] occupies [jump_times[k-1],
/// jump_times[k]) with jump_times[-1] read as 0, and the last state runs to
/// the horizon. The initial state is drawn from π, so the path is
/// stationary.
struct TrajectorySample {
  std::vector<double> jump_times;  // strictly increasing, all < horizon
  std::vector<int> states;         // size jump_times.size() + 1
  double horizon = 0.0;

  int state_at(double t) const {
    if (t < 0.0 || t > horizon)
      throw HorizonExceeded("state_at: t outside [0, horizon]");
    auto it = std::upper_bound(jump_times.begin(), jump_times.end(), t);
    return states[static_cast<std::size_t>(it - jump_times.begin())];
  }
};

/// Jump-chain sampler: holding time Exponential(−Q_ii), next state with
/// probability Q_ij/(−Q_ii). Deterministic given (rng_seed, stream_id); a
/// jump landing beyond the horizon is not recorded.
inline TrajectorySample sample_path(const GeneratorModel& model, double horizon,
                                    std::uint64_t rng_seed, std::uint64_t stream_id) {
  if (!(horizon > 0.0)) throw std::invalid_argument("sample_path: horizon must be > 0");
  if (!model.ergodic) throw NotErgodic("sample_path: model is not ergodic");
  const Eigen::Index m = model.size();

  std::vector<double> exit_rate(static_cast<std::size_t>(m));
  std::vector<std::vector<double>> jump_prob(static_cast<std::size_t>(m));
  for (Eigen::Index i = 0; i < m; ++i) {
    double rate = -model.Q(i, i);
    exit_rate[static_cast<std::size_t>(i)] = rate;
    auto& row = jump_prob[static_cast<std::size_t>(i)];
    row.resize(static_cast<std::size_t>(m), 0.0);
    for (Eigen::Index j = 0; j < m; ++j)
      if (j != i && rate > 0.0) row[static_cast<std::size_t>(j)] = model.Q(i, j) / rate;
  }

  RngStream rng(rng_seed, stream_id);
  std::vector<double> pi(model.pi.data(), model.pi.data() + m);

  TrajectorySample path;
  path.horizon = horizon;
  int state = rng.discrete(pi);
  path.states.push_back(state);
  double t = 0.0;
  while (true) {
    double rate = exit_rate[static_cast<std::size_t>(state)];
    if (!(rate > 0.0)) break;  // absorbing; cannot happen on an ergodic model
    t += rng.exponential(rate);
    if (t >= horizon) break;
    state = rng.discrete(jump_prob[static_cast<std::size_t>(state)]);
    path.jump_times.push_back(t);
    path.states.push_back(state);
  }
  return path;
}

namespace detail {

/// Exact values of t ↦ ∫_0^t v(X(s)) ds at the ascending query times, for
/// several integrand vectors at once (columns of `integrands`). One pass
/// over the path; the integrand is piecewise constant so each segment
/// contributes value·duration with no quadrature error.
inline Eigen::MatrixXd integrate_along_path(const TrajectorySample& path,
                                            const Eigen::MatrixXd& integrands,
                                            const std::vector<double>& query_times) {
  const Eigen::Index cols = integrands.cols();
  Eigen::MatrixXd out(static_cast<Eigen::Index>(query_times.size()), cols);
  Eigen::RowVectorXd acc = Eigen::RowVectorXd::Zero(cols);
  double seg_start = 0.0;
  std::size_t seg = 0;
  for (std::size_t qi = 0; qi < query_times.size(); ++qi) {
    double t = query_times[qi];
    if (t < 0.0 || t > path.horizon)
      throw HorizonExceeded("integrate_along_path: query beyond horizon");
    if (qi > 0 && t < query_times[qi - 1])
      throw std::invalid_argument("integrate_along_path: query times must ascend");
    while (seg < path.jump_times.size() && path.jump_times[seg] <= t) {
      acc += (path.jump_times[seg] - seg_start) *
             integrands.row(path.states[seg]);
      seg_start = path.jump_times[seg];
      ++seg;
    }
    out.row(static_cast<Eigen::Index>(qi)) =
        acc + (t - seg_start) * integrands.row(path.states[seg]);
  }
  return out;
}

} // namespace detail

/// ∫_0^t f(X(s)) ds, exactly.
inline double additive_functional(const TrajectorySample& path, const Observable& f,
                                  double t) {
  if (t > path.horizon) throw HorizonExceeded("additive_functional: t beyond horizon");
  if (t < 0.0) throw std::invalid_argument("additive_functional: t must be ≥ 0");
  Eigen::MatrixXd v = f.values;
  return detail::integrate_along_path(path, v, {t})(0, 0);
}

/// The three rescaled processes on a common evaluation grid. The identity
/// total = resolvent_term + range_term holds entrywise up to rounding
/// because the range integrand is formed as f − λR_λf.
struct ScaledPaths {
  int n = 0;
  double lambda_used = 0.0;
  std::vector<double> t_grid;
  std::vector<double> total;           // I_n(f,t)
  std::vector<double> resolvent_term;  // Λ_n(f,λ,t)
  std::vector<double> range_term;      // A_n(f,λ,t)

  double max_identity_residual() const {
    double worst = 0.0;
    for (std::size_t j = 0; j < total.size(); ++j)
      worst = std::max(worst,
                       std::abs(total[j] - resolvent_term[j] - range_term[j]));
    return worst;
  }
};

/// Decomposes the rescaled additive functional by integrating the three
/// precomputed vectors f, λR_λf and f − λR_λf along one path, evaluated at
/// n·t for t in the grid and scaled by n^{-1/2}.
inline ScaledPaths scaled_decomposition(const TrajectorySample& path,
                                        const GeneratorModel& model,
                                        const Observable& f, int n, double lambda,
                                        const std::vector<double>& t_grid) {
  if (n < 1) throw std::invalid_argument("scaled_decomposition: n must be ≥ 1");
  if (t_grid.empty())
    throw std::invalid_argument("scaled_decomposition: empty t grid");
  Eigen::VectorXd x = resolvent_apply(model, lambda, f.values);
  Eigen::MatrixXd integrands(model.size(), 3);
  integrands.col(0) = f.values;
  integrands.col(1) = lambda * x;
  integrands.col(2) = f.values - integrands.col(1);

  std::vector<double> scaled_times(t_grid.size());
  for (std::size_t j = 0; j < t_grid.size(); ++j) {
    scaled_times[j] = static_cast<double>(n) * t_grid[j];
    if (scaled_times[j] > path.horizon)
      throw HorizonExceeded("scaled_decomposition: n·t beyond horizon");
  }
  Eigen::MatrixXd vals = detail::integrate_along_path(path, integrands, scaled_times);
  const double scale = 1.0 / std::sqrt(static_cast<double>(n));

  ScaledPaths out;
  out.n = n;
  out.lambda_used = lambda;
  out.t_grid = t_grid;
  out.total.resize(t_grid.size());
  out.resolvent_term.resize(t_grid.size());
  out.range_term.resize(t_grid.size());
  for (std::size_t j = 0; j < t_grid.size(); ++j) {
    out.total[j] = scale * vals(static_cast<Eigen::Index>(j), 0);
    out.resolvent_term[j] = scale * vals(static_cast<Eigen::Index>(j), 1);
    out.range_term[j] = scale * vals(static_cast<Eigen::Index>(j), 2);
  }
  return out;
}

/// Exact sup over [0,T] of |n^{-1/2} ∫_0^{nt} v(X(s)) ds|. The running
/// integral is piecewise linear in t, so the sup is attained at a jump time
/// or at the right endpoint; both are enumerated.
inline double sup_abs_scaled_integral(const TrajectorySample& path,
                                      const Eigen::VectorXd& integrand, int n,
                                      double t_max) {
  const double end = static_cast<double>(n) * t_max;
  if (end > path.horizon)
    throw HorizonExceeded("sup_abs_scaled_integral: n·T beyond horizon");
  double acc = 0.0, sup = 0.0, seg_start = 0.0;
  std::size_t seg = 0;
  while (seg < path.jump_times.size() && path.jump_times[seg] <= end) {
    acc += integrand(path.states[seg]) * (path.jump_times[seg] - seg_start);
    sup = std::max(sup, std::abs(acc));
    seg_start = path.jump_times[seg];
    ++seg;
  }
  acc += integrand(path.states[seg]) * (end - seg_start);
  sup = std::max(sup, std::abs(acc));
  return sup / std::sqrt(static_cast<double>(n));
}

/// λ_n = c·n^{-exponent}; the exponent must exceed 1 strictly so that
/// n·λ_n → 0.
inline double lambda_schedule(int n, double exponent = 1.5, double c = 1.0) {
  if (!(exponent > 1.0))
    throw ScheduleNotSmallO("lambda_schedule: exponent " + std::to_string(exponent) +
                            " does not give λ_n = o(1/n)");
  if (n < 1) throw std::invalid_argument("lambda_schedule: n must be ≥ 1");
  if (!(c > 0.0)) throw std::invalid_argument("lambda_schedule: c must be > 0");
  return c * std::pow(static_cast<double>(n), -exponent);
}

/// 101 equally spaced evaluation times on [0,1].
inline std::vector<double> default_t_grid() {
  std::vector<double> grid(101);
  for (int j = 0; j <= 100; ++j) grid[static_cast<std::size_t>(j)] = j / 100.0;
  return grid;
}

/// M(t) = g(X(t)) − g(X(0)) − ∫_0^t (Qg)(X(s)) ds for one path.
inline std::vector<double> dynkin_martingale_path(const TrajectorySample& path,
                                                  const GeneratorModel& model,
                                                  const Eigen::VectorXd& g,
                                                  const std::vector<double>& t_grid) {
  if (g.size() != model.size())
    throw std::invalid_argument("dynkin_martingale_path: vector length mismatch");
  Eigen::MatrixXd qg = model.Q * g;
  Eigen::MatrixXd drift = detail::integrate_along_path(path, qg, t_grid);
  std::vector<double> out(t_grid.size());
  const double g0 = g(path.states.front());
  for (std::size_t j = 0; j < t_grid.size(); ++j)
    out[j] = g(path.state_at(t_grid[j])) - g0 - drift(static_cast<Eigen::Index>(j), 0);
  return out;
}

struct MartingaleStats {
  std::vector<double> t_grid;
  std::vector<double> mean;
  std::vector<double> std_error;
  int replicates = 0;

  /// True when every grid mean sits within 3 standard errors of 0.
  bool within_three_se() const {
    for (std::size_t j = 0; j < mean.size(); ++j)
      if (std::abs(mean[j]) > 3.0 * std_error[j] + 1e-300) return false;
    return true;
  }
};

/// Replicate mean/SE of the Dynkin martingale at each grid time; a
/// diagnostic for the simulator (the mean must vanish statistically).
inline MartingaleStats dynkin_martingale_check(const GeneratorModel& model,
                                               const Eigen::VectorXd& g,
                                               const std::vector<double>& t_grid,
                                               int replicates, std::uint64_t seed) {
  if (replicates < 2)
    throw std::invalid_argument("dynkin_martingale_check: need ≥ 2 replicates");
  const double horizon = t_grid.empty() ? 1.0 : t_grid.back();
  std::vector<std::vector<double>> samples(
      static_cast<std::size_t>(replicates));
  for (int r = 0; r < replicates; ++r) {
    TrajectorySample path =
        sample_path(model, std::max(horizon, 1e-12), seed,
                    static_cast<std::uint64_t>(r));
    samples[static_cast<std::size_t>(r)] =
        dynkin_martingale_path(path, model, g, t_grid);
  }
  MartingaleStats stats;
  stats.t_grid = t_grid;
  stats.replicates = replicates;
  stats.mean.assign(t_grid.size(), 0.0);
  stats.std_error.assign(t_grid.size(), 0.0);
  for (std::size_t j = 0; j < t_grid.size(); ++j) {
    double sum = 0.0;
    for (const auto& row : samples) sum += row[j];
    double mean = sum / replicates;
    double ss = 0.0;
    for (const auto& row : samples) ss += (row[j] - mean) * (row[j] - mean);
    stats.mean[j] = mean;
    stats.std_error[j] = std::sqrt(ss / (replicates - 1)) /
                         std::sqrt(static_cast<double>(replicates));
  }
  return stats;
}

} // namespace fcltlab
