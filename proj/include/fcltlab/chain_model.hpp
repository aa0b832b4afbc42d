// Copyright (c) the fcltlab contributors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "fcltlab/errors.hpp"
#include "fcltlab/rng.hpp"

namespace fcltlab {

/// Tolerances used by the structural contracts. The defaults are sized for
/// double precision on models with a few hundred states.
struct Tolerances {
  double exact = 1e-12;  // exact identities (row sums, Σπ, centering)
  double solve = 1e-10;  // linear-solve residuals (πQ, detailed balance)
};

/// A validated finite-state Markov generator together with its invariant
/// law and the two structural certificates every downstream operation keys
/// off of. Immutable after construction.
struct GeneratorModel {
  std::vector<std::string> states;  // labels, size m
  Eigen::MatrixXd Q;                // m x m rate matrix, zero row sums
  Eigen::VectorXd pi;               // invariant probability, strictly positive
  bool reversible = false;          // detailed balance holds
  bool ergodic = false;             // rate graph strongly connected

  Eigen::Index size() const { return Q.rows(); }

  /// max_{i,j} |π_i Q_ij − π_j Q_ji|
  double detailed_balance_residual() const {
    const Eigen::Index m = size();
    double worst = 0.0;
    for (Eigen::Index i = 0; i < m; ++i)
      for (Eigen::Index j = i + 1; j < m; ++j)
        worst = std::max(worst, std::abs(pi(i) * Q(i, j) - pi(j) * Q(j, i)));
    return worst;
  }

  /// Uniformization rate Λ* = max_i(−Q_ii).
  double max_exit_rate() const { return (-Q.diagonal()).maxCoeff(); }
};

/// A real observable on the state space. `centered` records that the π-mean
/// is (numerically) zero; `degenerate` that the centered vector vanished,
/// in which case σ²(f) = 0 and the FCLT statement is empty.
struct Observable {
  Eigen::VectorXd values;
  bool centered = false;
  bool degenerate = false;
};

namespace detail {

/// Strong connectivity of the directed graph with an edge i→j whenever
/// Q_ij > 0 (i ≠ j): every node reachable from 0 and 0 reachable from all.
inline bool strongly_connected(const Eigen::MatrixXd& q) {
  const Eigen::Index m = q.rows();
  if (m == 0) return false;
  auto reach = [&](bool forward) {
    std::vector<char> seen(static_cast<std::size_t>(m), 0);
    std::vector<Eigen::Index> stack{0};
    seen[0] = 1;
    while (!stack.empty()) {
      Eigen::Index i = stack.back();
      stack.pop_back();
      for (Eigen::Index j = 0; j < m; ++j) {
        if (j == i || seen[static_cast<std::size_t>(j)]) continue;
        double rate = forward ? q(i, j) : q(j, i);
        if (rate > 0.0) {
          seen[static_cast<std::size_t>(j)] = 1;
          stack.push_back(j);
        }
      }
    }
    return std::all_of(seen.begin(), seen.end(), [](char c) { return c != 0; });
  };
  return reach(true) && reach(false);
}

/// Left null vector of Q, normalized to a probability. Also reports the
/// kernel dimension so callers can reject multi-class chains.
inline Eigen::VectorXd invariant_distribution(const Eigen::MatrixXd& q,
                                              Eigen::Index* kernel_dim = nullptr) {
  Eigen::FullPivLU<Eigen::MatrixXd> lu(q.transpose());
  const Eigen::Index dim = lu.dimensionOfKernel();
  if (kernel_dim) *kernel_dim = dim;
  if (dim != 1)
    throw NotErgodic("null space of Q has dimension " + std::to_string(dim) +
                     ", expected 1");
  Eigen::VectorXd v = lu.kernel().col(0);
  double total = v.sum();
  if (total < 0.0) v = -v, total = -total;
  if (!(total > 0.0)) throw NotErgodic("left null vector of Q has zero mass");
  v /= total;
  return v;
}

inline void check_generator_structure(const Eigen::MatrixXd& q, const Tolerances& tol) {
  const Eigen::Index m = q.rows();
  if (m < 1 || q.cols() != m)
    throw NotAGenerator("Q must be a nonempty square matrix");
  for (Eigen::Index i = 0; i < m; ++i) {
    if (!q.row(i).allFinite())
      throw NotAGenerator("row " + std::to_string(i) + " of Q has a non-finite entry");
    for (Eigen::Index j = 0; j < m; ++j)
      if (i != j && q(i, j) < 0.0)
        throw NotAGenerator("negative off-diagonal rate at (" + std::to_string(i) +
                            "," + std::to_string(j) + ")");
    double scale = std::max(1.0, q.row(i).cwiseAbs().maxCoeff());
    if (std::abs(q.row(i).sum()) > tol.exact * scale)
      throw NotAGenerator("row " + std::to_string(i) + " of Q sums to " +
                          std::to_string(q.row(i).sum()) + ", expected 0");
  }
}

/// Full construction-time invariant check; throws on the first violation.
inline void check_model_invariants(const GeneratorModel& model, const Tolerances& tol) {
  const Eigen::Index m = model.size();
  if (model.pi.size() != m) throw NotAGenerator("π length does not match Q");
  if (model.pi.minCoeff() <= 0.0) throw NotErgodic("π is not strictly positive");
  if (std::abs(model.pi.sum() - 1.0) > tol.exact)
    throw NotAGenerator("π does not sum to 1");
  double rate_scale = std::max(1.0, model.Q.cwiseAbs().maxCoeff());
  double piq = (model.pi.transpose() * model.Q).cwiseAbs().maxCoeff();
  if (piq > tol.solve * rate_scale)
    throw NotAGenerator("πQ residual " + std::to_string(piq) + " exceeds tolerance");
  bool rev = model.detailed_balance_residual() <= tol.solve * rate_scale;
  if (rev != model.reversible)
    throw NotAGenerator("reversibility certificate disagrees with detailed balance");
}

} // namespace detail

/// Constructs a model from a raw rate matrix: validates the sign/row-sum
/// structure, computes π as the normalized left null vector of Q, and sets
/// both certificates. The graph test and the null-space dimension test are
/// independent ergodicity certificates and must agree.
inline GeneratorModel build_from_rates(const Eigen::MatrixXd& q_raw,
                                       std::vector<std::string> state_labels = {},
                                       const Tolerances& tol = {}) {
  detail::check_generator_structure(q_raw, tol);
  const Eigen::Index m = q_raw.rows();
  if (!detail::strongly_connected(q_raw))
    throw NotErgodic("rate graph is not strongly connected");
  GeneratorModel model;
  model.Q = q_raw;
  model.pi = detail::invariant_distribution(q_raw);  // throws if kernel dim != 1
  model.ergodic = true;
  double rate_scale = std::max(1.0, q_raw.cwiseAbs().maxCoeff());
  model.reversible = model.detailed_balance_residual() <= tol.solve * rate_scale;
  if (state_labels.empty()) {
    model.states.reserve(static_cast<std::size_t>(m));
    for (Eigen::Index i = 0; i < m; ++i) model.states.push_back(std::to_string(i));
  } else {
    if (static_cast<Eigen::Index>(state_labels.size()) != m)
      throw NotAGenerator("state label count does not match Q dimension");
    model.states = std::move(state_labels);
  }
  detail::check_model_invariants(model, tol);
  return model;
}

/// Birth-death chain on {0,...,m-1} with the given up/down rates. π comes
/// from the detailed-balance product formula and is cross-checked against
/// the left-null-space solve, so a typo in either route fails loudly.
inline GeneratorModel build_birth_death(const std::vector<double>& birth_rates,
                                        const std::vector<double>& death_rates,
                                        const Tolerances& tol = {}) {
  if (birth_rates.size() != death_rates.size())
    throw ZeroRate("birth and death rate lists must have equal length");
  if (birth_rates.empty()) throw ZeroRate("a birth-death chain needs at least 2 states");
  for (double r : birth_rates)
    if (!(r > 0.0)) throw ZeroRate("birth rate " + std::to_string(r) + " must be > 0");
  for (double r : death_rates)
    if (!(r > 0.0)) throw ZeroRate("death rate " + std::to_string(r) + " must be > 0");

  const Eigen::Index m = static_cast<Eigen::Index>(birth_rates.size()) + 1;
  Eigen::MatrixXd q = Eigen::MatrixXd::Zero(m, m);
  for (Eigen::Index i = 0; i + 1 < m; ++i) {
    q(i, i + 1) = birth_rates[static_cast<std::size_t>(i)];
    q(i + 1, i) = death_rates[static_cast<std::size_t>(i)];
  }
  q.diagonal() = -q.rowwise().sum();

  Eigen::VectorXd pi(m);
  pi(0) = 1.0;
  for (Eigen::Index i = 0; i + 1 < m; ++i)
    pi(i + 1) = pi(i) * birth_rates[static_cast<std::size_t>(i)] /
                death_rates[static_cast<std::size_t>(i)];
  pi /= pi.sum();

  Eigen::VectorXd pi_solved = detail::invariant_distribution(q);
  if ((pi - pi_solved).cwiseAbs().maxCoeff() > 1e-9)
    throw NotAGenerator("product-formula π disagrees with the null-space solve");

  GeneratorModel model;
  model.Q = std::move(q);
  model.pi = std::move(pi);
  model.reversible = true;
  model.ergodic = true;
  model.states.reserve(static_cast<std::size_t>(m));
  for (Eigen::Index i = 0; i < m; ++i) model.states.push_back(std::to_string(i));
  detail::check_model_invariants(model, tol);
  return model;
}

/// Symmetric two-state chain with unit rates (the workhorse closed-form
/// model: spectrum {0, −2}, π = (1/2, 1/2)).
inline GeneratorModel build_two_state(double rate = 1.0) {
  return build_birth_death({rate}, {rate});
}

/// One-directional cycle on m states: ergodic, uniform π, non-reversible
/// for m ≥ 3.
inline GeneratorModel build_cycle(int m, double rate = 1.0) {
  if (m < 2) throw NotAGenerator("cycle needs at least 2 states");
  if (!(rate > 0.0)) throw ZeroRate("cycle rate must be > 0");
  Eigen::MatrixXd q = Eigen::MatrixXd::Zero(m, m);
  for (int i = 0; i < m; ++i) {
    q(i, (i + 1) % m) = rate;
    q(i, i) = -rate;
  }
  return build_from_rates(q);
}

/// Random reversible generator: positive symmetric weights on a connected
/// undirected graph (a random spanning path guarantees connectivity, each
/// remaining pair joins with probability `connectivity`) and a positive π,
/// with Q_ij = w_ij / π_i. Detailed balance holds by construction and the
/// result is bitwise deterministic in `seed`.
inline GeneratorModel build_random_reversible(int m, double connectivity,
                                              std::uint64_t seed,
                                              const Tolerances& tol = {}) {
  if (m < 2) throw NotAGenerator("need at least 2 states");
  if (!(connectivity > 0.0) || connectivity > 1.0)
    throw NotAGenerator("connectivity must lie in (0,1]");
  RngStream rng(seed, 0x9d2c5680u);

  Eigen::VectorXd pi(m);
  for (int i = 0; i < m; ++i) pi(i) = rng.uniform(0.5, 1.5);
  pi /= pi.sum();

  // Spanning path through a random permutation, then Bernoulli extras.
  std::vector<int> order(static_cast<std::size_t>(m));
  std::iota(order.begin(), order.end(), 0);
  for (int i = m - 1; i > 0; --i)
    std::swap(order[static_cast<std::size_t>(i)],
              order[rng.below(static_cast<std::uint64_t>(i) + 1)]);

  // Weight scale 1/m² keeps exit rates O(1) regardless of state count.
  const double w_scale = 1.0 / (static_cast<double>(m) * static_cast<double>(m));
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(m, m);
  for (int k = 0; k + 1 < m; ++k) {
    int a = order[static_cast<std::size_t>(k)];
    int b = order[static_cast<std::size_t>(k) + 1];
    double wt = rng.uniform(0.5, 1.5) * w_scale;
    w(a, b) = w(b, a) = wt;
  }
  for (int i = 0; i < m; ++i)
    for (int j = i + 1; j < m; ++j) {
      bool take = rng.uniform01() < connectivity;
      if (take && w(i, j) == 0.0) {
        double wt = rng.uniform(0.5, 1.5) * w_scale;
        w(i, j) = w(j, i) = wt;
      }
    }

  Eigen::MatrixXd q = Eigen::MatrixXd::Zero(m, m);
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < m; ++j)
      if (i != j) q(i, j) = w(i, j) / pi(i);
    q(i, i) = -q.row(i).sum();
  }

  Eigen::VectorXd pi_solved = detail::invariant_distribution(q);
  if ((pi - pi_solved).cwiseAbs().maxCoeff() > 1e-9)
    throw NotAGenerator("constructed π disagrees with the null-space solve");

  GeneratorModel model;
  model.Q = std::move(q);
  model.pi = std::move(pi);
  model.reversible = true;
  model.ergodic = true;
  model.states.reserve(static_cast<std::size_t>(m));
  for (int i = 0; i < m; ++i) model.states.push_back(std::to_string(i));
  detail::check_model_invariants(model, tol);
  return model;
}

/// Subtracts the π-mean. Idempotent by contract: a vector that already
/// passes the centering test is returned unchanged, bit for bit. A centered
/// vector that vanishes is flagged degenerate (σ² would be 0), not rejected.
inline Observable center(const Eigen::VectorXd& f_raw, const GeneratorModel& model,
                         const Tolerances& tol = {}) {
  if (f_raw.size() != model.size())
    throw NotAGenerator("observable length does not match the state count");
  const double scale = std::max(1.0, f_raw.cwiseAbs().maxCoeff());
  const double mean = model.pi.dot(f_raw);
  Observable out;
  if (std::abs(mean) <= tol.exact * scale) {
    out.values = f_raw;
  } else {
    out.values = f_raw.array() - mean;
  }
  out.centered = true;
  out.degenerate = out.values.cwiseAbs().maxCoeff() <= 1e-14 * scale;
  return out;
}

} // namespace fcltlab
