// Copyright (c) the fcltlab contributors.
// SPDX-License-Identifier: Apache-2.0

#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>
#include <cmath>

#include "fcltlab/chain_model.hpp"
#include "fcltlab/fclt_verifier.hpp"
#include "fcltlab/path_simulator.hpp"
#include "fcltlab/spectral_calculus.hpp"

using namespace fcltlab;

namespace {

GeneratorModel bd3() { return build_birth_death({1.0, 1.0}, {1.0, 1.0}); }

Observable bd3_eigenmode() {
  GeneratorModel m = bd3();
  Eigen::VectorXd v(3);
  v << 1, 0, -1;
  return center(v, m);
}

Observable parity2(const GeneratorModel& m) {
  Eigen::VectorXd v(2);
  v << 1, -1;
  return center(v, m);
}

} // namespace

TEST_CASE("finite-t variance oracle closed forms") {
  GeneratorModel m3 = bd3();
  SpectralData s3 = decompose(m3);
  Observable f3 = bd3_eigenmode();
  SECTION("single mode with rate 1 at t = 1") {
    double expected = (4.0 / 3.0) * std::exp(-1.0);
    REQUIRE(finite_t_variance_oracle(s3, f3, 1.0) ==
            Catch::Approx(expected).epsilon(1e-12));
  }
  SECTION("two-state parity at t = 1") {
    GeneratorModel m2 = build_two_state();
    SpectralData s2 = decompose(m2);
    double expected = (1.0 + std::exp(-2.0)) / 2.0;
    REQUIRE(finite_t_variance_oracle(s2, parity2(m2), 1.0) ==
            Catch::Approx(expected).epsilon(1e-12));
  }
  SECTION("small-t expansion: value/t² → ‖f‖²_π") {
    double t = 1e-4;
    double value = finite_t_variance_oracle(s3, f3, t);
    REQUIRE(value / (t * t) ==
            Catch::Approx(pi_inner(f3.values, f3.values, m3)).epsilon(1e-3));
  }
  SECTION("value/t is nondecreasing and converges to sigma2") {
    double sigma2 = sigma2_fractional_formula(s3, f3).sigma2;
    double prev = 0.0;
    for (double t : {0.01, 0.1, 1.0, 10.0, 100.0}) {
      double rate = finite_t_variance_oracle(s3, f3, t) / t;
      REQUIRE(rate >= prev - 1e-14);
      REQUIRE(rate <= sigma2 + 1e-12);
      prev = rate;
    }
    REQUIRE(finite_t_variance_oracle(s3, f3, 1e4) / 1e4 ==
            Catch::Approx(sigma2).epsilon(1e-3));
  }
  SECTION("the 1/n scaling of Var[I_n] is coherent across scales") {
    // Var[I_n(f,t)] = oracle(n·t)/n, so two (n,t) pairs with equal product
    // give variances in the inverse ratio of their n values.
    double tau = 100.0;
    double var_a = finite_t_variance_oracle(s3, f3, tau) / 50.0;
    double var_b = finite_t_variance_oracle(s3, f3, tau) / 100.0;
    REQUIRE(var_a == Catch::Approx(2.0 * var_b).epsilon(1e-14));
  }
}

TEST_CASE("KS test machinery") {
  SECTION("degenerate reference variance is rejected") {
    REQUIRE_THROWS_AS(ks_test_normal({0.1, 0.2, 0.3}, 0.0, 0.0),
                      DegenerateObservable);
  }
  SECTION("self-calibration under the null") {
    RngStream rng(424242, 0);
    const int trials = 1000;
    const int samples_per_trial = 1000;
    int above_threshold = 0;
    int rejections_at_5pct = 0;
    for (int trial = 0; trial < trials; ++trial) {
      std::vector<double> samples(samples_per_trial);
      for (double& s : samples) s = rng.normal(0.0, 1.3);
      KsResult ks = ks_test_normal(std::move(samples), 0.0, 1.3 * 1.3);
      REQUIRE(ks.statistic >= 0.0);
      REQUIRE(ks.statistic <= 1.0);
      if (ks.p_value > 1e-3) ++above_threshold;
      if (ks.p_value < 0.05) ++rejections_at_5pct;
    }
    REQUIRE(above_threshold >= 998);
    // rejection rate at level 5% within a 3 sigma binomial band
    double band = 3.0 * std::sqrt(trials * 0.05 * 0.95);
    REQUIRE(std::abs(rejections_at_5pct - trials * 0.05) <= band);
  }
  SECTION("an obviously wrong reference is rejected") {
    RngStream rng(7, 7);
    std::vector<double> samples(2000);
    for (double& s : samples) s = rng.normal(0.0, 2.0);
    KsResult ks = ks_test_normal(std::move(samples), 0.0, 1.0);
    REQUIRE(ks.p_value < 1e-6);
  }
}

TEST_CASE("normality fails pre-asymptotically and recovers with scaling") {
  // slow-mixing two-state chain: at n = 1 the functional is nowhere near
  // Gaussian; after rescaling by a large n the KS test accepts.
  GeneratorModel slow = build_birth_death({0.01}, {0.01});
  Eigen::VectorXd v(2);
  v << 1, -1;
  Observable f = center(v, slow);
  double sigma2 = sigma2_range_formula(slow, f).sigma2;
  auto terminal_samples = [&](int n) {
    const int reps = 1500;
    std::vector<double> out(reps);
    for (int r = 0; r < reps; ++r) {
      TrajectorySample path = sample_path(slow, static_cast<double>(n), 5150,
                                          static_cast<std::uint64_t>(r));
      out[static_cast<std::size_t>(r)] =
          additive_functional(path, f, static_cast<double>(n)) /
          std::sqrt(static_cast<double>(n));
    }
    return out;
  };
  KsResult unscaled = ks_test_normal(terminal_samples(1), 0.0, sigma2);
  REQUIRE(unscaled.p_value < 1e-3);
  KsResult scaled = ks_test_normal(terminal_samples(20000), 0.0, sigma2);
  REQUIRE(scaled.p_value > 0.01);
}

TEST_CASE("experiment validation") {
  FcltExperiment e;
  e.model = bd3();
  e.f = bd3_eigenmode();
  e.n_list = {10, 20};
  e.replicates = 100;
  REQUIRE_NOTHROW(e.validate());
  SECTION("replicate floor") {
    e.replicates = 99;
    REQUIRE_THROWS_AS(e.validate(), ConfigError);
  }
  SECTION("n list must increase") {
    e.n_list = {20, 10};
    REQUIRE_THROWS_AS(e.validate(), ConfigError);
  }
  SECTION("schedule must be o(1/n)") {
    e.schedule_exponent = 1.0;
    REQUIRE_THROWS_AS(e.validate(), ScheduleNotSmallO);
  }
}

TEST_CASE("replicate sweep matches the oracle and the identity") {
  FcltExperiment e;
  e.model = bd3();
  e.f = bd3_eigenmode();
  e.n_list = {50};
  e.replicates = 2000;
  e.seed = 314159;
  e.threads = 2;
  std::vector<ReplicateStats> stats = run_experiment(e);
  REQUIRE(stats.size() == 1);
  const ReplicateStats& s = stats.front();
  REQUIRE(s.max_identity_residual <= 1e-10);
  REQUIRE(s.sigma2_ref == Catch::Approx(4.0 / 3.0).epsilon(1e-10));
  // empirical variance at T within 3·SE of the exact finite-n value
  double band = 3.0 * std::sqrt(2.0 / (e.replicates - 1)) * s.var_total.back();
  REQUIRE(std::abs(s.var_total.back() - s.oracle_variance) <= band);
  // stationarity: mean I_n(f,T) within 3 standard errors of 0
  double se_mean = std::sqrt(s.var_total.back() / e.replicates);
  REQUIRE(std::abs(s.mean_total.back()) <= 3.0 * se_mean);
  // determinism of the whole sweep, independent of thread count
  e.threads = 1;
  std::vector<ReplicateStats> again = run_experiment(e);
  REQUIRE(again.front().var_total == s.var_total);
  REQUIRE(again.front().ks_statistic == s.ks_statistic);
}

TEST_CASE("variance scaling verdict") {
  FcltExperiment e;
  e.model = bd3();
  e.f = bd3_eigenmode();
  e.n_list = {200};
  e.replicates = 1500;
  e.seed = 606;
  std::vector<ReplicateStats> stats = run_experiment(e);
  SpectralData spectrum = decompose(e.model);
  VarianceScalingVerdict verdict =
      variance_scaling_test(stats.front(), stats.front().sigma2_ref, &spectrum, &e.f);
  REQUIRE(verdict.pass);
  REQUIRE(verdict.rows.size() == e.t_grid.size());
  // the asymptotic band must hold at the horizon where the bias is tiny
  REQUIRE(verdict.rows.back().pass_sigma2_band);
}

TEST_CASE("degenerate observable yields an all-zero experiment") {
  FcltExperiment e;
  e.model = build_two_state();
  Eigen::VectorXd flat(2);
  flat << 4.0, 4.0;
  e.f = center(flat, e.model);
  REQUIRE(e.f.degenerate);
  e.n_list = {20};
  e.replicates = 150;
  std::vector<ReplicateStats> stats = run_experiment(e);
  const ReplicateStats& s = stats.front();
  REQUIRE(s.sigma2_ref == 0.0);
  for (double v : s.var_total) REQUIRE(v == 0.0);
  for (const auto& row :
       variance_scaling_test(s, 0.0, nullptr, nullptr).rows) {
    REQUIRE(row.pass_sigma2_band);
  }
  REQUIRE(s.sup_resolvent_median == 0.0);
  REQUIRE(s.mean_sup_sq == 0.0);
}

TEST_CASE("resolvent-term collapse under the schedule, and a negative control") {
  GeneratorModel m = build_two_state();
  Observable f = parity2(m);
  SECTION("scheduled λ_n collapses the medians") {
    FcltExperiment e;
    e.model = m;
    e.f = f;
    e.n_list = {100, 400, 1600};
    e.replicates = 400;
    e.seed = 2718;
    std::vector<ReplicateStats> stats = run_experiment(e);
    CollapseReport report = lambda_collapse_test(stats);
    REQUIRE(report.medians_decreasing);
    REQUIRE(report.pass);
    for (const auto& row : report.rows) REQUIRE(row.envelope_pass);
    // collapse by roughly 1/n per quadrupling, far below a factor 2
    REQUIRE(stats[1].sup_resolvent_median < 0.5 * stats[0].sup_resolvent_median);
    // the oracle variance band holds on this acceptance model at every n
    for (const ReplicateStats& s : stats) {
      double band = 3.0 * std::sqrt(2.0 / (s.replicates - 1)) * s.var_total.back();
      REQUIRE(std::abs(s.var_total.back() - s.oracle_variance) <= band);
    }
  }
  SECTION("per-replicate sup envelope holds in at least 99% of replicates") {
    SpectralData spectrum = decompose(m);
    Eigen::VectorXd hp = fractional_power_apply(spectrum, -0.5, f.values);
    double c = pi_norm(hp, m);
    const int n = 400;
    const double lambda = lambda_schedule(n);
    Eigen::VectorXd integrand = lambda * resolvent_apply(m, lambda, f.values);
    const double envelope = 0.5 * std::sqrt(n * lambda) * 1.0 * c;
    const int reps = 500;
    int inside = 0;
    for (int r = 0; r < reps; ++r) {
      TrajectorySample path = sample_path(m, static_cast<double>(n), 808,
                                          static_cast<std::uint64_t>(r));
      if (sup_abs_scaled_integral(path, integrand, n, 1.0) <= envelope) ++inside;
    }
    REQUIRE(inside >= static_cast<int>(0.99 * reps));
  }
  SECTION("fixed λ is the negative control: no collapse") {
    // bypass the schedule: integrate the λ-fixed resolvent term directly
    const double lambda = 0.5;
    Eigen::VectorXd x = resolvent_apply(m, lambda, f.values);
    Eigen::VectorXd integrand = lambda * x;
    auto median_sup = [&](int n, std::uint64_t salt) {
      const int reps = 400;
      std::vector<double> sups(reps);
      for (int r = 0; r < reps; ++r) {
        TrajectorySample path = sample_path(
            m, static_cast<double>(n), 99000 + salt,
            static_cast<std::uint64_t>(r));
        sups[static_cast<std::size_t>(r)] =
            sup_abs_scaled_integral(path, integrand, n, 1.0);
      }
      std::sort(sups.begin(), sups.end());
      return fcltlab::detail::quantile_sorted(sups, 0.5);
    };
    double med_small = median_sup(100, 1);
    double med_large = median_sup(1600, 2);
    REQUIRE(med_large > 0.5 * med_small);  // stabilizes instead of collapsing
    REQUIRE(med_large > 0.0);
  }
}

TEST_CASE("sigma2 convergence table") {
  GeneratorModel m = build_two_state();
  Observable f = parity2(m);
  SECTION("closed-form gap on the two-state chain") {
    auto rows = sigma2_convergence_report(m, f, {2.0});
    // gap(λ) = λ(λ+4)/(λ+2)² evaluates to 3/4 at λ = 2
    REQUIRE(rows[0].gap == Catch::Approx(0.75).margin(1e-12));
  }
  SECTION("gap is O(λ): log-log slope near 1") {
    std::vector<double> grid = {1e-3, 1e-4, 1e-5};
    auto rows = sigma2_convergence_report(m, f, grid);
    double slope =
        (std::log(rows[2].gap) - std::log(rows[0].gap)) /
        (std::log(grid[2]) - std::log(grid[0]));
    REQUIRE(slope > 0.9);
    REQUIRE(slope < 1.1);
  }
  SECTION("zero observable gives zero gaps") {
    Observable zero;
    zero.values = Eigen::VectorXd::Zero(2);
    zero.centered = true;
    auto rows = sigma2_convergence_report(m, zero, {1.0, 0.1});
    for (const auto& r : rows) {
      REQUIRE(r.sigma2_lambda == 0.0);
      REQUIRE(r.gap == 0.0);
    }
  }
}

TEST_CASE("diagonal-argument trace") {
  GeneratorModel m = build_two_state();
  Observable f = parity2(m);
  SECTION("vacuous thresholds for ε ≥ 1") {
    DiagonalTrace trace =
        diagonal_argument_trace(m, f, 1.0, {100, 1000}, 200, 13);
    REQUIRE(trace.ell == 100);
    REQUIRE(trace.n1 == 100);
    REQUIRE(trace.n2 == 100);
    REQUIRE(trace.n3 == 100);
  }
  SECTION("closed-form Cauchy bound column") {
    DiagonalTrace trace =
        diagonal_argument_trace(m, f, 0.05, {100, 400}, 200, 13);
    SpectralData spectrum = decompose(m);
    Eigen::VectorXd hp = fractional_power_apply(spectrum, -0.5, f.values);
    double c = pi_norm(hp, m);
    for (const auto& row : trace.rows) {
      double expected = std::sqrt(static_cast<double>(row.n)) *
                        std::sqrt(row.lambda_n) * c * 0.5;
      REQUIRE(row.cauchy_bound == Catch::Approx(expected).epsilon(1e-12));
    }
  }
  SECTION("all four thresholds are reached at ε = 0.05") {
    // the Cauchy bound is 0.354·n^{-1/4} here, so the ladder must reach 10⁴
    DiagonalTrace trace =
        diagonal_argument_trace(m, f, 0.05, {100, 1000, 10000}, 600, 20250809);
    REQUIRE(trace.ell > 0);
    REQUIRE(trace.n1 > 0);
    REQUIRE(trace.n2 == 10000);
    REQUIRE(trace.n3 > 0);
    REQUIRE(trace.rows.size() == 3);
  }
}
