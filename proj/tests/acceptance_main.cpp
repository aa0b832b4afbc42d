// Copyright (c) the fcltlab contributors.
// SPDX-License-Identifier: Apache-2.0
//
// Acceptance suite: one pass/fail line per criterion, each with its pinned
// tolerance and runtime budget. Exits with the number of failed criteria.
// Criteria 7-9 and 11 drive the installed CLI so the checked artifacts are
// the real report files.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "fcltlab/chain_model.hpp"
#include "fcltlab/fclt_verifier.hpp"
#include "fcltlab/path_simulator.hpp"
#include "fcltlab/report_io.hpp"
#include "fcltlab/spectral_calculus.hpp"

using namespace fcltlab;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string g_cli = FCLTLAB_CLI_PATH;

int run_cli(const std::string& args) {
  std::string command = g_cli + " " + args + " > /dev/null 2>&1";
  int status = std::system(command.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

json load_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("missing " + path.string());
  json doc;
  in >> doc;
  return doc;
}

fs::path fresh_dir(const std::string& name) {
  fs::path dir = fs::path("acceptance_out") / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

GeneratorModel bd3() { return build_birth_death({1.0, 1.0}, {1.0, 1.0}); }

Observable linear3(const GeneratorModel& m) {
  Eigen::VectorXd v(3);
  v << 1, 0, -1;
  return center(v, m);
}

Observable parity2(const GeneratorModel& m) {
  Eigen::VectorXd v(2);
  v << 1, -1;
  return center(v, m);
}

int g_failures = 0;

void criterion(int id, const std::string& label, double time_limit_s,
               const std::function<bool(std::string&)>& body) {
  auto t0 = std::chrono::steady_clock::now();
  bool ok = false;
  std::string note;
  try {
    ok = body(note);
  } catch (const std::exception& e) {
    ok = false;
    note = std::string("exception: ") + e.what();
  }
  double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (seconds >= time_limit_s) {
    ok = false;
    note += (note.empty() ? "" : "; ") + std::string("over time budget");
  }
  if (!ok) ++g_failures;
  std::printf("[%s] %2d. %s (%.2fs%s)\n", ok ? "PASS" : "FAIL", id, label.c_str(),
              seconds, note.empty() ? "" : ("; " + note).c_str());
  std::fflush(stdout);
}

// Shared pinned seeds for the CLI runs (criteria 7-9, repeated for 11).
constexpr const char* kSeed78 = "20250809";
constexpr const char* kSeed9 = "31415926";

std::string cli_args_run78(const std::string& out) {
  return "simulate --model birth-death:3 --f linear --n 1000 --replicates 10000 "
         "--seed " + std::string(kSeed78) + " --out " + out;
}

std::string cli_args_run9(const std::string& out) {
  return "simulate --model two-state --f parity --n 100,1000,10000 "
         "--replicates 1000 --seed " + std::string(kSeed9) + " --out " + out;
}

} // namespace

int main(int argc, char** argv) {
  if (argc > 1) g_cli = argv[1];

  criterion(1, "exact sigma2, two-state parity, both formulas to 1e-12", 1.0,
            [](std::string& note) {
              GeneratorModel m = build_two_state();
              Observable f = parity2(m);
              double range = sigma2_range_formula(m, f).sigma2;
              double frac = sigma2_fractional_formula(decompose(m), f).sigma2;
              note = "range=" + csv_number(range) + " fractional=" + csv_number(frac);
              return std::abs(range - 1.0) <= 1e-12 && std::abs(frac - 1.0) <= 1e-12;
            });

  criterion(2, "exact sigma2, birth-death(3), 4/3 to 1e-10 rel, formulas to 1e-12",
            1.0, [](std::string& note) {
              GeneratorModel m = bd3();
              Observable f = linear3(m);
              double range = sigma2_range_formula(m, f).sigma2;
              double frac = sigma2_fractional_formula(decompose(m), f).sigma2;
              note = "range=" + csv_number(range);
              return std::abs(range - 4.0 / 3.0) <= 1e-10 * (4.0 / 3.0) &&
                     std::abs(range - frac) <= 1e-12;
            });

  // Criteria 3 and 4 share the 50-model suite.
  std::vector<GeneratorModel> suite;
  {
    RngStream pick(90210, 0);
    for (int k = 0; k < 50; ++k) {
      int m = 2 + static_cast<int>(pick.below(49));  // m in [2, 50]
      suite.push_back(build_random_reversible(m, 0.3, 7000 + k));
    }
  }

  criterion(3, "operator property suite: 50 models x 20 samples", 30.0,
            [&](std::string& note) {
              RngStream rng(1618, 1);
              double worst_eq = 0.0, worst_norm = 0.0, worst_id = 0.0,
                     worst_bound = 0.0;
              for (const GeneratorModel& m : suite) {
                SpectralData spectrum = decompose(m);
                double s_ref = m.max_exit_rate();
                for (int s = 0; s < 20; ++s) {
                  Eigen::VectorXd raw(m.size());
                  for (Eigen::Index i = 0; i < m.size(); ++i)
                    raw(i) = rng.uniform(-1.0, 1.0);
                  double lambda = s_ref * std::pow(10.0, rng.uniform(-2.0, 2.0));
                  double mu = s_ref * std::pow(10.0, rng.uniform(-2.0, 2.0));
                  double scale = std::max(1.0, pi_norm(raw, m));
                  worst_eq = std::max(
                      worst_eq, resolvent_equation_residual(m, lambda, raw) / scale);
                  OperatorNormBounds b = operator_norm_bounds(spectrum, lambda);
                  worst_norm = std::max({worst_norm, b.lambda_resolvent - 1.0,
                                         b.generator_resolvent - 1.0});
                  worst_id = std::max(
                      worst_id,
                      resolvent_identity_residual(m, lambda, mu, raw) / scale);
                  Observable f = center(raw, m);
                  if (!f.degenerate) {
                    auto [lhs, rhs] = sqrt_lambda_bound_check(spectrum, f, lambda);
                    worst_bound = std::max(worst_bound, lhs - rhs);
                  }
                }
              }
              note = "eq=" + csv_number(worst_eq) + " norm-1=" +
                     csv_number(worst_norm) + " id=" + csv_number(worst_id) +
                     " bound=" + csv_number(worst_bound);
              return worst_eq <= 1e-10 && worst_norm <= 1e-10 &&
                     worst_id <= 1e-9 && worst_bound <= 1e-12;
            });

  criterion(4, "sigma2_lambda monotone with relative gap <= 1e-6 at 1e-8*gap",
            10.0, [&](std::string& note) {
              RngStream rng(2020, 2);
              double worst_gap = 0.0;
              for (const GeneratorModel& m : suite) {
                Eigen::VectorXd raw(m.size());
                for (Eigen::Index i = 0; i < m.size(); ++i)
                  raw(i) = rng.uniform(-1.0, 1.0);
                Observable f = center(raw, m);
                if (f.degenerate) continue;
                VarianceReport report = sigma2_range_formula(m, f);
                if (!variance_report_violation(report).empty()) {
                  note = "monotonicity violated";
                  return false;
                }
                if (report.sigma2 > 0.0)
                  worst_gap = std::max(
                      worst_gap,
                      (report.sigma2 - report.curve.back().second) / report.sigma2);
              }
              note = "max rel gap=" + csv_number(worst_gap);
              return worst_gap <= 1e-6;
            });

  criterion(5, "potential limit: monotone decay to 1e-5; lambda*R 1 stays at 1",
            5.0, [](std::string& note) {
              bool ok = true;
              for (int which = 0; which < 2; ++which) {
                GeneratorModel m =
                    which == 0 ? bd3() : build_random_reversible(25, 0.3, 4477);
                SpectralData spectrum = decompose(m);
                double s_min = spectrum.gap();
                RngStream rng(33, static_cast<std::uint64_t>(which));
                Eigen::VectorXd raw(m.size());
                for (Eigen::Index i = 0; i < m.size(); ++i)
                  raw(i) = rng.uniform(-1.0, 1.0);
                Observable g = center(raw, m);
                std::vector<double> grid;
                for (int j = 0; j <= 12; ++j)
                  grid.push_back(s_min * std::pow(10.0, -0.5 * j));
                auto rows = yosida_potential_residual(m, g.values, grid);
                double scale = std::max(1.0, pi_norm(g.values, m));
                for (std::size_t i = 1; i < rows.size(); ++i)
                  ok = ok && rows[i].residual <= rows[i - 1].residual + 1e-12 * scale;
                ok = ok && rows.back().residual <= 1e-5 * scale;
                Eigen::VectorXd ones = Eigen::VectorXd::Ones(m.size());
                for (double lambda : grid) {
                  double norm =
                      pi_norm(lambda * resolvent_apply(m, lambda, ones), m);
                  ok = ok && std::abs(norm - 1.0) <= 1e-8;
                }
                if (which == 0)
                  note = "final residual=" + csv_number(rows.back().residual);
              }
              return ok;
            });

  criterion(6, "pathwise I = Lambda + A over 1000 replicates to 1e-10", 10.0,
            [](std::string& note) {
              GeneratorModel m = bd3();
              Observable f = linear3(m);
              std::vector<double> grid = default_t_grid();
              const int n = 100;
              double lambda = lambda_schedule(n);
              double worst = 0.0;
              for (int r = 0; r < 1000; ++r) {
                TrajectorySample path = sample_path(
                    m, static_cast<double>(n), 1234, static_cast<std::uint64_t>(r));
                ScaledPaths sp = scaled_decomposition(path, m, f, n, lambda, grid);
                worst = std::max(worst, sp.max_identity_residual());
              }
              note = "max residual=" + csv_number(worst);
              return worst <= 1e-10;
            });

  // Criteria 7 and 8 come from one pinned CLI run.
  fs::path run78 = fresh_dir("run7");
  json report78;
  criterion(7, "variance scaling: Var[I_n(f,1)] in the 3SE oracle band", 120.0,
            [&](std::string& note) {
              if (run_cli(cli_args_run78(run78.string())) != 0) {
                note = "CLI exited nonzero";
                return false;
              }
              report78 = load_json(run78 / "report.json");
              const json& entry = report78["per_n"][0];
              double var = entry["var_I"].back().get<double>();
              double oracle = entry["oracle_variance"].get<double>();
              double sigma2 = entry["sigma2"].get<double>();
              int reps = entry["replicates"].get<int>();
              double band = 3.0 * std::sqrt(2.0 / (reps - 1)) * var;
              note = "var=" + csv_number(var) + " oracle=" + csv_number(oracle);
              return std::abs(var - oracle) <= band &&
                     std::abs(oracle / sigma2 - 1.0) <= 0.002 &&
                     std::abs(sigma2 - 4.0 / 3.0) <= 1e-10;
            });

  criterion(8, "normality: KS p-value above 0.01 at the pinned seed", 1.0,
            [&](std::string& note) {
              if (report78.is_null()) {
                note = "criterion 7 run unavailable";
                return false;
              }
              double p = report78["per_n"][0]["ks_pvalue"].get<double>();
              note = "p=" + csv_number(p);
              return p > 0.01;
            });

  fs::path run9 = fresh_dir("run9");
  criterion(9, "Lambda collapse: medians strictly decreasing, Jensen envelope",
            300.0, [&](std::string& note) {
              if (run_cli(cli_args_run9(run9.string())) != 0) {
                note = "CLI exited nonzero";
                return false;
              }
              json report = load_json(run9 / "report.json");
              const json& collapse = report["collapse"];
              if (!collapse["medians_decreasing"].get<bool>()) {
                note = "medians not decreasing";
                return false;
              }
              for (const json& row : collapse["rows"]) {
                if (!(row["mean_sup_Lambda_sq"].get<double>() <=
                      row["envelope"].get<double>())) {
                  note = "envelope violated at n=" + row["n"].dump();
                  return false;
                }
              }
              std::string medians;
              for (const json& row : collapse["rows"])
                medians += csv_number(row["median_sup_Lambda"].get<double>()) + " ";
              note = "medians: " + medians;
              return true;
            });

  criterion(10, "total variation at t=1 equals exp(-2)/2 to 1e-10", 1.0,
            [](std::string& note) {
              GeneratorModel m = build_two_state();
              auto tv = tv_convergence_curve(m, {1.0});
              double expected = std::exp(-2.0) / 2.0;
              note = "tv=" + csv_number(tv[0][0]);
              return std::abs(tv[0][0] - expected) <= 1e-10;
            });

  criterion(11, "determinism: repeated runs 7-9 are byte-identical", 420.0,
            [&](std::string& note) {
              fs::path again78 = fresh_dir("run7_again");
              fs::path again9 = fresh_dir("run9_again");
              if (run_cli(cli_args_run78(again78.string())) != 0 ||
                  run_cli(cli_args_run9(again9.string())) != 0) {
                note = "CLI exited nonzero";
                return false;
              }
              for (const char* file : {"report.json", "summary.csv", "manifest.json"}) {
                if (read_text_file(run78 / file) != read_text_file(again78 / file)) {
                  note = std::string("run 7/8 ") + file + " differs";
                  return false;
                }
                if (read_text_file(run9 / file) != read_text_file(again9 / file)) {
                  note = std::string("run 9 ") + file + " differs";
                  return false;
                }
              }
              return true;
            });

  std::printf("%d/11 criteria passed\n", 11 - g_failures);
  return g_failures;
}
