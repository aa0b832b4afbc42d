// Copyright (c) the fcltlab contributors.
// SPDX-License-Identifier: Apache-2.0
//
// Command-line runner: `exact` computes the closed-form operator suite and
// both σ² formulas, `simulate` runs the replicate sweep with the λ_n
// schedule, `verify` runs the randomized operator property suite.
// Exit codes: 0 all contracts hold, 1 usage/config error, 2 contract
// violation. Outputs per run: report.json, summary.csv, manifest.json.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "fcltlab/chain_model.hpp"
#include "fcltlab/fclt_verifier.hpp"
#include "fcltlab/model_io.hpp"
#include "fcltlab/path_simulator.hpp"
#include "fcltlab/report_io.hpp"
#include "fcltlab/spectral_calculus.hpp"

namespace {

using nlohmann::json;
namespace fs = std::filesystem;
using namespace fcltlab;

struct RunConfig {
  std::string model = "two-state";
  std::string f = "parity";
  std::uint64_t seed = 20250809;
  int replicates = 1000;
  std::vector<int> n_list = {100, 1000};
  std::string out = "out";
  double tol = 0.0;  // 0 = per-check defaults
  int threads = 0;
  double schedule_exponent = 1.5;
  double schedule_c = 1.0;
  int t_points = 101;
  int dump_replicates = 0;
  int suite_models = 50;
  int suite_samples = 20;
  int suite_m_max = 50;
  double connectivity = 0.3;
  double epsilon = 0.05;

  // The output directory is where files land, not an input to the
  // computation, so it stays out of the recorded (and hashed) config.
  json resolved() const {
    return {{"model", model},
            {"f", f},
            {"seed", seed},
            {"replicates", replicates},
            {"n_list", n_list},
            {"tol", tol},
            {"threads", threads},
            {"schedule_exponent", schedule_exponent},
            {"schedule_c", schedule_c},
            {"t_points", t_points},
            {"dump_replicates", dump_replicates},
            {"suite_models", suite_models},
            {"suite_samples", suite_samples},
            {"suite_m_max", suite_m_max},
            {"connectivity", connectivity},
            {"epsilon", epsilon}};
  }
};

void apply_config_file(RunConfig& cfg, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw ConfigError("config file " + path + ": " + e.what());
  }
  if (!doc.is_object()) throw ConfigError("config file: top level must be an object");
  auto get = [&](const char* key, auto& slot) {
    if (doc.contains(key)) {
      try {
        slot = doc.at(key).get<std::decay_t<decltype(slot)>>();
      } catch (const json::exception&) {
        throw ConfigError(std::string("config key \"") + key + "\" has the wrong type");
      }
    }
  };
  get("model", cfg.model);
  get("f", cfg.f);
  get("seed", cfg.seed);
  get("replicates", cfg.replicates);
  get("n_list", cfg.n_list);
  get("out", cfg.out);
  get("tol", cfg.tol);
  get("threads", cfg.threads);
  get("schedule_exponent", cfg.schedule_exponent);
  get("schedule_c", cfg.schedule_c);
  get("t_points", cfg.t_points);
  get("dump_replicates", cfg.dump_replicates);
  get("suite_models", cfg.suite_models);
  get("suite_samples", cfg.suite_samples);
  get("suite_m_max", cfg.suite_m_max);
  get("connectivity", cfg.connectivity);
  get("epsilon", cfg.epsilon);
}

std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> parts;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, sep)) parts.push_back(item);
  return parts;
}

/// Builtins: two-state, birth-death:m, random-reversible:m:seed[:conn],
/// cycle:m. Anything else is read as a model file path.
struct ResolvedModel {
  GeneratorModel model;
  std::optional<Eigen::VectorXd> file_f;
  std::string name;
};

ResolvedModel resolve_model(const std::string& spec_text) {
  ResolvedModel out;
  out.name = spec_text;
  auto parts = split(spec_text, ':');
  const std::string& head = parts[0];
  auto arg_int = [&](std::size_t i, int fallback) {
    if (parts.size() <= i) return fallback;
    try {
      return std::stoi(parts[i]);
    } catch (...) {
      throw ConfigError("model \"" + spec_text + "\": bad integer argument");
    }
  };
  if (head == "two-state") {
    out.model = build_two_state();
  } else if (head == "birth-death") {
    int m = arg_int(1, 3);
    if (m < 2) throw ConfigError("birth-death needs m ≥ 2");
    std::vector<double> ones(static_cast<std::size_t>(m) - 1, 1.0);
    out.model = build_birth_death(ones, ones);
  } else if (head == "random-reversible") {
    int m = arg_int(1, 20);
    int seed = arg_int(2, 42);
    double conn = 0.3;
    if (parts.size() > 3) {
      try {
        conn = std::stod(parts[3]);
      } catch (...) {
        throw ConfigError("model \"" + spec_text + "\": bad connectivity");
      }
    }
    out.model = build_random_reversible(m, conn, static_cast<std::uint64_t>(seed));
  } else if (head == "cycle") {
    out.model = build_cycle(arg_int(1, 3));
  } else {
    ModelFile file = load_model_file(spec_text);
    out.model = std::move(file.model);
    out.file_f = std::move(file.f);
  }
  return out;
}

/// Builtins: parity ((−1)^i), first-coordinate (indicator of state 0),
/// linear ((m−1)/2 − i). Anything else is read as a file path; an empty
/// name falls back to the observable bundled with the model file.
Eigen::VectorXd resolve_observable(const std::string& name, const ResolvedModel& rm) {
  const Eigen::Index m = rm.model.size();
  if (name.empty() || name == "from-model") {
    if (!rm.file_f)
      throw ConfigError("no observable: model source carries no \"f\" array");
    return *rm.file_f;
  }
  if (name == "parity") {
    Eigen::VectorXd f(m);
    for (Eigen::Index i = 0; i < m; ++i) f(i) = (i % 2 == 0) ? 1.0 : -1.0;
    return f;
  }
  if (name == "first-coordinate") {
    Eigen::VectorXd f = Eigen::VectorXd::Zero(m);
    f(0) = 1.0;
    return f;
  }
  if (name == "linear") {
    Eigen::VectorXd f(m);
    for (Eigen::Index i = 0; i < m; ++i)
      f(i) = 0.5 * static_cast<double>(m - 1) - static_cast<double>(i);
    return f;
  }
  return load_observable_file(name, m);
}

void write_outputs(const RunConfig& cfg, const std::string& command,
                   const json& report, const std::string& summary_csv) {
  fs::path dir(cfg.out);
  fs::create_directories(dir);
  write_text_file(dir / "report.json", report.dump(2) + "\n");
  write_text_file(dir / "summary.csv", summary_csv);
  write_text_file(dir / "manifest.json",
                  make_manifest(command, cfg.resolved(), cfg.seed).dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// exact
// ---------------------------------------------------------------------------

int cmd_exact(const RunConfig& cfg) {
  ResolvedModel rm = resolve_model(cfg.model);
  const GeneratorModel& model = rm.model;
  Observable f = center(resolve_observable(cfg.f, rm), model);
  const double f_norm = pi_norm(f.values, model);
  const double tol_solve = cfg.tol > 0.0 ? cfg.tol : 1e-10;
  const double tol_identity = cfg.tol > 0.0 ? cfg.tol : 1e-9;

  std::vector<std::string> failures;
  json report;
  report["model"] = {{"name", rm.name},
                     {"m", model.size()},
                     {"reversible", model.reversible},
                     {"ergodic", model.ergodic}};
  report["f"] = std::vector<double>(f.values.data(), f.values.data() + f.values.size());
  report["f_degenerate"] = f.degenerate;

  VarianceReport range = sigma2_range_formula(model, f);
  report["sigma2_range"] = to_json(range);

  std::optional<SpectralData> spectrum;
  if (model.reversible) {
    spectrum = decompose(model);
    VarianceReport fractional = sigma2_fractional_formula(*spectrum, f);
    report["sigma2_fractional"] = to_json(fractional);
    double diff = std::abs(range.sigma2 - fractional.sigma2);
    double bound = 1e-9 * std::max(1.0, std::abs(range.sigma2));
    report["formula_agreement"] = {{"difference", diff}, {"bound", bound},
                                   {"pass", diff <= bound}};
    if (diff > bound) failures.push_back("cross-formula agreement");
  } else {
    report["sigma2_fractional"] = nullptr;
  }

  const double gap = spectrum ? spectrum->gap() : spectral_gap(model);
  std::vector<double> grid = default_lambda_grid(gap);

  // Resolvent-equation defect, operator-norm bounds, contraction bound.
  json op_rows = json::array();
  bool op_pass = true;
  for (double lambda : grid) {
    double eq2 = resolvent_equation_residual(model, lambda, f.values) /
                 std::max(1.0, f_norm);
    OperatorNormBounds norms = spectrum ? operator_norm_bounds(*spectrum, lambda)
                                        : operator_norm_bounds(model, lambda);
    json row = {{"lambda", lambda},
                {"eq_residual", eq2},
                {"lambda_resolvent_norm", norms.lambda_resolvent},
                {"generator_resolvent_norm", norms.generator_resolvent}};
    bool ok = eq2 <= tol_solve && norms.lambda_resolvent <= 1.0 + 1e-10 &&
              norms.generator_resolvent <= 1.0 + 1e-10;
    if (spectrum && !f.degenerate) {
      auto [lhs, rhs] = sqrt_lambda_bound_check(*spectrum, f, lambda);
      row["contraction_lhs"] = lhs;
      row["contraction_rhs"] = rhs;
      ok = ok && lhs <= rhs + 1e-12;
    }
    row["pass"] = ok;
    op_pass = op_pass && ok;
    op_rows.push_back(row);
  }
  report["operator_checks"] = {{"rows", op_rows}, {"pass", op_pass}};
  if (!op_pass) failures.push_back("operator bounds / resolvent equation");

  // Identity pairs stay in the moderate-λ part of the grid: below about
  // 1e-4·gap the composite R_λR_μ solve is null-direction limited and the
  // 1e-9 contract is out of reach in doubles.
  double worst_identity = 0.0;
  for (std::size_t i = 0; i + 1 < grid.size() && i + 1 <= 8; i += 2)
    worst_identity = std::max(
        worst_identity,
        resolvent_identity_residual(model, grid[i], grid[i + 1], f.values) /
            std::max(1.0, f_norm));
  report["resolvent_identity"] = {{"max_residual", worst_identity},
                                  {"bound", tol_identity},
                                  {"pass", worst_identity <= tol_identity}};
  if (worst_identity > tol_identity) failures.push_back("resolvent identity");

  // σ²_λ ↑ σ² as λ ↓ 0.
  auto curve = sigma2_convergence_report(model, f, grid);
  json curve_rows = json::array();
  bool curve_monotone = true;
  for (std::size_t i = 0; i < curve.size(); ++i) {
    curve_rows.push_back({{"lambda", curve[i].lambda},
                          {"sigma2_lambda", curve[i].sigma2_lambda},
                          {"gap", curve[i].gap}});
    if (i > 0 && curve[i].gap > curve[i - 1].gap + 1e-12 * (1.0 + range.sigma2))
      curve_monotone = false;
  }
  double final_rel_gap =
      range.sigma2 > 0.0 ? curve.back().gap / range.sigma2 : 0.0;
  bool curve_pass = model.reversible
                        ? (curve_monotone && final_rel_gap <= 1e-6)
                        : true;
  report["sigma2_curve"] = {{"rows", curve_rows},
                            {"monotone", curve_monotone},
                            {"final_relative_gap", final_rel_gap},
                            {"pass", curve_pass}};
  if (!curve_pass) failures.push_back("sigma2_lambda convergence");

  // Potential-operator limit for the centered observable, and the
  // non-centered dichotomy on the constants.
  json yosida_json;
  bool yosida_pass = true;
  if (!f.degenerate) {
    auto rows = yosida_potential_residual(model, f.values, grid);
    bool monotone = true;
    for (std::size_t i = 1; i < rows.size(); ++i)
      if (rows[i].residual > rows[i - 1].residual + 1e-12 * (1.0 + f_norm))
        monotone = false;
    double last = rows.back().residual;
    yosida_pass = monotone && last <= 1e-5 * std::max(1.0, f_norm);
    yosida_json = {{"rows", to_json(rows)},
                   {"monotone", monotone},
                   {"final_residual", last},
                   {"pass", yosida_pass}};
  } else {
    yosida_json = {{"rows", json::array()}, {"pass", true}};
  }
  report["yosida"] = yosida_json;
  if (!yosida_pass) failures.push_back("potential-operator limit");

  bool dichotomy_pass = true;
  {
    Eigen::VectorXd ones = Eigen::VectorXd::Ones(model.size());
    json norms = json::array();
    for (double lambda : grid) {
      double norm = pi_norm(lambda * resolvent_apply(model, lambda, ones), model);
      norms.push_back({{"lambda", lambda}, {"norm", norm}});
      // the attainable accuracy at the grid floor is ~ε·Λ*/λ
      if (std::abs(norm - 1.0) > 1e-7) dichotomy_pass = false;
    }
    report["noncentered_dichotomy"] = {{"rows", norms}, {"pass", dichotomy_pass}};
  }
  if (!dichotomy_pass) failures.push_back("non-centered resolvent dichotomy");

  // Total-variation convergence of the kernel rows.
  {
    std::vector<double> t_grid;
    for (double factor : {0.1, 0.2, 0.4, 0.8, 1.6, 3.2, 6.4})
      t_grid.push_back(factor / gap);
    auto tv = tv_convergence_curve(model, t_grid);
    bool tv_monotone = true;
    for (const auto& per_state : tv)
      for (std::size_t j = 1; j < per_state.size(); ++j)
        if (per_state[j] > per_state[j - 1] + 1e-12) tv_monotone = false;
    report["tv"] = {{"t_grid", t_grid}, {"per_state", tv}, {"pass", tv_monotone}};
    if (!tv_monotone) failures.push_back("total-variation monotonicity");
  }

  report["pass"] = failures.empty();

  std::ostringstream csv;
  csv << "check,value,bound,pass\n";
  csv << "sigma2_range," << csv_number(range.sigma2) << ",,\n";
  if (model.reversible)
    csv << "sigma2_fractional,"
        << csv_number(report["sigma2_fractional"]["sigma2"].get<double>()) << ",,\n";
  csv << "resolvent_identity_max," << csv_number(worst_identity) << ","
      << csv_number(tol_identity) << ","
      << (worst_identity <= tol_identity ? "1" : "0") << "\n";
  csv << "sigma2_curve_final_rel_gap," << csv_number(final_rel_gap) << ",1e-06,"
      << (curve_pass ? "1" : "0") << "\n";

  write_outputs(cfg, "exact", report, csv.str());

  std::cout << "model " << rm.name << "  (m=" << model.size()
            << (model.reversible ? ", reversible" : ", non-reversible") << ")\n";
  std::cout << "sigma2 (range-inverse)     = " << csv_number(range.sigma2) << "\n";
  if (model.reversible)
    std::cout << "sigma2 (fractional-power)  = "
              << csv_number(report["sigma2_fractional"]["sigma2"].get<double>())
              << "\n";
  if (!failures.empty()) {
    for (const auto& name : failures)
      std::cout << "FAILED invariant: " << name << "\n";
    return 2;
  }
  std::cout << "all contracts hold\n";
  return 0;
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

int cmd_simulate(const RunConfig& cfg) {
  if (cfg.replicates < 100)
    throw ConfigError("simulate: need ≥ 100 replicates (got " +
                      std::to_string(cfg.replicates) + ")");
  if (cfg.t_points < 2) throw ConfigError("simulate: need ≥ 2 grid points");
  ResolvedModel rm = resolve_model(cfg.model);

  FcltExperiment experiment;
  experiment.model = rm.model;
  experiment.f = center(resolve_observable(cfg.f, rm), rm.model);
  experiment.n_list = cfg.n_list;
  experiment.replicates = cfg.replicates;
  experiment.seed = cfg.seed;
  experiment.schedule_exponent = cfg.schedule_exponent;
  experiment.schedule_c = cfg.schedule_c;
  experiment.threads = cfg.threads;
  experiment.t_grid.clear();
  for (int j = 0; j < cfg.t_points; ++j)
    experiment.t_grid.push_back(static_cast<double>(j) /
                                static_cast<double>(cfg.t_points - 1));
  experiment.validate();  // ConfigError on bad input

  std::vector<ReplicateStats> stats = run_experiment(experiment);
  const double sigma2 = stats.front().sigma2_ref;
  const double tol_identity = cfg.tol > 0.0 ? cfg.tol : 1e-10;

  std::optional<SpectralData> spectrum;
  if (rm.model.reversible) spectrum = decompose(rm.model);

  json per_n = json::array();
  std::ostringstream csv;
  csv << "n,lambda_n,var_I_T,sigma2_T,oracle_var,ks_stat,ks_p,median_sup_Lambda,"
         "mean_sup_Lambda_sq,envelope,max_identity_residual,verdict\n";
  bool all_pass = true;
  bool identity_ok = true;

  CollapseReport collapse = lambda_collapse_test(stats);

  for (const ReplicateStats& s : stats) {
    VarianceScalingVerdict scaling = variance_scaling_test(
        s, sigma2, spectrum ? &*spectrum : nullptr,
        spectrum ? &experiment.f : nullptr);
    bool id_ok = s.max_identity_residual <= tol_identity;
    // Normality is the n → ∞ claim: gate the KS p-value only at the deepest
    // rung of the ladder. Smaller n report it but may honestly fail it.
    bool deepest = s.n == stats.back().n;
    bool ks_ok = !deepest || !s.ks_pvalue_valid || s.ks_pvalue >= 1e-3;
    bool row_pass = id_ok && scaling.pass && ks_ok;
    identity_ok = identity_ok && id_ok;
    all_pass = all_pass && row_pass;

    json entry = to_json(s);
    entry["variance_scaling"] = to_json(scaling);
    entry["pass"] = row_pass;
    per_n.push_back(entry);

    csv << s.n << ',' << csv_number(s.lambda_n) << ','
        << csv_number(s.var_total.back()) << ','
        << csv_number(sigma2 * s.horizon_T) << ','
        << csv_number(s.oracle_variance) << ',' << csv_number(s.ks_statistic)
        << ',' << csv_number(s.ks_pvalue) << ','
        << csv_number(s.sup_resolvent_median) << ','
        << csv_number(s.mean_sup_sq) << ',' << csv_number(s.envelope_bound)
        << ',' << csv_number(s.max_identity_residual) << ','
        << (row_pass ? "pass" : "fail") << '\n';
  }
  if (stats.size() > 1) all_pass = all_pass && collapse.pass;

  json report = {{"model", {{"name", rm.name},
                            {"m", rm.model.size()},
                            {"reversible", rm.model.reversible}}},
                 {"sigma2", sigma2},
                 {"per_n", per_n},
                 {"collapse", to_json(collapse)},
                 {"pass", all_pass}};
  write_outputs(cfg, "simulate", report, csv.str());

  if (cfg.dump_replicates > 0) {
    fs::path dir = fs::path(cfg.out) / "replicates";
    fs::create_directories(dir);
    for (std::size_t ni = 0; ni < experiment.n_list.size(); ++ni) {
      int n = experiment.n_list[ni];
      double lambda_n =
          lambda_schedule(n, cfg.schedule_exponent, cfg.schedule_c);
      for (int r = 0; r < cfg.dump_replicates && r < cfg.replicates; ++r) {
        std::uint64_t stream =
            (static_cast<std::uint64_t>(ni) << 32) | static_cast<std::uint64_t>(r);
        TrajectorySample path =
            sample_path(rm.model, n * experiment.t_grid.back(), cfg.seed, stream);
        ScaledPaths sp = scaled_decomposition(path, rm.model, experiment.f, n,
                                              lambda_n, experiment.t_grid);
        write_text_file(dir / ("n" + std::to_string(n) + "_r" + std::to_string(r) +
                               ".csv"),
                        replicate_csv(sp));
      }
    }
  }

  std::vector<std::vector<std::string>> rows;
  for (const ReplicateStats& s : stats)
    rows.push_back({std::to_string(s.n), pretty_number(s.lambda_n),
                    pretty_number(s.var_total.back()),
                    pretty_number(s.oracle_variance), pretty_number(s.ks_pvalue),
                    pretty_number(s.sup_resolvent_median),
                    pretty_number(s.max_identity_residual)});
  std::cout << format_table({"n", "lambda_n", "var_I(T)", "oracle", "KS p",
                             "med sup|L|", "id resid"},
                            rows);
  std::cout << "sigma2 = " << pretty_number(sigma2) << ", verdict "
            << (all_pass ? "pass" : "fail") << "\n";

  if (!identity_ok) {
    std::cout << "FAILED invariant: pathwise decomposition identity\n";
    return 2;
  }
  return all_pass ? 0 : 2;
}

// ---------------------------------------------------------------------------
// verify
// ---------------------------------------------------------------------------

int cmd_verify(const RunConfig& cfg) {
  if (cfg.suite_models < 1 || cfg.suite_samples < 1)
    throw ConfigError("verify: suite sizes must be ≥ 1");
  const double tol_eq = cfg.tol > 0.0 ? cfg.tol : 1e-10;
  const double tol_identity = cfg.tol > 0.0 ? cfg.tol : 1e-9;
  const double tol_norm = cfg.tol > 0.0 ? cfg.tol : 1e-10;
  const double tol_bound = cfg.tol > 0.0 ? cfg.tol : 1e-12;
  const double tol_sigma = cfg.tol > 0.0 ? cfg.tol : 1e-9;
  const double tol_gap = cfg.tol > 0.0 ? cfg.tol : 1e-6;

  double max_eq = 0.0, max_norm = 0.0, max_id = 0.0, max_bound = 0.0;
  double max_sigma = 0.0, max_gap = 0.0;
  bool monotone_ok = true;

  RngStream rng(cfg.seed, 0x5EEDull);
  for (int k = 0; k < cfg.suite_models; ++k) {
    int m = 2 + static_cast<int>(rng.below(
                    static_cast<std::uint64_t>(std::max(1, cfg.suite_m_max - 1))));
    GeneratorModel model = build_random_reversible(
        m, cfg.connectivity, cfg.seed ^ (0xA001ull + static_cast<std::uint64_t>(k)));
    SpectralData spectrum = decompose(model);
    const double rate_scale = model.max_exit_rate();

    for (int s = 0; s < cfg.suite_samples; ++s) {
      Eigen::VectorXd raw(m);
      for (int i = 0; i < m; ++i) raw(i) = rng.uniform(-1.0, 1.0);
      double lambda = rate_scale * std::pow(10.0, rng.uniform(-2.0, 2.0));
      double mu = rate_scale * std::pow(10.0, rng.uniform(-2.0, 2.0));
      double norm_scale = std::max(1.0, pi_norm(raw, model));

      max_eq = std::max(max_eq, resolvent_equation_residual(model, lambda, raw) /
                                    norm_scale);
      OperatorNormBounds norms = operator_norm_bounds(spectrum, lambda);
      max_norm = std::max({max_norm, norms.lambda_resolvent - 1.0,
                           norms.generator_resolvent - 1.0});
      max_id = std::max(max_id,
                        resolvent_identity_residual(model, lambda, mu, raw) /
                            norm_scale);
      Observable f = center(raw, model);
      if (!f.degenerate) {
        auto [lhs, rhs] = sqrt_lambda_bound_check(spectrum, f, lambda);
        max_bound = std::max(max_bound, lhs - rhs);
      }
    }

    // Cross-formula σ² agreement and the λ↓0 limit on one centered sample.
    Eigen::VectorXd raw(m);
    for (int i = 0; i < m; ++i) raw(i) = rng.uniform(-1.0, 1.0);
    Observable f = center(raw, model);
    if (!f.degenerate) {
      VarianceReport range = sigma2_range_formula(model, f);
      VarianceReport frac = sigma2_fractional_formula(spectrum, f);
      max_sigma = std::max(max_sigma, std::abs(range.sigma2 - frac.sigma2) /
                                          std::max(1.0, range.sigma2));
      for (std::size_t i = 1; i < range.curve.size(); ++i)
        if (range.curve[i].second <
            range.curve[i - 1].second - 1e-12 * (1.0 + range.sigma2))
          monotone_ok = false;
      double s2_low = sigma2_lambda(model, f, 1e-8 * spectrum.gap());
      if (range.sigma2 > 0.0)
        max_gap = std::max(max_gap, (range.sigma2 - s2_low) / range.sigma2);
    }
  }

  struct CheckRow {
    const char* name;
    double value;
    double bound;
  };
  std::vector<CheckRow> checks = {
      {"resolvent_equation_residual", max_eq, tol_eq},
      {"operator_norm_excess", max_norm, tol_norm},
      {"resolvent_identity_residual", max_id, tol_identity},
      {"contraction_bound_excess", max_bound, tol_bound},
      {"sigma2_formula_disagreement", max_sigma, tol_sigma},
      {"sigma2_lambda_relative_gap", max_gap, tol_gap},
  };

  json rows = json::array();
  std::ostringstream csv;
  csv << "check,max_value,bound,pass\n";
  bool pass = monotone_ok;
  std::vector<std::vector<std::string>> table;
  for (const auto& c : checks) {
    bool ok = c.value <= c.bound;
    pass = pass && ok;
    rows.push_back({{"check", c.name},
                    {"max_value", c.value},
                    {"bound", c.bound},
                    {"pass", ok}});
    csv << c.name << ',' << csv_number(c.value) << ',' << csv_number(c.bound)
        << ',' << (ok ? "1" : "0") << '\n';
    table.push_back({c.name, pretty_number(c.value), pretty_number(c.bound),
                     ok ? "pass" : "FAIL"});
  }
  csv << "sigma2_lambda_monotone,," << ',' << (monotone_ok ? "1" : "0") << '\n';

  json report = {{"suite",
                  {{"models", cfg.suite_models},
                   {"samples_per_model", cfg.suite_samples},
                   {"m_max", cfg.suite_m_max},
                   {"connectivity", cfg.connectivity}}},
                 {"checks", rows},
                 {"sigma2_lambda_monotone", monotone_ok},
                 {"pass", pass}};
  write_outputs(cfg, "verify", report, csv.str());

  std::cout << format_table({"check", "max value", "bound", "verdict"}, table);
  std::cout << "sigma2_lambda monotone: " << (monotone_ok ? "pass" : "FAIL")
            << "\n";
  return pass ? 0 : 2;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"Exact diffusion coefficients and FCLT verification for "
               "finite-state Markov chains"};
  app.require_subcommand(1);

  RunConfig cfg;
  std::string config_path;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "JSON config file (flat keys)");
    sub->add_option("--model", cfg.model,
                    "builtin (two-state, birth-death:m, random-reversible:m:seed, "
                    "cycle:m) or model file path");
    sub->add_option("--f", cfg.f,
                    "builtin (parity, first-coordinate, linear, from-model) or "
                    "observable file path");
    sub->add_option("--seed", cfg.seed, "RNG seed");
    sub->add_option("--replicates", cfg.replicates, "replicates per n");
    sub->add_option("--n", cfg.n_list, "n ladder")->delimiter(',');
    sub->add_option("--out", cfg.out, "output directory");
    sub->add_option("--tol", cfg.tol, "tolerance override (0 = defaults)");
    sub->add_option("--threads", cfg.threads, "worker threads (0 = hardware)");
  };

  CLI::App* exact = app.add_subcommand(
      "exact", "closed-form σ², operator bounds, potential limits, TV curve");
  add_common(exact);

  CLI::App* simulate = app.add_subcommand(
      "simulate", "replicate sweep over the n ladder with the λ_n schedule");
  add_common(simulate);
  simulate->add_option("--schedule-exponent", cfg.schedule_exponent,
                       "λ_n = c·n^{-exponent}, exponent > 1");
  simulate->add_option("--schedule-c", cfg.schedule_c, "schedule constant c");
  simulate->add_option("--t-points", cfg.t_points, "grid points on [0,1]");
  simulate->add_option("--dump-replicates", cfg.dump_replicates,
                       "write the first K replicate CSVs per n");

  CLI::App* verify = app.add_subcommand(
      "verify", "randomized operator property suite on random reversible models");
  add_common(verify);
  verify->add_option("--suite-models", cfg.suite_models, "number of random models");
  verify->add_option("--suite-samples", cfg.suite_samples,
                     "random (f,λ,μ) samples per model");
  verify->add_option("--suite-m-max", cfg.suite_m_max, "largest state count");
  verify->add_option("--connectivity", cfg.connectivity, "edge probability");

  // Parse in two passes so explicit flags override config-file values.
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }
  try {
    if (!config_path.empty()) {
      apply_config_file(cfg, config_path);
      app.clear();
      app.parse(argc, argv);
    }
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  }

  try {
    if (exact->parsed()) return cmd_exact(cfg);
    if (simulate->parsed()) return cmd_simulate(cfg);
    if (verify->parsed()) return cmd_verify(cfg);
    std::cerr << "no subcommand\n";
    return 1;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const std::invalid_argument& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const Error& e) {
    std::cerr << "contract violation: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
