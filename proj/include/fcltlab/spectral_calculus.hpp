// Copyright (c) the fcltlab contributors.
// SPDX-License-Identifier: Apache-2.0
//
// Operator calculus on the orthogonal complement of the constants in the
// π-weighted inner product: resolvents by direct shifted solves, spectral
// decomposition of reversible generators, fractional powers, potential
// (λ↓0) limits, the two diffusion-coefficient formulas, and the semigroup
// by uniformization. Everything here is a pure function of immutable
// inputs and safe to call concurrently.

#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "fcltlab/chain_model.hpp"
#include "fcltlab/errors.hpp"

namespace fcltlab {

/// ⟨f,g⟩_π = Σ_i π_i f_i g_i
inline double pi_inner(const Eigen::VectorXd& f, const Eigen::VectorXd& g,
                       const GeneratorModel& model) {
  if (f.size() != model.size() || g.size() != model.size())
    throw std::invalid_argument("pi_inner: vector length does not match model");
  return (model.pi.array() * f.array() * g.array()).sum();
}

inline double pi_norm(const Eigen::VectorXd& f, const GeneratorModel& model) {
  return std::sqrt(std::max(0.0, pi_inner(f, f, model)));
}

namespace detail {

inline void require_positive_lambda(double lambda, const char* where) {
  if (!(lambda > 0.0))
    throw std::invalid_argument(std::string(where) + ": λ must be > 0");
}

/// Numeric centering test: |⟨f,1⟩_π| relative to max(1, ‖f‖_π).
inline bool is_pi_centered(const Eigen::VectorXd& f, const GeneratorModel& model,
                           double tol = 1e-10) {
  return std::abs(model.pi.dot(f)) <= tol * std::max(1.0, pi_norm(f, model));
}

inline void require_centered(const Eigen::VectorXd& f, const GeneratorModel& model,
                             const char* where) {
  if (!is_pi_centered(f, model))
    throw NotCentered(std::string(where) + ": input has a constant component");
}

} // namespace detail

// ---------------------------------------------------------------------------
// Resolvents R_λ = (λ − Q)⁻¹ by direct dense solve (reversible or not)
// ---------------------------------------------------------------------------

/// Solves (λI − Q)x = f with one step of iterative refinement. The residual
/// is checked against the backward-stable bound; a violation means the model
/// is malformed, since the shifted system is provably invertible for λ > 0.
inline Eigen::VectorXd resolvent_apply(const GeneratorModel& model, double lambda,
                                       const Eigen::VectorXd& f) {
  detail::require_positive_lambda(lambda, "resolvent_apply");
  if (f.size() != model.size())
    throw std::invalid_argument("resolvent_apply: vector length mismatch");
  const Eigen::Index m = model.size();
  Eigen::MatrixXd a = -model.Q;
  a.diagonal().array() += lambda;
  Eigen::PartialPivLU<Eigen::MatrixXd> lu(a);
  Eigen::VectorXd x = lu.solve(f);
  Eigen::VectorXd r = f - a * x;
  x += lu.solve(r);
  r = f - a * x;
  const double a_scale = a.cwiseAbs().rowwise().sum().maxCoeff();
  const double bound = 1e-10 * (f.norm() + a_scale * x.norm() + 1e-300);
  if (!x.allFinite() || r.norm() > bound)
    throw SingularSolve("resolvent_apply: residual " + std::to_string(r.norm()) +
                        " at λ=" + std::to_string(lambda) + " (m=" +
                        std::to_string(m) + ")");
  return x;
}

/// Residual of the resolvent equation f = λR_λf − QR_λf in the π-norm.
/// Contract: ≤ 1e-10 ‖f‖_π.
inline double resolvent_equation_residual(const GeneratorModel& model, double lambda,
                                          const Eigen::VectorXd& f) {
  Eigen::VectorXd x = resolvent_apply(model, lambda, f);
  Eigen::VectorXd defect = lambda * x - model.Q * x - f;
  return pi_norm(defect, model);
}

/// Residual of the resolvent identity R_λ − R_μ = (μ−λ) R_λ R_μ in the
/// π-norm. Contract: ≤ 1e-9 ‖f‖_π.
inline double resolvent_identity_residual(const GeneratorModel& model, double lambda,
                                          double mu, const Eigen::VectorXd& f) {
  detail::require_positive_lambda(lambda, "resolvent_identity_residual");
  detail::require_positive_lambda(mu, "resolvent_identity_residual");
  Eigen::VectorXd rl = resolvent_apply(model, lambda, f);
  Eigen::VectorXd rm = resolvent_apply(model, mu, f);
  Eigen::VectorXd rlm = resolvent_apply(model, lambda, rm);
  Eigen::VectorXd defect = rl - rm - (mu - lambda) * rlm;
  return pi_norm(defect, model);
}

/// Solves (−Q)g = f on the complement of the constants with the gauge
/// ⟨g,1⟩_π = 0, via the stacked consistent least-squares system. This is
/// the potential operator: g = lim_{λ↓0} R_λ f for centered f.
inline Eigen::VectorXd potential_apply(const GeneratorModel& model,
                                       const Eigen::VectorXd& f) {
  detail::require_centered(f, model, "potential_apply");
  const Eigen::Index m = model.size();
  Eigen::MatrixXd a(m + 1, m);
  a.topRows(m) = -model.Q;
  a.row(m) = model.pi.transpose();
  Eigen::VectorXd b(m + 1);
  b.head(m) = f;
  b(m) = 0.0;
  Eigen::VectorXd g = a.colPivHouseholderQr().solve(b);
  Eigen::VectorXd r = b - a * g;
  if (!g.allFinite() || r.norm() > 1e-8 * std::max(1.0, f.norm()))
    throw SingularSolve("potential_apply: constrained solve residual " +
                        std::to_string(r.norm()));
  return g;
}

// ---------------------------------------------------------------------------
// Spectral decomposition of reversible generators
// ---------------------------------------------------------------------------

/// Eigensystem of a reversible generator in the π-weighted inner product:
/// eigenvalues 0 = μ_1 > μ_2 ≥ ... (descending) with e_1 = 1 and the e_k
/// π-orthonormal. Obtained from the symmetric similarity
/// D_π^{1/2} Q D_π^{-1/2}, so realness and orthogonality hold by
/// construction rather than post-hoc.
struct SpectralData {
  Eigen::VectorXd eigenvalues;   // descending; eigenvalues(0) == 0 exactly
  Eigen::MatrixXd eigenvectors;  // column k is e_k; column 0 is the ones vector
  GeneratorModel model;          // the decomposed model (value copy)

  Eigen::Index size() const { return eigenvalues.size(); }

  /// s_k = −μ_k ≥ 0 (s_0 = 0).
  Eigen::VectorXd rates() const { return -eigenvalues; }

  /// Smallest positive rate s_2 (the spectral gap).
  double gap() const { return -eigenvalues(1); }

  double max_rate() const { return -eigenvalues(size() - 1); }

  /// Mode coefficients c_k = ⟨f, e_k⟩_π.
  Eigen::VectorXd coefficients(const Eigen::VectorXd& f) const {
    return eigenvectors.transpose() * (model.pi.array() * f.array()).matrix();
  }
};

inline SpectralData decompose(const GeneratorModel& model) {
  if (!model.reversible)
    throw NotReversible("decompose: model fails detailed balance");
  const Eigen::Index m = model.size();
  Eigen::ArrayXd sqrt_pi = model.pi.array().sqrt();
  Eigen::MatrixXd s(m, m);
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index j = 0; j < m; ++j)
      s(i, j) = sqrt_pi(i) * model.Q(i, j) / sqrt_pi(j);
  s = 0.5 * (s + s.transpose()).eval();

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(s);
  if (solver.info() != Eigen::Success)
    throw SpectralFailure("decompose: symmetric eigensolver did not converge");

  // Eigen returns ascending order; flip to descending so the null mode leads.
  SpectralData out;
  out.model = model;
  out.eigenvalues = solver.eigenvalues().reverse();
  out.eigenvectors.resize(m, m);
  for (Eigen::Index k = 0; k < m; ++k) {
    Eigen::VectorXd e = solver.eigenvectors().col(m - 1 - k).array() / sqrt_pi;
    // Deterministic sign: largest-magnitude entry positive.
    Eigen::Index imax = 0;
    e.cwiseAbs().maxCoeff(&imax);
    if (e(imax) < 0.0) e = -e;
    out.eigenvectors.col(k) = e;
  }

  const double rate_scale = std::max(1.0, model.Q.cwiseAbs().maxCoeff());
  if (std::abs(out.eigenvalues(0)) > 1e-8 * rate_scale)
    throw SpectralFailure("decompose: leading eigenvalue " +
                          std::to_string(out.eigenvalues(0)) + " is not 0");
  if (m > 1 && !(out.eigenvalues(1) < 0.0))
    throw SpectralFailure("decompose: zero eigenvalue is not simple");
  // The null mode is known exactly; pin it.
  out.eigenvalues(0) = 0.0;
  out.eigenvectors.col(0).setOnes();

  Eigen::MatrixXd gram = out.eigenvectors.transpose() *
                         model.pi.asDiagonal() * out.eigenvectors;
  gram.diagonal().array() -= 1.0;
  if (gram.cwiseAbs().maxCoeff() > 1e-10)
    throw SpectralFailure("decompose: eigenvectors are not π-orthonormal");
  return out;
}

// ---------------------------------------------------------------------------
// Operator-norm bounds for λR_λ and QR_λ in the π-weighted norm
// ---------------------------------------------------------------------------

struct OperatorNormBounds {
  double lambda_resolvent;     // ‖λR_λ‖_π,op
  double generator_resolvent;  // ‖QR_λ‖_π,op
};

/// Spectral route: max_k λ/(λ+s_k) and max_k s_k/(λ+s_k).
inline OperatorNormBounds operator_norm_bounds(const SpectralData& spectrum,
                                               double lambda) {
  detail::require_positive_lambda(lambda, "operator_norm_bounds");
  double a = 0.0, b = 0.0;
  for (Eigen::Index k = 0; k < spectrum.size(); ++k) {
    double s = -spectrum.eigenvalues(k);
    a = std::max(a, lambda / (lambda + s));
    b = std::max(b, s / (lambda + s));
  }
  return {a, b};
}

/// Model route: spectral formulas when reversible; otherwise the largest
/// singular value of the π-symmetrized operator, computed blockwise. Both
/// the constants and their π-orthogonal complement are invariant subspaces
/// of R_λ for any ergodic generator, and λR_λ is exactly the identity on
/// constants, so the norm is max(1, restricted part). Restricting first
/// keeps the solve well conditioned at tiny λ, where the full inverse
/// carries a 1/λ null-direction blowup.
inline OperatorNormBounds operator_norm_bounds(const GeneratorModel& model,
                                               double lambda) {
  detail::require_positive_lambda(lambda, "operator_norm_bounds");
  if (model.reversible) return operator_norm_bounds(decompose(model), lambda);
  const Eigen::Index m = model.size();
  Eigen::VectorXd u = model.pi.array().sqrt();  // unit vector in ℓ²

  // Orthonormal basis of u-perp (the weighted image of the centered space).
  Eigen::MatrixXd u_col = u;
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(u_col);
  Eigen::MatrixXd full = qr.householderQ();
  Eigen::MatrixXd basis = full.rightCols(m - 1);

  // Centered-coordinate representatives and the shifted solve.
  Eigen::MatrixXd c = basis.array().colwise() / u.array();
  Eigen::MatrixXd a = -model.Q;
  a.diagonal().array() += lambda;
  Eigen::PartialPivLU<Eigen::MatrixXd> lu(a);
  Eigen::MatrixXd x = lu.solve(c);
  x += lu.solve(c - a * x);

  Eigen::MatrixXd z_lambda = (lambda * x).array().colwise() * u.array();
  Eigen::MatrixXd z_gen = (model.Q * x).array().colwise() * u.array();
  auto restricted_norm = [&](const Eigen::MatrixXd& z) {
    Eigen::MatrixXd w = basis.transpose() * z;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(w.transpose() * w);
    if (solver.info() != Eigen::Success)
      throw SpectralFailure("operator_norm_bounds: eigensolver failed");
    return std::sqrt(std::max(0.0, solver.eigenvalues().maxCoeff()));
  };
  return {std::max(1.0, restricted_norm(z_lambda)), restricted_norm(z_gen)};
}

// ---------------------------------------------------------------------------
// Fractional powers (−Q)^α on the complement of the constants
// ---------------------------------------------------------------------------

/// Applies Σ_{k≥2} s_k^α ⟨f,e_k⟩_π e_k. The null mode is annihilated for
/// α > 0 and must be absent for α < 0 (domain condition).
inline Eigen::VectorXd fractional_power_apply(const SpectralData& spectrum,
                                              double alpha,
                                              const Eigen::VectorXd& f) {
  if (f.size() != spectrum.size())
    throw std::invalid_argument("fractional_power_apply: vector length mismatch");
  Eigen::VectorXd c = spectrum.coefficients(f);
  if (alpha < 0.0) {
    double norm = pi_norm(f, spectrum.model);
    if (std::abs(c(0)) > 1e-10 * std::max(1.0, norm))
      throw NotCentered("fractional_power_apply: f is outside the domain of a "
                        "negative power (constant component " +
                        std::to_string(c(0)) + ")");
  }
  Eigen::VectorXd out = Eigen::VectorXd::Zero(f.size());
  for (Eigen::Index k = 1; k < spectrum.size(); ++k) {
    double s = -spectrum.eigenvalues(k);
    if (!(s > 0.0))
      throw SpectralFailure("fractional_power_apply: nonpositive rate off the "
                            "null mode");
    out += std::pow(s, alpha) * c(k) * spectrum.eigenvectors.col(k);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Diffusion coefficient σ²(f) and the σ²_λ approximation curve
// ---------------------------------------------------------------------------

struct VarianceReport {
  double sigma2 = 0.0;
  // (λ, σ²_λ) with λ descending along the default geometric grid.
  std::vector<std::pair<double, double>> curve;
  std::string formula;  // "range-inverse" or "fractional-power"
};

/// Default λ-grid for the λ↓0 curves: s_min · 10^{-j/2}, j = 0..16.
inline std::vector<double> default_lambda_grid(double s_min) {
  std::vector<double> grid;
  grid.reserve(17);
  for (int j = 0; j <= 16; ++j)
    grid.push_back(s_min * std::pow(10.0, -0.5 * j));
  return grid;
}

/// Additive reversibilization: D_π⁻¹ (D_πQ + (D_πQ)ᵀ)/2. Shares π with the
/// input and is reversible by construction; its gap sets the λ-grid scale
/// for non-reversible models.
inline GeneratorModel reversibilization(const GeneratorModel& model) {
  const Eigen::Index m = model.size();
  Eigen::MatrixXd a = model.pi.asDiagonal() * model.Q;
  a = 0.5 * (a + a.transpose()).eval();
  Eigen::MatrixXd q(m, m);
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index j = 0; j < m; ++j)
      q(i, j) = a(i, j) / model.pi(i);
  for (Eigen::Index i = 0; i < m; ++i) {
    q(i, i) = 0.0;
    q(i, i) = -q.row(i).sum();
  }
  GeneratorModel out;
  out.states = model.states;
  out.Q = std::move(q);
  out.pi = model.pi;
  out.reversible = true;
  out.ergodic = model.ergodic;
  return out;
}

/// Smallest positive rate of the (reversibilized) generator.
inline double spectral_gap(const GeneratorModel& model) {
  if (model.reversible) return decompose(model).gap();
  return decompose(reversibilization(model)).gap();
}

/// σ²_λ = 2⟨−QR_λf, R_λf⟩_π by direct solve (any ergodic model).
inline double sigma2_lambda(const GeneratorModel& model, const Observable& f,
                            double lambda) {
  detail::require_positive_lambda(lambda, "sigma2_lambda");
  detail::require_centered(f.values, model, "sigma2_lambda");
  Eigen::VectorXd x = resolvent_apply(model, lambda, f.values);
  return -2.0 * pi_inner(model.Q * x, x, model);
}

/// σ²_λ = 2 Σ_{k≥2} s_k c_k² / (λ+s_k)², the spectral form of the same
/// quantity for reversible models.
inline double sigma2_lambda_spectral(const SpectralData& spectrum,
                                     const Observable& f, double lambda) {
  detail::require_positive_lambda(lambda, "sigma2_lambda_spectral");
  detail::require_centered(f.values, spectrum.model, "sigma2_lambda_spectral");
  Eigen::VectorXd c = spectrum.coefficients(f.values);
  double acc = 0.0;
  for (Eigen::Index k = 1; k < spectrum.size(); ++k) {
    double s = -spectrum.eigenvalues(k);
    double w = c(k) / (lambda + s);
    acc += s * w * w;
  }
  return 2.0 * acc;
}

/// Empty string when the report honors the curve contracts (σ²_λ
/// nondecreasing as λ decreases, each value ≤ σ²); otherwise a diagnostic.
/// Only meaningful for reversible models.
inline std::string variance_report_violation(const VarianceReport& report) {
  const double slack = 1e-12 * (1.0 + std::abs(report.sigma2));
  for (std::size_t i = 0; i + 1 < report.curve.size(); ++i) {
    if (report.curve[i + 1].first >= report.curve[i].first)
      return "curve λ values are not strictly decreasing";
    if (report.curve[i + 1].second < report.curve[i].second - slack)
      return "σ²_λ decreased from λ=" + std::to_string(report.curve[i].first) +
             " to λ=" + std::to_string(report.curve[i + 1].first);
  }
  for (const auto& [lambda, value] : report.curve)
    if (value > report.sigma2 + slack)
      return "σ²_λ at λ=" + std::to_string(lambda) + " exceeds σ²";
  return {};
}

/// σ²(f) = 2⟨(−Q)⁻¹f, f⟩_π via the constrained potential solve, with the
/// quadratic form −2⟨g,Qg⟩_π recomputed as an independent cross-check.
/// Works for non-reversible models; the curve contract is enforced only in
/// the reversible case.
inline VarianceReport sigma2_range_formula(const GeneratorModel& model,
                                           const Observable& f) {
  detail::require_centered(f.values, model, "sigma2_range_formula");
  Eigen::VectorXd g = potential_apply(model, f.values);
  const double form_a = 2.0 * pi_inner(g, f.values, model);
  Eigen::VectorXd h = -g;  // Qh = f
  const double form_b = -2.0 * pi_inner(h, model.Q * h, model);
  if (std::abs(form_a - form_b) > 1e-9 * std::max(1.0, std::abs(form_a)))
    throw SingularSolve("sigma2_range_formula: the two forms disagree (" +
                        std::to_string(form_a) + " vs " + std::to_string(form_b) + ")");
  VarianceReport report;
  report.sigma2 = form_a;
  report.formula = "range-inverse";
  for (double lambda : default_lambda_grid(spectral_gap(model)))
    report.curve.emplace_back(lambda, sigma2_lambda(model, f, lambda));
  if (model.reversible) {
    std::string violation = variance_report_violation(report);
    if (!violation.empty())
      throw SpectralFailure("sigma2_range_formula: " + violation);
  }
  return report;
}

/// σ²(f) = 2 Σ_{k≥2} c_k²/s_k = 2⟨(−Q)^{-1/2}f, (−Q)^{-1/2}f⟩_π.
inline VarianceReport sigma2_fractional_formula(const SpectralData& spectrum,
                                                const Observable& f) {
  detail::require_centered(f.values, spectrum.model, "sigma2_fractional_formula");
  Eigen::VectorXd c = spectrum.coefficients(f.values);
  double acc = 0.0;
  for (Eigen::Index k = 1; k < spectrum.size(); ++k)
    acc += c(k) * c(k) / (-spectrum.eigenvalues(k));
  VarianceReport report;
  report.sigma2 = 2.0 * acc;
  report.formula = "fractional-power";
  for (double lambda : default_lambda_grid(spectrum.gap()))
    report.curve.emplace_back(lambda, sigma2_lambda_spectral(spectrum, f, lambda));
  std::string violation = variance_report_violation(report);
  if (!violation.empty())
    throw SpectralFailure("sigma2_fractional_formula: " + violation);
  return report;
}

/// The two sides of the key contraction bound
/// √λ ‖R_λf‖_π ≤ ½‖(−Q)^{-1/2}f‖_π, evaluated spectrally.
inline std::pair<double, double> sqrt_lambda_bound_check(const SpectralData& spectrum,
                                                         const Observable& f,
                                                         double lambda) {
  detail::require_positive_lambda(lambda, "sqrt_lambda_bound_check");
  Eigen::VectorXd c = spectrum.coefficients(f.values);
  const double norm = pi_norm(f.values, spectrum.model);
  if (std::abs(c(0)) > 1e-10 * std::max(1.0, norm))
    throw NotCentered("sqrt_lambda_bound_check: f has a constant component");
  double resolvent_sq = 0.0, half_power_sq = 0.0;
  for (Eigen::Index k = 1; k < spectrum.size(); ++k) {
    double s = -spectrum.eigenvalues(k);
    double w = c(k) / (lambda + s);
    resolvent_sq += w * w;
    half_power_sq += c(k) * c(k) / s;
  }
  return {std::sqrt(lambda) * std::sqrt(resolvent_sq),
          0.5 * std::sqrt(half_power_sq)};
}

// ---------------------------------------------------------------------------
// Potential-operator (λ↓0) limits
// ---------------------------------------------------------------------------

struct YosidaRow {
  double lambda;
  double residual;              // ‖R_λ g − (−Q)⁻¹g‖_π
  double scaled_resolvent_norm; // ‖λ R_λ g‖_π
};

/// Tabulates the convergence R_λg → (−Q)⁻¹g along a decreasing λ sequence,
/// together with ‖λR_λg‖_π → 0. Requires centered g: off the complement of
/// the constants λR_λ1 = 1 for every λ and no limit exists.
inline std::vector<YosidaRow> yosida_potential_residual(
    const GeneratorModel& model, const Eigen::VectorXd& g,
    const std::vector<double>& lambda_sequence) {
  if (lambda_sequence.empty())
    throw std::invalid_argument("yosida_potential_residual: empty λ sequence");
  for (std::size_t i = 0; i < lambda_sequence.size(); ++i) {
    if (!(lambda_sequence[i] > 0.0))
      throw std::invalid_argument("yosida_potential_residual: λ must be > 0");
    if (i > 0 && !(lambda_sequence[i] < lambda_sequence[i - 1]))
      throw std::invalid_argument(
          "yosida_potential_residual: λ sequence must be strictly decreasing");
  }
  detail::require_centered(g, model, "yosida_potential_residual");
  Eigen::VectorXd p = potential_apply(model, g);
  std::vector<YosidaRow> rows;
  rows.reserve(lambda_sequence.size());
  for (double lambda : lambda_sequence) {
    Eigen::VectorXd x = resolvent_apply(model, lambda, g);
    rows.push_back({lambda, pi_norm(x - p, model), pi_norm(lambda * x, model)});
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Semigroup e^{tQ} by uniformization and total-variation convergence
// ---------------------------------------------------------------------------

namespace detail {

/// Poisson-weighted accumulation of jump-matrix powers applied to a vector,
/// truncated when the captured probability mass reaches 1 − tol. The result
/// is renormalized by the captured mass, which preserves conservativity
/// (constants map to constants exactly up to rounding).
inline Eigen::VectorXd uniformized_step(const Eigen::MatrixXd& p, double rho,
                                        const Eigen::VectorXd& f, double tol) {
  double w = std::exp(-rho);
  double cum = w;
  Eigen::VectorXd term = f;
  Eigen::VectorXd acc = w * f;
  const double k_max = rho + 12.0 * std::sqrt(rho + 1.0) + 60.0;
  for (double k = 1.0; cum < 1.0 - tol && k <= k_max; k += 1.0) {
    term = p * term;
    w *= rho / k;
    cum += w;
    acc += w * term;
  }
  return acc / cum;
}

inline Eigen::MatrixXd uniformized_kernel(const Eigen::MatrixXd& p, double rho,
                                          double tol) {
  const Eigen::Index m = p.rows();
  double w = std::exp(-rho);
  double cum = w;
  Eigen::MatrixXd pow = Eigen::MatrixXd::Identity(m, m);
  Eigen::MatrixXd acc = w * pow;
  const double k_max = rho + 12.0 * std::sqrt(rho + 1.0) + 60.0;
  for (double k = 1.0; cum < 1.0 - tol && k <= k_max; k += 1.0) {
    pow = (pow * p).eval();
    w *= rho / k;
    cum += w;
    acc += w * pow;
  }
  return acc / cum;
}

// Largest per-step uniformization rate·time product; beyond this the Poisson
// head weight e^{-ρ} risks underflow, so t is split into equal substeps.
constexpr double kMaxStepRho = 500.0;

} // namespace detail

/// e^{tQ} f by uniformization with rate Λ* = max_i(−Q_ii) and Poisson tail
/// truncation at 1e-12 (split into substeps when Λ*t is large). Positivity
/// preserving and exact on constants.
inline Eigen::VectorXd semigroup_apply(const GeneratorModel& model, double t,
                                       const Eigen::VectorXd& f) {
  if (t < 0.0) throw std::invalid_argument("semigroup_apply: t must be ≥ 0");
  if (f.size() != model.size())
    throw std::invalid_argument("semigroup_apply: vector length mismatch");
  if (t == 0.0) return f;
  const double rate = model.max_exit_rate();
  if (!(rate > 0.0)) return f;
  const int n_steps =
      std::max(1, static_cast<int>(std::ceil(rate * t / detail::kMaxStepRho)));
  const double rho = rate * (t / n_steps);
  const double tol = 1e-12 / n_steps;
  Eigen::MatrixXd p = Eigen::MatrixXd::Identity(model.size(), model.size()) +
                      model.Q / rate;
  Eigen::VectorXd v = f;
  for (int step = 0; step < n_steps; ++step)
    v = detail::uniformized_step(p, rho, v, tol);
  return v;
}

/// Spectral route for reversible models: Σ_k e^{μ_k t} c_k e_k.
inline Eigen::VectorXd semigroup_apply_spectral(const SpectralData& spectrum,
                                                double t,
                                                const Eigen::VectorXd& f) {
  if (t < 0.0) throw std::invalid_argument("semigroup_apply_spectral: t must be ≥ 0");
  Eigen::VectorXd c = spectrum.coefficients(f);
  Eigen::VectorXd out = Eigen::VectorXd::Zero(f.size());
  for (Eigen::Index k = 0; k < spectrum.size(); ++k)
    out += std::exp(spectrum.eigenvalues(k) * t) * c(k) * spectrum.eigenvectors.col(k);
  return out;
}

/// Full transition kernel p(t;·,·) = e^{tQ} as a stochastic matrix.
inline Eigen::MatrixXd transition_kernel(const GeneratorModel& model, double t) {
  if (t < 0.0) throw std::invalid_argument("transition_kernel: t must be ≥ 0");
  const Eigen::Index m = model.size();
  if (t == 0.0) return Eigen::MatrixXd::Identity(m, m);
  const double rate = model.max_exit_rate();
  if (!(rate > 0.0)) return Eigen::MatrixXd::Identity(m, m);
  const int n_steps =
      std::max(1, static_cast<int>(std::ceil(rate * t / detail::kMaxStepRho)));
  const double rho = rate * (t / n_steps);
  const double tol = 1e-12 / n_steps;
  Eigen::MatrixXd p = Eigen::MatrixXd::Identity(m, m) + model.Q / rate;
  Eigen::MatrixXd step = detail::uniformized_kernel(p, rho, tol);
  Eigen::MatrixXd kernel = step;
  for (int i = 1; i < n_steps; ++i) kernel = (kernel * step).eval();
  return kernel;
}

/// ½ Σ_y |p(t;x,y) − π_y| for every state x and every t in the grid.
/// Returns one row per state. Nonincreasing in t and → 0 for ergodic models.
inline std::vector<std::vector<double>> tv_convergence_curve(
    const GeneratorModel& model, const std::vector<double>& t_grid) {
  if (!model.ergodic)
    throw NotErgodic("tv_convergence_curve: model is not ergodic");
  const Eigen::Index m = model.size();
  std::vector<std::vector<double>> curves(
      static_cast<std::size_t>(m), std::vector<double>(t_grid.size(), 0.0));
  for (std::size_t j = 0; j < t_grid.size(); ++j) {
    Eigen::MatrixXd kernel = transition_kernel(model, t_grid[j]);
    for (Eigen::Index x = 0; x < m; ++x)
      curves[static_cast<std::size_t>(x)][j] =
          0.5 * (kernel.row(x).transpose() - model.pi).cwiseAbs().sum();
  }
  return curves;
}

} // namespace fcltlab
