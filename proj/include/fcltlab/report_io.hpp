// Copyright (c) the fcltlab contributors.
// SPDX-License-Identifier: Apache-2.0
//
// Serialization of reports: JSON for machines, aligned columns for humans,
// CSV for plotting. Nothing here writes wall-clock time, so two runs with
// the same configuration and seed produce byte-identical files.

#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "fcltlab/errors.hpp"
#include "fcltlab/fclt_verifier.hpp"
#include "fcltlab/path_simulator.hpp"
#include "fcltlab/spectral_calculus.hpp"
#include "fcltlab/version.hpp"

namespace fcltlab {

inline std::uint64_t fnv1a64(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

/// Shortest-round-trip decimal for CSV cells.
inline std::string csv_number(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline nlohmann::json to_json(const VarianceReport& report) {
  nlohmann::json curve = nlohmann::json::array();
  for (const auto& [lambda, value] : report.curve)
    curve.push_back({lambda, value});
  return {{"sigma2", report.sigma2}, {"curve", curve}, {"formula", report.formula}};
}

inline nlohmann::json to_json(const std::vector<YosidaRow>& rows) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& r : rows)
    out.push_back({{"lambda", r.lambda},
                   {"residual", r.residual},
                   {"scaled_resolvent_norm", r.scaled_resolvent_norm}});
  return out;
}

inline nlohmann::json to_json(const ReplicateStats& s) {
  return {{"n", s.n},
          {"lambda_n", s.lambda_n},
          {"replicates", s.replicates},
          {"T", s.horizon_T},
          {"t_grid", s.t_grid},
          {"mean_I", s.mean_total},
          {"var_I", s.var_total},
          {"sup_Lambda_q25", s.sup_resolvent_q25},
          {"sup_Lambda_median", s.sup_resolvent_median},
          {"sup_Lambda_q75", s.sup_resolvent_q75},
          {"mean_sup_Lambda_sq", s.mean_sup_sq},
          {"se_sup_Lambda_sq", s.se_sup_sq},
          {"envelope_bound", s.envelope_bound},
          {"ks_statistic", s.ks_statistic},
          {"ks_pvalue", s.ks_pvalue},
          {"ks_pvalue_valid", s.ks_pvalue_valid},
          {"max_identity_residual", s.max_identity_residual},
          {"oracle_variance", s.oracle_variance},
          {"sigma2", s.sigma2_ref}};
}

inline nlohmann::json to_json(const VarianceScalingVerdict& v) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : v.rows)
    rows.push_back({{"t", r.t},
                    {"var", r.empirical},
                    {"sigma2_t", r.sigma2_t},
                    {"oracle", r.oracle},
                    {"band", r.band},
                    {"pass_sigma2_band", r.pass_sigma2_band},
                    {"pass_oracle_band", r.pass_oracle_band}});
  return {{"rows", rows}, {"pass", v.pass}};
}

inline nlohmann::json to_json(const CollapseReport& c) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : c.rows)
    rows.push_back({{"n", r.n},
                    {"lambda_n", r.lambda_n},
                    {"median_sup_Lambda", r.median_sup},
                    {"mean_sup_Lambda_sq", r.mean_sup_sq},
                    {"se_sup_Lambda_sq", r.se_sup_sq},
                    {"envelope", r.envelope},
                    {"envelope_pass", r.envelope_pass}});
  return {{"rows", rows},
          {"medians_decreasing", c.medians_decreasing},
          {"pass", c.pass}};
}

inline nlohmann::json to_json(const DiagonalTrace& t) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : t.rows)
    rows.push_back({{"n", r.n},
                    {"lambda_n", r.lambda_n},
                    {"median_sup_Lambda", r.median_sup_resolvent},
                    {"cauchy_bound", r.cauchy_bound},
                    {"sigma2_gap", r.sigma2_gap},
                    {"ks_A", r.ks_range_term}});
  return {{"epsilon", t.epsilon},
          {"sigma2", t.sigma2},
          {"ell", t.ell},
          {"lambda_ell", t.lambda_ell},
          {"sigma2_lambda_ell", t.sigma2_lambda_ell},
          {"N1", t.n1},
          {"N2", t.n2},
          {"N3", t.n3},
          {"rows", rows}};
}

inline void write_text_file(const std::filesystem::path& path,
                            const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << content;
}

inline std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Debug dump of one replicate's decomposition: columns t, I, Lambda, A.
inline std::string replicate_csv(const ScaledPaths& paths) {
  std::ostringstream out;
  out << "t,I,Lambda,A\n";
  for (std::size_t j = 0; j < paths.t_grid.size(); ++j)
    out << csv_number(paths.t_grid[j]) << ',' << csv_number(paths.total[j]) << ','
        << csv_number(paths.resolvent_term[j]) << ','
        << csv_number(paths.range_term[j]) << '\n';
  return out.str();
}

/// Run manifest: everything needed to reproduce the outputs exactly.
inline nlohmann::json make_manifest(const std::string& command,
                                    const nlohmann::json& resolved_config,
                                    std::uint64_t seed) {
  return {{"command", command},
          {"config", resolved_config},
          {"config_hash", hex64(fnv1a64(resolved_config.dump()))},
          {"seed", seed},
          {"versions",
           {{"fcltlab", FCLTLAB_VERSION_STRING},
            {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." +
                          std::to_string(EIGEN_MAJOR_VERSION) + "." +
                          std::to_string(EIGEN_MINOR_VERSION)}}}};
}

/// Right-aligned fixed-width table for terminal output.
inline std::string format_table(const std::vector<std::string>& headers,
                                const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> widths(headers.size());
  for (std::size_t c = 0; c < headers.size(); ++c) widths[c] = headers[c].size();
  for (const auto& row : rows)
    for (std::size_t c = 0; c < row.size() && c < widths.size(); ++c)
      widths[c] = std::max(widths[c], row[c].size());
  std::ostringstream out;
  auto emit = [&](const std::vector<std::string>& cells) {
    for (std::size_t c = 0; c < widths.size(); ++c) {
      const std::string& cell = c < cells.size() ? cells[c] : std::string{};
      out << std::string(widths[c] - cell.size() + (c ? 2 : 0), ' ') << cell;
    }
    out << '\n';
  };
  emit(headers);
  for (const auto& row : rows) emit(row);
  return out.str();
}

/// Compact numeric formatting for human-readable tables.
inline std::string pretty_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

} // namespace fcltlab
