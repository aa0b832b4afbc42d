// Copyright (c) the fcltlab contributors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Dense>

#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "fcltlab/chain_model.hpp"
#include "fcltlab/errors.hpp"

namespace fcltlab {

/// Contents of a model file: the validated model plus an optional bundled
/// observable (raw, not yet centered).
struct ModelFile {
  GeneratorModel model;
  std::optional<Eigen::VectorXd> f;
};

/// Parses the plain-text model format
///   {"states": [...], "Q": [[...]], "f": [...]}
/// with Q row-major; states and f are optional. Diagnostics name the
/// offending row so malformed files are actionable.
inline ModelFile parse_model_json(const nlohmann::json& doc) {
  if (!doc.is_object()) throw ConfigError("model file: top level must be an object");
  if (!doc.contains("Q")) throw ConfigError("model file: missing \"Q\"");
  const auto& q_rows = doc.at("Q");
  if (!q_rows.is_array() || q_rows.empty())
    throw ConfigError("model file: \"Q\" must be a nonempty array of rows");
  const std::size_t m = q_rows.size();
  Eigen::MatrixXd q(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(m));
  for (std::size_t i = 0; i < m; ++i) {
    const auto& row = q_rows.at(i);
    if (!row.is_array() || row.size() != m)
      throw ConfigError("model file: Q row " + std::to_string(i) + " has " +
                        std::to_string(row.is_array() ? row.size() : 0) +
                        " entries, expected " + std::to_string(m));
    for (std::size_t j = 0; j < m; ++j) {
      const auto& cell = row.at(j);
      if (!cell.is_number())
        throw ConfigError("model file: Q row " + std::to_string(i) + " entry " +
                          std::to_string(j) + " is not a number");
      q(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          cell.get<double>();
    }
  }

  std::vector<std::string> labels;
  if (doc.contains("states")) {
    const auto& states = doc.at("states");
    if (!states.is_array() || states.size() != m)
      throw ConfigError("model file: \"states\" must list " + std::to_string(m) +
                        " labels");
    for (const auto& s : states) {
      if (s.is_string())
        labels.push_back(s.get<std::string>());
      else
        labels.push_back(s.dump());
    }
  }

  ModelFile out;
  try {
    out.model = build_from_rates(q, std::move(labels));
  } catch (const Error& e) {
    throw ConfigError(std::string("model file: ") + e.what());
  }

  if (doc.contains("f")) {
    const auto& fv = doc.at("f");
    if (!fv.is_array() || fv.size() != m)
      throw ConfigError("model file: \"f\" must list " + std::to_string(m) +
                        " values");
    Eigen::VectorXd f(static_cast<Eigen::Index>(m));
    for (std::size_t i = 0; i < m; ++i) {
      if (!fv.at(i).is_number())
        throw ConfigError("model file: f entry " + std::to_string(i) +
                          " is not a number");
      f(static_cast<Eigen::Index>(i)) = fv.at(i).get<double>();
    }
    out.f = std::move(f);
  }
  return out;
}

inline ModelFile load_model_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open model file: " + path);
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("model file " + path + ": " + e.what());
  }
  return parse_model_json(doc);
}

/// Loads a bare observable file: either {"f": [...]} or a plain JSON array.
inline Eigen::VectorXd load_observable_file(const std::string& path,
                                            Eigen::Index expected_size) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open observable file: " + path);
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("observable file " + path + ": " + e.what());
  }
  const nlohmann::json* arr = nullptr;
  if (doc.is_array())
    arr = &doc;
  else if (doc.is_object() && doc.contains("f") && doc.at("f").is_array())
    arr = &doc.at("f");
  else
    throw ConfigError("observable file " + path +
                      ": expected an array or {\"f\": [...]}");
  if (static_cast<Eigen::Index>(arr->size()) != expected_size)
    throw ConfigError("observable file " + path + ": expected " +
                      std::to_string(expected_size) + " values, found " +
                      std::to_string(arr->size()));
  Eigen::VectorXd f(expected_size);
  for (Eigen::Index i = 0; i < expected_size; ++i) {
    const auto& cell = arr->at(static_cast<std::size_t>(i));
    if (!cell.is_number())
      throw ConfigError("observable file " + path + ": entry " +
                        std::to_string(i) + " is not a number");
    f(i) = cell.get<double>();
  }
  return f;
}

} // namespace fcltlab
