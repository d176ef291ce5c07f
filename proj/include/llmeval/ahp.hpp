#pragma once

// Analytic hierarchy process over a single criteria layer: priority weights
// from the principal eigenvector of a pairwise judgment matrix, plus the
// consistency index / ratio diagnostics.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "llmeval/error.hpp"
#include "llmeval/text.hpp"

namespace llmeval::ahp {

enum class Reciprocity { Strict, Lenient };

constexpr std::string_view to_string(Reciprocity mode) {
  return mode == Reciprocity::Strict ? "strict" : "lenient";
}

inline Reciprocity parse_reciprocity(std::string_view name) {
  if (name == "strict") return Reciprocity::Strict;
  if (name == "lenient") return Reciprocity::Lenient;
  throw Error(Errc::InvalidArgument, "unknown reciprocity mode '" + std::string(name) + "'");
}

// Square positive comparison matrix over named criteria. Entries are kept
// verbatim; validate_matrix() decides whether they are usable.
struct JudgmentMatrix {
  std::vector<std::string> labels;
  std::vector<std::vector<double>> entries;

  std::size_t size() const { return labels.size(); }
  double operator()(std::size_t i, std::size_t j) const { return entries[i][j]; }

  // n x n matrix of ones: every criterion judged equally important.
  static JudgmentMatrix uniform(std::vector<std::string> labels) {
    const auto n = labels.size();
    return {std::move(labels), std::vector<std::vector<double>>(n, std::vector<double>(n, 1.0))};
  }

  // Builds a reciprocal matrix from the strictly upper triangle given row by
  // row: (0,1), (0,2), ..., (1,2), ...
  static JudgmentMatrix from_upper_triangle(std::vector<std::string> labels,
                                            const std::vector<double>& upper) {
    auto m = uniform(std::move(labels));
    const auto n = m.size();
    if (upper.size() != n * (n - 1) / 2) {
      throw Error(Errc::DimensionMismatch, "upper triangle needs " + std::to_string(n * (n - 1) / 2) +
                                               " values, got " + std::to_string(upper.size()));
    }
    std::size_t k = 0;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) m.set(i, j, upper[k++], Reciprocity::Strict);
    }
    return m;
  }

  // Strict mode keeps the matrix reciprocal by writing 1/v into (j,i).
  void set(std::size_t i, std::size_t j, double value, Reciprocity mode) {
    entries.at(i).at(j) = value;
    if (mode == Reciprocity::Strict && i != j) entries.at(j).at(i) = 1.0 / value;
  }

  friend bool operator==(const JudgmentMatrix&, const JudgmentMatrix&) = default;
};

struct PriorityVector {
  std::vector<std::string> labels;
  std::vector<double> weights;

  std::size_t size() const { return weights.size(); }
  friend bool operator==(const PriorityVector&, const PriorityVector&) = default;
};

struct ConsistencyReport {
  double lambda_max = 0.0;
  double ci = 0.0;
  double ri = 0.0;
  double cr = 0.0;
  bool passed = false;
  double threshold = 0.1;
  std::size_t iterations = 0;
};

using RiTable = std::map<std::size_t, double>;

// Saaty's random consistency indices.
inline RiTable saaty_ri_table() {
  return {{1, 0.0},  {2, 0.0},  {3, 0.58}, {4, 0.90}, {5, 1.12},
          {6, 1.24}, {7, 1.32}, {8, 1.41}, {9, 1.45}, {10, 1.49}};
}

// Saaty's table with RI(6) = 1.26, the value that reproduces CR = 0.0831 for
// the six-metric LLM evaluation matrix.
inline RiTable alt_ri_table() {
  auto table = saaty_ri_table();
  table[6] = 1.26;
  return table;
}

inline RiTable ri_table_by_name(std::string_view name) {
  if (name == "saaty") return saaty_ri_table();
  if (name == "alt") return alt_ri_table();
  throw Error(Errc::InvalidArgument, "unknown RI table '" + std::string(name) + "' (expected saaty|alt)");
}

struct AhpConfig {
  Reciprocity reciprocity_mode = Reciprocity::Strict;
  RiTable ri_table = saaty_ri_table();
  double cr_threshold = 0.1;
  double eigen_tolerance = 1e-12;
  std::size_t max_iterations = 10000;
  // When set, derive_weights() throws InconsistentMatrix instead of
  // returning a failed report.
  bool strict_consistency = false;
};

// ---------------------------------------------------------------------------
// Validation

struct Cell {
  std::size_t row = 0;
  std::size_t col = 0;
  friend bool operator==(const Cell&, const Cell&) = default;
};

enum class ViolationKind { NonPositiveEntry, NonUnitDiagonal, NonReciprocal, OutsideSaatyScale };

constexpr std::string_view to_string(ViolationKind kind) {
  switch (kind) {
    case ViolationKind::NonPositiveEntry: return "NonPositiveEntry";
    case ViolationKind::NonUnitDiagonal: return "NonUnitDiagonal";
    case ViolationKind::NonReciprocal: return "NonReciprocal";
    case ViolationKind::OutsideSaatyScale: return "OutsideSaatyScale";
  }
  return "Unknown";
}

struct Violation {
  ViolationKind kind;
  Cell cell;
  std::optional<Cell> paired;  // transpose cell for reciprocity violations
  double value = 0.0;
  double paired_value = 0.0;
  std::string message;
};

struct ValidationReport {
  std::vector<Violation> errors;
  std::vector<Violation> warnings;

  bool ok() const { return errors.empty(); }

  std::vector<std::string> error_messages() const {
    std::vector<std::string> out;
    for (const auto& v : errors) out.push_back(v.message);
    return out;
  }
};

namespace detail {

inline bool on_saaty_scale(double v) {
  constexpr double tol = 1e-9;
  for (int k = 1; k <= 9; ++k) {
    if (std::abs(v - k) <= tol * k || std::abs(v - 1.0 / k) <= tol / k) return true;
  }
  return false;
}

inline std::string cell_name(const JudgmentMatrix& m, Cell c) {
  return "(" + m.labels[c.row] + ", " + m.labels[c.col] + ")";
}

}  // namespace detail

// Structural problems (non-square, n < 2) throw; content problems are
// collected so every offending cell is reported at once. Reciprocity
// violations are errors in strict mode and warnings in lenient mode.
inline ValidationReport validate_matrix(const JudgmentMatrix& m, Reciprocity mode) {
  const auto n = m.labels.size();
  if (m.entries.size() != n) {
    throw Error(Errc::NonSquare, "matrix has " + std::to_string(m.entries.size()) + " rows for " +
                                     std::to_string(n) + " labels");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (m.entries[i].size() != n) {
      throw Error(Errc::NonSquare, "row " + std::to_string(i) + " has " +
                                       std::to_string(m.entries[i].size()) + " entries, expected " +
                                       std::to_string(n));
    }
  }
  if (n < 2) throw Error(Errc::TooSmall, "judgment matrix needs at least 2 criteria");

  ValidationReport report;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double v = m(i, j);
      const Cell cell{i, j};
      if (!(v > 0.0) || !std::isfinite(v)) {
        report.errors.push_back({ViolationKind::NonPositiveEntry, cell, std::nullopt, v, 0.0,
                                 "non-positive or non-finite entry at " + detail::cell_name(m, cell)});
        continue;
      }
      if (i == j) {
        if (v != 1.0) {
          report.errors.push_back({ViolationKind::NonUnitDiagonal, cell, std::nullopt, v, 0.0,
                                   "diagonal entry " + detail::cell_name(m, cell) + " is not 1"});
        }
        continue;
      }
      if (!detail::on_saaty_scale(v)) {
        report.warnings.push_back({ViolationKind::OutsideSaatyScale, cell, std::nullopt, v, 0.0,
                                   "entry at " + detail::cell_name(m, cell) +
                                       " is outside the 1/9..9 Saaty scale"});
      }
    }
  }

  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double a = m(i, j);
      const double b = m(j, i);
      if (!(a > 0.0) || !(b > 0.0) || !std::isfinite(a) || !std::isfinite(b)) continue;
      if (std::abs(a * b - 1.0) <= 1e-9) continue;
      Violation v{ViolationKind::NonReciprocal, Cell{i, j}, Cell{j, i}, a, b,
                  "entry " + detail::cell_name(m, Cell{i, j}) + " = " + text::format_fixed(a, 4, true) +
                      " but transpose " + detail::cell_name(m, Cell{j, i}) + " = " +
                      text::format_fixed(b, 4, true)};
      (mode == Reciprocity::Strict ? report.errors : report.warnings).push_back(std::move(v));
    }
  }
  return report;
}

// ---------------------------------------------------------------------------
// Eigen analysis

struct PowerIterationResult {
  std::vector<double> weights;
  std::size_t iterations = 0;
};

// Power iteration from the uniform vector with L1 renormalization each step.
// Converged when the largest component change drops below `tolerance`.
inline PowerIterationResult power_iteration(const JudgmentMatrix& m, double tolerance,
                                            std::size_t max_iterations) {
  if (!(tolerance > 0.0)) throw Error(Errc::InvalidArgument, "eigen tolerance must be positive");
  if (max_iterations < 1) throw Error(Errc::InvalidArgument, "max_iterations must be at least 1");
  const auto n = m.size();
  std::vector<double> w(n, 1.0 / static_cast<double>(n));
  std::vector<double> next(n);
  for (std::size_t iter = 1; iter <= max_iterations; ++iter) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double acc = 0.0;
      for (std::size_t j = 0; j < n; ++j) acc += m(i, j) * w[j];
      next[i] = acc;
      total += acc;
    }
    double change = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      next[i] /= total;
      change = std::max(change, std::abs(next[i] - w[i]));
    }
    w.swap(next);
    if (change < tolerance) return {std::move(w), iter};
  }
  throw Error(Errc::NoConvergence,
              "power iteration did not converge in " + std::to_string(max_iterations) + " iterations");
}

inline PriorityVector principal_eigenvector(const JudgmentMatrix& m, const AhpConfig& cfg) {
  auto result = power_iteration(m, cfg.eigen_tolerance, cfg.max_iterations);
  return {m.labels, std::move(result.weights)};
}

// Mean of the component-wise ratios (M w)_i / w_i.
inline double max_eigenvalue(const JudgmentMatrix& m, const PriorityVector& w) {
  const auto n = m.size();
  if (w.size() != n || m.entries.size() != n) {
    throw Error(Errc::DimensionMismatch, "weight vector of length " + std::to_string(w.size()) +
                                             " for a " + std::to_string(n) + "x" +
                                             std::to_string(n) + " matrix");
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double row = 0.0;
    for (std::size_t j = 0; j < n; ++j) row += m(i, j) * w.weights[j];
    sum += row / w.weights[i];
  }
  return sum / static_cast<double>(n);
}

inline ConsistencyReport consistency(double lambda_max, std::size_t n, const AhpConfig& cfg) {
  if (n < 2) throw Error(Errc::TooSmall, "consistency needs n >= 2");
  const double dn = static_cast<double>(n);
  // Allow round-off below n; anything further means the input is not a
  // converged eigenvalue of a reciprocal matrix.
  const double slack = std::max(cfg.eigen_tolerance, 1e-9) * dn;
  if (lambda_max < dn - slack) {
    throw Error(Errc::InvalidArgument,
                "lambda_max " + text::format_fixed(lambda_max, 6) + " is below n = " + std::to_string(n));
  }
  auto ri = cfg.ri_table.find(n);
  if (ri == cfg.ri_table.end()) {
    throw Error(Errc::MissingRI, "no random index for n = " + std::to_string(n));
  }
  ConsistencyReport r;
  r.lambda_max = lambda_max;
  r.ci = std::max(0.0, (lambda_max - dn) / (dn - 1.0));
  r.ri = ri->second;
  r.cr = r.ri == 0.0 ? 0.0 : r.ci / r.ri;
  r.threshold = cfg.cr_threshold;
  r.passed = r.cr < cfg.cr_threshold;
  return r;
}

struct AhpResult {
  PriorityVector weights;
  ConsistencyReport consistency;
  ValidationReport validation;
};

inline AhpResult derive_weights(const JudgmentMatrix& m, const AhpConfig& cfg = {}) {
  auto validation = validate_matrix(m, cfg.reciprocity_mode);
  if (!validation.ok()) {
    throw Error(Errc::ValidationFailed, "judgment matrix failed validation", validation.error_messages());
  }
  auto eigen = power_iteration(m, cfg.eigen_tolerance, cfg.max_iterations);
  PriorityVector weights{m.labels, std::move(eigen.weights)};
  auto report = consistency(max_eigenvalue(m, weights), m.size(), cfg);
  report.iterations = eigen.iterations;
  if (cfg.strict_consistency && !report.passed) {
    throw Error(Errc::InconsistentMatrix,
                "consistency ratio " + text::format_fixed(report.cr, 4) + " is not below " +
                    text::format_fixed(report.threshold, 4),
                {"lambda_max=" + text::format_fixed(report.lambda_max, 6),
                 "cr=" + text::format_fixed(report.cr, 6)});
  }
  return {std::move(weights), report, std::move(validation)};
}

// ---------------------------------------------------------------------------
// JSON: {"labels": [...], "entries": [[...], ...]}

inline void to_json(nlohmann::json& j, const JudgmentMatrix& m) {
  j = nlohmann::json{{"labels", m.labels}, {"entries", m.entries}};
}

// Entries may be numbers or ratio strings ("1/3"). A null cell is filled
// with the reciprocal of its transpose, so a matrix can be written as its
// upper triangle only.
inline void from_json(const nlohmann::json& j, JudgmentMatrix& m) {
  if (!j.is_object() || !j.contains("labels") || !j.contains("entries")) {
    throw Error(Errc::InvalidArgument, "judgment matrix JSON needs \"labels\" and \"entries\"");
  }
  m.labels = j.at("labels").get<std::vector<std::string>>();
  const auto& rows = j.at("entries");
  if (!rows.is_array()) throw Error(Errc::InvalidArgument, "\"entries\" must be an array of rows");
  m.entries.clear();
  std::vector<std::vector<bool>> missing;
  for (const auto& row : rows) {
    if (!row.is_array()) throw Error(Errc::InvalidArgument, "\"entries\" must be an array of rows");
    std::vector<double> values;
    std::vector<bool> holes;
    for (const auto& cell : row) {
      if (cell.is_null()) {
        values.push_back(0.0);
        holes.push_back(true);
      } else if (cell.is_number()) {
        values.push_back(cell.get<double>());
        holes.push_back(false);
      } else if (cell.is_string()) {
        auto v = text::parse_ratio(cell.get<std::string>());
        if (!v) throw Error(Errc::InvalidArgument, "bad matrix entry '" + cell.get<std::string>() + "'");
        values.push_back(*v);
        holes.push_back(false);
      } else {
        throw Error(Errc::InvalidArgument, "matrix entries must be numbers, ratio strings or null");
      }
    }
    m.entries.push_back(std::move(values));
    missing.push_back(std::move(holes));
  }
  for (std::size_t i = 0; i < missing.size(); ++i) {
    for (std::size_t j = 0; j < missing[i].size(); ++j) {
      if (!missing[i][j]) continue;
      if (i == j) {
        m.entries[i][j] = 1.0;
      } else if (j < missing.size() && i < missing[j].size() && !missing[j][i] && m.entries[j][i] != 0.0) {
        m.entries[i][j] = 1.0 / m.entries[j][i];
      } else {
        throw Error(Errc::InvalidArgument, "cell (" + std::to_string(i) + ", " + std::to_string(j) +
                                               ") and its transpose are both empty");
      }
    }
  }
}

inline void to_json(nlohmann::json& j, const PriorityVector& w) {
  j = nlohmann::json{{"labels", w.labels}, {"weights", w.weights}};
}

inline void from_json(const nlohmann::json& j, PriorityVector& w) {
  w.labels = j.at("labels").get<std::vector<std::string>>();
  w.weights = j.at("weights").get<std::vector<double>>();
}

inline void to_json(nlohmann::json& j, const ConsistencyReport& r) {
  j = nlohmann::json{{"lambda_max", r.lambda_max}, {"ci", r.ci},
                     {"ri", r.ri},                 {"cr", r.cr},
                     {"passed", r.passed},         {"threshold", r.threshold},
                     {"iterations", r.iterations}};
}

inline void from_json(const nlohmann::json& j, ConsistencyReport& r) {
  j.at("lambda_max").get_to(r.lambda_max);
  j.at("ci").get_to(r.ci);
  j.at("ri").get_to(r.ri);
  j.at("cr").get_to(r.cr);
  j.at("passed").get_to(r.passed);
  j.at("threshold").get_to(r.threshold);
  j.at("iterations").get_to(r.iterations);
}

inline nlohmann::json violation_json(const Violation& v) {
  nlohmann::json j{{"kind", to_string(v.kind)},
                   {"cell", {v.cell.row, v.cell.col}},
                   {"value", v.value},
                   {"message", v.message}};
  if (v.paired) {
    j["paired_cell"] = {v.paired->row, v.paired->col};
    j["paired_value"] = v.paired_value;
  }
  return j;
}

inline nlohmann::json result_json(const AhpResult& r) {
  nlohmann::json warnings = nlohmann::json::array();
  for (const auto& w : r.validation.warnings) warnings.push_back(violation_json(w));
  return {{"weights", r.weights}, {"consistency", r.consistency}, {"warnings", warnings}};
}

}  // namespace llmeval::ahp
