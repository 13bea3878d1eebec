#pragma once

#include <filesystem>
#include <optional>

#include <nlohmann/json.hpp>

#include "pgdlab/pgd.hpp"

namespace pgdlab {

/// A problem file: {"A": ..., "shape": [m, n], "b": [...], "constraint": {...},
/// optional "x_star", optional "x0"}.
///
/// "A" is either a flat row-major array (with "shape") or an array of rows.
/// "A_diag" may replace "A" to give a square diagonal design, which is how
/// matrix-completion masks are stored. Constraint objects:
///   {"type": "affine", "C": rows or flat row-major, "d": [...]}
///   {"type": "sparse", "s": k}
///   {"type": "sphere"}
///   {"type": "lowrank", "r": k, "shape": [m_mat, n_mat]}
struct ProblemFile {
  ProblemInstance problem;
  std::optional<Vector> x_star;
  std::optional<Vector> x0;
};

/// Throws InputError whose message starts with the JSON path of the
/// offending value, e.g. "$.constraint.s: ...".
ProblemFile parse_problem(const nlohmann::json& doc);
ProblemFile read_problem_file(const std::filesystem::path& path);

nlohmann::json constraint_to_json(const ConstraintSpec& spec);
nlohmann::json problem_to_json(const ProblemInstance& problem,
                               const std::optional<Vector>& x_star = std::nullopt,
                               const std::optional<Vector>& x0 = std::nullopt);

nlohmann::json vector_to_json(const Vector& v);

}  // namespace pgdlab
