#include "pgdlab/problem_io.hpp"

#include <cmath>
#include <fstream>
#include <string>

namespace pgdlab {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& path, const std::string& what) {
  throw InputError(path + ": " + what);
}

const json& member(const json& obj, const std::string& path, const char* key) {
  if (!obj.is_object()) fail(path, "expected an object");
  auto it = obj.find(key);
  if (it == obj.end()) fail(path + "." + key, "missing");
  return *it;
}

double number(const json& v, const std::string& path) {
  if (!v.is_number()) fail(path, "expected a number");
  const double x = v.get<double>();
  if (!std::isfinite(x)) fail(path, "must be finite");
  return x;
}

Eigen::Index positive_integer(const json& v, const std::string& path) {
  if (!v.is_number_integer() || v.get<long long>() < 1) fail(path, "expected a positive integer");
  return static_cast<Eigen::Index>(v.get<long long>());
}

Vector vector_at(const json& v, const std::string& path) {
  if (!v.is_array()) fail(path, "expected an array of numbers");
  Vector out(static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i)
    out[static_cast<Eigen::Index>(i)] = number(v[i], path + "[" + std::to_string(i) + "]");
  return out;
}

std::pair<Eigen::Index, Eigen::Index> shape_at(const json& v, const std::string& path) {
  if (!v.is_array() || v.size() != 2) fail(path, "expected [rows, cols]");
  return {positive_integer(v[0], path + "[0]"), positive_integer(v[1], path + "[1]")};
}

// Nested rows, or a flat row-major array with the given shape.
Matrix matrix_at(const json& v, const std::string& path, std::optional<std::pair<Eigen::Index, Eigen::Index>> shape,
                 std::optional<Eigen::Index> cols_hint) {
  if (!v.is_array()) fail(path, "expected an array");
  if (!v.empty() && v[0].is_array()) {
    const auto rows = static_cast<Eigen::Index>(v.size());
    const auto cols = static_cast<Eigen::Index>(v[0].size());
    Matrix M(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
      const std::string rp = path + "[" + std::to_string(i) + "]";
      const json& row = v[static_cast<std::size_t>(i)];
      if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols)
        fail(rp, "rows must all have " + std::to_string(cols) + " entries");
      for (Eigen::Index j = 0; j < cols; ++j)
        M(i, j) = number(row[static_cast<std::size_t>(j)], rp + "[" + std::to_string(j) + "]");
    }
    if (shape && (shape->first != rows || shape->second != cols)) fail(path, "does not match the declared shape");
    return M;
  }
  const Vector flat = vector_at(v, path);
  Eigen::Index rows = 0, cols = 0;
  if (shape) {
    rows = shape->first;
    cols = shape->second;
  } else if (cols_hint && *cols_hint > 0 && flat.size() % *cols_hint == 0) {
    cols = *cols_hint;
    rows = flat.size() / cols;
  } else {
    fail(path, "a flat array needs a shape");
  }
  if (rows * cols != flat.size())
    fail(path, "has " + std::to_string(flat.size()) + " entries but the shape needs " + std::to_string(rows * cols));
  Matrix M(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) M(i, j) = flat[i * cols + j];
  return M;
}

ConstraintSpec parse_constraint(const json& c, const std::string& path, Eigen::Index n) {
  const json& type = member(c, path, "type");
  if (!type.is_string()) fail(path + ".type", "expected a string");
  const std::string t = type.get<std::string>();
  try {
    if (t == "affine") {
      const Matrix C = matrix_at(member(c, path, "C"), path + ".C", std::nullopt, n);
      const Vector d = vector_at(member(c, path, "d"), path + ".d");
      return ConstraintSpec::affine(C, d);
    }
    if (t == "sparse") return ConstraintSpec::sparse(n, positive_integer(member(c, path, "s"), path + ".s"));
    if (t == "sphere") return ConstraintSpec::sphere(n);
    if (t == "lowrank") {
      const auto [rows, cols] = shape_at(member(c, path, "shape"), path + ".shape");
      return ConstraintSpec::low_rank(rows, cols, positive_integer(member(c, path, "r"), path + ".r"));
    }
  } catch (const InputError& e) {
    const std::string msg = e.what();
    if (msg.rfind("$", 0) == 0) throw;
    fail(path, msg);
  }
  fail(path + ".type", "unknown constraint type \"" + t + "\"");
}

}  // namespace

ProblemFile parse_problem(const json& doc) {
  const std::string root = "$";
  if (!doc.is_object()) fail(root, "expected an object");

  std::optional<DesignMatrix> A;
  if (doc.contains("A_diag")) {
    A = DesignMatrix::diagonal(vector_at(doc["A_diag"], "$.A_diag"));
  } else {
    std::optional<std::pair<Eigen::Index, Eigen::Index>> shape;
    if (doc.contains("shape")) shape = shape_at(doc["shape"], "$.shape");
    A = DesignMatrix::dense(matrix_at(member(doc, root, "A"), "$.A", shape, std::nullopt));
  }
  const Vector b = vector_at(member(doc, root, "b"), "$.b");
  if (b.size() != A->rows())
    fail("$.b", "has " + std::to_string(b.size()) + " entries but A has " + std::to_string(A->rows()) + " rows");
  const ConstraintSpec spec = parse_constraint(member(doc, root, "constraint"), "$.constraint", A->cols());
  if (spec.dimension() != A->cols())
    fail("$.constraint", "dimension " + std::to_string(spec.dimension()) + " does not match the " +
                             std::to_string(A->cols()) + " columns of A");

  ProblemFile out{ProblemInstance::make(std::move(*A), b, spec), std::nullopt, std::nullopt};
  for (const char* key : {"x_star", "x0"}) {
    if (!doc.contains(key)) continue;
    const std::string path = std::string("$.") + key;
    Vector v = vector_at(doc[key], path);
    if (v.size() != out.problem.dimension())
      fail(path, "has " + std::to_string(v.size()) + " entries, expected " + std::to_string(out.problem.dimension()));
    (std::string(key) == "x_star" ? out.x_star : out.x0) = std::move(v);
  }
  return out;
}

ProblemFile read_problem_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open problem file " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw InputError(path.string() + ": invalid JSON (" + e.what() + ")");
  }
  return parse_problem(doc);
}

json vector_to_json(const Vector& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

json constraint_to_json(const ConstraintSpec& spec) {
  switch (spec.kind()) {
    case ConstraintKind::Affine: {
      const AffineSet& set = spec.as_affine();
      json rows = json::array();
      for (Eigen::Index i = 0; i < set.C.rows(); ++i) rows.push_back(vector_to_json(set.C.row(i).transpose()));
      return {{"type", "affine"}, {"C", rows}, {"d", vector_to_json(set.d)}};
    }
    case ConstraintKind::Sparse: return {{"type", "sparse"}, {"s", spec.as_sparse().s}};
    case ConstraintKind::Sphere: return {{"type", "sphere"}};
    case ConstraintKind::LowRank: {
      const LowRankSet& set = spec.as_low_rank();
      return {{"type", "lowrank"}, {"r", set.r}, {"shape", {set.rows, set.cols}}};
    }
  }
  return {};
}

json problem_to_json(const ProblemInstance& problem, const std::optional<Vector>& x_star,
                     const std::optional<Vector>& x0) {
  json doc;
  if (problem.A.is_diagonal()) {
    doc["A_diag"] = vector_to_json(problem.A.diagonal_entries());
  } else {
    const Matrix& A = problem.A.dense_matrix();
    json flat = json::array();
    for (Eigen::Index i = 0; i < A.rows(); ++i)
      for (Eigen::Index j = 0; j < A.cols(); ++j) flat.push_back(A(i, j));
    doc["shape"] = {A.rows(), A.cols()};
    doc["A"] = std::move(flat);
  }
  doc["b"] = vector_to_json(problem.b);
  doc["constraint"] = constraint_to_json(problem.constraint);
  if (x_star) doc["x_star"] = vector_to_json(*x_star);
  if (x0) doc["x0"] = vector_to_json(*x0);
  return doc;
}

}  // namespace pgdlab
