#pragma once

// JSON problem files and CSV solution files.
//
// Problem file layout (all matrices are row-major nested arrays):
//
//   {
//     "dimension": 2, "horizon": 1.0, "steps": 1000,
//     "A": <function>            (or "step_propagators": [M_0, ..., M_{N-1}]),
//     "B": <function>, "C": <function>, "G": [[...]],
//     "B_factor": <function>     (optional, n x m with B = B_u B_u^T),
//     "solver": "monotone" | "picard" | "oracle",
//     "tolerances": {"abs": 1e-10, "rel": 1e-8, "max_iter": 50},
//     "safety": 0.5
//   }
//
// A <function> of time is one of
//   "zero"
//   {"constant": M}
//   {"polynomial": [M_0, M_1, ...]}               M_0 + t M_1 + t^2 M_2 + ...
//   {"piecewise": {"breaks": [t_0, ..., t_k], "values": [M_0, ..., M_{k-1}]}}
// where a piecewise value M_j holds on [t_j, t_{j+1}).
//
// Solution CSV: one line per grid node, no header, columns t then the n^2
// entries of P(t) in row-major order, printed with 17 significant digits.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "mriccati/errors.hpp"
#include "mriccati/evolution.hpp"
#include "mriccati/linops.hpp"
#include "mriccati/riccati.hpp"

namespace mriccati::io {

using json = nlohmann::json;

inline Matrix matrix_from_json(const json& j, const std::string& what) {
  if (!j.is_array() || j.empty() || !j.front().is_array() || j.front().empty()) {
    throw InvalidInput(what + ": expected a non-empty nested array");
  }
  const auto rows = static_cast<Eigen::Index>(j.size());
  const auto cols = static_cast<Eigen::Index>(j.front().size());
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const json& row = j[static_cast<std::size_t>(r)];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols) {
      throw InvalidInput(what + ": ragged matrix rows");
    }
    for (Eigen::Index c = 0; c < cols; ++c) {
      const json& v = row[static_cast<std::size_t>(c)];
      if (!v.is_number()) throw InvalidInput(what + ": entries must be numbers");
      m(r, c) = v.get<double>();
    }
  }
  if (!m.allFinite()) throw InvalidInput(what + ": non-finite entry");
  return m;
}

inline json matrix_to_json(const Matrix& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline bool same_matrix(const Matrix& a, const Matrix& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() && (a.array() == b.array()).all();
}

/// Matrix-valued function of time in one of the file encodings.
class TimeFunction {
 public:
  enum class Kind { zero, constant, polynomial, piecewise };

  static TimeFunction zero(Eigen::Index rows, Eigen::Index cols) {
    TimeFunction f;
    f.kind_ = Kind::zero;
    f.rows_ = rows;
    f.cols_ = cols;
    return f;
  }
  static TimeFunction constant(Matrix m) {
    TimeFunction f;
    f.kind_ = Kind::constant;
    f.rows_ = m.rows();
    f.cols_ = m.cols();
    f.values_.push_back(std::move(m));
    return f;
  }
  static TimeFunction polynomial(std::vector<Matrix> coefficients) {
    if (coefficients.empty()) throw InvalidInput("polynomial: needs at least one coefficient");
    TimeFunction f;
    f.kind_ = Kind::polynomial;
    f.rows_ = coefficients.front().rows();
    f.cols_ = coefficients.front().cols();
    f.values_ = std::move(coefficients);
    f.check_shapes();
    return f;
  }
  static TimeFunction piecewise(std::vector<double> breaks, std::vector<Matrix> values) {
    if (values.empty() || breaks.size() != values.size() + 1) {
      throw InvalidInput("piecewise: needs k + 1 breaks for k values");
    }
    if (!std::is_sorted(breaks.begin(), breaks.end()) ||
        std::adjacent_find(breaks.begin(), breaks.end()) != breaks.end()) {
      throw InvalidInput("piecewise: breaks must be strictly increasing");
    }
    TimeFunction f;
    f.kind_ = Kind::piecewise;
    f.rows_ = values.front().rows();
    f.cols_ = values.front().cols();
    f.breaks_ = std::move(breaks);
    f.values_ = std::move(values);
    f.check_shapes();
    return f;
  }

  Kind kind() const noexcept { return kind_; }
  Eigen::Index rows() const noexcept { return rows_; }
  Eigen::Index cols() const noexcept { return cols_; }

  Matrix operator()(double t) const {
    switch (kind_) {
      case Kind::zero:
        return Matrix::Zero(rows_, cols_);
      case Kind::constant:
        return values_.front();
      case Kind::polynomial: {
        // Horner
        Matrix acc = values_.back();
        for (std::size_t k = values_.size() - 1; k-- > 0;) acc = (t * acc + values_[k]).eval();
        return acc;
      }
      case Kind::piecewise: {
        const auto it = std::upper_bound(breaks_.begin(), breaks_.end(), t);
        std::size_t k = it == breaks_.begin() ? 0 : static_cast<std::size_t>(it - breaks_.begin()) - 1;
        return values_[std::min(k, values_.size() - 1)];
      }
    }
    return Matrix::Zero(rows_, cols_);
  }

  OperatorFunction sample(const TimeGrid& grid, bool with_midpoints = true) const {
    return OperatorFunction::sample(grid, [this](double t) { return (*this)(t); }, with_midpoints);
  }

  json to_json() const {
    switch (kind_) {
      case Kind::zero:
        return "zero";
      case Kind::constant:
        return json{{"constant", matrix_to_json(values_.front())}};
      case Kind::polynomial: {
        json coeffs = json::array();
        for (const auto& m : values_) coeffs.push_back(matrix_to_json(m));
        return json{{"polynomial", coeffs}};
      }
      case Kind::piecewise: {
        json vals = json::array();
        for (const auto& m : values_) vals.push_back(matrix_to_json(m));
        return json{{"piecewise", {{"breaks", breaks_}, {"values", vals}}}};
      }
    }
    return "zero";
  }

  static TimeFunction from_json(const json& j, Eigen::Index rows, Eigen::Index cols,
                                const std::string& what) {
    TimeFunction f;
    if (j.is_string()) {
      if (j.get<std::string>() != "zero") throw InvalidInput(what + ": unknown encoding");
      f = zero(rows, cols);
    } else if (j.is_object() && j.size() == 1 && j.contains("constant")) {
      f = constant(matrix_from_json(j["constant"], what));
    } else if (j.is_object() && j.size() == 1 && j.contains("polynomial")) {
      const json& c = j["polynomial"];
      if (!c.is_array() || c.empty()) throw InvalidInput(what + ": polynomial needs coefficients");
      std::vector<Matrix> coeffs;
      for (const auto& m : c) coeffs.push_back(matrix_from_json(m, what));
      f = polynomial(std::move(coeffs));
    } else if (j.is_object() && j.size() == 1 && j.contains("piecewise")) {
      const json& pw = j["piecewise"];
      if (!pw.is_object() || !pw.contains("breaks") || !pw.contains("values") ||
          !pw["breaks"].is_array() || !pw["values"].is_array()) {
        throw InvalidInput(what + ": piecewise needs breaks and values");
      }
      std::vector<double> breaks;
      for (const auto& b : pw["breaks"]) {
        if (!b.is_number()) throw InvalidInput(what + ": breaks must be numbers");
        breaks.push_back(b.get<double>());
      }
      std::vector<Matrix> values;
      for (const auto& m : pw["values"]) values.push_back(matrix_from_json(m, what));
      f = piecewise(std::move(breaks), std::move(values));
    } else {
      throw InvalidInput(what + ": unknown function encoding");
    }
    if (f.rows_ != rows || (cols >= 0 && f.cols_ != cols)) {
      throw InvalidInput(what + ": expected " + std::to_string(rows) + "x" +
                         (cols >= 0 ? std::to_string(cols) : std::string("m")) + " values");
    }
    return f;
  }

  friend bool operator==(const TimeFunction& a, const TimeFunction& b) {
    if (a.kind_ != b.kind_ || a.rows_ != b.rows_ || a.cols_ != b.cols_ || a.breaks_ != b.breaks_ ||
        a.values_.size() != b.values_.size()) {
      return false;
    }
    for (std::size_t k = 0; k < a.values_.size(); ++k) {
      if (!same_matrix(a.values_[k], b.values_[k])) return false;
    }
    return true;
  }

 private:
  void check_shapes() const {
    for (const auto& m : values_) {
      if (m.rows() != rows_ || m.cols() != cols_) throw InvalidInput("TimeFunction: ragged shapes");
      if (!m.allFinite()) throw InvalidInput("TimeFunction: non-finite value");
    }
  }

  Kind kind_ = Kind::zero;
  Eigen::Index rows_ = 0;
  Eigen::Index cols_ = 0;
  std::vector<double> breaks_;
  std::vector<Matrix> values_;
};

enum class SolverKind { monotone, picard, oracle };

inline const char* to_string(SolverKind s) {
  switch (s) {
    case SolverKind::monotone: return "monotone";
    case SolverKind::picard: return "picard";
    case SolverKind::oracle: return "oracle";
  }
  return "monotone";
}

inline SolverKind parse_solver(const std::string& s) {
  if (s == "monotone") return SolverKind::monotone;
  if (s == "picard") return SolverKind::picard;
  if (s == "oracle") return SolverKind::oracle;
  throw InvalidInput("unknown solver '" + s + "' (expected monotone, picard or oracle)");
}

struct ProblemFile {
  Eigen::Index dimension = 1;
  double horizon = 1.0;
  std::size_t steps = 1000;
  std::optional<TimeFunction> a;
  std::vector<Matrix> step_propagators;  // used when `a` is absent
  std::optional<TimeFunction> b;
  std::optional<TimeFunction> b_factor;
  TimeFunction c;
  Matrix g;
  SolverKind solver = SolverKind::monotone;
  double tol_abs = 1e-10;
  double tol_rel = 1e-8;
  std::size_t max_iter = 50;
  double safety = 0.5;

  friend bool operator==(const ProblemFile& x, const ProblemFile& y) {
    if (x.step_propagators.size() != y.step_propagators.size()) return false;
    for (std::size_t k = 0; k < x.step_propagators.size(); ++k) {
      if (!same_matrix(x.step_propagators[k], y.step_propagators[k])) return false;
    }
    return x.dimension == y.dimension && x.horizon == y.horizon && x.steps == y.steps &&
           x.a == y.a && x.b == y.b && x.b_factor == y.b_factor && x.c == y.c &&
           same_matrix(x.g, y.g) && x.solver == y.solver && x.tol_abs == y.tol_abs &&
           x.tol_rel == y.tol_rel && x.max_iter == y.max_iter && x.safety == y.safety;
  }
};

inline ProblemFile problem_from_json(const json& j) {
  if (!j.is_object()) throw InvalidInput("problem: expected a JSON object");
  auto need = [&](const char* key) -> const json& {
    if (!j.contains(key)) throw InvalidInput(std::string("problem: missing '") + key + "'");
    return j.at(key);
  };
  ProblemFile p;
  try {
    p.dimension = need("dimension").get<Eigen::Index>();
    p.horizon = need("horizon").get<double>();
    p.steps = need("steps").get<std::size_t>();
  } catch (const json::exception& e) {
    throw InvalidInput(std::string("problem: ") + e.what());
  }
  if (p.dimension < 1) throw InvalidInput("problem: dimension must be positive");
  if (!std::isfinite(p.horizon) || p.horizon < 0.0) throw InvalidInput("problem: bad horizon");
  if (p.horizon > 0.0 && p.steps < 1) throw InvalidInput("problem: steps must be positive");
  const auto n = p.dimension;

  if (j.contains("A") == j.contains("step_propagators")) {
    throw InvalidInput("problem: give exactly one of 'A' and 'step_propagators'");
  }
  if (j.contains("A")) {
    p.a = TimeFunction::from_json(j["A"], n, n, "A");
  } else {
    const json& s = j["step_propagators"];
    if (!s.is_array()) throw InvalidInput("step_propagators: expected an array");
    for (const auto& m : s) {
      Matrix step = matrix_from_json(m, "step_propagators");
      if (step.rows() != n || step.cols() != n) throw InvalidInput("step_propagators: wrong shape");
      p.step_propagators.push_back(std::move(step));
    }
    const std::size_t expected = p.horizon == 0.0 ? 0 : p.steps;
    if (p.step_propagators.size() != expected) {
      throw InvalidInput("step_propagators: expected one matrix per step");
    }
  }
  if (j.contains("B_factor")) p.b_factor = TimeFunction::from_json(j["B_factor"], n, -1, "B_factor");
  if (j.contains("B")) {
    p.b = TimeFunction::from_json(j["B"], n, n, "B");
  } else if (!p.b_factor) {
    throw InvalidInput("problem: missing 'B' (or 'B_factor')");
  }
  p.c = TimeFunction::from_json(need("C"), n, n, "C");
  p.g = matrix_from_json(need("G"), "G");
  if (p.g.rows() != n || p.g.cols() != n) throw InvalidInput("G: wrong shape");

  if (j.contains("solver")) {
    if (!j["solver"].is_string()) throw InvalidInput("solver: expected a string");
    p.solver = parse_solver(j["solver"].get<std::string>());
  }
  try {
    if (j.contains("tolerances")) {
      const json& t = j["tolerances"];
      if (t.contains("abs")) p.tol_abs = t["abs"].get<double>();
      if (t.contains("rel")) p.tol_rel = t["rel"].get<double>();
      if (t.contains("max_iter")) p.max_iter = t["max_iter"].get<std::size_t>();
    }
    if (j.contains("safety")) p.safety = j["safety"].get<double>();
  } catch (const json::exception& e) {
    throw InvalidInput(std::string("problem: ") + e.what());
  }
  if (p.tol_abs < 0.0 || p.tol_rel < 0.0) throw InvalidInput("tolerances must be nonnegative");
  if (!(p.safety > 0.0 && p.safety < 1.0)) throw InvalidInput("safety must lie in (0, 1)");
  return p;
}

inline json problem_to_json(const ProblemFile& p) {
  json j;
  j["dimension"] = p.dimension;
  j["horizon"] = p.horizon;
  j["steps"] = p.steps;
  if (p.a) {
    j["A"] = p.a->to_json();
  } else {
    json s = json::array();
    for (const auto& m : p.step_propagators) s.push_back(matrix_to_json(m));
    j["step_propagators"] = s;
  }
  if (p.b) j["B"] = p.b->to_json();
  if (p.b_factor) j["B_factor"] = p.b_factor->to_json();
  j["C"] = p.c.to_json();
  j["G"] = matrix_to_json(p.g);
  j["solver"] = to_string(p.solver);
  j["tolerances"] = {{"abs", p.tol_abs}, {"rel", p.tol_rel}, {"max_iter", p.max_iter}};
  j["safety"] = p.safety;
  return j;
}

inline std::string read_text(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot read '" + path + "'");
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

inline ProblemFile read_problem(const std::string& path) {
  json j;
  try {
    j = json::parse(read_text(path));
  } catch (const json::parse_error& e) {
    throw InvalidInput("'" + path + "': " + e.what());
  }
  return problem_from_json(j);
}

inline void write_problem(const std::string& path, const ProblemFile& p) {
  std::ofstream out(path);
  if (!out) throw InvalidInput("cannot write '" + path + "'");
  out << problem_to_json(p).dump(2) << '\n';
}

inline TimeGrid grid_of(const ProblemFile& f) { return TimeGrid(f.horizon, f.steps); }

/// B(t) sampled from B, or from B_u B_u^T when only the factor is given.
inline OperatorFunction sample_b(const ProblemFile& f, const TimeGrid& grid) {
  if (f.b) return f.b->sample(grid);
  const TimeFunction& bu = *f.b_factor;
  return OperatorFunction::sample(grid, [&](double t) -> Matrix {
    const Matrix m = bu(t);
    return m * m.transpose();
  }, true);
}

/// Builds the problem; symmetric mode is whatever check_hypotheses says.
inline RiccatiProblem build_problem(const ProblemFile& f) {
  const TimeGrid grid = grid_of(f);
  RiccatiProblem p;
  if (f.a) {
    const OperatorFunction gen = f.a->sample(grid);
    p.forward = build_forward_family(gen);
    p.generator = gen;
  } else {
    p.forward = EvolutionFamily(grid, Direction::forward, f.step_propagators, f.dimension);
  }
  p.backward = adjoint_backward_family(p.forward);
  p.c = f.c.sample(grid);
  p.b = sample_b(f, grid);
  p.g = f.g;
  p.symmetric_mode = check_hypotheses(p).passed;
  return p;
}

inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void write_solution_csv(std::ostream& out, const OperatorFunction& P) {
  for (std::size_t i = 0; i < P.size(); ++i) {
    out << format_double(P.grid().node(i));
    const Matrix& m = P[i];
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) out << ',' << format_double(m(r, c));
    out << '\n';
  }
}

inline void write_solution_csv(const std::string& path, const OperatorFunction& P) {
  std::ofstream out(path);
  if (!out) throw InvalidInput("cannot write '" + path + "'");
  write_solution_csv(out, P);
}

/// Reads a solution CSV and checks that its time column matches `grid`.
inline OperatorFunction read_solution_csv(const std::string& path, const TimeGrid& grid,
                                          Eigen::Index n) {
  std::istringstream in(read_text(path));
  std::vector<Matrix> nodes;
  std::string line;
  const double slack = 1e-12 * std::max(1.0, grid.horizon());
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> vals;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) {
      try {
        std::size_t used = 0;
        vals.push_back(std::stod(cell, &used));
      } catch (const std::exception&) {
        throw InvalidInput("'" + path + "': malformed number '" + cell + "'");
      }
    }
    if (static_cast<Eigen::Index>(vals.size()) != 1 + n * n) {
      throw InvalidInput("'" + path + "': expected " + std::to_string(1 + n * n) + " columns");
    }
    const std::size_t i = nodes.size();
    if (i >= grid.size() || std::abs(vals[0] - grid.node(i)) > slack) {
      throw InvalidInput("'" + path + "': time column does not match the problem grid");
    }
    Matrix m(n, n);
    for (Eigen::Index r = 0; r < n; ++r)
      for (Eigen::Index c = 0; c < n; ++c) m(r, c) = vals[static_cast<std::size_t>(1 + r * n + c)];
    nodes.push_back(std::move(m));
  }
  if (nodes.size() != grid.size()) {
    throw InvalidInput("'" + path + "': expected " + std::to_string(grid.size()) + " rows");
  }
  return OperatorFunction(grid, std::move(nodes));
}

}  // namespace mriccati::io
