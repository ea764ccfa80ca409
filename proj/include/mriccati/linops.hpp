#pragma once

// Dense matrix primitives for operators on R^n with the Euclidean pairing.
// Adjoints are transposes; "self-adjoint" means symmetric and "nonnegative"
// means positive semidefinite. Predicates use the relative tolerance form
// tol * (1 + ||M||) with the spectral norm.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <string>

#include "mriccati/errors.hpp"

namespace mriccati {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct SymmetryReport {
  double asymmetry = 0.0;      // ||M - M^T||
  double min_eigenvalue = 0.0; // of (M + M^T) / 2
  bool self_adjoint = false;
  bool nonnegative = false;
};

inline bool all_finite(const Matrix& m) { return m.allFinite(); }

inline void require_square(const Matrix& m, const char* what) {
  if (m.rows() != m.cols()) {
    throw InvalidInput(std::string(what) + ": expected a square matrix, got " +
                       std::to_string(m.rows()) + "x" + std::to_string(m.cols()));
  }
}

inline Matrix adjoint(const Matrix& m) { return m.transpose(); }

inline Matrix symmetrize(const Matrix& m) { return 0.5 * (m + m.transpose()); }

/// Spectral norm (largest singular value).
inline double op_norm(const Matrix& m) {
  if (m.size() == 0) return 0.0;
  if (m.rows() == 1 || m.cols() == 1) return m.norm();
  // ||M||_2^2 is the top eigenvalue of the Gram matrix on the smaller side.
  const Matrix gram = m.rows() <= m.cols() ? Matrix(m * m.transpose())
                                           : Matrix(m.transpose() * m);
  Eigen::SelfAdjointEigenSolver<Matrix> es(gram, Eigen::EigenvaluesOnly);
  return std::sqrt(std::max(0.0, es.eigenvalues()(es.eigenvalues().size() - 1)));
}

/// Smallest eigenvalue of the symmetric part of a square matrix.
inline double min_symmetric_eigenvalue(const Matrix& m) {
  require_square(m, "min_symmetric_eigenvalue");
  if (m.rows() == 1) return m(0, 0);
  Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrize(m), Eigen::EigenvaluesOnly);
  return es.eigenvalues()(0);
}

inline double asymmetry(const Matrix& m) {
  require_square(m, "asymmetry");
  return op_norm(m - m.transpose());
}

inline bool is_self_adjoint(const Matrix& m, double tol) {
  require_square(m, "is_self_adjoint");
  return asymmetry(m) <= tol * (1.0 + op_norm(m));
}

inline bool is_nonnegative(const Matrix& m, double tol) {
  require_square(m, "is_nonnegative");
  const double scale = 1.0 + op_norm(m);
  if (asymmetry(m) > tol * scale) {
    throw InvalidInput("is_nonnegative: matrix is not self-adjoint within tolerance");
  }
  return min_symmetric_eigenvalue(m) >= -tol * scale;
}

/// A <= B in the Loewner order, i.e. B - A is nonnegative.
inline bool loewner_leq(const Matrix& a, const Matrix& b, double tol) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw InvalidInput("loewner_leq: shape mismatch");
  }
  require_square(a, "loewner_leq");
  return is_nonnegative(b - a, tol);
}

inline double quadratic_form(const Matrix& m, const Vector& x) {
  require_square(m, "quadratic_form");
  if (m.cols() != x.size()) throw InvalidInput("quadratic_form: dimension mismatch");
  return (m * x).dot(x);
}

inline SymmetryReport symmetry_report(const Matrix& m, double tol) {
  require_square(m, "symmetry_report");
  SymmetryReport r;
  const double scale = 1.0 + op_norm(m);
  r.asymmetry = asymmetry(m);
  r.min_eigenvalue = min_symmetric_eigenvalue(m);
  r.self_adjoint = r.asymmetry <= tol * scale;
  r.nonnegative = r.self_adjoint && r.min_eigenvalue >= -tol * scale;
  return r;
}

}  // namespace mriccati
