#pragma once

#include "unroll/linalg.hpp"
#include "unroll/matrix.hpp"
#include "unroll/rng.hpp"

namespace unroll {

// Energy f(y) = 1/2 y^T Q y + b^T y with spectrum(Q) inside [mu, L].
struct QuadraticProblem {
  Matrix q;
  Vector b;
  double mu = 0.0;
  double L = 0.0;

  int dim() const { return q.rows(); }
  // Throws if Q is asymmetric, entries are non-finite, or the spectrum
  // leaves [mu - 1e-9, L + 1e-9].
  void validate() const;
};

// U diag(lambdas) U^T. Requires U orthogonal within 1e-10 and every
// lambda inside [mu, L] (spectrum error otherwise).
Matrix make_spd(const Matrix& u, const Vector& lambdas, double mu, double L);

// Exact minimizer of f, i.e. the solution of Q y = -b, computed through the
// eigendecomposition of Q. Residual ||Q y + b|| <= 1e-10 (1 + ||b||).
Vector opt_solve(const QuadraticProblem& p);

// Random member of the problem class: Haar frame, eigenvalues uniform in
// [mu, L] with the smallest/largest pinned to exactly mu and L, and b with
// coordinates uniform in [-b_range, b_range]. d == 1 requires mu == L.
QuadraticProblem sample_spd_problem(SeededRng& rng, int d, double mu, double L, double b_range);

}  // namespace unroll
