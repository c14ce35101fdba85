#pragma once

#include "unroll/matrix.hpp"
#include "unroll/rng.hpp"

namespace unroll {

struct SymEig {
  Vector lambdas;  // ascending
  Matrix vectors;  // columns, aligned with lambdas
};

// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
// Sweeps until the off-diagonal Frobenius norm falls below 1e-12 relative to
// the input's Frobenius norm (cap: 100 sweeps). Eigenvalues are returned in
// ascending order with eigenvector columns permuted to match.
SymEig sym_eig(const Matrix& a);

// Largest singular value. Symmetric inputs dispatch to sym_eig (max |lambda|);
// otherwise power iteration on A^T A from a deterministic start vector,
// stopping when the eigenvalue estimate moves by less than 1e-10 relative
// (cap: 10000 iterations).
double spectral_norm(const Matrix& a);

// Haar-distributed random orthogonal matrix: QR of a standard Gaussian
// matrix with the signs of diag(R) folded into Q's columns.
Matrix haar_orthogonal(SeededRng& rng, int d);

}  // namespace unroll
