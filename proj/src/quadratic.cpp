#include "unroll/quadratic.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace unroll {

void QuadraticProblem::validate() const {
  if (q.rows() != q.cols()) throw std::invalid_argument("QuadraticProblem: Q not square");
  if (static_cast<int>(b.size()) != q.rows()) throw std::invalid_argument("QuadraticProblem: b size mismatch");
  if (!(mu > 0.0) || !(L >= mu)) throw std::invalid_argument("QuadraticProblem: need 0 < mu <= L");
  if (!all_finite(q) || !all_finite(b)) throw std::invalid_argument("QuadraticProblem: non-finite entries");
  if (relative_asymmetry(q) > 1e-10) throw std::invalid_argument("QuadraticProblem: Q not symmetric within 1e-10");
  const SymEig eig = sym_eig(q);
  if (eig.lambdas.front() < mu - 1e-9 || eig.lambdas.back() > L + 1e-9)
    throw std::domain_error("QuadraticProblem: spectrum outside [mu, L]");
}

Matrix make_spd(const Matrix& u, const Vector& lambdas, double mu, double L) {
  if (u.rows() != u.cols()) throw std::invalid_argument("make_spd: U not square");
  if (static_cast<int>(lambdas.size()) != u.rows()) throw std::invalid_argument("make_spd: lambda count mismatch");
  const int d = u.rows();
  const Matrix utu = matmul(transpose(u), u);
  if (max_abs(utu - Matrix::identity(d)) > 1e-10) throw std::domain_error("make_spd: U not orthogonal within 1e-10");
  for (double l : lambdas)
    if (!(l >= mu && l <= L)) throw std::domain_error("make_spd: eigenvalue outside [mu, L]");

  Matrix q(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = i; j < d; ++j) {
      double s = 0.0;
      for (int k = 0; k < d; ++k) s += lambdas[k] * u(i, k) * u(j, k);
      q(i, j) = s;
      q(j, i) = s;  // exactly symmetric by construction
    }
  return q;
}

Vector opt_solve(const QuadraticProblem& p) {
  if (p.q.rows() != p.q.cols() || static_cast<int>(p.b.size()) != p.q.rows())
    throw std::invalid_argument("opt_solve: shape mismatch");
  const SymEig eig = sym_eig(p.q);
  if (eig.lambdas.front() < p.mu - 1e-9)
    throw std::domain_error("opt_solve: spectrum below mu, problem ill-conditioned for this class");
  // y* = -V diag(1/lambda) V^T b
  const Vector c = matvec_t(eig.vectors, p.b);
  Vector scaled(c.size());
  for (size_t i = 0; i < c.size(); ++i) scaled[i] = -c[i] / eig.lambdas[i];
  return matvec(eig.vectors, scaled);
}

QuadraticProblem sample_spd_problem(SeededRng& rng, int d, double mu, double L, double b_range) {
  if (d <= 0) throw std::invalid_argument("sample_spd_problem: dimension must be positive");
  if (!(mu > 0.0) || !(L >= mu)) throw std::invalid_argument("sample_spd_problem: need 0 < mu <= L");
  if (d == 1 && mu != L)
    throw std::invalid_argument("sample_spd_problem: d == 1 cannot pin both endpoints unless mu == L");

  const Matrix u = haar_orthogonal(rng, d);
  Vector lambdas(d);
  for (int i = 0; i < d; ++i) lambdas[i] = rng.uniform(mu, L);
  // Pin the extremes so the sampled problem attains mu and L exactly.
  int imin = 0, imax = 0;
  for (int i = 1; i < d; ++i) {
    if (lambdas[i] < lambdas[imin]) imin = i;
    if (lambdas[i] > lambdas[imax]) imax = i;
  }
  if (d > 1 && imin == imax) imax = (imin + 1) % d;  // all draws equal (measure zero)
  lambdas[imin] = mu;
  lambdas[imax] = L;

  QuadraticProblem p;
  p.q = make_spd(u, lambdas, mu, L);
  p.b.resize(d);
  for (int i = 0; i < d; ++i) p.b[i] = rng.uniform(-b_range, b_range);
  p.mu = mu;
  p.L = L;
  return p;
}

}  // namespace unroll
