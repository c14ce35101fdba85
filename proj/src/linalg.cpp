#include "unroll/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace unroll {

namespace {

double offdiag_frobenius(const Matrix& a) {
  double s = 0.0;
  for (int i = 0; i < a.rows(); ++i)
    for (int j = 0; j < a.cols(); ++j)
      if (i != j) s += a(i, j) * a(i, j);
  return std::sqrt(s);
}

}  // namespace

SymEig sym_eig(const Matrix& a) {
  if (a.rows() != a.cols()) throw std::invalid_argument("sym_eig: matrix not square");
  if (!all_finite(a)) throw std::invalid_argument("sym_eig: non-finite entries");
  if (relative_asymmetry(a) > 1e-10) throw std::invalid_argument("sym_eig: matrix not symmetric within 1e-10");

  const int d = a.rows();
  Matrix w = a;  // work copy, driven to diagonal
  Matrix v = Matrix::identity(d);
  const double scale = frobenius_norm(a);
  const double tol = 1e-12 * std::max(scale, 1e-300);

  if (scale > 0.0) {
    bool converged = offdiag_frobenius(w) <= tol;
    for (int sweep = 0; sweep < 100 && !converged; ++sweep) {
      for (int p = 0; p < d - 1; ++p) {
        for (int q = p + 1; q < d; ++q) {
          const double apq = w(p, q);
          if (std::fabs(apq) <= 1e-300) continue;
          // Rotation angle that annihilates w(p, q); Golub & Van Loan 8.5.
          const double theta = (w(q, q) - w(p, p)) / (2.0 * apq);
          const double t = (theta >= 0.0 ? 1.0 : -1.0) / (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
          const double c = 1.0 / std::sqrt(t * t + 1.0);
          const double s = t * c;
          for (int i = 0; i < d; ++i) {  // W <- J^T W J, applied by rows/cols
            const double wip = w(i, p), wiq = w(i, q);
            w(i, p) = c * wip - s * wiq;
            w(i, q) = s * wip + c * wiq;
          }
          for (int i = 0; i < d; ++i) {
            const double wpi = w(p, i), wqi = w(q, i);
            w(p, i) = c * wpi - s * wqi;
            w(q, i) = s * wpi + c * wqi;
          }
          for (int i = 0; i < d; ++i) {
            const double vip = v(i, p), viq = v(i, q);
            v(i, p) = c * vip - s * viq;
            v(i, q) = s * vip + c * viq;
          }
        }
      }
      converged = offdiag_frobenius(w) <= tol;
    }
    if (!converged) throw std::runtime_error("sym_eig: Jacobi sweeps did not converge within 100 sweeps");
  }

  std::vector<int> order(d);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int i, int j) { return w(i, i) < w(j, j); });

  SymEig out;
  out.lambdas.resize(d);
  out.vectors = Matrix(d, d);
  for (int j = 0; j < d; ++j) {
    out.lambdas[j] = w(order[j], order[j]);
    for (int i = 0; i < d; ++i) out.vectors(i, j) = v(i, order[j]);
  }
  return out;
}

double spectral_norm(const Matrix& a) {
  if (a.rows() == 0 || a.cols() == 0) return 0.0;
  if (!all_finite(a)) throw std::invalid_argument("spectral_norm: non-finite entries");
  if (a.rows() == a.cols() && relative_asymmetry(a) <= 1e-10) {
    const SymEig eig = sym_eig(a);
    double m = 0.0;
    for (double l : eig.lambdas) m = std::max(m, std::fabs(l));
    return m;
  }

  const int n = a.cols();
  // Lower bound from the largest row/column 2-norm; also the restart guard
  // against a start vector accidentally orthogonal to the top eigenspace.
  double lb = 0.0;
  for (int j = 0; j < n; ++j) {
    double s = 0.0;
    for (int i = 0; i < a.rows(); ++i) s += a(i, j) * a(i, j);
    lb = std::max(lb, std::sqrt(s));
  }
  for (int i = 0; i < a.rows(); ++i) {
    double s = 0.0;
    for (int j = 0; j < n; ++j) s += a(i, j) * a(i, j);
    lb = std::max(lb, std::sqrt(s));
  }
  if (lb == 0.0) return 0.0;

  auto run = [&](bool tilted) {
    Vector v(n);
    for (int i = 0; i < n; ++i) v[i] = tilted ? 1.0 + static_cast<double>(i + 1) / (8.0 * n) : 1.0;
    const double nv = norm2(v);
    for (double& x : v) x /= nv;
    double lambda = 0.0;
    for (int it = 0; it < 10000; ++it) {
      Vector bv = matvec_t(a, matvec(a, v));  // (A^T A) v
      const double nb = norm2(bv);
      if (nb == 0.0) return 0.0;
      const double next = nb;  // Rayleigh estimate of lambda_max(A^T A)
      for (size_t i = 0; i < bv.size(); ++i) v[i] = bv[i] / nb;
      if (std::fabs(next - lambda) <= 1e-10 * std::max(1.0, next)) return std::sqrt(next);
      lambda = next;
    }
    throw std::runtime_error("spectral_norm: power iteration did not converge within 10000 iterations");
  };

  double sigma = run(false);
  if (sigma < lb * (1.0 - 1e-9)) sigma = std::max(sigma, run(true));
  return std::max(sigma, lb);
}

Matrix haar_orthogonal(SeededRng& rng, int d) {
  if (d <= 0) throw std::invalid_argument("haar_orthogonal: dimension must be positive");
  Matrix g(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) g(i, j) = rng.normal();

  // Householder QR; reflectors stored in-place below the diagonal.
  std::vector<Vector> reflectors;
  Vector rdiag(d);
  for (int j = 0; j < d; ++j) {
    double nx = 0.0;
    for (int i = j; i < d; ++i) nx += g(i, j) * g(i, j);
    nx = std::sqrt(nx);
    const double x0 = g(j, j);
    const double alpha = x0 >= 0.0 ? -nx : nx;
    Vector v(d - j, 0.0);
    for (int i = j; i < d; ++i) v[i - j] = g(i, j);
    v[0] -= alpha;
    const double vv = dot(v, v);
    if (vv > 0.0) {
      for (int c = j; c < d; ++c) {  // apply H = I - 2 v v^T / (v^T v) to remaining columns
        double s = 0.0;
        for (int i = j; i < d; ++i) s += v[i - j] * g(i, c);
        s *= 2.0 / vv;
        for (int i = j; i < d; ++i) g(i, c) -= s * v[i - j];
      }
    }
    reflectors.push_back(std::move(v));
    rdiag[j] = g(j, j);
  }

  Matrix q = Matrix::identity(d);
  for (int j = d - 1; j >= 0; --j) {  // Q = H_0 H_1 ... H_{d-1}
    const Vector& v = reflectors[j];
    const double vv = dot(v, v);
    if (vv == 0.0) continue;
    for (int c = 0; c < d; ++c) {
      double s = 0.0;
      for (int i = j; i < d; ++i) s += v[i - j] * q(i, c);
      s *= 2.0 / vv;
      for (int i = j; i < d; ++i) q(i, c) -= s * v[i - j];
    }
  }

  // Fold signs of diag(R) into Q so the factorization with positive R diagonal
  // is unique; this is what makes the distribution exactly Haar.
  for (int j = 0; j < d; ++j) {
    if (rdiag[j] < 0.0)
      for (int i = 0; i < d; ++i) q(i, j) = -q(i, j);
  }
  return q;
}

}  // namespace unroll
