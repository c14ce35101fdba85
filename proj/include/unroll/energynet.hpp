#pragma once

#include <string>
#include <vector>

#include "unroll/matrix.hpp"
#include "unroll/rng.hpp"

namespace unroll {

// Small dense network g: R^in -> R^out. One affine layer when hidden_dim == 0,
// otherwise affine -> tanh -> affine. Weight rows are output coordinates.
struct DenseNetParams {
  struct DenseLayer {
    Matrix w;
    Vector b;
  };
  std::vector<DenseLayer> layers;

  int in_dim() const { return layers.empty() ? 0 : layers.front().w.cols(); }
  int out_dim() const { return layers.empty() ? 0 : layers.back().w.rows(); }
  int hidden_dim() const { return layers.size() < 2 ? 0 : layers.front().w.rows(); }
  void validate() const;
};

// Parametrized energy matrix. For an input frame U and feature vector z,
//   Q(x) = U diag([lambda_g(z), mu, L]) U^T,
// where lambda_g = mu + (L - mu) * sigmoid(g(z)) gives the learned interior
// eigenvalues and the last two are pinned to mu and L exactly, keeping every
// produced Q inside the certified class.
struct EnergyNet {
  DenseNetParams g;
  double mu = 0.0;
  double L = 0.0;

  // dimension of Q = g output dim + 2 pinned eigenvalues
  int q_dim() const { return g.out_dim() + 2; }
  void validate() const;
};

struct InputPoint {
  Vector z;  // features fed to g
  Matrix u;  // orthogonal eigenframe of this input
};

// Intermediates of one q_forward evaluation, consumed by q_backward.
struct EnergyCache {
  Vector z;
  std::vector<Vector> preacts;   // per affine layer, pre-activation output
  std::vector<Vector> activs;    // inputs to each affine layer (activs[0] = z)
  Vector raw;                    // g(z)
  Vector lambdas;                // [learned..., mu, L]
};

// lambdas(z): learned eigenvalues followed by the pinned mu and L.
Vector eig_forward(const EnergyNet& net, const Vector& z, EnergyCache* cache = nullptr);

// Q(x) for one input point.
Matrix q_forward(const EnergyNet& net, const InputPoint& x, EnergyCache* cache = nullptr);

// Chains an upstream dLoss/dQ through the eigenvalue construction and the
// dense layers. Gradients for the pinned eigenvalues are discarded.
DenseNetParams q_backward(const EnergyNet& net, const InputPoint& x, const EnergyCache& cache, const Matrix& dq);

// Hidden-width-3 ground-truth parametrization with uniform fan-in init.
EnergyNet make_ground_truth(SeededRng& rng, int z_dim = 10, int out_dim = 3, double mu = 0.1, double L = 1.0);

// Fresh trainable net of the requested hidden width (0 = single affine layer).
EnergyNet make_energy_net(SeededRng& rng, int hidden_dim, int z_dim = 10, int out_dim = 3, double mu = 0.1,
                          double L = 1.0);

// Mean squared Frobenius distance (1/n) sum ||Q_a(x) - Q_b(x)||_F^2.
double q_error(const EnergyNet& a, const EnergyNet& b, const std::vector<InputPoint>& inputs);

std::string energy_net_to_json(const EnergyNet& net);
EnergyNet energy_net_from_json(const std::string& text);

}  // namespace unroll
