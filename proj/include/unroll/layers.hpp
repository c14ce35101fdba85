#pragma once

#include <optional>
#include <variant>
#include <vector>

#include "unroll/matrix.hpp"

namespace unroll {

enum class Alg { kGd, kNag, kRnn };

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  double width() const { return hi - lo; }
  double midpoint() const { return 0.5 * (lo + hi); }
  bool contains(double x) const { return x >= lo && x <= hi; }
};

// Step-size interval on which the convergence/stability/sensitivity bounds
// for the algorithm hold: [c0, 2/(mu+L)] for plain gradient descent,
// [c0, 4/(mu+3L)] for the accelerated variant. Throws when c0 >= upper end.
Interval stable_region(Alg alg, double mu, double L, double c0);

// Clamp of phi onto the stable region; idempotent.
double project_phi(double phi, const Interval& region);

struct GdLayer {
  double phi = 0.0;  // step size
  int k = 0;         // unroll depth
};

struct NagLayer {
  double phi = 0.0;
  double mu = 0.0;  // strong-convexity constant the momentum schedule assumes
  int k = 0;
};

// Momentum coefficient beta = (1 - sqrt(mu phi)) / (1 + sqrt(mu phi)).
// Requires mu phi in (0, 1].
double nag_beta(double mu, double phi);
double nag_beta_dphi(double mu, double phi);  // d beta / d phi

// One recurrent cell evaluating
//   y_{t+1} = V relu(H_m relu(... H_1 relu(W_y y_t + W_g (Q y_t + b)))).
// V is d x h, W_y and W_g are h x d, hidden stages are h x h (possibly none).
struct RnnCellWeights {
  Matrix v;
  Matrix w_y;
  Matrix w_g;
  std::vector<Matrix> hidden;

  int state_dim() const { return v.rows(); }
  int hidden_dim() const { return v.cols(); }
  void validate() const;
};

struct RnnLayer {
  RnnCellWeights weights;
  int k = 0;
};

using Layer = std::variant<GdLayer, NagLayer, RnnLayer>;

// Everything the reverse pass needs. iterates holds y_0 .. y_k (y_0 = 0);
// aux holds z_0 .. z_k for the accelerated variant; preacts holds, per step,
// the pre-relu vectors of every cell stage for the recurrent layer.
struct UnrollTrace {
  std::vector<Vector> iterates;
  std::vector<Vector> aux;
  std::vector<std::vector<Vector>> preacts;
};

struct LayerGradients {
  Matrix dq;
  Vector db;
  double dphi = 0.0;
  std::optional<RnnCellWeights> dweights;
};

// Forward unrolls from y_0 = 0. Q/b are taken as given (not re-validated) so
// gradient checks may perturb single entries. Pass a trace to keep the
// intermediates needed by the reverse pass.
Vector gd_forward(const GdLayer& layer, const Matrix& q, const Vector& b, UnrollTrace* trace = nullptr);
Vector nag_forward(const NagLayer& layer, const Matrix& q, const Vector& b, UnrollTrace* trace = nullptr);
Vector rnn_forward(const RnnCellWeights& w, int k, const Matrix& q, const Vector& b, UnrollTrace* trace = nullptr);

// One application of the cell from an arbitrary state (the unrolled forward
// always starts at zero; this is the primitive the contraction certification
// exercises).
Vector rnn_step(const RnnCellWeights& w, const Matrix& q, const Vector& b, const Vector& y);

// Reverse-mode gradients of upstream^T y_k with respect to Q, b and the layer
// parameters (phi, or the cell weights). The trace must come from the
// matching forward call; shape mismatches throw.
LayerGradients gd_backward(const GdLayer& layer, const Matrix& q, const Vector& b, const UnrollTrace& trace,
                           const Vector& upstream);
LayerGradients nag_backward(const NagLayer& layer, const Matrix& q, const Vector& b, const UnrollTrace& trace,
                            const Vector& upstream);
LayerGradients rnn_backward(const RnnCellWeights& w, int k, const Matrix& q, const Vector& b, const UnrollTrace& trace,
                            const Vector& upstream);

Vector layer_forward(const Layer& layer, const Matrix& q, const Vector& b, UnrollTrace* trace = nullptr);
LayerGradients unroll_backward(const Layer& layer, const Matrix& q, const Vector& b, const UnrollTrace& trace,
                               const Vector& upstream);

int layer_depth(const Layer& layer);

}  // namespace unroll
