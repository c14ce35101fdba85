#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "unroll/dataset.hpp"
#include "unroll/energynet.hpp"
#include "unroll/layers.hpp"

namespace unroll {

struct TrainConfig {
  Alg alg = Alg::kGd;
  int k = 5;
  int hidden_dim = 0;  // energy-net hidden width (0 = single affine layer)
  int n_train = 500;
  int epochs = 200;
  int batch_size = 64;
  enum class Optimizer { kSgd, kAdam } optimizer = Optimizer::kAdam;
  std::vector<double> lr_grid = {1e-2, 5e-3, 1e-3, 5e-4, 1e-4};
  double c0 = 1e-3;
  bool project_phi = true;                   // clamp phi to the stable region after each step
  std::vector<int> rnn_hidden = {20, 20, 20};  // cell activation widths (uniform)
  uint64_t seed = 0;
};

// A trainable model: either an energy net feeding a gd/nag layer (phi also
// trainable), or a bare layer applied to given problems — gd/nag with phi as
// the only parameter, or a recurrent cell with all weights trainable.
struct ModelState {
  Alg alg = Alg::kGd;
  int k = 0;
  double mu = 0.1;
  double L = 1.0;
  double phi = 0.0;
  std::optional<EnergyNet> energy;
  std::optional<RnnCellWeights> rnn;

  Layer layer() const;
  void validate() const;
};

// Pointers to every trainable scalar, in a fixed canonical order (energy
// layers weight-then-bias, then phi; or for cells: w_y, w_g, hidden stages,
// v — all row-major). Gradients below use the same order.
std::vector<double*> trainable_refs(ModelState& m);

struct LossGrad {
  double loss = 0.0;
  std::vector<double> grad;
};

// loss = || layer(Q_theta(x), b) - y_star ||_2, gradient w.r.t. the
// trainables. The norm's upstream is residual / max(||residual||, 1e-12).
LossGrad loss_and_grad(const ModelState& m, const InputPoint& x, const Vector& b, const Vector& y_star);

// Same loss for a directly given problem (no energy net in the chain).
LossGrad loss_and_grad_l2o(const ModelState& m, const Matrix& q, const Vector& b, const Vector& y_star);

void sgd_step(std::vector<double*>& params, const std::vector<double>& grad, double lr);

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  long t = 0;
};

void adam_step(std::vector<double*>& params, const std::vector<double>& grad, AdamState& state, double lr,
               double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

struct EvalResult {
  double mean_loss = 0.0;
  double q_err = 0.0;  // mean squared Frobenius distance to the ground truth (energy mode only)
};

EvalResult evaluate(const ModelState& m, const SyntheticDataset& data, const std::vector<int>& idx);
EvalResult evaluate_l2o(const ModelState& m, const ProblemDataset& data, const std::vector<int>& idx);

struct RunRecord {
  std::string alg;
  int k = 0;
  int hidden_dim = 0;
  int n_train = 0;
  double best_lr = 0.0;
  double train_loss = 0.0;
  double test_loss = 0.0;
  double gap = 0.0;
  double q_error = 0.0;
  std::optional<double> phi_final;
  std::optional<double> c_phi_final;
  uint64_t seed = 0;
  int epochs_run = 0;
};

std::string alg_name(Alg alg);
Alg alg_from_name(const std::string& name);

// Trains one model per lr in the grid (same seed-derived init and batch
// order for each), keeps the lr with the lowest final training loss, and
// evaluates on the held-out complement of the per-seed training subset.
// Diverged lrs are excluded; if every lr diverges this throws.
RunRecord train_model(const TrainConfig& cfg, const SyntheticDataset& data, ModelState* out_model = nullptr);
RunRecord train_model_l2o(const TrainConfig& cfg, const ProblemDataset& data, ModelState* out_model = nullptr);

// Per-seed split: n_train distinct indices drawn from the dataset, then the
// complement. Shared by training and the generalization checks.
std::pair<std::vector<int>, std::vector<int>> train_test_split(uint64_t seed, int n_total, int n_train);

// Contraction coefficient of a cell over probe matrices plus the class
// endpoints mu*I and L*I: ||V|| * sup_Q ||W_y + W_g Q|| * prod ||hidden||.
double rnn_contraction_coefficient(const RnnCellWeights& w, const std::vector<Matrix>& q_samples, double mu, double L);

// Fresh model for a config: energy net + midpoint phi, or bare phi, or a
// fan-in-initialized cell with V rescaled so the initial contraction
// coefficient over the probe set is 0.9.
ModelState init_model(const TrainConfig& cfg, double mu, double L, bool with_energy, int z_dim, int q_dim,
                      const std::vector<Matrix>& probe_qs, SeededRng& rng);

}  // namespace unroll
