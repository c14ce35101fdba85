#include "unroll/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "unroll/linalg.hpp"
#include "unroll/rng.hpp"

namespace unroll {

Layer ModelState::layer() const {
  switch (alg) {
    case Alg::kGd:
      return GdLayer{phi, k};
    case Alg::kNag:
      return NagLayer{phi, mu, k};
    case Alg::kRnn:
      if (!rnn) throw std::logic_error("ModelState: recurrent model without cell weights");
      return RnnLayer{*rnn, k};
  }
  throw std::logic_error("ModelState: unknown algorithm");
}

void ModelState::validate() const {
  if (k < 0) throw std::invalid_argument("ModelState: negative depth");
  if (!(mu > 0.0) || !(L >= mu)) throw std::invalid_argument("ModelState: need 0 < mu <= L");
  if (alg == Alg::kRnn && !rnn) throw std::invalid_argument("ModelState: missing cell weights");
  if (energy) energy->validate();
  if (rnn) rnn->validate();
}

namespace {

void append_matrix_refs(Matrix& m, std::vector<double*>& refs) {
  for (size_t i = 0; i < m.size(); ++i) refs.push_back(m.data() + i);
}

void append_matrix_grad(const Matrix& m, std::vector<double>& grad) {
  for (size_t i = 0; i < m.size(); ++i) grad.push_back(m.data()[i]);
}

}  // namespace

std::vector<double*> trainable_refs(ModelState& m) {
  std::vector<double*> refs;
  if (m.energy) {
    for (DenseNetParams::DenseLayer& l : m.energy->g.layers) {
      append_matrix_refs(l.w, refs);
      for (double& x : l.b) refs.push_back(&x);
    }
  }
  switch (m.alg) {
    case Alg::kGd:
    case Alg::kNag:
      refs.push_back(&m.phi);
      break;
    case Alg::kRnn: {
      RnnCellWeights& w = *m.rnn;
      append_matrix_refs(w.w_y, refs);
      append_matrix_refs(w.w_g, refs);
      for (Matrix& h : w.hidden) append_matrix_refs(h, refs);
      append_matrix_refs(w.v, refs);
      break;
    }
  }
  return refs;
}

namespace {

// Shared tail of both loss paths: forward the layer, form the norm loss and
// its upstream, run the reverse pass.
struct LayerLoss {
  double loss;
  LayerGradients grads;
};

LayerLoss layer_loss(const ModelState& m, const Matrix& q, const Vector& b, const Vector& y_star) {
  const Layer layer = m.layer();
  UnrollTrace trace;
  const Vector y = layer_forward(layer, q, b, &trace);
  Vector residual(y.size());
  for (size_t i = 0; i < y.size(); ++i) residual[i] = y[i] - y_star[i];
  const double loss = norm2(residual);
  const double denom = std::max(loss, 1e-12);
  Vector upstream(residual.size());
  for (size_t i = 0; i < residual.size(); ++i) upstream[i] = residual[i] / denom;
  return {loss, unroll_backward(layer, q, b, trace, upstream)};
}

void append_layer_param_grads(const ModelState& m, const LayerGradients& lg, std::vector<double>& grad) {
  switch (m.alg) {
    case Alg::kGd:
    case Alg::kNag:
      grad.push_back(lg.dphi);
      break;
    case Alg::kRnn: {
      const RnnCellWeights& dw = *lg.dweights;
      append_matrix_grad(dw.w_y, grad);
      append_matrix_grad(dw.w_g, grad);
      for (const Matrix& h : dw.hidden) append_matrix_grad(h, grad);
      append_matrix_grad(dw.v, grad);
      break;
    }
  }
}

}  // namespace

LossGrad loss_and_grad(const ModelState& m, const InputPoint& x, const Vector& b, const Vector& y_star) {
  m.validate();
  if (!m.energy) throw std::invalid_argument("loss_and_grad: model has no energy net; use the direct-problem form");
  EnergyCache cache;
  const Matrix q = q_forward(*m.energy, x, &cache);
  const LayerLoss ll = layer_loss(m, q, b, y_star);
  const DenseNetParams energy_grads = q_backward(*m.energy, x, cache, ll.grads.dq);

  LossGrad out;
  out.loss = ll.loss;
  for (const DenseNetParams::DenseLayer& l : energy_grads.layers) {
    append_matrix_grad(l.w, out.grad);
    for (double g : l.b) out.grad.push_back(g);
  }
  append_layer_param_grads(m, ll.grads, out.grad);
  return out;
}

LossGrad loss_and_grad_l2o(const ModelState& m, const Matrix& q, const Vector& b, const Vector& y_star) {
  m.validate();
  if (m.energy) throw std::invalid_argument("loss_and_grad_l2o: model carries an energy net");
  const LayerLoss ll = layer_loss(m, q, b, y_star);
  LossGrad out;
  out.loss = ll.loss;
  append_layer_param_grads(m, ll.grads, out.grad);
  return out;
}

void sgd_step(std::vector<double*>& params, const std::vector<double>& grad, double lr) {
  if (params.size() != grad.size()) throw std::invalid_argument("sgd_step: size mismatch");
  for (size_t i = 0; i < params.size(); ++i) *params[i] -= lr * grad[i];
}

void adam_step(std::vector<double*>& params, const std::vector<double>& grad, AdamState& state, double lr, double beta1,
               double beta2, double eps) {
  if (params.size() != grad.size()) throw std::invalid_argument("adam_step: size mismatch");
  if (state.m.empty()) {
    state.m.assign(params.size(), 0.0);
    state.v.assign(params.size(), 0.0);
  }
  if (state.m.size() != params.size()) throw std::invalid_argument("adam_step: state size mismatch");
  state.t += 1;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.t));
  for (size_t i = 0; i < params.size(); ++i) {
    state.m[i] = beta1 * state.m[i] + (1.0 - beta1) * grad[i];
    state.v[i] = beta2 * state.v[i] + (1.0 - beta2) * grad[i] * grad[i];
    const double mhat = state.m[i] / bc1;
    const double vhat = state.v[i] / bc2;
    *params[i] -= lr * mhat / (std::sqrt(vhat) + eps);
  }
}

EvalResult evaluate(const ModelState& m, const SyntheticDataset& data, const std::vector<int>& idx) {
  if (!m.energy) throw std::invalid_argument("evaluate: model has no energy net");
  if (idx.empty()) throw std::invalid_argument("evaluate: empty index set");
  const Layer layer = m.layer();
  double loss_sum = 0.0;
  double q_sum = 0.0;
  for (int i : idx) {
    const SyntheticSample& s = data.samples[i];
    const InputPoint x = data.input(i);
    const Matrix q_theta = q_forward(*m.energy, x);
    const Vector y = layer_forward(layer, q_theta, s.b);
    loss_sum += norm2(y - s.y_star);
    const Matrix q_star = q_forward(data.star, x);
    const double f = frobenius_norm(q_theta - q_star);
    q_sum += f * f;
  }
  const double n = static_cast<double>(idx.size());
  return {loss_sum / n, q_sum / n};
}

EvalResult evaluate_l2o(const ModelState& m, const ProblemDataset& data, const std::vector<int>& idx) {
  if (idx.empty()) throw std::invalid_argument("evaluate_l2o: empty index set");
  const Layer layer = m.layer();
  double loss_sum = 0.0;
  for (int i : idx) {
    const ProblemSample& s = data.samples[i];
    const Vector y = layer_forward(layer, s.problem.q, s.problem.b);
    loss_sum += norm2(y - s.y_star);
  }
  return {loss_sum / static_cast<double>(idx.size()), 0.0};
}

std::string alg_name(Alg alg) {
  switch (alg) {
    case Alg::kGd:
      return "gd";
    case Alg::kNag:
      return "nag";
    case Alg::kRnn:
      return "rnn";
  }
  return "?";
}

Alg alg_from_name(const std::string& name) {
  if (name == "gd") return Alg::kGd;
  if (name == "nag") return Alg::kNag;
  if (name == "rnn") return Alg::kRnn;
  throw std::invalid_argument("unknown algorithm name: " + name);
}

std::pair<std::vector<int>, std::vector<int>> train_test_split(uint64_t seed, int n_total, int n_train) {
  if (n_train <= 0 || n_train >= n_total)
    throw std::invalid_argument("train_test_split: need 0 < n_train < n_total");
  std::vector<int> order(n_total);
  std::iota(order.begin(), order.end(), 0);
  SeededRng rng(seed, SeededRng::derive_stream(seed, 11));
  for (int i = 0; i < n_train; ++i) {  // partial Fisher-Yates
    const int j = i + static_cast<int>(rng.next_u64() % static_cast<uint64_t>(n_total - i));
    std::swap(order[i], order[j]);
  }
  std::vector<int> train(order.begin(), order.begin() + n_train);
  std::vector<int> test(order.begin() + n_train, order.end());
  std::sort(train.begin(), train.end());
  std::sort(test.begin(), test.end());
  return {train, test};
}

double rnn_contraction_coefficient(const RnnCellWeights& w, const std::vector<Matrix>& q_samples, double mu, double L) {
  w.validate();
  const int d = w.state_dim();
  double sup_inner = 0.0;
  auto probe = [&](const Matrix& q) {
    if (q.rows() != d || q.cols() != d) throw std::invalid_argument("rnn_contraction_coefficient: probe shape mismatch");
    Matrix m = w.w_y + matmul(w.w_g, q);
    sup_inner = std::max(sup_inner, spectral_norm(m));
  };
  for (const Matrix& q : q_samples) probe(q);
  probe(mu * Matrix::identity(d));
  probe(L * Matrix::identity(d));
  double c = spectral_norm(w.v) * sup_inner;
  for (const Matrix& h : w.hidden) c *= spectral_norm(h);
  return c;
}

ModelState init_model(const TrainConfig& cfg, double mu, double L, bool with_energy, int z_dim, int q_dim,
                      const std::vector<Matrix>& probe_qs, SeededRng& rng) {
  ModelState m;
  m.alg = cfg.alg;
  m.k = cfg.k;
  m.mu = mu;
  m.L = L;
  if (with_energy) {
    if (cfg.alg == Alg::kRnn)
      throw std::invalid_argument("init_model: recurrent cells are only used on directly given problems");
    m.energy = make_energy_net(rng, cfg.hidden_dim, z_dim, q_dim - 2, mu, L);
  }
  if (cfg.alg == Alg::kGd || cfg.alg == Alg::kNag) {
    m.phi = stable_region(cfg.alg, mu, L, cfg.c0).midpoint();
  } else {
    if (cfg.rnn_hidden.empty()) throw std::invalid_argument("init_model: empty cell widths");
    const int h = cfg.rnn_hidden.front();
    for (int w : cfg.rnn_hidden)
      if (w != h) throw std::invalid_argument("init_model: cell widths must be uniform");
    RnnCellWeights w;
    const double a_in = 1.0 / std::sqrt(static_cast<double>(q_dim));
    const double a_h = 1.0 / std::sqrt(static_cast<double>(h));
    w.w_y = Matrix(h, q_dim);
    w.w_g = Matrix(h, q_dim);
    for (size_t i = 0; i < w.w_y.size(); ++i) w.w_y.data()[i] = rng.uniform(-a_in, a_in);
    for (size_t i = 0; i < w.w_g.size(); ++i) w.w_g.data()[i] = rng.uniform(-a_in, a_in);
    for (size_t s = 0; s + 1 < cfg.rnn_hidden.size(); ++s) {
      Matrix stage(h, h);
      for (size_t i = 0; i < stage.size(); ++i) stage.data()[i] = rng.uniform(-a_h, a_h);
      w.hidden.push_back(std::move(stage));
    }
    w.v = Matrix(q_dim, h);
    for (size_t i = 0; i < w.v.size(); ++i) w.v.data()[i] = rng.uniform(-a_h, a_h);
    // Rescale V so the initial contraction coefficient over the probe set is
    // 0.9 (contractive but close to the edge); training leaves it free.
    const double c = rnn_contraction_coefficient(w, probe_qs, mu, L);
    if (!(c > 0.0)) throw std::runtime_error("init_model: degenerate cell init, contraction coefficient is zero");
    w.v = (0.9 / c) * w.v;
    m.rnn = std::move(w);
  }
  m.validate();
  return m;
}

namespace {

struct TrainOutcome {
  ModelState model;
  double final_train_loss = 0.0;
  bool failed = false;
};

// One lr point: minibatch passes with seeded shuffling; batch order and init
// are identical across lr points so the grid comparison is like-for-like.
template <class GradFn, class EvalFn>
TrainOutcome train_one_lr(const TrainConfig& cfg, const ModelState& init, double lr, int n_train,
                          const std::vector<int>& train_idx, GradFn&& batch_grad, EvalFn&& eval_train) {
  TrainOutcome out;
  out.model = init;
  std::vector<double*> params = trainable_refs(out.model);
  AdamState adam;
  const Interval region = (cfg.alg == Alg::kGd || cfg.alg == Alg::kNag)
                              ? stable_region(cfg.alg, out.model.mu, out.model.L, cfg.c0)
                              : Interval{};

  std::vector<int> order = train_idx;
  for (int epoch = 0; epoch < cfg.epochs && !out.failed; ++epoch) {
    SeededRng shuffle_rng(cfg.seed, SeededRng::derive_stream(cfg.seed, 1000 + static_cast<uint64_t>(epoch)));
    for (int i = n_train - 1; i > 0; --i) {
      const int j = static_cast<int>(shuffle_rng.next_u64() % static_cast<uint64_t>(i + 1));
      std::swap(order[i], order[j]);
    }
    for (int start = 0; start < n_train && !out.failed; start += cfg.batch_size) {
      const int end = std::min(start + cfg.batch_size, n_train);
      std::vector<double> grad;
      bool finite = true;
      for (int bi = start; bi < end; ++bi) {
        const LossGrad lg = batch_grad(out.model, order[bi]);
        if (!std::isfinite(lg.loss)) {
          finite = false;
          break;
        }
        if (grad.empty()) grad.assign(lg.grad.size(), 0.0);
        for (size_t gi = 0; gi < grad.size(); ++gi) grad[gi] += lg.grad[gi];
      }
      if (!finite) {
        out.failed = true;
        break;
      }
      const double inv = 1.0 / static_cast<double>(end - start);
      for (double& g : grad) g *= inv;
      if (!all_finite(grad)) {
        out.failed = true;
        break;
      }
      if (cfg.optimizer == TrainConfig::Optimizer::kAdam)
        adam_step(params, grad, adam, lr);
      else
        sgd_step(params, grad, lr);
      if (cfg.project_phi && (cfg.alg == Alg::kGd || cfg.alg == Alg::kNag))
        out.model.phi = project_phi(out.model.phi, region);
      if (!std::isfinite(out.model.phi)) out.failed = true;
    }
  }
  if (!out.failed) {
    out.final_train_loss = eval_train(out.model);
    if (!std::isfinite(out.final_train_loss)) out.failed = true;
  }
  return out;
}

template <class GradFn, class EvalTrainFn>
std::pair<ModelState, RunRecord> run_lr_grid(const TrainConfig& cfg, const ModelState& init, int n_train,
                                             const std::vector<int>& train_idx, GradFn&& batch_grad,
                                             EvalTrainFn&& eval_train) {
  std::optional<TrainOutcome> best;
  double best_lr = 0.0;
  for (double lr : cfg.lr_grid) {
    TrainOutcome o = train_one_lr(cfg, init, lr, n_train, train_idx, batch_grad, eval_train);
    if (o.failed) continue;
    if (!best || o.final_train_loss < best->final_train_loss) {
      best = std::move(o);
      best_lr = lr;
    }
  }
  if (!best) throw std::runtime_error("train_model: training diverged for every lr in the grid");

  RunRecord rec;
  rec.alg = alg_name(cfg.alg);
  rec.k = cfg.k;
  rec.hidden_dim = cfg.hidden_dim;
  rec.n_train = cfg.n_train;
  rec.best_lr = best_lr;
  rec.train_loss = best->final_train_loss;
  rec.seed = cfg.seed;
  rec.epochs_run = cfg.epochs;
  return {std::move(best->model), rec};
}

}  // namespace

RunRecord train_model(const TrainConfig& cfg, const SyntheticDataset& data, ModelState* out_model) {
  if (cfg.alg == Alg::kRnn)
    throw std::invalid_argument("train_model: recurrent cells train on directly given problems (use the l2o form)");
  if (cfg.lr_grid.empty()) throw std::invalid_argument("train_model: empty lr grid");
  auto [train_idx, test_idx] = train_test_split(cfg.seed, data.size(), cfg.n_train);

  SeededRng init_rng(cfg.seed, SeededRng::derive_stream(cfg.seed, 12));
  const ModelState init = init_model(cfg, data.spec.mu, data.spec.L, /*with_energy=*/true, data.spec.z_dim,
                                     data.spec.d, {}, init_rng);

  auto batch_grad = [&](const ModelState& m, int i) {
    const SyntheticSample& s = data.samples[i];
    return loss_and_grad(m, {s.z, s.u}, s.b, s.y_star);
  };
  auto eval_train = [&](const ModelState& m) { return evaluate(m, data, train_idx).mean_loss; };

  auto [model, rec] = run_lr_grid(cfg, init, cfg.n_train, train_idx, batch_grad, eval_train);
  const EvalResult test = evaluate(model, data, test_idx);
  rec.test_loss = test.mean_loss;
  rec.gap = rec.test_loss - rec.train_loss;
  rec.q_error = test.q_err;
  rec.phi_final = model.phi;
  if (out_model) *out_model = std::move(model);
  return rec;
}

RunRecord train_model_l2o(const TrainConfig& cfg, const ProblemDataset& data, ModelState* out_model) {
  if (cfg.lr_grid.empty()) throw std::invalid_argument("train_model_l2o: empty lr grid");
  auto [train_idx, test_idx] = train_test_split(cfg.seed, data.size(), cfg.n_train);

  // Probe set for the contraction coefficient: a few training problems plus
  // the class endpoints (added inside the coefficient call).
  std::vector<Matrix> probe_qs;
  for (int i = 0; i < std::min<int>(16, static_cast<int>(train_idx.size())); ++i)
    probe_qs.push_back(data.samples[train_idx[i]].problem.q);

  SeededRng init_rng(cfg.seed, SeededRng::derive_stream(cfg.seed, 12));
  const ModelState init =
      init_model(cfg, data.mu, data.L, /*with_energy=*/false, /*z_dim=*/0, data.d, probe_qs, init_rng);

  auto batch_grad = [&](const ModelState& m, int i) {
    const ProblemSample& s = data.samples[i];
    return loss_and_grad_l2o(m, s.problem.q, s.problem.b, s.y_star);
  };
  auto eval_train = [&](const ModelState& m) { return evaluate_l2o(m, data, train_idx).mean_loss; };

  auto [model, rec] = run_lr_grid(cfg, init, cfg.n_train, train_idx, batch_grad, eval_train);
  const EvalResult test = evaluate_l2o(model, data, test_idx);
  rec.test_loss = test.mean_loss;
  rec.gap = rec.test_loss - rec.train_loss;
  rec.q_error = 0.0;
  if (cfg.alg == Alg::kRnn)
    rec.c_phi_final = rnn_contraction_coefficient(*model.rnn, probe_qs, data.mu, data.L);
  else
    rec.phi_final = model.phi;
  if (out_model) *out_model = std::move(model);
  return rec;
}

}  // namespace unroll
