#include "unroll/layers.hpp"

#include <cmath>
#include <stdexcept>

namespace unroll {

Interval stable_region(Alg alg, double mu, double L, double c0) {
  if (!(mu > 0.0) || !(L >= mu)) throw std::invalid_argument("stable_region: need 0 < mu <= L");
  if (!(c0 > 0.0)) throw std::invalid_argument("stable_region: c0 must be positive");
  double hi = 0.0;
  switch (alg) {
    case Alg::kGd:
      hi = 2.0 / (mu + L);
      break;
    case Alg::kNag:
      hi = 4.0 / (mu + 3.0 * L);
      break;
    case Alg::kRnn:
      throw std::invalid_argument("stable_region: recurrent cells use the contraction coefficient, not a step interval");
  }
  if (c0 >= hi) throw std::domain_error("stable_region: empty region, c0 >= upper endpoint");
  return {c0, hi};
}

double project_phi(double phi, const Interval& region) {
  if (!(region.lo <= region.hi)) throw std::invalid_argument("project_phi: malformed region");
  return std::min(std::max(phi, region.lo), region.hi);
}

double nag_beta(double mu, double phi) {
  const double mp = mu * phi;
  if (!(mp > 0.0) || mp > 1.0 + 1e-12)
    throw std::domain_error("nag_beta: mu*phi must lie in (0, 1] for the momentum schedule");
  const double r = std::sqrt(mp);
  return (1.0 - r) / (1.0 + r);
}

double nag_beta_dphi(double mu, double phi) {
  const double mp = mu * phi;
  if (!(mp > 0.0) || mp > 1.0 + 1e-12) throw std::domain_error("nag_beta_dphi: mu*phi outside (0, 1]");
  const double r = std::sqrt(mp);
  return -mu / (r * (1.0 + r) * (1.0 + r));
}

void RnnCellWeights::validate() const {
  const int d = v.rows();
  const int h = v.cols();
  if (d <= 0 || h <= 0) throw std::invalid_argument("RnnCellWeights: empty shapes");
  if (w_y.rows() != h || w_y.cols() != d) throw std::invalid_argument("RnnCellWeights: w_y must be h x d");
  if (w_g.rows() != h || w_g.cols() != d) throw std::invalid_argument("RnnCellWeights: w_g must be h x d");
  for (const Matrix& m : hidden)
    if (m.rows() != h || m.cols() != h) throw std::invalid_argument("RnnCellWeights: hidden stages must be h x h");
}

namespace {

void check_problem_shapes(const Matrix& q, const Vector& b) {
  if (q.rows() != q.cols()) throw std::invalid_argument("unroll forward: Q not square");
  if (static_cast<int>(b.size()) != q.rows()) throw std::invalid_argument("unroll forward: b size mismatch");
}

Vector relu(const Vector& u) {
  Vector r(u.size());
  for (size_t i = 0; i < u.size(); ++i) r[i] = u[i] > 0.0 ? u[i] : 0.0;
  return r;
}

}  // namespace

Vector gd_forward(const GdLayer& layer, const Matrix& q, const Vector& b, UnrollTrace* trace) {
  check_problem_shapes(q, b);
  if (layer.k < 0) throw std::invalid_argument("gd_forward: negative depth");
  Vector y(b.size(), 0.0);
  if (trace) {
    *trace = UnrollTrace{};
    trace->iterates.push_back(y);
  }
  for (int t = 0; t < layer.k; ++t) {
    Vector g = matvec(q, y);
    for (size_t i = 0; i < g.size(); ++i) y[i] -= layer.phi * (g[i] + b[i]);
    if (trace) trace->iterates.push_back(y);
  }
  return y;
}

Vector nag_forward(const NagLayer& layer, const Matrix& q, const Vector& b, UnrollTrace* trace) {
  check_problem_shapes(q, b);
  if (layer.k < 0) throw std::invalid_argument("nag_forward: negative depth");
  const double beta = layer.k > 0 ? nag_beta(layer.mu, layer.phi) : 0.0;
  Vector y(b.size(), 0.0);
  Vector z(b.size(), 0.0);
  if (trace) {
    *trace = UnrollTrace{};
    trace->iterates.push_back(y);
    trace->aux.push_back(z);
  }
  for (int t = 0; t < layer.k; ++t) {
    const Vector g = matvec(q, z);
    Vector y_next(y.size());
    for (size_t i = 0; i < y.size(); ++i) y_next[i] = z[i] - layer.phi * (g[i] + b[i]);
    for (size_t i = 0; i < y.size(); ++i) z[i] = y_next[i] + beta * (y_next[i] - y[i]);
    y = std::move(y_next);
    if (trace) {
      trace->iterates.push_back(y);
      trace->aux.push_back(z);
    }
  }
  return y;
}

namespace {

Vector rnn_step_impl(const RnnCellWeights& w, const Matrix& q, const Vector& b, const Vector& y,
                     std::vector<Vector>* pre) {
  Vector g = matvec(q, y);
  for (size_t i = 0; i < g.size(); ++i) g[i] += b[i];
  Vector u = matvec(w.w_y, y);
  const Vector ug = matvec(w.w_g, g);
  for (size_t i = 0; i < u.size(); ++i) u[i] += ug[i];
  if (pre) pre->push_back(u);
  Vector h = relu(u);
  for (const Matrix& stage : w.hidden) {
    u = matvec(stage, h);
    if (pre) pre->push_back(u);
    h = relu(u);
  }
  return matvec(w.v, h);
}

}  // namespace

Vector rnn_step(const RnnCellWeights& w, const Matrix& q, const Vector& b, const Vector& y) {
  w.validate();
  check_problem_shapes(q, b);
  if (w.state_dim() != q.rows()) throw std::invalid_argument("rnn_step: cell state dim != problem dim");
  if (y.size() != b.size()) throw std::invalid_argument("rnn_step: state dim != problem dim");
  return rnn_step_impl(w, q, b, y, nullptr);
}

Vector rnn_forward(const RnnCellWeights& w, int k, const Matrix& q, const Vector& b, UnrollTrace* trace) {
  w.validate();
  check_problem_shapes(q, b);
  if (w.state_dim() != q.rows()) throw std::invalid_argument("rnn_forward: cell state dim != problem dim");
  if (k < 0) throw std::invalid_argument("rnn_forward: negative depth");
  Vector y(b.size(), 0.0);
  if (trace) {
    *trace = UnrollTrace{};
    trace->iterates.push_back(y);
  }
  for (int t = 0; t < k; ++t) {
    std::vector<Vector> pre;
    y = rnn_step_impl(w, q, b, y, trace ? &pre : nullptr);
    if (trace) {
      trace->iterates.push_back(y);
      trace->preacts.push_back(std::move(pre));
    }
  }
  return y;
}

namespace {

void check_trace(const UnrollTrace& trace, int k, size_t dim, const Vector& upstream) {
  if (trace.iterates.size() != static_cast<size_t>(k) + 1)
    throw std::invalid_argument("unroll_backward: trace depth does not match layer depth");
  for (const Vector& y : trace.iterates)
    if (y.size() != dim) throw std::invalid_argument("unroll_backward: trace dimension mismatch");
  if (upstream.size() != dim) throw std::invalid_argument("unroll_backward: upstream dimension mismatch");
}

}  // namespace

LayerGradients gd_backward(const GdLayer& layer, const Matrix& q, const Vector& b, const UnrollTrace& trace,
                           const Vector& upstream) {
  check_problem_shapes(q, b);
  check_trace(trace, layer.k, b.size(), upstream);
  const int d = static_cast<int>(b.size());

  LayerGradients grads;
  grads.dq = Matrix(d, d);
  grads.db = Vector(d, 0.0);

  Vector a = upstream;  // adjoint of y_{t+1}
  for (int t = layer.k - 1; t >= 0; --t) {
    const Vector& y_t = trace.iterates[t];
    const Vector g = matvec(q, y_t);
    double s = 0.0;
    for (int i = 0; i < d; ++i) s += a[i] * (g[i] + b[i]);
    grads.dphi -= s;
    add_outer(-layer.phi, a, y_t, grads.dq);
    axpy(-layer.phi, a, grads.db);
    // a_t = (I - phi Q)^T a_{t+1}
    const Vector qa = matvec_t(q, a);
    for (int i = 0; i < d; ++i) a[i] -= layer.phi * qa[i];
  }
  return grads;
}

LayerGradients nag_backward(const NagLayer& layer, const Matrix& q, const Vector& b, const UnrollTrace& trace,
                            const Vector& upstream) {
  check_problem_shapes(q, b);
  check_trace(trace, layer.k, b.size(), upstream);
  if (trace.aux.size() != trace.iterates.size())
    throw std::invalid_argument("nag_backward: trace missing aux iterates");
  const int d = static_cast<int>(b.size());

  LayerGradients grads;
  grads.dq = Matrix(d, d);
  grads.db = Vector(d, 0.0);
  if (layer.k == 0) return grads;

  const double beta = nag_beta(layer.mu, layer.phi);
  double dbeta = 0.0;
  Vector ay = upstream;        // adjoint of y_{t+1}
  Vector az(b.size(), 0.0);    // adjoint of z_{t+1}
  for (int t = layer.k - 1; t >= 0; --t) {
    const Vector& y_t = trace.iterates[t];
    const Vector& y_next = trace.iterates[t + 1];
    const Vector& z_t = trace.aux[t];
    // z_{t+1} = (1 + beta) y_{t+1} - beta y_t
    Vector gy(d);
    for (int i = 0; i < d; ++i) {
      gy[i] = ay[i] + (1.0 + beta) * az[i];
      dbeta += az[i] * (y_next[i] - y_t[i]);
    }
    // y_{t+1} = z_t - phi (Q z_t + b)
    const Vector g = matvec(q, z_t);
    double s = 0.0;
    for (int i = 0; i < d; ++i) s += gy[i] * (g[i] + b[i]);
    grads.dphi -= s;
    add_outer(-layer.phi, gy, z_t, grads.dq);
    axpy(-layer.phi, gy, grads.db);
    const Vector qgy = matvec_t(q, gy);
    Vector az_prev(d);
    for (int i = 0; i < d; ++i) az_prev[i] = gy[i] - layer.phi * qgy[i];
    Vector ay_prev(d);
    for (int i = 0; i < d; ++i) ay_prev[i] = -beta * az[i];
    ay = std::move(ay_prev);
    az = std::move(az_prev);
  }
  grads.dphi += dbeta * nag_beta_dphi(layer.mu, layer.phi);
  return grads;
}

LayerGradients rnn_backward(const RnnCellWeights& w, int k, const Matrix& q, const Vector& b, const UnrollTrace& trace,
                            const Vector& upstream) {
  w.validate();
  check_problem_shapes(q, b);
  check_trace(trace, k, b.size(), upstream);
  if (trace.preacts.size() != static_cast<size_t>(k))
    throw std::invalid_argument("rnn_backward: trace missing preactivations");
  const int d = w.state_dim();
  const int h = w.hidden_dim();
  const size_t stages = w.hidden.size() + 1;

  LayerGradients grads;
  grads.dq = Matrix(d, d);
  grads.db = Vector(d, 0.0);
  RnnCellWeights dw;
  dw.v = Matrix(d, h);
  dw.w_y = Matrix(h, d);
  dw.w_g = Matrix(h, d);
  for (const Matrix& m : w.hidden) dw.hidden.emplace_back(m.rows(), m.cols());

  Vector gy = upstream;  // adjoint of y_{t+1}
  for (int t = k - 1; t >= 0; --t) {
    const std::vector<Vector>& pre = trace.preacts[t];
    if (pre.size() != stages) throw std::invalid_argument("rnn_backward: preactivation stage count mismatch");
    const Vector& y_t = trace.iterates[t];
    Vector g = matvec(q, y_t);
    for (int i = 0; i < d; ++i) g[i] += b[i];

    // y_{t+1} = V h_m
    const Vector h_last = relu(pre.back());
    add_outer(1.0, gy, h_last, dw.v);
    Vector delta = matvec_t(w.v, gy);
    for (int j = static_cast<int>(w.hidden.size()) - 1; j >= 0; --j) {
      const Vector& u = pre[j + 1];
      for (int i = 0; i < h; ++i) delta[i] = u[i] > 0.0 ? delta[i] : 0.0;
      const Vector h_prev = relu(pre[j]);
      add_outer(1.0, delta, h_prev, dw.hidden[j]);
      delta = matvec_t(w.hidden[j], delta);
    }
    for (int i = 0; i < h; ++i) delta[i] = pre[0][i] > 0.0 ? delta[i] : 0.0;
    // u_0 = W_y y_t + W_g (Q y_t + b)
    add_outer(1.0, delta, y_t, dw.w_y);
    add_outer(1.0, delta, g, dw.w_g);
    const Vector wg_delta = matvec_t(w.w_g, delta);
    add_outer(1.0, wg_delta, y_t, grads.dq);
    axpy(1.0, wg_delta, grads.db);
    Vector gy_prev = matvec_t(w.w_y, delta);
    const Vector q_term = matvec_t(q, wg_delta);
    for (int i = 0; i < d; ++i) gy_prev[i] += q_term[i];
    gy = std::move(gy_prev);
  }
  grads.dweights = std::move(dw);
  return grads;
}

Vector layer_forward(const Layer& layer, const Matrix& q, const Vector& b, UnrollTrace* trace) {
  return std::visit(
      [&](const auto& l) -> Vector {
        using T = std::decay_t<decltype(l)>;
        if constexpr (std::is_same_v<T, GdLayer>) return gd_forward(l, q, b, trace);
        else if constexpr (std::is_same_v<T, NagLayer>) return nag_forward(l, q, b, trace);
        else return rnn_forward(l.weights, l.k, q, b, trace);
      },
      layer);
}

LayerGradients unroll_backward(const Layer& layer, const Matrix& q, const Vector& b, const UnrollTrace& trace,
                               const Vector& upstream) {
  return std::visit(
      [&](const auto& l) -> LayerGradients {
        using T = std::decay_t<decltype(l)>;
        if constexpr (std::is_same_v<T, GdLayer>) return gd_backward(l, q, b, trace, upstream);
        else if constexpr (std::is_same_v<T, NagLayer>) return nag_backward(l, q, b, trace, upstream);
        else return rnn_backward(l.weights, l.k, q, b, trace, upstream);
      },
      layer);
}

int layer_depth(const Layer& layer) {
  return std::visit([](const auto& l) { return l.k; }, layer);
}

}  // namespace unroll
