#include "unroll/energynet.hpp"

#include <cmath>
#include <stdexcept>

#include "json.hpp"
#include "unroll/quadratic.hpp"

namespace unroll {

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

void DenseNetParams::validate() const {
  if (layers.empty() || layers.size() > 2) throw std::invalid_argument("DenseNetParams: expected 1 or 2 layers");
  for (const DenseLayer& l : layers) {
    if (l.w.rows() != static_cast<int>(l.b.size())) throw std::invalid_argument("DenseNetParams: bias size mismatch");
    if (!all_finite(l.w) || !all_finite(l.b)) throw std::invalid_argument("DenseNetParams: non-finite parameters");
  }
  if (layers.size() == 2 && layers[0].w.rows() != layers[1].w.cols())
    throw std::invalid_argument("DenseNetParams: layer shapes do not chain");
}

void EnergyNet::validate() const {
  g.validate();
  if (!(mu > 0.0) || !(L >= mu)) throw std::invalid_argument("EnergyNet: need 0 < mu <= L");
}

Vector eig_forward(const EnergyNet& net, const Vector& z, EnergyCache* cache) {
  net.validate();
  if (static_cast<int>(z.size()) != net.g.in_dim()) throw std::invalid_argument("eig_forward: z dimension mismatch");
  if (cache) {
    *cache = EnergyCache{};
    cache->z = z;
  }

  Vector a = z;
  for (size_t li = 0; li < net.g.layers.size(); ++li) {
    const DenseNetParams::DenseLayer& layer = net.g.layers[li];
    if (cache) cache->activs.push_back(a);
    Vector pre = matvec(layer.w, a);
    for (size_t i = 0; i < pre.size(); ++i) pre[i] += layer.b[i];
    if (cache) cache->preacts.push_back(pre);
    if (li + 1 < net.g.layers.size()) {
      a.resize(pre.size());
      for (size_t i = 0; i < pre.size(); ++i) a[i] = std::tanh(pre[i]);
    } else {
      a = pre;
    }
  }

  Vector lambdas(a.size() + 2);
  for (size_t i = 0; i < a.size(); ++i) lambdas[i] = net.mu + (net.L - net.mu) * sigmoid(a[i]);
  lambdas[a.size()] = net.mu;
  lambdas[a.size() + 1] = net.L;
  if (cache) {
    cache->raw = a;
    cache->lambdas = lambdas;
  }
  return lambdas;
}

Matrix q_forward(const EnergyNet& net, const InputPoint& x, EnergyCache* cache) {
  const Vector lambdas = eig_forward(net, x.z, cache);
  if (x.u.rows() != net.q_dim() || x.u.cols() != net.q_dim())
    throw std::invalid_argument("q_forward: frame dimension mismatch");
  return make_spd(x.u, lambdas, net.mu, net.L);
}

DenseNetParams q_backward(const EnergyNet& net, const InputPoint& x, const EnergyCache& cache, const Matrix& dq) {
  net.validate();
  const int d = net.q_dim();
  if (dq.rows() != d || dq.cols() != d) throw std::invalid_argument("q_backward: dQ dimension mismatch");
  if (cache.preacts.size() != net.g.layers.size() || cache.raw.size() != static_cast<size_t>(net.g.out_dim()))
    throw std::invalid_argument("q_backward: cache does not match net");

  // dQ/dlambda_i = u_i u_i^T, so dL/dlambda_i = u_i^T dQ u_i (learned i only).
  const int n_learned = net.g.out_dim();
  Vector da(n_learned);
  for (int i = 0; i < n_learned; ++i) {
    Vector u_i(d);
    for (int r = 0; r < d; ++r) u_i[r] = x.u(r, i);
    const Vector dqu = matvec(dq, u_i);
    const double dlam = dot(u_i, dqu);
    const double s = sigmoid(cache.raw[i]);
    da[i] = dlam * (net.L - net.mu) * s * (1.0 - s);
  }

  DenseNetParams grads;
  grads.layers.resize(net.g.layers.size());
  Vector delta = da;
  for (int li = static_cast<int>(net.g.layers.size()) - 1; li >= 0; --li) {
    const DenseNetParams::DenseLayer& layer = net.g.layers[li];
    DenseNetParams::DenseLayer& gl = grads.layers[li];
    gl.w = Matrix(layer.w.rows(), layer.w.cols());
    gl.b = delta;
    add_outer(1.0, delta, cache.activs[li], gl.w);
    if (li > 0) {
      delta = matvec_t(layer.w, delta);
      const Vector& pre = cache.preacts[li - 1];
      for (size_t i = 0; i < delta.size(); ++i) {
        const double th = std::tanh(pre[i]);
        delta[i] *= 1.0 - th * th;
      }
    }
  }
  return grads;
}

namespace {

DenseNetParams::DenseLayer init_layer(SeededRng& rng, int out, int in) {
  DenseNetParams::DenseLayer l;
  l.w = Matrix(out, in);
  l.b = Vector(out, 0.0);
  const double a = 1.0 / std::sqrt(static_cast<double>(in));
  for (int i = 0; i < out; ++i)
    for (int j = 0; j < in; ++j) l.w(i, j) = rng.uniform(-a, a);
  for (int i = 0; i < out; ++i) l.b[i] = rng.uniform(-a, a);
  return l;
}

}  // namespace

EnergyNet make_energy_net(SeededRng& rng, int hidden_dim, int z_dim, int out_dim, double mu, double L) {
  if (hidden_dim < 0) throw std::invalid_argument("make_energy_net: negative hidden width");
  EnergyNet net;
  net.mu = mu;
  net.L = L;
  if (hidden_dim == 0) {
    net.g.layers.push_back(init_layer(rng, out_dim, z_dim));
  } else {
    net.g.layers.push_back(init_layer(rng, hidden_dim, z_dim));
    net.g.layers.push_back(init_layer(rng, out_dim, hidden_dim));
  }
  net.validate();
  return net;
}

EnergyNet make_ground_truth(SeededRng& rng, int z_dim, int out_dim, double mu, double L) {
  return make_energy_net(rng, 3, z_dim, out_dim, mu, L);
}

double q_error(const EnergyNet& a, const EnergyNet& b, const std::vector<InputPoint>& inputs) {
  if (inputs.empty()) throw std::invalid_argument("q_error: empty input set");
  double total = 0.0;
  for (const InputPoint& x : inputs) {
    const Matrix qa = q_forward(a, x);
    const Matrix qb = q_forward(b, x);
    const double f = frobenius_norm(qa - qb);
    total += f * f;
  }
  return total / static_cast<double>(inputs.size());
}

std::string energy_net_to_json(const EnergyNet& net) {
  nlohmann::json j;
  j["layers"] = nlohmann::json::array();
  for (const DenseNetParams::DenseLayer& l : net.g.layers) {
    nlohmann::json jl;
    std::vector<std::vector<double>> w(l.w.rows(), std::vector<double>(l.w.cols()));
    for (int i = 0; i < l.w.rows(); ++i)
      for (int c = 0; c < l.w.cols(); ++c) w[i][c] = l.w(i, c);
    jl["w"] = w;
    jl["b"] = l.b;
    j["layers"].push_back(jl);
  }
  j["mu"] = net.mu;
  j["L"] = net.L;
  return j.dump();
}

EnergyNet energy_net_from_json(const std::string& text) {
  const nlohmann::json j = nlohmann::json::parse(text);
  EnergyNet net;
  net.mu = j.at("mu").get<double>();
  net.L = j.at("L").get<double>();
  for (const nlohmann::json& jl : j.at("layers")) {
    const auto w = jl.at("w").get<std::vector<std::vector<double>>>();
    DenseNetParams::DenseLayer l;
    l.w = Matrix(static_cast<int>(w.size()), w.empty() ? 0 : static_cast<int>(w[0].size()));
    for (int i = 0; i < l.w.rows(); ++i) {
      if (static_cast<int>(w[i].size()) != l.w.cols())
        throw std::invalid_argument("energy_net_from_json: ragged weight rows");
      for (int c = 0; c < l.w.cols(); ++c) l.w(i, c) = w[i][c];
    }
    l.b = jl.at("b").get<Vector>();
    net.g.layers.push_back(std::move(l));
  }
  net.validate();
  return net;
}

}  // namespace unroll
