#include <cmath>

#include "doctest.h"

#include "unroll/energynet.hpp"
#include "unroll/linalg.hpp"
#include "unroll/quadratic.hpp"

using namespace unroll;

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

EnergyNet zero_net(int hidden, int z_dim, int out_dim) {
  SeededRng rng(0, 0);
  EnergyNet net = make_energy_net(rng, hidden, z_dim, out_dim, 0.1, 1.0);
  for (auto& layer : net.g.layers) {
    for (size_t i = 0; i < layer.w.size(); ++i) layer.w.data()[i] = 0.0;
    for (double& b : layer.b) b = 0.0;
  }
  return net;
}

InputPoint random_input(SeededRng& rng, int z_dim, int d) {
  InputPoint x;
  x.z.resize(z_dim);
  for (double& v : x.z) v = rng.uniform(-5.0, 5.0);
  x.u = haar_orthogonal(rng, d);
  return x;
}

}  // namespace

TEST_CASE("eig_forward: zero network pins every learned eigenvalue at the midpoint map") {
  // g(z) = 0 -> lambda = mu + (L - mu) sigmoid(0) = 0.1 + 0.9 * 0.5 = 0.55.
  for (int hidden : {0, 4}) {
    const EnergyNet net = zero_net(hidden, 6, 2);
    const Vector lambdas = eig_forward(net, Vector(6, 1.5));
    REQUIRE(lambdas.size() == 4);  // 2 learned + pinned mu, L
    CHECK(lambdas[0] == doctest::Approx(0.55).epsilon(1e-15));
    CHECK(lambdas[1] == doctest::Approx(0.55).epsilon(1e-15));
    CHECK(lambdas[2] == 0.1);
    CHECK(lambdas[3] == 1.0);
  }
}

TEST_CASE("eig_forward: single affine layer hand value") {
  EnergyNet net = zero_net(0, 2, 1);
  net.g.layers[0].w(0, 0) = 0.5;
  net.g.layers[0].w(0, 1) = -0.25;
  net.g.layers[0].b[0] = 0.1;
  // raw = 0.5*2 - 0.25*4 + 0.1 = 0.1
  const Vector lambdas = eig_forward(net, {2.0, 4.0});
  CHECK(lambdas[0] == doctest::Approx(0.1 + 0.9 * sigmoid(0.1)).epsilon(1e-14));
}

TEST_CASE("q_forward: spectrum is the constructed eigenvalue list") {
  SeededRng rng(41, 0);
  const EnergyNet net = zero_net(3, 5, 1);  // q_dim = 3
  const InputPoint x = random_input(rng, 5, 3);
  const Matrix q = q_forward(net, x);
  const SymEig e = sym_eig(q);
  CHECK(e.lambdas[0] == doctest::Approx(0.1).epsilon(1e-12));
  CHECK(e.lambdas[1] == doctest::Approx(0.55).epsilon(1e-12));
  CHECK(e.lambdas[2] == doctest::Approx(1.0).epsilon(1e-12));

  QuadraticProblem p{q, Vector(3, 1.0), 0.1, 1.0};
  CHECK_NOTHROW(p.validate());  // produced Q always stays in the class
}

TEST_CASE("q_backward matches finite differences on every parameter") {
  SeededRng rng(43, 0);
  for (int hidden : {0, 4}) {
    EnergyNet net = make_energy_net(rng, hidden, 5, 3, 0.1, 1.0);
    const InputPoint x = random_input(rng, 5, 5);
    Matrix c(5, 5);
    for (size_t i = 0; i < c.size(); ++i) c.data()[i] = rng.uniform(-1.0, 1.0);

    auto loss = [&]() {
      const Matrix q = q_forward(net, x);
      double s = 0.0;
      for (size_t i = 0; i < q.size(); ++i) s += c.data()[i] * q.data()[i];
      return s;
    };
    EnergyCache cache;
    q_forward(net, x, &cache);
    const DenseNetParams grads = q_backward(net, x, cache, c);
    REQUIRE(grads.layers.size() == net.g.layers.size());

    auto fd = [&](double* p) {
      const double save = *p, h = 1e-6;
      *p = save + h;
      const double up = loss();
      *p = save - h;
      const double down = loss();
      *p = save;
      return (up - down) / (2.0 * h);
    };
    for (size_t l = 0; l < net.g.layers.size(); ++l) {
      auto& layer = net.g.layers[l];
      for (size_t i = 0; i < layer.w.size(); ++i) {
        const double want = fd(&layer.w.data()[i]);
        const double got = grads.layers[l].w.data()[i];
        CHECK(std::abs(got - want) / std::max({std::abs(got), std::abs(want), 1e-6}) <= 1e-5);
      }
      for (size_t i = 0; i < layer.b.size(); ++i) {
        const double want = fd(&layer.b[i]);
        const double got = grads.layers[l].b[i];
        CHECK(std::abs(got - want) / std::max({std::abs(got), std::abs(want), 1e-6}) <= 1e-5);
      }
    }
  }
}

TEST_CASE("constructors: shapes, fan-in init range, determinism") {
  SeededRng r1(3, 0), r2(3, 0);
  const EnergyNet star = make_ground_truth(r1, 10, 3, 0.1, 1.0);
  CHECK(star.q_dim() == 5);
  REQUIRE(star.g.layers.size() == 2);
  CHECK(star.g.layers[0].w.rows() == 3);  // ground-truth hidden width is 3
  CHECK(star.g.layers[0].w.cols() == 10);
  CHECK(star.g.layers[1].w.rows() == 3);

  const EnergyNet star2 = make_ground_truth(r2, 10, 3, 0.1, 1.0);
  CHECK(energy_net_to_json(star) == energy_net_to_json(star2));

  SeededRng r3(4, 0);
  const EnergyNet flat = make_energy_net(r3, 0, 10, 3, 0.1, 1.0);
  CHECK(flat.g.layers.size() == 1);
  const EnergyNet wide = make_energy_net(r3, 16, 10, 3, 0.1, 1.0);
  REQUIRE(wide.g.layers.size() == 2);
  CHECK(wide.g.layers[0].w.rows() == 16);

  // Uniform fan-in init: |value| <= 1/sqrt(fan_in) everywhere, and not all tiny.
  double max_first = 0.0;
  for (size_t i = 0; i < wide.g.layers[0].w.size(); ++i)
    max_first = std::max(max_first, std::abs(wide.g.layers[0].w.data()[i]));
  CHECK(max_first <= 1.0 / std::sqrt(10.0) + 1e-12);
  CHECK(max_first > 0.1 / std::sqrt(10.0));
  double max_second = 0.0;
  for (size_t i = 0; i < wide.g.layers[1].w.size(); ++i)
    max_second = std::max(max_second, std::abs(wide.g.layers[1].w.data()[i]));
  CHECK(max_second <= 1.0 / 4.0 + 1e-12);
}

TEST_CASE("json round-trip preserves every parameter") {
  SeededRng rng(77, 0);
  const EnergyNet net = make_energy_net(rng, 8, 10, 3, 0.1, 1.0);
  const EnergyNet back = energy_net_from_json(energy_net_to_json(net));
  CHECK(back.mu == net.mu);
  CHECK(back.L == net.L);
  REQUIRE(back.g.layers.size() == net.g.layers.size());
  for (size_t l = 0; l < net.g.layers.size(); ++l) {
    CHECK(back.g.layers[l].w == net.g.layers[l].w);
    CHECK(back.g.layers[l].b == net.g.layers[l].b);
  }
}

TEST_CASE("q_error: shared-frame hand oracle") {
  // Zero-weight nets with different output biases produce, on the same frame,
  // Q matrices differing only in learned eigenvalues; the Frobenius gap is
  // then exactly the eigenvalue gap.
  EnergyNet a = zero_net(0, 4, 2);
  EnergyNet b = zero_net(0, 4, 2);
  a.g.layers[0].b = {0.3, -0.2};
  b.g.layers[0].b = {-0.1, 0.4};
  double want = 0.0;
  for (int i = 0; i < 2; ++i) {
    const double la = 0.1 + 0.9 * sigmoid(a.g.layers[0].b[i]);
    const double lb = 0.1 + 0.9 * sigmoid(b.g.layers[0].b[i]);
    want += (la - lb) * (la - lb);
  }
  SeededRng rng(51, 0);
  std::vector<InputPoint> inputs;
  for (int i = 0; i < 3; ++i) inputs.push_back(random_input(rng, 4, 4));
  CHECK(q_error(a, b, inputs) == doctest::Approx(want).epsilon(1e-12));
  CHECK(q_error(a, a, inputs) == 0.0);
}
