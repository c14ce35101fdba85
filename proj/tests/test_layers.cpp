#include <cmath>
#include <functional>

#include "doctest.h"

#include "unroll/layers.hpp"
#include "unroll/quadratic.hpp"
#include "unroll/rng.hpp"

using namespace unroll;

namespace {

// Central finite difference of f at x with step h.
double central_diff(const std::function<double(double)>& f, double x, double h) {
  return (f(x + h) - f(x - h)) / (2.0 * h);
}

void check_close(double got, double want, double rel = 1e-5) {
  const double denom = std::max({std::abs(got), std::abs(want), 1e-6});
  CHECK(std::abs(got - want) / denom <= rel);
}

// Builds the cell whose relu split reproduces one plain gradient step of
// size s: V = [I, -I], W_y = [I; -I], W_g = [-sI; sI].
RnnCellWeights gd_encoding(int d, double s, bool with_identity_stage) {
  RnnCellWeights w;
  w.v = Matrix(d, 2 * d);
  w.w_y = Matrix(2 * d, d);
  w.w_g = Matrix(2 * d, d);
  for (int i = 0; i < d; ++i) {
    w.v(i, i) = 1.0;
    w.v(i, d + i) = -1.0;
    w.w_y(i, i) = 1.0;
    w.w_y(d + i, i) = -1.0;
    w.w_g(i, i) = -s;
    w.w_g(d + i, i) = s;
  }
  if (with_identity_stage) w.hidden.push_back(Matrix::identity(2 * d));
  return w;
}

RnnCellWeights random_cell(SeededRng& rng, int d, int h, int stages, double scale) {
  auto fill = [&](Matrix& m) {
    for (size_t i = 0; i < m.size(); ++i) m.data()[i] = scale * (2.0 * rng.uniform() - 1.0);
  };
  RnnCellWeights w;
  w.v = Matrix(d, h);
  w.w_y = Matrix(h, d);
  w.w_g = Matrix(h, d);
  fill(w.v);
  fill(w.w_y);
  fill(w.w_g);
  for (int s = 0; s < stages; ++s) {
    Matrix m(h, h);
    fill(m);
    w.hidden.push_back(m);
  }
  return w;
}

}  // namespace

TEST_CASE("stable_region: endpoints and rejection") {
  const Interval gd = stable_region(Alg::kGd, 0.1, 1.0, 1e-3);
  CHECK(gd.lo == 1e-3);
  CHECK(gd.hi == doctest::Approx(1.8181818181818181).epsilon(1e-15));
  const Interval nag = stable_region(Alg::kNag, 0.1, 1.0, 1e-3);
  CHECK(nag.hi == doctest::Approx(1.2903225806451613).epsilon(1e-15));
  CHECK_THROWS(stable_region(Alg::kGd, 0.1, 1.0, 2.0));  // c0 past the upper end
  CHECK_THROWS(stable_region(Alg::kRnn, 0.1, 1.0, 1e-3));

  CHECK(project_phi(5.0, gd) == gd.hi);
  CHECK(project_phi(-1.0, gd) == gd.lo);
  CHECK(project_phi(1.0, gd) == 1.0);
  CHECK(project_phi(project_phi(5.0, gd), gd) == gd.hi);  // idempotent
}

TEST_CASE("nag momentum coefficient: hand value, edge, derivative") {
  CHECK(nag_beta(0.1, 1.0) == doctest::Approx(0.51949385329591558).epsilon(1e-15));
  CHECK(nag_beta(1.0, 1.0) == 0.0);  // mu phi = 1
  CHECK_THROWS(nag_beta(1.0, 1.5));  // mu phi > 1

  CHECK(nag_beta_dphi(0.1, 1.0) == doctest::Approx(-0.18253153409694037).epsilon(1e-12));
  const double fd = central_diff([](double p) { return nag_beta(0.1, p); }, 0.7, 1e-6);
  check_close(nag_beta_dphi(0.1, 0.7), fd, 1e-7);
}

TEST_CASE("gd_forward: scalar geometric closed form") {
  // d = 1: y_k = -(b/q) (1 - (1 - phi q)^k).
  const double q = 0.7, b = 2.0, phi = 0.3;
  Matrix qm(1, 1);
  qm(0, 0) = q;
  for (int k = 0; k <= 6; ++k) {
    const Vector y = gd_forward({phi, k}, qm, {b});
    const double want = -(b / q) * (1.0 - std::pow(1.0 - phi * q, k));
    CHECK(y[0] == doctest::Approx(want).epsilon(1e-13));
  }
}

TEST_CASE("gd depth-1 gradient identities") {
  // y_1 = -phi b, so d(u.y_1)/dphi = -u.b, d/db = -phi u, d/dQ = 0.
  const Matrix q = Matrix::diag({0.5, 0.9});
  const Vector b = {1.0, -2.0};
  const Vector u = {0.3, 0.4};
  UnrollTrace trace;
  gd_forward({0.25, 1}, q, b, &trace);
  const LayerGradients g = gd_backward({0.25, 1}, q, b, trace, u);
  CHECK(g.dphi == doctest::Approx(-dot(u, b)).epsilon(1e-14));
  CHECK(g.db[0] == doctest::Approx(-0.25 * u[0]).epsilon(1e-14));
  CHECK(g.db[1] == doctest::Approx(-0.25 * u[1]).epsilon(1e-14));
  for (size_t i = 0; i < g.dq.size(); ++i) CHECK(g.dq.data()[i] == 0.0);
}

TEST_CASE("nag_forward: scalar companion-matrix power oracle") {
  const double q = 0.6, b = -1.4, phi = 0.9, mu = 0.1;
  const double beta = nag_beta(mu, phi);
  Matrix qm(1, 1);
  qm(0, 0) = q;
  UnrollTrace trace;
  nag_forward({phi, mu, 12}, qm, {b}, &trace);

  // State (y_{t+1}, y_t): y_{t+1} = (1-phi q)(1+beta) y_t - (1-phi q) beta y_{t-1} - phi b.
  const double a = 1.0 - phi * q;
  double y_prev = 0.0, y_cur = 0.0;
  for (int t = 0; t <= 12; ++t) {
    CHECK(trace.iterates[t][0] == doctest::Approx(y_cur).epsilon(1e-13));
    const double y_next = a * (1.0 + beta) * y_cur - a * beta * y_prev - phi * b;
    y_prev = y_cur;
    y_cur = y_next;
  }
}

TEST_CASE("nag_forward: converges to the minimizer inside the region") {
  SeededRng rng(5, 0);
  const QuadraticProblem p = sample_spd_problem(rng, 5, 0.1, 1.0, 5.0);
  const Vector y_star = opt_solve(p);
  const Interval region = stable_region(Alg::kNag, 0.1, 1.0, 1e-3);
  const Vector y = nag_forward({region.hi, 0.1, 400}, p.q, p.b);
  CHECK(norm2(y - y_star) < 1e-8 * (1.0 + norm2(y_star)));
}

TEST_CASE("depth 0: forward is the zero start, gradients vanish") {
  const Matrix q = Matrix::diag({0.5});
  const Vector b = {2.0};
  for (const Layer& layer :
       {Layer{GdLayer{0.5, 0}}, Layer{NagLayer{0.5, 0.1, 0}}, Layer{RnnLayer{gd_encoding(1, 0.5, false), 0}}}) {
    UnrollTrace trace;
    const Vector y = layer_forward(layer, q, b, &trace);
    CHECK(y == Vector{0.0});
    const LayerGradients g = unroll_backward(layer, q, b, trace, {1.0});
    CHECK(g.dphi == 0.0);
    CHECK(g.db == Vector{0.0});
    CHECK(g.dq(0, 0) == 0.0);
  }
}

TEST_CASE("finite differences: gd and nag parameter/problem gradients") {
  SeededRng rng(7, 0);
  for (int rep = 0; rep < 5; ++rep) {
    const QuadraticProblem p = sample_spd_problem(rng, 3, 0.1, 1.0, 2.0);
    Vector u(3);
    for (double& x : u) x = rng.uniform(-1.0, 1.0);
    const int k = 1 + static_cast<int>(rng.uniform() * 6);
    const double phi = rng.uniform(0.05, 1.2);

    for (int use_nag = 0; use_nag < 2; ++use_nag) {
      const Layer layer = use_nag ? Layer{NagLayer{phi, 0.1, k}} : Layer{GdLayer{phi, k}};
      auto loss_at = [&](const Matrix& qq, const Vector& bb, double pphi) {
        Layer l = layer;
        if (use_nag)
          std::get<NagLayer>(l).phi = pphi;
        else
          std::get<GdLayer>(l).phi = pphi;
        return dot(u, layer_forward(l, qq, bb));
      };
      UnrollTrace trace;
      layer_forward(layer, p.q, p.b, &trace);
      const LayerGradients g = unroll_backward(layer, p.q, p.b, trace, u);

      check_close(g.dphi, central_diff([&](double x) { return loss_at(p.q, p.b, x); }, phi, 1e-6));
      for (int i = 0; i < 3; ++i) {
        Vector b2 = p.b;
        check_close(g.db[i], central_diff(
                                 [&](double x) {
                                   b2[i] = x;
                                   return loss_at(p.q, b2, phi);
                                 },
                                 p.b[i], 1e-6));
        for (int j = 0; j < 3; ++j) {
          Matrix q2 = p.q;
          check_close(g.dq(i, j), central_diff(
                                      [&](double x) {
                                        q2(i, j) = x;
                                        return loss_at(q2, p.b, phi);
                                      },
                                      p.q(i, j), 1e-6));
        }
      }
    }
  }
}

TEST_CASE("recurrent cell reproduces plain gradient steps exactly") {
  SeededRng rng(13, 0);
  const QuadraticProblem p = sample_spd_problem(rng, 4, 0.1, 1.0, 5.0);
  const double s = 0.8;
  for (bool stage : {false, true}) {
    const RnnCellWeights w = gd_encoding(4, s, stage);
    UnrollTrace rt, gt;
    rnn_forward(w, 10, p.q, p.b, &rt);
    gd_forward({s, 10}, p.q, p.b, &gt);
    REQUIRE(rt.iterates.size() == gt.iterates.size());
    for (size_t t = 0; t < rt.iterates.size(); ++t)
      for (int i = 0; i < 4; ++i) CHECK(rt.iterates[t][i] == doctest::Approx(gt.iterates[t][i]).epsilon(1e-14));
  }
}

TEST_CASE("rnn_step matches the unrolled forward") {
  SeededRng rng(19, 0);
  const QuadraticProblem p = sample_spd_problem(rng, 3, 0.1, 1.0, 5.0);
  const RnnCellWeights w = random_cell(rng, 3, 8, 2, 0.3);
  UnrollTrace trace;
  rnn_forward(w, 6, p.q, p.b, &trace);
  Vector y(3, 0.0);
  for (int t = 0; t < 6; ++t) {
    y = rnn_step(w, p.q, p.b, y);
    for (int i = 0; i < 3; ++i) CHECK(y[i] == trace.iterates[t + 1][i]);
  }
}

TEST_CASE("finite differences: recurrent cell weights and problem") {
  SeededRng rng(23, 0);
  for (int rep = 0; rep < 3; ++rep) {
    const QuadraticProblem p = sample_spd_problem(rng, 3, 0.1, 1.0, 2.0);
    RnnCellWeights w = random_cell(rng, 3, 6, 2, 0.4);
    Vector u(3);
    for (double& x : u) x = rng.uniform(-1.0, 1.0);
    const int k = 4;

    UnrollTrace trace;
    rnn_forward(w, k, p.q, p.b, &trace);
    const LayerGradients g = rnn_backward(w, k, p.q, p.b, trace, u);
    REQUIRE(g.dweights.has_value());

    auto loss = [&]() { return dot(u, rnn_forward(w, k, p.q, p.b)); };
    auto fd_param = [&](double* x) {
      const double save = *x, h = 1e-6;
      *x = save + h;
      const double up = loss();
      *x = save - h;
      const double down = loss();
      *x = save;
      return (up - down) / (2.0 * h);
    };

    for (size_t i = 0; i < w.v.size(); i += 3) check_close(g.dweights->v.data()[i], fd_param(&w.v.data()[i]), 2e-5);
    for (size_t i = 0; i < w.w_y.size(); i += 2)
      check_close(g.dweights->w_y.data()[i], fd_param(&w.w_y.data()[i]), 2e-5);
    for (size_t i = 0; i < w.w_g.size(); i += 2)
      check_close(g.dweights->w_g.data()[i], fd_param(&w.w_g.data()[i]), 2e-5);
    for (size_t s = 0; s < w.hidden.size(); ++s)
      for (size_t i = 0; i < w.hidden[s].size(); i += 5)
        check_close(g.dweights->hidden[s].data()[i], fd_param(&w.hidden[s].data()[i]), 2e-5);

    Matrix q2 = p.q;
    Vector b2 = p.b;
    auto loss_qb = [&]() { return dot(u, rnn_forward(w, k, q2, b2)); };
    for (int i = 0; i < 3; ++i) {
      const double h = 1e-6;
      const double save = b2[i];
      b2[i] = save + h;
      const double up = loss_qb();
      b2[i] = save - h;
      const double down = loss_qb();
      b2[i] = save;
      check_close(g.db[i], (up - down) / (2.0 * h), 2e-5);
      for (int j = 0; j < 3; ++j) {
        const double qs = q2(i, j);
        q2(i, j) = qs + h;
        const double qup = loss_qb();
        q2(i, j) = qs - h;
        const double qdown = loss_qb();
        q2(i, j) = qs;
        check_close(g.dq(i, j), (qup - qdown) / (2.0 * h), 2e-5);
      }
    }
  }
}

TEST_CASE("backward rejects traces from a different unroll") {
  const Matrix q = Matrix::diag({0.5});
  const Vector b = {1.0};
  UnrollTrace trace;
  gd_forward({0.3, 4}, q, b, &trace);
  CHECK_THROWS_AS(gd_backward({0.3, 5}, q, b, trace, {1.0}), std::invalid_argument);
  CHECK_THROWS_AS(nag_backward({0.3, 0.1, 4}, q, b, trace, {1.0}), std::invalid_argument);  // no aux recorded
}

TEST_CASE("layer_forward/unroll_backward dispatch and layer_depth") {
  const Matrix q = Matrix::diag({0.5, 0.8});
  const Vector b = {1.0, -1.0};
  const Layer gd = GdLayer{0.4, 3};
  const Layer nag = NagLayer{0.4, 0.1, 3};
  CHECK(layer_depth(gd) == 3);
  CHECK(layer_depth(nag) == 3);
  CHECK(layer_forward(gd, q, b) == gd_forward({0.4, 3}, q, b));
  CHECK(layer_forward(nag, q, b) == nag_forward({0.4, 0.1, 3}, q, b));
  const RnnCellWeights w = gd_encoding(2, 0.4, false);
  const Layer rnn = RnnLayer{w, 3};
  CHECK(layer_depth(rnn) == 3);
  CHECK(layer_forward(rnn, q, b) == rnn_forward(w, 3, q, b));
}
