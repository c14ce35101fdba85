#include <algorithm>
#include <cmath>
#include <set>

#include "doctest.h"

#include "unroll/dataset.hpp"
#include "unroll/training.hpp"

using namespace unroll;

namespace {

SyntheticDataset small_data(uint64_t seed = 2, int n = 200) {
  DatasetSpec spec;
  spec.n_total = n;
  spec.seed = seed;
  return gen_dataset(spec);
}

void check_close(double got, double want, double rel = 1e-5) {
  const double denom = std::max({std::abs(got), std::abs(want), 1e-6});
  CHECK(std::abs(got - want) / denom <= rel);
}

}  // namespace

TEST_CASE("train_test_split: partition contract") {
  auto [train, test] = train_test_split(7, 100, 30);
  CHECK(train.size() == 30);
  CHECK(test.size() == 70);
  CHECK(std::is_sorted(train.begin(), train.end()));
  CHECK(std::is_sorted(test.begin(), test.end()));
  std::set<int> all(train.begin(), train.end());
  all.insert(test.begin(), test.end());
  CHECK(all.size() == 100);
  CHECK(*all.begin() == 0);
  CHECK(*all.rbegin() == 99);

  auto [train2, test2] = train_test_split(7, 100, 30);
  CHECK(train == train2);
  auto [train3, test3] = train_test_split(8, 100, 30);
  CHECK(train != train3);

  CHECK_THROWS(train_test_split(7, 100, 100));  // empty complement
  CHECK_THROWS(train_test_split(7, 100, 0));
}

TEST_CASE("sgd_step and adam_step") {
  double a = 1.0, b = -2.0;
  std::vector<double*> params = {&a, &b};
  sgd_step(params, {0.5, -1.0}, 0.1);
  CHECK(a == doctest::Approx(0.95).epsilon(1e-15));
  CHECK(b == doctest::Approx(-1.9).epsilon(1e-15));

  // First adam step: m_hat = g, v_hat = g^2, update = lr g / (|g| + eps)
  // which is lr sign(g) up to the epsilon guard.
  double c = 3.0, d = 3.0;
  std::vector<double*> p2 = {&c, &d};
  AdamState st;
  adam_step(p2, {0.7, -0.002}, st, 0.01);
  CHECK(c == doctest::Approx(3.0 - 0.01).epsilon(1e-6));
  CHECK(d == doctest::Approx(3.0 + 0.01).epsilon(1e-4));
  CHECK(st.t == 1);

  // Zero gradient: adam leaves the parameter untouched.
  double e = 5.0;
  std::vector<double*> p3 = {&e};
  AdamState st3;
  adam_step(p3, {0.0}, st3, 0.01);
  CHECK(e == 5.0);
}

TEST_CASE("alg names round-trip") {
  CHECK(alg_name(Alg::kGd) == "gd");
  CHECK(alg_name(Alg::kNag) == "nag");
  CHECK(alg_name(Alg::kRnn) == "rnn");
  CHECK(alg_from_name("nag") == Alg::kNag);
  CHECK_THROWS(alg_from_name("newton"));
}

TEST_CASE("loss at depth 0 is the label norm with zero gradient") {
  const SyntheticDataset data = small_data();
  ModelState m;
  m.alg = Alg::kGd;
  m.k = 0;
  m.mu = data.spec.mu;
  m.L = data.spec.L;
  m.phi = 0.5;
  SeededRng rng(1, 0);
  m.energy = make_energy_net(rng, 4, data.spec.z_dim, data.spec.d - 2, data.spec.mu, data.spec.L);

  const SyntheticSample& s = data.samples[0];
  const LossGrad lg = loss_and_grad(m, {s.z, s.u}, s.b, s.y_star);
  CHECK(lg.loss == doctest::Approx(norm2(s.y_star)).epsilon(1e-14));
  for (double g : lg.grad) CHECK(g == 0.0);

  const EvalResult ev = evaluate(m, data, {0, 1, 2});
  const double want =
      (norm2(data.samples[0].y_star) + norm2(data.samples[1].y_star) + norm2(data.samples[2].y_star)) / 3.0;
  CHECK(ev.mean_loss == doctest::Approx(want).epsilon(1e-14));
}

TEST_CASE("loss_and_grad matches finite differences through the whole chain") {
  const SyntheticDataset data = small_data();
  for (Alg alg : {Alg::kGd, Alg::kNag}) {
    ModelState m;
    m.alg = alg;
    m.k = 3;
    m.mu = data.spec.mu;
    m.L = data.spec.L;
    m.phi = 0.6;
    SeededRng rng(5, 0);
    m.energy = make_energy_net(rng, 4, data.spec.z_dim, data.spec.d - 2, data.spec.mu, data.spec.L);

    const SyntheticSample& s = data.samples[7];
    const LossGrad lg = loss_and_grad(m, {s.z, s.u}, s.b, s.y_star);
    std::vector<double*> params = trainable_refs(m);
    REQUIRE(params.size() == lg.grad.size());

    for (size_t i = 0; i < params.size(); i += 7) {  // sampled coordinates
      const double save = *params[i], h = 1e-6;
      *params[i] = save + h;
      const double up = loss_and_grad(m, {s.z, s.u}, s.b, s.y_star).loss;
      *params[i] = save - h;
      const double down = loss_and_grad(m, {s.z, s.u}, s.b, s.y_star).loss;
      *params[i] = save;
      check_close(lg.grad[i], (up - down) / (2.0 * h), 2e-5);
    }
    // phi is the last trainable.
    const size_t last = params.size() - 1;
    CHECK(params[last] == &m.phi);
    const double save = m.phi, h = 1e-6;
    m.phi = save + h;
    const double up = loss_and_grad(m, {s.z, s.u}, s.b, s.y_star).loss;
    m.phi = save - h;
    const double down = loss_and_grad(m, {s.z, s.u}, s.b, s.y_star).loss;
    m.phi = save;
    check_close(lg.grad[last], (up - down) / (2.0 * h), 2e-5);
  }
}

TEST_CASE("loss_and_grad_l2o matches finite differences for the cell") {
  const ProblemDataset problems = gen_problem_dataset(3, 10, 6, 0.1, 1.0, 5.0);
  TrainConfig cfg;
  cfg.alg = Alg::kRnn;
  cfg.k = 3;
  cfg.rnn_hidden = {8, 8};
  cfg.seed = 3;
  std::vector<Matrix> probes = {problems.samples[0].problem.q};
  SeededRng rng(3, 12);
  ModelState m = init_model(cfg, 0.1, 1.0, false, 0, 6, probes, rng);

  const ProblemSample& s = problems.samples[1];
  const LossGrad lg = loss_and_grad_l2o(m, s.problem.q, s.problem.b, s.y_star);
  std::vector<double*> params = trainable_refs(m);
  REQUIRE(params.size() == lg.grad.size());
  for (size_t i = 0; i < params.size(); i += 11) {
    const double save = *params[i], h = 1e-6;
    *params[i] = save + h;
    const double up = loss_and_grad_l2o(m, s.problem.q, s.problem.b, s.y_star).loss;
    *params[i] = save - h;
    const double down = loss_and_grad_l2o(m, s.problem.q, s.problem.b, s.y_star).loss;
    *params[i] = save;
    check_close(lg.grad[i], (up - down) / (2.0 * h), 2e-5);
  }
}

TEST_CASE("init_model: midpoint step size, cell rescaled to contraction 0.9") {
  TrainConfig cfg;
  cfg.alg = Alg::kNag;
  cfg.hidden_dim = 8;
  SeededRng rng(4, 12);
  const ModelState m = init_model(cfg, 0.1, 1.0, true, 10, 5, {}, rng);
  CHECK(m.phi == stable_region(Alg::kNag, 0.1, 1.0, cfg.c0).midpoint());
  REQUIRE(m.energy.has_value());
  CHECK(m.energy->g.hidden_dim() == 8);
  CHECK(m.energy->q_dim() == 5);

  TrainConfig rcfg;
  rcfg.alg = Alg::kRnn;
  rcfg.rnn_hidden = {12, 12, 12};
  SeededRng rng2(4, 12);
  const ModelState r = init_model(rcfg, 0.1, 1.0, false, 0, 6, {}, rng2);
  REQUIRE(r.rnn.has_value());
  CHECK(r.rnn->hidden.size() == 2);  // three activation widths = two hidden stages
  CHECK(r.rnn->hidden_dim() == 12);
  CHECK(rnn_contraction_coefficient(*r.rnn, {}, 0.1, 1.0) == doctest::Approx(0.9).epsilon(1e-9));
}

TEST_CASE("rnn_contraction_coefficient: diagonal hand oracle") {
  RnnCellWeights w;
  w.v = Matrix::diag({2.0});
  w.w_y = Matrix::diag({0.3});
  w.w_g = Matrix::diag({0.5});
  // sup over {mu I, L I} of |0.3 + 0.5 c| = 0.8 at c = 1; coefficient = 2 * 0.8.
  CHECK(rnn_contraction_coefficient(w, {}, 0.1, 1.0) == doctest::Approx(1.6).epsilon(1e-10));
  // A probe with a larger eigenvalue raises the sup.
  CHECK(rnn_contraction_coefficient(w, {Matrix::diag({2.0})}, 0.1, 1.0) == doctest::Approx(2.6).epsilon(1e-10));
}

TEST_CASE("train_model: record contract and determinism") {
  const SyntheticDataset data = small_data(6, 150);
  TrainConfig cfg;
  cfg.alg = Alg::kGd;
  cfg.k = 3;
  cfg.hidden_dim = 4;
  cfg.n_train = 40;
  cfg.epochs = 3;
  cfg.lr_grid = {1e-2, 1e-3};
  cfg.seed = 17;

  ModelState model;
  const RunRecord rec = train_model(cfg, data, &model);
  CHECK(rec.alg == "gd");
  CHECK(rec.k == 3);
  CHECK(rec.hidden_dim == 4);
  CHECK(rec.n_train == 40);
  CHECK((rec.best_lr == 1e-2 || rec.best_lr == 1e-3));
  CHECK(std::isfinite(rec.train_loss));
  CHECK(std::isfinite(rec.test_loss));
  CHECK(rec.gap == rec.test_loss - rec.train_loss);
  CHECK(rec.epochs_run == 3);
  REQUIRE(rec.phi_final.has_value());
  const Interval region = stable_region(Alg::kGd, 0.1, 1.0, cfg.c0);
  CHECK(region.contains(*rec.phi_final));
  CHECK(*rec.phi_final == model.phi);
  CHECK(rec.q_error > 0.0);

  const RunRecord rec2 = train_model(cfg, data);
  CHECK(rec2.train_loss == rec.train_loss);
  CHECK(rec2.test_loss == rec.test_loss);
  CHECK(rec2.best_lr == rec.best_lr);

  TrainConfig bad = cfg;
  bad.alg = Alg::kRnn;
  CHECK_THROWS_AS(train_model(bad, data), std::invalid_argument);
}

TEST_CASE("training beats the depth-0 baseline on its own objective") {
  const SyntheticDataset data = small_data(9, 200);
  TrainConfig cfg;
  cfg.alg = Alg::kGd;
  cfg.k = 10;
  cfg.hidden_dim = 8;
  cfg.n_train = 60;
  cfg.epochs = 20;
  cfg.seed = 1;
  const RunRecord rec = train_model(cfg, data);

  auto [train_idx, test_idx] = train_test_split(cfg.seed, data.size(), cfg.n_train);
  double baseline = 0.0;
  for (int i : train_idx) baseline += norm2(data.samples[i].y_star);
  baseline /= static_cast<double>(train_idx.size());
  CHECK(rec.train_loss < baseline);
}

TEST_CASE("lr grid: divergent points are skipped, all-divergent throws") {
  const ProblemDataset problems = gen_problem_dataset(8, 60, 5, 0.1, 1.0, 5.0);
  TrainConfig cfg;
  cfg.alg = Alg::kRnn;
  cfg.k = 6;
  cfg.rnn_hidden = {8, 8};
  cfg.n_train = 20;
  cfg.epochs = 4;
  cfg.optimizer = TrainConfig::Optimizer::kSgd;  // unbounded steps so a huge lr actually explodes
  cfg.seed = 2;

  cfg.lr_grid = {1e12};
  CHECK_THROWS_AS(train_model_l2o(cfg, problems), std::runtime_error);

  cfg.lr_grid = {1e12, 1e-3};
  const RunRecord rec = train_model_l2o(cfg, problems);
  CHECK(rec.best_lr == 1e-3);
  CHECK(std::isfinite(rec.train_loss));
  REQUIRE(rec.c_phi_final.has_value());
}

TEST_CASE("train_model_l2o: scalar-step records carry phi_final") {
  const ProblemDataset problems = gen_problem_dataset(8, 60, 5, 0.1, 1.0, 5.0);
  TrainConfig cfg;
  cfg.alg = Alg::kNag;
  cfg.k = 4;
  cfg.n_train = 20;
  cfg.epochs = 3;
  cfg.seed = 2;
  const RunRecord rec = train_model_l2o(cfg, problems);
  REQUIRE(rec.phi_final.has_value());
  CHECK_FALSE(rec.c_phi_final.has_value());
  CHECK(rec.q_error == 0.0);
}
