#include <cmath>

#include "doctest.h"
#include "json.hpp"

#include "unroll/dataset.hpp"
#include "unroll/energynet.hpp"

using namespace unroll;

TEST_CASE("gen_dataset: determinism and coordinate ranges") {
  DatasetSpec spec;
  spec.n_total = 50;
  spec.seed = 31;
  const SyntheticDataset a = gen_dataset(spec);
  const SyntheticDataset b = gen_dataset(spec);
  CHECK(dataset_to_json(a) == dataset_to_json(b));

  spec.seed = 32;
  const SyntheticDataset c = gen_dataset(spec);
  CHECK(dataset_to_json(a) != dataset_to_json(c));

  for (const SyntheticSample& s : a.samples) {
    REQUIRE(s.z.size() == 10);
    REQUIRE(s.b.size() == 5);
    for (double z : s.z) {
      CHECK(z >= -5.0);
      CHECK(z <= 5.0);
    }
    for (double v : s.b) {
      CHECK(v >= -5.0);
      CHECK(v <= 5.0);
    }
  }
}

TEST_CASE("gen_dataset: every label is the exact minimizer of its energy") {
  DatasetSpec spec;
  spec.n_total = 200;
  spec.seed = 6;
  const SyntheticDataset data = gen_dataset(spec);
  for (const SyntheticSample& s : data.samples) {
    const Matrix q = q_forward(data.star, {s.z, s.u});
    Vector r = matvec(q, s.y_star);
    for (size_t i = 0; i < r.size(); ++i) r[i] += s.b[i];
    CHECK(norm2(r) <= 1e-10 * (1.0 + norm2(s.b)));
  }
}

TEST_CASE("gen_dataset: b variance matches the iid-uniform moment at full size") {
  DatasetSpec spec;  // defaults: n_total = 10000, b_range = 5
  spec.seed = 77;
  const SyntheticDataset data = gen_dataset(spec);
  double sum = 0.0, sum_sq = 0.0;
  for (const SyntheticSample& s : data.samples) {
    sum += s.b[0];
    sum_sq += s.b[0] * s.b[0];
  }
  const double mean = sum / data.size();
  const double var = sum_sq / data.size() - mean * mean;
  CHECK(var == doctest::Approx(25.0 / 3.0).epsilon(0.05));
  CHECK(spec.sigma_b_sq() == doctest::Approx(25.0 / 3.0).epsilon(1e-15));
}

TEST_CASE("dataset json: schema keys and save/load round-trip") {
  DatasetSpec spec;
  spec.n_total = 8;
  spec.seed = 2;
  const SyntheticDataset data = gen_dataset(spec);
  const std::string text = dataset_to_json(data);

  const nlohmann::json j = nlohmann::json::parse(text);
  REQUIRE(j.contains("spec"));
  REQUIRE(j.contains("star_params"));
  REQUIRE(j.contains("samples"));
  REQUIRE(j.at("samples").size() == 8);
  const auto& s0 = j.at("samples").at(0);
  CHECK(s0.contains("z"));
  CHECK(s0.contains("U"));
  CHECK(s0.contains("b"));
  CHECK(s0.contains("y_star"));
  CHECK(s0.at("U").size() == 5);
  CHECK(s0.at("U").at(0).size() == 5);

  const std::string path = "test_dataset_roundtrip.json";
  save_dataset(data, path);
  const SyntheticDataset back = load_dataset(path);
  CHECK(dataset_to_json(back) == text);
  std::remove(path.c_str());
}

TEST_CASE("gen_dataset: rejects dimensions without room for the pinned spectrum") {
  DatasetSpec spec;
  spec.d = 2;  // needs at least one learned eigenvalue between the pinned pair
  CHECK_THROWS(gen_dataset(spec));
}

TEST_CASE("gen_problem_dataset: valid class members with exact labels") {
  const ProblemDataset data = gen_problem_dataset(4, 30, 6, 0.1, 1.0, 5.0);
  CHECK(data.size() == 30);
  CHECK(data.d == 6);
  for (const ProblemSample& s : data.samples) {
    CHECK_NOTHROW(s.problem.validate());
    Vector r = matvec(s.problem.q, s.y_star);
    for (size_t i = 0; i < r.size(); ++i) r[i] += s.problem.b[i];
    CHECK(norm2(r) <= 1e-10 * (1.0 + norm2(s.problem.b)));
  }
  const ProblemDataset again = gen_problem_dataset(4, 30, 6, 0.1, 1.0, 5.0);
  CHECK(again.samples[7].problem.q == data.samples[7].problem.q);
  CHECK(again.samples[7].y_star == data.samples[7].y_star);
}
