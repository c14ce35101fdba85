#include "unroll/dataset.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"
#include "unroll/linalg.hpp"
#include "unroll/rng.hpp"

namespace unroll {

namespace {

// Stream ids inside a dataset seed: 1 for the ground-truth parameters,
// 2 + i for sample i.
constexpr uint64_t kStarStream = 1;
constexpr uint64_t kSampleStreamBase = 2;

}  // namespace

SyntheticDataset gen_dataset(const DatasetSpec& spec) {
  if (spec.n_total <= 0 || spec.d < 3 || spec.z_dim <= 0)
    throw std::invalid_argument("gen_dataset: need n_total > 0, d >= 3 (two pinned eigenvalues), z_dim > 0");
  SyntheticDataset data;
  data.spec = spec;

  SeededRng star_rng(spec.seed, SeededRng::derive_stream(spec.seed, kStarStream));
  data.star = make_ground_truth(star_rng, spec.z_dim, spec.d - 2, spec.mu, spec.L);

  data.samples.resize(spec.n_total);
  for (int i = 0; i < spec.n_total; ++i) {
    SeededRng rng(spec.seed, SeededRng::derive_stream(spec.seed, kSampleStreamBase + static_cast<uint64_t>(i)));
    SyntheticSample& s = data.samples[i];
    s.z.resize(spec.z_dim);
    for (double& v : s.z) v = rng.uniform(-spec.z_range, spec.z_range);
    s.u = haar_orthogonal(rng, spec.d);
    s.b.resize(spec.d);
    for (double& v : s.b) v = rng.uniform(-spec.b_range, spec.b_range);
    // Label: minimizer of the ground-truth energy. The frame is known, so
    // solve through it instead of re-decomposing Q*.
    const Vector lambdas = eig_forward(data.star, s.z);
    Vector c = matvec_t(s.u, s.b);
    for (size_t j = 0; j < c.size(); ++j) c[j] = -c[j] / lambdas[j];
    s.y_star = matvec(s.u, c);
  }
  return data;
}

namespace {

nlohmann::json matrix_to_json(const Matrix& m) {
  std::vector<std::vector<double>> rows(m.rows(), std::vector<double>(m.cols()));
  for (int i = 0; i < m.rows(); ++i)
    for (int j = 0; j < m.cols(); ++j) rows[i][j] = m(i, j);
  return nlohmann::json(rows);
}

Matrix matrix_from_json(const nlohmann::json& j) {
  const auto rows = j.get<std::vector<std::vector<double>>>();
  Matrix m(static_cast<int>(rows.size()), rows.empty() ? 0 : static_cast<int>(rows[0].size()));
  for (int i = 0; i < m.rows(); ++i) {
    if (static_cast<int>(rows[i].size()) != m.cols()) throw std::invalid_argument("matrix_from_json: ragged rows");
    for (int j2 = 0; j2 < m.cols(); ++j2) m(i, j2) = rows[i][j2];
  }
  return m;
}

}  // namespace

std::string dataset_to_json(const SyntheticDataset& data) {
  nlohmann::json j;
  j["spec"] = {{"n_total", data.spec.n_total}, {"d", data.spec.d},         {"z_dim", data.spec.z_dim},
               {"z_range", data.spec.z_range}, {"b_range", data.spec.b_range}, {"mu", data.spec.mu},
               {"L", data.spec.L},             {"seed", data.spec.seed}};
  j["star_params"] = nlohmann::json::parse(energy_net_to_json(data.star));
  nlohmann::json samples = nlohmann::json::array();
  for (const SyntheticSample& s : data.samples) {
    nlohmann::json js;
    js["z"] = s.z;
    js["U"] = matrix_to_json(s.u);
    js["b"] = s.b;
    js["y_star"] = s.y_star;
    samples.push_back(std::move(js));
  }
  j["samples"] = std::move(samples);
  return j.dump();
}

SyntheticDataset dataset_from_json(const std::string& text) {
  const nlohmann::json j = nlohmann::json::parse(text);
  SyntheticDataset data;
  const nlohmann::json& js = j.at("spec");
  data.spec.n_total = js.at("n_total").get<int>();
  data.spec.d = js.at("d").get<int>();
  data.spec.z_dim = js.at("z_dim").get<int>();
  data.spec.z_range = js.at("z_range").get<double>();
  data.spec.b_range = js.at("b_range").get<double>();
  data.spec.mu = js.at("mu").get<double>();
  data.spec.L = js.at("L").get<double>();
  data.spec.seed = js.at("seed").get<uint64_t>();
  data.star = energy_net_from_json(j.at("star_params").dump());
  for (const nlohmann::json& s : j.at("samples")) {
    SyntheticSample sample;
    sample.z = s.at("z").get<Vector>();
    sample.u = matrix_from_json(s.at("U"));
    sample.b = s.at("b").get<Vector>();
    sample.y_star = s.at("y_star").get<Vector>();
    data.samples.push_back(std::move(sample));
  }
  return data;
}

void save_dataset(const SyntheticDataset& data, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_dataset: cannot open " + path);
  out << dataset_to_json(data);
  if (!out) throw std::runtime_error("save_dataset: write failed for " + path);
}

SyntheticDataset load_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_dataset: cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return dataset_from_json(ss.str());
}

ProblemDataset gen_problem_dataset(uint64_t seed, int n, int d, double mu, double L, double b_range) {
  if (n <= 0) throw std::invalid_argument("gen_problem_dataset: n must be positive");
  ProblemDataset data;
  data.d = d;
  data.mu = mu;
  data.L = L;
  data.b_range = b_range;
  data.seed = seed;
  data.samples.resize(n);
  for (int i = 0; i < n; ++i) {
    SeededRng rng(seed, SeededRng::derive_stream(seed, kSampleStreamBase + static_cast<uint64_t>(i)));
    ProblemSample& s = data.samples[i];
    s.problem = sample_spd_problem(rng, d, mu, L, b_range);
    s.y_star = opt_solve(s.problem);
  }
  return data;
}

}  // namespace unroll
