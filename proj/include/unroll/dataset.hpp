#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "unroll/energynet.hpp"
#include "unroll/matrix.hpp"
#include "unroll/quadratic.hpp"

namespace unroll {

// Sampling recipe for the synthetic regression corpus: features z uniform in
// [-z_range, z_range]^z_dim, a Haar orthogonal frame per input, b uniform in
// [-b_range, b_range]^d, labels y* = argmin of the ground-truth energy.
struct DatasetSpec {
  int n_total = 10000;
  int d = 5;
  int z_dim = 10;
  double z_range = 5.0;
  double b_range = 5.0;
  double mu = 0.1;
  double L = 1.0;
  uint64_t seed = 0;

  // Var of one coordinate of b; enters the generalization inequality.
  double sigma_b_sq() const { return b_range * b_range / 3.0; }
};

struct SyntheticSample {
  Vector z;
  Matrix u;
  Vector b;
  Vector y_star;
};

struct SyntheticDataset {
  DatasetSpec spec;
  EnergyNet star;  // ground-truth energy parameters
  std::vector<SyntheticSample> samples;

  int size() const { return static_cast<int>(samples.size()); }
  InputPoint input(int i) const { return {samples[i].z, samples[i].u}; }
};

SyntheticDataset gen_dataset(const DatasetSpec& spec);

std::string dataset_to_json(const SyntheticDataset& data);
SyntheticDataset dataset_from_json(const std::string& text);
void save_dataset(const SyntheticDataset& data, const std::string& path);
SyntheticDataset load_dataset(const std::string& path);

// Problems handed to the model directly (the learning-to-optimize setting):
// no feature vector, the layer sees (Q, b) and the label is Opt(Q, b).
struct ProblemSample {
  QuadraticProblem problem;
  Vector y_star;
};

struct ProblemDataset {
  int d = 10;
  double mu = 0.1;
  double L = 1.0;
  double b_range = 5.0;
  uint64_t seed = 0;
  std::vector<ProblemSample> samples;

  int size() const { return static_cast<int>(samples.size()); }
};

ProblemDataset gen_problem_dataset(uint64_t seed, int n, int d, double mu, double L, double b_range);

}  // namespace unroll
