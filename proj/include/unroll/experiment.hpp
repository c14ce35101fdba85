#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "unroll/dataset.hpp"
#include "unroll/training.hpp"

namespace unroll {

enum class ExperimentKind { kApprox, kQerr, kGap, kRnnCompare, kProperties };

ExperimentKind experiment_kind_from_name(const std::string& name);
std::string experiment_kind_name(ExperimentKind kind);

// Grid of training runs: algorithms x depths x energy widths x seeds. The
// approx / qerr / gap kinds differ only in their default metric; rnn-compare
// trains on directly given problems (d = l2o_d) instead of the synthetic
// feature corpus.
struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::kApprox;
  std::vector<Alg> algs = {Alg::kGd, Alg::kNag};
  std::vector<int> k_grid = {1, 2, 5, 10, 20, 50, 100};
  std::vector<int> hidden_dims = {16};
  int seeds = 20;
  TrainConfig train;  // per-run defaults; alg/k/hidden_dim/seed are filled by the driver
  std::string metric;  // empty = kind default
  std::string dataset_path;
  int l2o_n_total = 10000;
  int l2o_d = 10;
  double l2o_b_range = 5.0;
  uint64_t seed = 0;

  std::string effective_metric() const;
};

struct ExperimentResult {
  std::vector<RunRecord> records;
  std::vector<std::string> failures;  // one message per failed run, run order
};

// Executes the full grid. Runs are independent; jobs controls how many are
// in flight. Run r uses a seed derived from (base seed, seed index) so every
// cell sees the same per-seed train/test split, which keeps per-seed
// comparisons across algorithms paired.
ExperimentResult run_experiment(const ExperimentConfig& cfg, const SyntheticDataset* data, int jobs);

struct AggregateRow {
  std::string alg;
  int k = 0;
  int hidden_dim = 0;
  std::string metric;
  double mean = 0.0;
  double std_dev = 0.0;  // sample standard deviation (n - 1)
  int n_runs = 0;
};

std::vector<AggregateRow> aggregate(const std::vector<RunRecord>& records, const std::string& metric);

std::string emit_csv(const std::vector<AggregateRow>& rows);
std::vector<AggregateRow> parse_csv(const std::string& text);

// Line plot of mean vs k per (alg, hidden_dim) group with +-1 std whiskers.
// Hand-built SVG with fixed formatting: identical input gives identical bytes.
std::string emit_svg(const std::vector<AggregateRow>& rows, const std::string& metric);

std::string records_to_json(const std::vector<RunRecord>& records);
std::vector<RunRecord> records_from_json(const std::string& text);

std::string experiment_config_to_json(const ExperimentConfig& cfg);
ExperimentConfig experiment_config_from_json(const std::string& text);

void write_text_file(const std::string& path, const std::string& content);
std::string read_text_file(const std::string& path);

}  // namespace unroll
