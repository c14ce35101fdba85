#include "unroll/cli.hpp"

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "unroll/dataset.hpp"
#include "unroll/experiment.hpp"
#include "unroll/format.hpp"
#include "unroll/parallel.hpp"
#include "unroll/properties.hpp"
#include "unroll/rng.hpp"
#include "unroll/training.hpp"

namespace unroll {

namespace {

using nlohmann::json;

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create directory " + dir + ": " + ec.message());
}

std::string join_path(const std::string& dir, const std::string& name) {
  return (std::filesystem::path(dir) / name).string();
}

json load_config(const std::string& path) {
  if (path.empty()) return json::object();
  return json::parse(read_text_file(path));
}

DatasetSpec dataset_spec_from_json(const json& j) {
  DatasetSpec spec;
  if (j.contains("n_total")) spec.n_total = j.at("n_total").get<int>();
  if (j.contains("d")) spec.d = j.at("d").get<int>();
  if (j.contains("z_dim")) spec.z_dim = j.at("z_dim").get<int>();
  if (j.contains("z_range")) spec.z_range = j.at("z_range").get<double>();
  if (j.contains("b_range")) spec.b_range = j.at("b_range").get<double>();
  if (j.contains("mu")) spec.mu = j.at("mu").get<double>();
  if (j.contains("L")) spec.L = j.at("L").get<double>();
  if (j.contains("seed")) spec.seed = j.at("seed").get<uint64_t>();
  return spec;
}

TrainConfig train_config_from_json(const json& j) {
  TrainConfig cfg;
  if (j.contains("alg")) cfg.alg = alg_from_name(j.at("alg").get<std::string>());
  if (j.contains("k")) cfg.k = j.at("k").get<int>();
  if (j.contains("hidden_dim")) cfg.hidden_dim = j.at("hidden_dim").get<int>();
  if (j.contains("n_train")) cfg.n_train = j.at("n_train").get<int>();
  if (j.contains("epochs")) cfg.epochs = j.at("epochs").get<int>();
  if (j.contains("batch_size")) cfg.batch_size = j.at("batch_size").get<int>();
  if (j.contains("optimizer"))
    cfg.optimizer = j.at("optimizer").get<std::string>() == "sgd" ? TrainConfig::Optimizer::kSgd
                                                                  : TrainConfig::Optimizer::kAdam;
  if (j.contains("lr_grid")) cfg.lr_grid = j.at("lr_grid").get<std::vector<double>>();
  if (j.contains("c0")) cfg.c0 = j.at("c0").get<double>();
  if (j.contains("project_phi")) cfg.project_phi = j.at("project_phi").get<bool>();
  if (j.contains("rnn_hidden")) cfg.rnn_hidden = j.at("rnn_hidden").get<std::vector<int>>();
  if (j.contains("seed")) cfg.seed = j.at("seed").get<uint64_t>();
  return cfg;
}

PropertyConfig property_config_from_json(const json& j) {
  PropertyConfig cfg;
  if (j.contains("k_grid")) cfg.k_grid = j.at("k_grid").get<std::vector<int>>();
  if (j.contains("n_samples")) cfg.n_samples = j.at("n_samples").get<int>();
  if (j.contains("n_phi")) cfg.n_phi = j.at("n_phi").get<int>();
  if (j.contains("d")) cfg.d = j.at("d").get<int>();
  if (j.contains("mu")) cfg.mu = j.at("mu").get<double>();
  if (j.contains("L")) cfg.L = j.at("L").get<double>();
  if (j.contains("c0")) cfg.c0 = j.at("c0").get<double>();
  if (j.contains("b_range")) cfg.b_range = j.at("b_range").get<double>();
  if (j.contains("perturb_scale")) cfg.perturb_scale = j.at("perturb_scale").get<double>();
  if (j.contains("seed")) cfg.seed = j.at("seed").get<uint64_t>();
  return cfg;
}

// Certification sweep shared by `properties` and `experiment` with the
// properties kind. Returns the total violation count.
long run_properties_sweep(PropertyConfig base, const std::vector<Alg>& algs, const std::string& out_dir) {
  ensure_dir(out_dir);
  std::vector<PropertyRow> all_rows;
  long violations = 0;
  for (Alg alg : algs) {
    if (alg == Alg::kRnn) {
      std::cout << "note: the recurrent cell has no closed-form convergence factor; its stability"
                   " certification runs in the test suites, not this sweep\n";
      continue;
    }
    PropertyConfig cfg = base;
    cfg.alg = alg;
    std::vector<PropertyRow> rows = certify_properties(cfg);
    long alg_violations = 0;
    for (const PropertyRow& r : rows) alg_violations += r.violations;
    std::cout << alg_name(alg) << ": " << rows.size() << " cells, " << alg_violations << " violations\n";
    violations += alg_violations;
    all_rows.insert(all_rows.end(), rows.begin(), rows.end());
  }
  write_text_file(join_path(out_dir, "properties.csv"), property_report_csv(all_rows));

  BoundCurveConfig bc;
  bc.d = base.d;
  bc.mu = base.mu;
  bc.L = base.L;
  bc.c0 = base.c0;
  BoundCurves gd = bound_curves(bc, Alg::kGd);
  BoundCurves nag = bound_curves(bc, Alg::kNag);
  write_text_file(join_path(out_dir, "bounds.csv"), bound_curves_csv(gd, nag));
  std::cout << "wrote " << join_path(out_dir, "properties.csv") << " and " << join_path(out_dir, "bounds.csv")
            << "\n";
  return violations;
}

SyntheticDataset dataset_for(const ExperimentConfig& cfg) {
  if (!cfg.dataset_path.empty()) return load_dataset(cfg.dataset_path);
  DatasetSpec spec;
  spec.seed = cfg.seed;
  return gen_dataset(spec);
}

// Prints one warning per grid cell that produced no usable records.
void flag_empty_cells(const ExperimentConfig& cfg, const std::vector<RunRecord>& records) {
  for (Alg alg : cfg.algs)
    for (int k : cfg.k_grid)
      for (int hidden : cfg.hidden_dims) {
        int count = 0;
        for (const RunRecord& r : records)
          if (r.alg == alg_name(alg) && r.k == k && r.hidden_dim == hidden) ++count;
        if (count == 0)
          std::cerr << "warning: cell " << alg_name(alg) << " k=" << k << " hidden=" << hidden
                    << " has no successful runs\n";
      }
}

int run_experiment_cmd(const ExperimentConfig& cfg, const std::string& out_dir, int jobs) {
  ensure_dir(out_dir);
  if (cfg.kind == ExperimentKind::kProperties) {
    PropertyConfig pc;
    pc.seed = cfg.seed;
    pc.jobs = jobs;
    if (!cfg.k_grid.empty()) pc.k_grid = cfg.k_grid;
    return run_properties_sweep(pc, cfg.algs, out_dir) == 0 ? 0 : 2;
  }

  SyntheticDataset data;
  const SyntheticDataset* data_ptr = nullptr;
  if (cfg.kind != ExperimentKind::kRnnCompare) {
    data = dataset_for(cfg);
    data_ptr = &data;
  }
  ExperimentResult result = run_experiment(cfg, data_ptr, jobs);
  for (const std::string& f : result.failures) std::cerr << "warning: " << f << "\n";
  flag_empty_cells(cfg, result.records);
  if (result.records.empty()) {
    std::cerr << "error: every run failed\n";
    return 2;
  }
  const std::string metric = cfg.effective_metric();
  std::vector<AggregateRow> rows = aggregate(result.records, metric);
  write_text_file(join_path(out_dir, "records.json"), records_to_json(result.records));
  write_text_file(join_path(out_dir, "aggregate.csv"), emit_csv(rows));
  write_text_file(join_path(out_dir, "plot.svg"), emit_svg(rows, metric));
  if (!result.failures.empty()) {
    std::string msgs;
    for (const std::string& f : result.failures) msgs += f + "\n";
    write_text_file(join_path(out_dir, "failures.txt"), msgs);
  }
  std::cout << result.records.size() << " runs (" << result.failures.size() << " failed), metric " << metric
            << ", outputs in " << out_dir << "\n";
  return 0;
}

}  // namespace

int cli_main(int argc, const char* const* argv) {
  CLI::App app{"Unrolled optimization layers: training, certification, experiments"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir = ".";
  uint64_t seed = 0;
  bool seed_given = false;
  int jobs = 0;
  std::string metric;

  auto add_common = [&](CLI::App* sub, bool with_jobs, bool with_metric) {
    sub->add_option("--config", config_path, "JSON config file");
    sub->add_option("--out", out_dir, "output directory");
    sub->add_option("--seed", seed, "base seed (overrides config)")->each([&](const std::string&) {
      seed_given = true;
    });
    if (with_jobs) sub->add_option("--jobs", jobs, "worker count (0 = hardware)");
    if (with_metric)
      sub->add_option("--metric", metric, "aggregate metric")
          ->check(CLI::IsMember({"train_loss", "q_error", "gap"}));
  };

  CLI::App* cmd_gen = app.add_subcommand("gen-data", "generate the synthetic corpus");
  add_common(cmd_gen, false, false);

  CLI::App* cmd_props = app.add_subcommand("properties", "certify bounds against empirical sups");
  add_common(cmd_props, true, false);

  CLI::App* cmd_train = app.add_subcommand("train", "one training run");
  add_common(cmd_train, false, false);

  CLI::App* cmd_exp = app.add_subcommand("experiment", "grid of training runs + aggregate CSV/SVG");
  add_common(cmd_exp, true, true);

  CLI::App* cmd_report = app.add_subcommand("report", "re-aggregate a records JSON");
  std::string records_path;
  cmd_report->add_option("records", records_path, "records JSON file")->required()->check(CLI::ExistingFile);
  add_common(cmd_report, false, true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;  // 0 = --help/--version, anything else = usage error
  }

  try {
    if (cmd_gen->parsed()) {
      json j = load_config(config_path);
      DatasetSpec spec = dataset_spec_from_json(j);
      if (seed_given) spec.seed = seed;
      ensure_dir(out_dir);
      SyntheticDataset data = gen_dataset(spec);
      const std::string path = join_path(out_dir, "dataset.json");
      save_dataset(data, path);
      std::cout << "wrote " << path << "\n"
                << "spec: n_total=" << spec.n_total << " d=" << spec.d << " z_dim=" << spec.z_dim
                << " z_range=" << fmt_g6(spec.z_range) << " b_range=" << fmt_g6(spec.b_range)
                << " mu=" << fmt_g6(spec.mu) << " L=" << fmt_g6(spec.L) << " seed=" << spec.seed << "\n";
      return 0;
    }

    if (cmd_props->parsed()) {
      json j = load_config(config_path);
      PropertyConfig pc = property_config_from_json(j);
      if (seed_given) pc.seed = seed;
      pc.jobs = jobs > 0 ? jobs : hardware_jobs();
      std::vector<Alg> algs = {Alg::kGd, Alg::kNag};
      if (j.contains("algs")) {
        algs.clear();
        for (const json& a : j.at("algs")) algs.push_back(alg_from_name(a.get<std::string>()));
      }
      const long violations = run_properties_sweep(pc, algs, out_dir);
      if (violations > 0) {
        std::cerr << "error: " << violations << " bound violations\n";
        return 2;
      }
      return 0;
    }

    if (cmd_train->parsed()) {
      json j = load_config(config_path);
      TrainConfig tc = train_config_from_json(j);
      if (seed_given) tc.seed = seed;
      ensure_dir(out_dir);
      RunRecord rec;
      const bool l2o = tc.alg == Alg::kRnn || (j.contains("mode") && j.at("mode").get<std::string>() == "l2o");
      if (l2o) {
        const int d = j.contains("l2o_d") ? j.at("l2o_d").get<int>() : 10;
        const int n = j.contains("l2o_n_total") ? j.at("l2o_n_total").get<int>() : 10000;
        const double b_range = j.contains("l2o_b_range") ? j.at("l2o_b_range").get<double>() : 5.0;
        ProblemDataset problems = gen_problem_dataset(tc.seed, n, d, 0.1, 1.0, b_range);
        rec = train_model_l2o(tc, problems);
      } else {
        SyntheticDataset data;
        if (j.contains("dataset_path") && !j.at("dataset_path").get<std::string>().empty()) {
          data = load_dataset(j.at("dataset_path").get<std::string>());
        } else {
          DatasetSpec spec;
          spec.seed = tc.seed;
          data = gen_dataset(spec);
        }
        rec = train_model(tc, data);
      }
      write_text_file(join_path(out_dir, "run.json"), records_to_json({rec}));
      std::cout << "alg=" << rec.alg << " k=" << rec.k << " hidden=" << rec.hidden_dim
                << " best_lr=" << fmt_g6(rec.best_lr) << " train_loss=" << fmt_g6(rec.train_loss)
                << " test_loss=" << fmt_g6(rec.test_loss) << " gap=" << fmt_g6(rec.gap)
                << " q_error=" << fmt_g6(rec.q_error) << "\n";
      return 0;
    }

    if (cmd_exp->parsed()) {
      ExperimentConfig cfg = config_path.empty() ? ExperimentConfig{} : experiment_config_from_json(read_text_file(config_path));
      if (seed_given) cfg.seed = seed;
      if (!metric.empty()) cfg.metric = metric;
      return run_experiment_cmd(cfg, out_dir, jobs > 0 ? jobs : hardware_jobs());
    }

    if (cmd_report->parsed()) {
      std::vector<RunRecord> records = records_from_json(read_text_file(records_path));
      if (records.empty()) {
        std::cerr << "error: no records in " << records_path << "\n";
        return 2;
      }
      const std::string m = metric.empty() ? "train_loss" : metric;
      std::vector<AggregateRow> rows = aggregate(records, m);
      ensure_dir(out_dir);
      write_text_file(join_path(out_dir, "aggregate.csv"), emit_csv(rows));
      write_text_file(join_path(out_dir, "plot.svg"), emit_svg(rows, m));
      std::cout << rows.size() << " aggregate rows, metric " << m << ", outputs in " << out_dir << "\n";
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}

}  // namespace unroll
