#include "unroll/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <tuple>

#include "json.hpp"

#include "unroll/format.hpp"
#include "unroll/parallel.hpp"
#include "unroll/rng.hpp"

namespace unroll {

using nlohmann::json;

ExperimentKind experiment_kind_from_name(const std::string& name) {
  if (name == "approx") return ExperimentKind::kApprox;
  if (name == "qerr") return ExperimentKind::kQerr;
  if (name == "gap") return ExperimentKind::kGap;
  if (name == "rnn-compare") return ExperimentKind::kRnnCompare;
  if (name == "properties") return ExperimentKind::kProperties;
  throw std::invalid_argument("unknown experiment kind: " + name);
}

std::string experiment_kind_name(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::kApprox: return "approx";
    case ExperimentKind::kQerr: return "qerr";
    case ExperimentKind::kGap: return "gap";
    case ExperimentKind::kRnnCompare: return "rnn-compare";
    case ExperimentKind::kProperties: return "properties";
  }
  throw std::logic_error("bad experiment kind");
}

std::string ExperimentConfig::effective_metric() const {
  if (!metric.empty()) return metric;
  switch (kind) {
    case ExperimentKind::kApprox: return "train_loss";
    case ExperimentKind::kQerr: return "q_error";
    case ExperimentKind::kGap: return "gap";
    case ExperimentKind::kRnnCompare: return "train_loss";
    case ExperimentKind::kProperties: return "train_loss";  // unused; properties has its own report
  }
  throw std::logic_error("bad experiment kind");
}

namespace {

struct RunSlot {
  RunRecord record;
  bool ok = false;
  std::string error;
};

double metric_value(const RunRecord& r, const std::string& metric) {
  if (metric == "train_loss") return r.train_loss;
  if (metric == "test_loss") return r.test_loss;
  if (metric == "gap") return r.gap;
  if (metric == "q_error") return r.q_error;
  throw std::invalid_argument("unknown metric: " + metric);
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& cfg, const SyntheticDataset* data, int jobs) {
  if (cfg.kind == ExperimentKind::kProperties)
    throw std::invalid_argument("the properties kind runs through the certification sweep, not the training driver");
  if (cfg.algs.empty() || cfg.k_grid.empty() || cfg.hidden_dims.empty() || cfg.seeds <= 0)
    throw std::invalid_argument("experiment grid is empty");
  const bool l2o = cfg.kind == ExperimentKind::kRnnCompare;
  if (!l2o && data == nullptr) throw std::invalid_argument("this experiment kind needs a dataset");

  ProblemDataset problems;
  if (l2o) problems = gen_problem_dataset(cfg.seed, cfg.l2o_n_total, cfg.l2o_d, 0.1, 1.0, cfg.l2o_b_range);

  // Canonical run order: alg slowest, then k, then hidden width, then seed.
  struct Cell {
    Alg alg;
    int k;
    int hidden;
    int seed_index;
  };
  std::vector<Cell> cells;
  for (Alg alg : cfg.algs)
    for (int k : cfg.k_grid)
      for (int hidden : cfg.hidden_dims)
        for (int s = 0; s < cfg.seeds; ++s) cells.push_back({alg, k, hidden, s});

  std::vector<RunSlot> slots(cells.size());
  parallel_for(static_cast<int>(cells.size()), jobs, [&](int i) {
    const Cell& cell = cells[static_cast<size_t>(i)];
    TrainConfig tc = cfg.train;
    tc.alg = cell.alg;
    tc.k = cell.k;
    tc.hidden_dim = cell.hidden;
    // Same derived seed for every cell sharing a seed index: the train/test
    // split and problem draws pair up across algorithms and depths.
    tc.seed = SeededRng::derive_stream(cfg.seed, static_cast<uint64_t>(cell.seed_index));
    RunSlot& slot = slots[static_cast<size_t>(i)];
    try {
      slot.record = l2o ? train_model_l2o(tc, problems) : train_model(tc, *data);
      slot.ok = true;
    } catch (const std::exception& e) {
      slot.error = std::string("run ") + alg_name(cell.alg) + " k=" + std::to_string(cell.k) +
                   " hidden=" + std::to_string(cell.hidden) + " seed_index=" + std::to_string(cell.seed_index) +
                   ": " + e.what();
    }
  });

  ExperimentResult out;
  for (const RunSlot& slot : slots) {
    if (slot.ok)
      out.records.push_back(slot.record);
    else
      out.failures.push_back(slot.error);
  }
  return out;
}

std::vector<AggregateRow> aggregate(const std::vector<RunRecord>& records, const std::string& metric) {
  std::map<std::tuple<std::string, int, int>, std::vector<double>> groups;
  for (const RunRecord& r : records)
    groups[{r.alg, r.hidden_dim, r.k}].push_back(metric_value(r, metric));

  std::vector<AggregateRow> rows;
  for (const auto& [key, values] : groups) {
    AggregateRow row;
    row.alg = std::get<0>(key);
    row.hidden_dim = std::get<1>(key);
    row.k = std::get<2>(key);
    row.metric = metric;
    row.n_runs = static_cast<int>(values.size());
    double sum = 0.0;
    for (double v : values) sum += v;
    row.mean = sum / static_cast<double>(values.size());
    if (values.size() > 1) {
      double ss = 0.0;
      for (double v : values) ss += (v - row.mean) * (v - row.mean);
      row.std_dev = std::sqrt(ss / static_cast<double>(values.size() - 1));
    }
    rows.push_back(row);
  }
  return rows;  // map iteration order: sorted by (alg, hidden_dim, k)
}

std::string emit_csv(const std::vector<AggregateRow>& rows) {
  std::string out = "alg,k,hidden_dim,metric,mean,std,n_runs\n";
  for (const AggregateRow& r : rows) {
    out += r.alg;
    out += ',';
    out += std::to_string(r.k);
    out += ',';
    out += std::to_string(r.hidden_dim);
    out += ',';
    out += r.metric;
    out += ',';
    out += fmt_g17(r.mean);
    out += ',';
    out += fmt_g17(r.std_dev);
    out += ',';
    out += std::to_string(r.n_runs);
    out += '\n';
  }
  return out;
}

std::vector<AggregateRow> parse_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw std::invalid_argument("empty csv");
  if (line == "alg,k,hidden_dim,metric,mean,std,n_runs\r") line.pop_back();
  if (line != "alg,k,hidden_dim,metric,mean,std,n_runs")
    throw std::invalid_argument("unexpected csv header: " + line);
  std::vector<AggregateRow> rows;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::string cur;
    for (char c : line) {
      if (c == ',') {
        fields.push_back(cur);
        cur.clear();
      } else {
        cur += c;
      }
    }
    fields.push_back(cur);
    if (fields.size() != 7) throw std::invalid_argument("bad csv row: " + line);
    AggregateRow r;
    r.alg = fields[0];
    r.k = std::stoi(fields[1]);
    r.hidden_dim = std::stoi(fields[2]);
    r.metric = fields[3];
    r.mean = std::stod(fields[4]);
    r.std_dev = std::stod(fields[5]);
    r.n_runs = std::stoi(fields[6]);
    rows.push_back(r);
  }
  return rows;
}

namespace {

std::string fmt_svg(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.3f", v);
  return buf;
}

}  // namespace

std::string emit_svg(const std::vector<AggregateRow>& rows, const std::string& metric) {
  const double width = 720.0, height = 480.0;
  const double ml = 70.0, mr = 30.0, mt = 40.0, mb = 50.0;
  const double pw = width - ml - mr, ph = height - mt - mb;

  // Series keyed by (alg, hidden_dim), points sorted by k.
  std::map<std::pair<std::string, int>, std::vector<AggregateRow>> series;
  double kmin = 1e300, kmax = -1e300, vmin = 1e300, vmax = -1e300;
  for (const AggregateRow& r : rows) {
    series[{r.alg, r.hidden_dim}].push_back(r);
    kmin = std::min(kmin, static_cast<double>(r.k));
    kmax = std::max(kmax, static_cast<double>(r.k));
    vmin = std::min(vmin, r.mean - r.std_dev);
    vmax = std::max(vmax, r.mean + r.std_dev);
  }
  if (rows.empty()) {
    kmin = 0.0;
    kmax = 1.0;
    vmin = 0.0;
    vmax = 1.0;
  }
  if (kmax <= kmin) kmax = kmin + 1.0;
  if (vmax <= vmin) vmax = vmin + 1.0;
  const double vpad = 0.05 * (vmax - vmin);
  vmin -= vpad;
  vmax += vpad;
  for (auto& [key, pts] : series)
    std::sort(pts.begin(), pts.end(), [](const AggregateRow& a, const AggregateRow& b) { return a.k < b.k; });

  auto sx = [&](double k) { return ml + pw * (k - kmin) / (kmax - kmin); };
  auto sy = [&](double v) { return mt + ph * (1.0 - (v - vmin) / (vmax - vmin)); };

  static const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};
  const int n_colors = 6;

  std::string s;
  s += "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  s += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"720\" height=\"480\" viewBox=\"0 0 720 480\">\n";
  s += "<rect x=\"0\" y=\"0\" width=\"720\" height=\"480\" fill=\"#ffffff\"/>\n";
  // Axes.
  s += "<line x1=\"" + fmt_svg(ml) + "\" y1=\"" + fmt_svg(mt + ph) + "\" x2=\"" + fmt_svg(ml + pw) + "\" y2=\"" +
       fmt_svg(mt + ph) + "\" stroke=\"#000000\" stroke-width=\"1\"/>\n";
  s += "<line x1=\"" + fmt_svg(ml) + "\" y1=\"" + fmt_svg(mt) + "\" x2=\"" + fmt_svg(ml) + "\" y2=\"" +
       fmt_svg(mt + ph) + "\" stroke=\"#000000\" stroke-width=\"1\"/>\n";
  // Tick labels: endpoints only.
  s += "<text x=\"" + fmt_svg(ml) + "\" y=\"" + fmt_svg(mt + ph + 18.0) +
       "\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\">" + fmt_svg(kmin) + "</text>\n";
  s += "<text x=\"" + fmt_svg(ml + pw) + "\" y=\"" + fmt_svg(mt + ph + 18.0) +
       "\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\">" + fmt_svg(kmax) + "</text>\n";
  s += "<text x=\"" + fmt_svg(ml - 6.0) + "\" y=\"" + fmt_svg(mt + ph) +
       "\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\">" + fmt_svg(vmin) + "</text>\n";
  s += "<text x=\"" + fmt_svg(ml - 6.0) + "\" y=\"" + fmt_svg(mt + 4.0) +
       "\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\">" + fmt_svg(vmax) + "</text>\n";
  s += "<text x=\"" + fmt_svg(ml + pw / 2.0) + "\" y=\"" + fmt_svg(height - 12.0) +
       "\" font-family=\"sans-serif\" font-size=\"13\" text-anchor=\"middle\">unroll depth k</text>\n";
  s += "<text x=\"" + fmt_svg(ml + pw / 2.0) + "\" y=\"" + fmt_svg(20.0) +
       "\" font-family=\"sans-serif\" font-size=\"13\" text-anchor=\"middle\">" + metric + " (mean &#177; 1 std, " +
       std::to_string(rows.empty() ? 0 : rows.front().n_runs) + " runs)</text>\n";

  int idx = 0;
  for (const auto& [key, pts] : series) {
    const char* color = kColors[idx % n_colors];
    std::string poly = "<polyline fill=\"none\" stroke=\"";
    poly += color;
    poly += "\" stroke-width=\"1.5\" points=\"";
    for (size_t i = 0; i < pts.size(); ++i) {
      if (i) poly += ' ';
      poly += fmt_svg(sx(pts[i].k)) + "," + fmt_svg(sy(pts[i].mean));
    }
    poly += "\"/>\n";
    s += poly;
    for (const AggregateRow& p : pts) {
      const double x = sx(p.k);
      const double ylo = sy(p.mean - p.std_dev), yhi = sy(p.mean + p.std_dev);
      s += "<line x1=\"" + fmt_svg(x) + "\" y1=\"" + fmt_svg(ylo) + "\" x2=\"" + fmt_svg(x) + "\" y2=\"" +
           fmt_svg(yhi) + "\" stroke=\"" + color + "\" stroke-width=\"1\"/>\n";
      s += "<circle cx=\"" + fmt_svg(x) + "\" cy=\"" + fmt_svg(sy(p.mean)) + "\" r=\"2.5\" fill=\"" + color +
           "\"/>\n";
    }
    const double lx = ml + pw - 150.0, ly = mt + 16.0 + 16.0 * idx;
    s += "<line x1=\"" + fmt_svg(lx) + "\" y1=\"" + fmt_svg(ly - 4.0) + "\" x2=\"" + fmt_svg(lx + 24.0) +
         "\" y2=\"" + fmt_svg(ly - 4.0) + "\" stroke=\"" + color + "\" stroke-width=\"1.5\"/>\n";
    s += "<text x=\"" + fmt_svg(lx + 30.0) + "\" y=\"" + fmt_svg(ly) +
         "\" font-family=\"sans-serif\" font-size=\"12\">" + key.first + " / hidden " + std::to_string(key.second) +
         "</text>\n";
    ++idx;
  }
  s += "</svg>\n";
  return s;
}

std::string records_to_json(const std::vector<RunRecord>& records) {
  json arr = json::array();
  for (const RunRecord& r : records) {
    json j;
    j["alg"] = r.alg;
    j["k"] = r.k;
    j["hidden_dim"] = r.hidden_dim;
    j["n_train"] = r.n_train;
    j["best_lr"] = r.best_lr;
    j["train_loss"] = r.train_loss;
    j["test_loss"] = r.test_loss;
    j["gap"] = r.gap;
    j["q_error"] = r.q_error;
    if (r.phi_final) j["phi_final"] = *r.phi_final;
    if (r.c_phi_final) j["c_phi_final"] = *r.c_phi_final;
    j["seed"] = r.seed;
    j["epochs_run"] = r.epochs_run;
    arr.push_back(j);
  }
  return arr.dump(2) + "\n";
}

std::vector<RunRecord> records_from_json(const std::string& text) {
  json arr = json::parse(text);
  std::vector<RunRecord> out;
  for (const json& j : arr) {
    RunRecord r;
    r.alg = j.at("alg").get<std::string>();
    r.k = j.at("k").get<int>();
    r.hidden_dim = j.at("hidden_dim").get<int>();
    r.n_train = j.at("n_train").get<int>();
    r.best_lr = j.at("best_lr").get<double>();
    r.train_loss = j.at("train_loss").get<double>();
    r.test_loss = j.at("test_loss").get<double>();
    r.gap = j.at("gap").get<double>();
    r.q_error = j.at("q_error").get<double>();
    if (j.contains("phi_final")) r.phi_final = j.at("phi_final").get<double>();
    if (j.contains("c_phi_final")) r.c_phi_final = j.at("c_phi_final").get<double>();
    r.seed = j.at("seed").get<uint64_t>();
    r.epochs_run = j.at("epochs_run").get<int>();
    out.push_back(r);
  }
  return out;
}

std::string experiment_config_to_json(const ExperimentConfig& cfg) {
  json j;
  j["kind"] = experiment_kind_name(cfg.kind);
  json algs = json::array();
  for (Alg a : cfg.algs) algs.push_back(alg_name(a));
  j["algs"] = algs;
  j["k_grid"] = cfg.k_grid;
  j["hidden_dims"] = cfg.hidden_dims;
  j["seeds"] = cfg.seeds;
  j["metric"] = cfg.metric;
  j["dataset_path"] = cfg.dataset_path;
  j["l2o_n_total"] = cfg.l2o_n_total;
  j["l2o_d"] = cfg.l2o_d;
  j["l2o_b_range"] = cfg.l2o_b_range;
  j["seed"] = cfg.seed;
  json t;
  t["n_train"] = cfg.train.n_train;
  t["epochs"] = cfg.train.epochs;
  t["batch_size"] = cfg.train.batch_size;
  t["optimizer"] = cfg.train.optimizer == TrainConfig::Optimizer::kAdam ? "adam" : "sgd";
  t["lr_grid"] = cfg.train.lr_grid;
  t["c0"] = cfg.train.c0;
  t["project_phi"] = cfg.train.project_phi;
  t["rnn_hidden"] = cfg.train.rnn_hidden;
  j["train"] = t;
  return j.dump(2) + "\n";
}

ExperimentConfig experiment_config_from_json(const std::string& text) {
  json j = json::parse(text);
  ExperimentConfig cfg;
  if (j.contains("kind")) cfg.kind = experiment_kind_from_name(j.at("kind").get<std::string>());
  if (j.contains("algs")) {
    cfg.algs.clear();
    for (const json& a : j.at("algs")) cfg.algs.push_back(alg_from_name(a.get<std::string>()));
  }
  if (j.contains("k_grid")) cfg.k_grid = j.at("k_grid").get<std::vector<int>>();
  if (j.contains("hidden_dims")) cfg.hidden_dims = j.at("hidden_dims").get<std::vector<int>>();
  if (j.contains("seeds")) cfg.seeds = j.at("seeds").get<int>();
  if (j.contains("metric")) cfg.metric = j.at("metric").get<std::string>();
  if (j.contains("dataset_path")) cfg.dataset_path = j.at("dataset_path").get<std::string>();
  if (j.contains("l2o_n_total")) cfg.l2o_n_total = j.at("l2o_n_total").get<int>();
  if (j.contains("l2o_d")) cfg.l2o_d = j.at("l2o_d").get<int>();
  if (j.contains("l2o_b_range")) cfg.l2o_b_range = j.at("l2o_b_range").get<double>();
  if (j.contains("seed")) cfg.seed = j.at("seed").get<uint64_t>();
  if (j.contains("train")) {
    const json& t = j.at("train");
    if (t.contains("n_train")) cfg.train.n_train = t.at("n_train").get<int>();
    if (t.contains("epochs")) cfg.train.epochs = t.at("epochs").get<int>();
    if (t.contains("batch_size")) cfg.train.batch_size = t.at("batch_size").get<int>();
    if (t.contains("optimizer"))
      cfg.train.optimizer = t.at("optimizer").get<std::string>() == "sgd" ? TrainConfig::Optimizer::kSgd
                                                                          : TrainConfig::Optimizer::kAdam;
    if (t.contains("lr_grid")) cfg.train.lr_grid = t.at("lr_grid").get<std::vector<double>>();
    if (t.contains("c0")) cfg.train.c0 = t.at("c0").get<double>();
    if (t.contains("project_phi")) cfg.train.project_phi = t.at("project_phi").get<bool>();
    if (t.contains("rnn_hidden")) cfg.train.rnn_hidden = t.at("rnn_hidden").get<std::vector<int>>();
  }
  return cfg;
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw std::runtime_error("write failed: " + path);
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open for reading: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace unroll
