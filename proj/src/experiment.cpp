#include "gnnlab/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>

#include <json.hpp>

#include "gnnlab/csv.hpp"
#include "gnnlab/dynamics.hpp"
#include "gnnlab/flops.hpp"
#include "gnnlab/serialize.hpp"

namespace gnnlab {

namespace {

using nlohmann::json;

json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config: " + path);
  try {
    json j;
    in >> j;
    return j;
  } catch (const json::exception& e) {
    throw std::runtime_error("config parse error in " + path + ": " + e.what());
  }
}

template <typename T>
void read_if(const json& j, const char* key, T& out) {
  if (j.contains(key)) j.at(key).get_to(out);
}

// Misspelled keys must fail loudly, not silently fall back to defaults.
void require_keys(const json& j, std::initializer_list<const char*> allowed,
                  const char* where) {
  for (const auto& it : j.items()) {
    bool known = false;
    for (const char* k : allowed)
      if (it.key() == k) {
        known = true;
        break;
      }
    if (!known)
      throw std::runtime_error("unknown key \"" + it.key() + "\" in " + where);
  }
}

void parse_synthetic_fields(const json& s, SyntheticSpec& out) {
  require_keys(s,
               {"num_nodes", "num_classes", "feature_dim", "avg_degree", "homophily",
                "center_scale", "feature_noise", "seed"},
               "synthetic generator parameters");
  read_if(s, "num_nodes", out.num_nodes);
  read_if(s, "num_classes", out.num_classes);
  read_if(s, "feature_dim", out.feature_dim);
  read_if(s, "avg_degree", out.avg_degree);
  read_if(s, "homophily", out.homophily);
  read_if(s, "center_scale", out.center_scale);
  read_if(s, "feature_noise", out.feature_noise);
  read_if(s, "seed", out.seed);
}

DatasetSpec parse_dataset(const json& j) {
  require_keys(j, {"name", "synthetic", "content", "cites", "nodes", "edges"},
               "the dataset section");
  DatasetSpec d;
  d.name = j.at("name").get<std::string>();
  if (d.name == "synthetic") {
    d.is_synthetic = true;
    if (j.contains("synthetic")) parse_synthetic_fields(j.at("synthetic"), d.synthetic);
  } else if (j.contains("nodes") || j.contains("edges")) {
    d.is_webkb = true;
    d.node_path = j.at("nodes").get<std::string>();
    d.edge_path = j.at("edges").get<std::string>();
  } else {
    d.content_path = j.at("content").get<std::string>();
    d.cites_path = j.at("cites").get<std::string>();
  }
  return d;
}

ModelConfig parse_model(const json& j) {
  require_keys(j,
               {"kind", "depth", "hidden_dim", "heads_hidden", "heads_out", "activation",
                "leaky_slope", "dropout", "residual"},
               "the model section");
  ModelConfig m;
  m.kind = model_kind_from_string(j.at("kind").get<std::string>());
  read_if(j, "depth", m.depth);
  read_if(j, "hidden_dim", m.hidden_dim);
  read_if(j, "heads_hidden", m.heads_hidden);
  read_if(j, "heads_out", m.heads_out);
  if (j.contains("activation"))
    m.activation = activation_from_string(j.at("activation").get<std::string>());
  read_if(j, "leaky_slope", m.leaky_slope);
  read_if(j, "dropout", m.dropout);
  read_if(j, "residual", m.residual);
  return m;
}

TrainConfig parse_train(const json& j) {
  require_keys(j, {"lr", "weight_decay", "max_epochs", "patience"}, "the train section");
  TrainConfig t;
  read_if(j, "lr", t.lr);
  read_if(j, "weight_decay", t.weight_decay);
  read_if(j, "max_epochs", t.max_epochs);
  read_if(j, "patience", t.patience);
  return t;
}

PruneConfig parse_prune(const json& j) {
  require_keys(j,
               {"noise_sigma", "noise_samples", "beta", "r0", "gamma", "epsilon", "sign_mode",
                "prune_every", "clamp_probabilities"},
               "the prune section");
  PruneConfig p;
  read_if(j, "noise_sigma", p.noise_sigma);
  read_if(j, "noise_samples", p.noise_samples);
  read_if(j, "beta", p.beta);
  read_if(j, "r0", p.r0);
  read_if(j, "gamma", p.gamma);
  read_if(j, "epsilon", p.epsilon);
  if (j.contains("sign_mode")) p.sign_mode = sign_mode_from_string(j.at("sign_mode").get<std::string>());
  read_if(j, "prune_every", p.prune_every);
  read_if(j, "clamp_probabilities", p.clamp_probabilities);
  return p;
}

std::string fmt_cell(double cell) { return fmt_g12(cell); }

std::string record_key(const std::string& sweep, double cell, std::uint64_t seed,
                       const std::string& model) {
  return sweep + "|" + fmt_cell(cell) + "|" + std::to_string(seed) + "|" + model;
}

constexpr const char* kResultsHeader =
    "sweep,cell,seed,model,test_acc,best_epoch,gflops,edges_alive,mu_last_hidden";

std::vector<std::string> record_row(const ResultsRecord& r) {
  return {r.sweep,
          fmt_cell(r.cell),
          std::to_string(r.seed),
          r.model,
          fmt_g12(r.test_acc),
          std::to_string(r.best_epoch),
          fmt_g12(r.gflops),
          std::to_string(r.edges_alive),
          fmt_g12(r.mu_last_hidden)};
}

bool record_less(const ResultsRecord& a, const ResultsRecord& b) {
  if (a.sweep != b.sweep) return a.sweep < b.sweep;
  if (a.cell != b.cell) return a.cell < b.cell;
  if (a.seed != b.seed) return a.seed < b.seed;
  return a.model < b.model;
}

std::vector<ResultsRecord> load_existing_results(const std::string& path) {
  std::vector<ResultsRecord> out;
  if (!std::filesystem::exists(path)) return out;
  auto rows = read_csv(path);
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& c = rows[i];
    if (c.size() != 9)
      throw std::runtime_error("results file has a malformed row: " + path);
    ResultsRecord r;
    r.sweep = c[0];
    r.cell = std::stod(c[1]);
    r.seed = std::stoull(c[2]);
    r.model = c[3];
    r.test_acc = std::stod(c[4]);
    r.best_epoch = std::stoi(c[5]);
    r.gflops = std::stod(c[6]);
    r.edges_alive = std::stoll(c[7]);
    r.mu_last_hidden = std::stod(c[8]);
    out.push_back(std::move(r));
  }
  return out;
}

// Trains one sweep cell and writes its per-cell trace files.
ResultsRecord run_cell(const Graph& g, const ExperimentConfig& cfg, const ModelConfig& mcfg,
                       const std::string& sweep, double cell, std::uint64_t seed) {
  ResultsRecord rec;
  rec.sweep = sweep;
  rec.cell = cell;
  rec.seed = seed;
  rec.model = model_kind_name(mcfg.kind);

  TrainConfig tcfg = cfg.train;
  tcfg.seed = seed + cfg.seed_offset;
  Masks masks = split_masks(g, cfg.split, tcfg.seed);

  const auto t0 = std::chrono::steady_clock::now();
  PruneState st;
  std::vector<PruneLogRow> prune_log;
  TrainResult tr;
  if (mcfg.kind == ModelKind::dynamo_gat) {
    PruneHook hook = make_dynamo_hook(g, st, *cfg.prune, tcfg.seed, &prune_log);
    tr = train(g, masks, mcfg, tcfg, &st, hook);
  } else {
    tr = train(g, masks, mcfg, tcfg);
  }
  rec.wall_time_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  const PruneState* stp = st.initialized ? &st : nullptr;
  rec.test_acc = tr.report.test_acc;
  rec.best_epoch = tr.report.best_epoch;
  rec.gflops = count_flops(mcfg, g, stp).gflops();
  if (stp) {
    rec.edges_alive = 0;
    for (int l = 0; l < st.num_layers(); ++l) rec.edges_alive += st.alive_count(l);
  }

  // mu(X) after every layer of the trained model, evaluation mode.
  std::vector<double> mu;
  Mat cur = g.features;
  mu.push_back(oversmoothing_mu(cur));
  for (int l = 0; l < tr.model.num_layers(); ++l) {
    cur = eval_layer_apply(cur, g, tr.model, l, stp);
    mu.push_back(oversmoothing_mu(cur));
  }
  rec.mu_last_hidden = mu[static_cast<std::size_t>(tr.model.num_layers() - 1)];

  const std::string tag = cell_tag(rec);
  {
    CsvWriter w((std::filesystem::path(cfg.out_dir) / ("mu_trace_" + tag + ".csv")).string(),
                {"layer", "mu"});
    for (std::size_t t = 0; t < mu.size(); ++t)
      w.write_row_raw({std::to_string(t), fmt_g12(mu[t])});
  }
  if (mcfg.kind == ModelKind::dynamo_gat) {
    CsvWriter w((std::filesystem::path(cfg.out_dir) / ("prune_log_" + tag + ".csv")).string(),
                {"epoch", "layer", "edges_alive", "mean_p", "tau", "r"});
    for (const auto& row : prune_log)
      w.write_row_raw({std::to_string(row.epoch), std::to_string(row.layer),
                       std::to_string(row.edges_alive), fmt_g12(row.mean_p), fmt_g12(row.tau),
                       fmt_g12(row.r)});
  }
  if (cfg.save_models)
    save_model(tr.model,
               (std::filesystem::path(cfg.out_dir) / ("model_" + tag + ".bin")).string());
  return rec;
}

struct CellJob {
  double cell = 0;
  std::uint64_t seed = 0;
};

// Shared sweep engine: builds jobs, skips resumed cells, runs the rest
// on a bounded pool, and rewrites results.csv sorted.
std::vector<ResultsRecord> run_sweep(const ExperimentConfig& cfg, const std::string& sweep) {
  validate_experiment_config(cfg);
  std::filesystem::create_directories(cfg.out_dir);
  const std::string results_path =
      (std::filesystem::path(cfg.out_dir) / "results.csv").string();

  std::vector<ResultsRecord> records = load_existing_results(results_path);
  std::set<std::string> done;
  for (const auto& r : records) done.insert(record_key(r.sweep, r.cell, r.seed, r.model));

  const std::string model_name = model_kind_name(cfg.model.kind);
  std::vector<CellJob> jobs;
  const bool depth_sweep = sweep == "depth";
  const auto& cells_i = cfg.depths;
  const auto& cells_d = cfg.homophily;
  const std::size_t num_cells = depth_sweep ? cells_i.size() : cells_d.size();
  for (std::size_t c = 0; c < num_cells; ++c) {
    const double cell = depth_sweep ? static_cast<double>(cells_i[c]) : cells_d[c];
    for (std::uint64_t seed : cfg.seeds)
      if (!done.count(record_key(sweep, cell, seed, model_name)))
        jobs.push_back({cell, seed});
  }

  // Depth sweeps share one graph; homophily cells each generate theirs.
  Graph shared_graph;
  if (depth_sweep) shared_graph = build_dataset(cfg.dataset, -1.0, 0);

  std::atomic<std::size_t> next{0};
  std::mutex sink;
  const int workers =
      std::max(1, std::min<int>(cfg.workers, static_cast<int>(jobs.size() ? jobs.size() : 1)));
  auto worker = [&]() {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= jobs.size()) return;
      const CellJob& job = jobs[i];
      ModelConfig mcfg = cfg.model;
      if (depth_sweep) mcfg.depth = static_cast<int>(job.cell);
      try {
        Graph local;
        const Graph* g = &shared_graph;
        if (!depth_sweep) {
          local = build_dataset(cfg.dataset, job.cell, job.seed);
          g = &local;
        }
        ResultsRecord rec = run_cell(*g, cfg, mcfg, sweep, job.cell, job.seed);
        std::lock_guard<std::mutex> lk(sink);
        std::fprintf(stderr, "[%s] %s done: acc=%.4f (%.1fs)\n", sweep.c_str(),
                     cell_tag(rec).c_str(), rec.test_acc, rec.wall_time_s);
        records.push_back(std::move(rec));
      } catch (const std::exception& e) {
        std::lock_guard<std::mutex> lk(sink);
        std::fprintf(stderr, "[%s] cell %s seed %llu FAILED, skipping: %s\n", sweep.c_str(),
                     fmt_cell(job.cell).c_str(), static_cast<unsigned long long>(job.seed),
                     e.what());
      }
    }
  };
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
  for (auto& t : pool) t.join();

  std::sort(records.begin(), records.end(), record_less);
  emit_report(records, ReportFormat::csv, cfg.out_dir);
  return records;
}

}  // namespace

ExperimentConfig load_experiment_config(const std::string& path) {
  const json j = load_json_file(path);
  ExperimentConfig cfg;
  try {
    require_keys(j,
                 {"dataset", "model", "train", "prune", "split", "depths", "homophily",
                  "seeds", "out_dir"},
                 "the config");
    cfg.dataset = parse_dataset(j.at("dataset"));
    cfg.model = parse_model(j.at("model"));
    if (j.contains("train")) cfg.train = parse_train(j.at("train"));
    if (j.contains("prune")) cfg.prune = parse_prune(j.at("prune"));
    if (j.contains("split")) {
      const json& s = j.at("split");
      require_keys(s, {"kind", "train_per_class", "val_size", "test_size", "p_train", "p_val"},
                   "the split section");
      if (s.contains("kind")) {
        const std::string k = s.at("kind").get<std::string>();
        if (k == "standard") cfg.split_kind = SplitKind::standard;
        else if (k == "fractional") cfg.split_kind = SplitKind::fractional;
        else throw std::runtime_error("unknown split kind: " + k);
      }
      read_if(s, "train_per_class", cfg.split.train_per_class);
      read_if(s, "val_size", cfg.split.val_size);
      read_if(s, "test_size", cfg.split.test_size);
      read_if(s, "p_train", cfg.split.p_train);
      read_if(s, "p_val", cfg.split.p_val);
    } else if (cfg.dataset.is_synthetic) {
      // Fixed-count splits rarely fit small generated graphs.
      cfg.split_kind = SplitKind::fractional;
    }
    read_if(j, "depths", cfg.depths);
    read_if(j, "homophily", cfg.homophily);
    j.at("seeds").get_to(cfg.seeds);
    read_if(j, "out_dir", cfg.out_dir);
  } catch (const json::exception& e) {
    throw std::runtime_error("config error in " + path + ": " + e.what());
  }
  cfg.split.kind = cfg.split_kind;
  validate_experiment_config(cfg);
  return cfg;
}

DatasetSpec load_dataset_spec(const std::string& path) {
  const json j = load_json_file(path);
  try {
    if (j.contains("name")) return parse_dataset(j);
    // Bare synthetic generator parameters.
    DatasetSpec d;
    d.name = "synthetic";
    d.is_synthetic = true;
    parse_synthetic_fields(j, d.synthetic);
    return d;
  } catch (const json::exception& e) {
    throw std::runtime_error("dataset spec error in " + path + ": " + e.what());
  }
}

void validate_experiment_config(const ExperimentConfig& cfg) {
  if (cfg.seeds.empty()) throw std::runtime_error("config: seeds must be nonempty");
  if (cfg.depths.empty() && cfg.homophily.empty())
    throw std::runtime_error("config: no sweep defined (depths and homophily both empty)");
  if (!cfg.homophily.empty() && !cfg.dataset.is_synthetic)
    throw std::runtime_error("config: homophily sweeps require a synthetic dataset");
  for (double h : cfg.homophily)
    if (!(h >= 0.0 && h <= 1.0))
      throw std::runtime_error("config: homophily levels must lie in [0,1]");
  const bool wants_prune = cfg.model.kind == ModelKind::dynamo_gat;
  if (wants_prune && !cfg.prune)
    throw std::runtime_error("config: dynamo_gat requires a prune section");
  if (!wants_prune && cfg.prune)
    throw std::runtime_error("config: prune section is only valid for dynamo_gat");
  if (cfg.prune) cfg.prune->validate();
  auto check_depth = [&](int d) {
    if (d < 1) throw std::runtime_error("config: depth must be >= 1");
    if (d > 64 && !cfg.allow_deep)
      throw std::runtime_error("config: depth " + std::to_string(d) +
                               " exceeds 64; pass --allow-deep to permit it");
  };
  for (int d : cfg.depths) check_depth(d);
  if (cfg.depths.empty()) check_depth(cfg.model.depth);
  if (cfg.out_dir.empty()) throw std::runtime_error("config: out_dir must be nonempty");
  if (cfg.workers < 1) throw std::runtime_error("config: workers must be >= 1");
}

Graph build_dataset(const DatasetSpec& d, double homophily_override, std::uint64_t seed) {
  if (d.is_synthetic) {
    SyntheticSpec s = d.synthetic;
    if (homophily_override >= 0.0) s.homophily = homophily_override;
    if (seed != 0) s.seed = seed;
    return generate_synthetic(s);
  }
  if (d.is_webkb) return load_webkb(d.node_path, d.edge_path);
  return load_planetoid(d.content_path, d.cites_path);
}

std::string cell_tag(const ResultsRecord& r) {
  const std::string cell = r.sweep == "depth"
                               ? std::to_string(static_cast<int>(r.cell))
                               : fmt_cell(r.cell);
  return r.sweep == "depth" ? "depth" + cell + "_seed" + std::to_string(r.seed)
                            : "hom" + cell + "_seed" + std::to_string(r.seed);
}

std::vector<ResultsRecord> run_depth_sweep(const ExperimentConfig& cfg) {
  if (cfg.depths.empty()) throw std::runtime_error("depth sweep: depths list is empty");
  return run_sweep(cfg, "depth");
}

std::vector<ResultsRecord> run_homophily_sweep(const ExperimentConfig& cfg) {
  if (cfg.homophily.empty())
    throw std::runtime_error("homophily sweep: homophily list is empty");
  if (!cfg.dataset.is_synthetic)
    throw std::runtime_error("homophily sweep: dataset must be synthetic");
  return run_sweep(cfg, "homophily");
}

std::string emit_report(const std::vector<ResultsRecord>& records, ReportFormat format,
                        const std::string& out_dir) {
  if (records.empty()) throw std::runtime_error("emit_report: no records");
  std::filesystem::create_directories(out_dir);
  std::vector<ResultsRecord> sorted = records;
  std::sort(sorted.begin(), sorted.end(), record_less);

  if (format == ReportFormat::csv) {
    const std::string path = (std::filesystem::path(out_dir) / "results.csv").string();
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out << kResultsHeader << '\n';
    for (const auto& r : sorted) {
      const auto row = record_row(r);
      for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << row[i];
      out << '\n';
    }
    return path;
  }

  // Aggregate per (model, cell): mean/std accuracy over seeds, mean
  // GFLOPs; then pick each model's best cell by mean accuracy.
  struct Agg {
    std::vector<double> acc;
    double gflops_sum = 0;
    std::string sweep;
  };
  std::map<std::pair<std::string, double>, Agg> groups;
  for (const auto& r : sorted) {
    Agg& a = groups[{r.model, r.cell}];
    a.acc.push_back(r.test_acc);
    a.gflops_sum += r.gflops;
    a.sweep = r.sweep;
  }
  auto mean_of = [](const std::vector<double>& v) {
    double s = 0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
  };
  auto std_of = [&](const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    const double m = mean_of(v);
    double s = 0;
    for (double x : v) s += (x - m) * (x - m);
    return std::sqrt(s / static_cast<double>(v.size() - 1));
  };

  const std::string path = (std::filesystem::path(out_dir) / "table1.txt").string();
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  char line[256];
  out << "model        cell      accuracy(%)        gflops      acc/gflop\n";
  std::map<std::string, std::pair<double, std::string>> best;  // model -> (mean acc, row)
  for (const auto& [key, agg] : groups) {
    const double m = mean_of(agg.acc) * 100.0;
    const double s = std_of(agg.acc) * 100.0;
    const double gf = agg.gflops_sum / static_cast<double>(agg.acc.size());
    const double ratio = gf > 0 ? m / gf : 0.0;
    std::snprintf(line, sizeof(line), "%-12s %-9s %6.2f +/- %-6.2f %11.6f %14.2f\n",
                  key.first.c_str(), fmt_cell(key.second).c_str(), m, s, gf, ratio);
    out << line;
    auto it = best.find(key.first);
    if (it == best.end() || m > it->second.first) best[key.first] = {m, line};
  }
  out << "\nbest per model\n";
  for (const auto& [model, row] : best) out << row.second;
  return path;
}

}  // namespace gnnlab
