// Command-line front end: config-driven sweeps, post-hoc dynamics
// analysis of saved models, synthetic dataset export, and the
// property-check batteries.
#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "gnnlab/dynamics.hpp"
#include "gnnlab/experiment.hpp"
#include "gnnlab/graph.hpp"
#include "gnnlab/lemmas.hpp"
#include "gnnlab/serialize.hpp"

namespace {

using namespace gnnlab;

int cmd_run(const std::string& config_path, const std::string& out_override, int workers,
            bool allow_deep, bool save_models, std::uint64_t seed_offset) {
  ExperimentConfig cfg = load_experiment_config(config_path);
  if (!out_override.empty()) cfg.out_dir = out_override;
  cfg.workers = workers;
  cfg.allow_deep = allow_deep;
  cfg.save_models = save_models;
  cfg.seed_offset = seed_offset;
  validate_experiment_config(cfg);

  std::vector<ResultsRecord> records;
  if (!cfg.depths.empty()) records = run_depth_sweep(cfg);
  if (!cfg.homophily.empty()) records = run_homophily_sweep(cfg);
  const std::string table = emit_report(records, ReportFormat::table, cfg.out_dir);
  std::printf("%zu result rows in %s\n", records.size(),
              (std::filesystem::path(cfg.out_dir) / "results.csv").string().c_str());
  std::printf("summary table in %s\n", table.c_str());
  return 0;
}

int cmd_analyze(const std::string& model_path, const std::string& dataset_path,
                const std::string& out_path, int fixed_point_iters, std::uint64_t seed) {
  GnnModel model = load_model(model_path);
  Graph g = build_dataset(load_dataset_spec(dataset_path), -1.0, 0);
  if (model.input_dim != g.feature_dim())
    throw std::runtime_error("model expects " + std::to_string(model.input_dim) +
                             " input features but the dataset has " +
                             std::to_string(g.feature_dim()));
  if (model.output_dim != g.num_classes)
    throw std::runtime_error("model emits " + std::to_string(model.output_dim) +
                             " classes but the dataset has " +
                             std::to_string(g.num_classes));
  AnalyzeOptions opt;
  opt.fixed_point_iters = fixed_point_iters;
  opt.seed = seed;
  DynamicsReport rep = analyze_model(g, model, nullptr, opt);
  write_dynamics_csv(out_path, rep);
  std::printf("layer diagnostics for %d layers in %s\n",
              static_cast<int>(rep.mu_trace.size()), out_path.c_str());
  return 0;
}

int cmd_synth(const std::string& spec_path, const std::string& out_dir) {
  DatasetSpec d = load_dataset_spec(spec_path);
  if (!d.is_synthetic)
    throw std::runtime_error("synth needs a synthetic dataset spec, got: " + d.name);
  if (d.synthetic.num_nodes < d.synthetic.num_classes)
    throw std::runtime_error("synth needs num_nodes >= num_classes so every class is populated");
  Graph g = generate_synthetic(d.synthetic);
  std::filesystem::create_directories(out_dir);
  const std::string content = (std::filesystem::path(out_dir) / "synthetic.content").string();
  const std::string cites = (std::filesystem::path(out_dir) / "synthetic.cites").string();
  save_citation_files(g, content, cites);
  std::printf("%lld nodes, %lld edges, homophily %.3f\n",
              static_cast<long long>(g.n), static_cast<long long>(g.num_edges()),
              edge_homophily(g));
  std::printf("content: %s\nedges:   %s\n", content.c_str(), cites.c_str());
  return 0;
}

int cmd_lemma_suite(std::uint64_t seed, int spectral_graphs) {
  auto results = run_lemma_suite(seed, spectral_graphs);
  bool all = true;
  for (const auto& r : results) {
    std::printf("%s  %-28s %s\n", r.pass ? "PASS" : "FAIL", r.name.c_str(), r.detail.c_str());
    all = all && r.pass;
  }
  std::printf("%s (%zu/%zu batteries)\n", all ? "ALL PASS" : "FAILURES PRESENT",
              static_cast<std::size_t>(std::count_if(results.begin(), results.end(),
                                                     [](const auto& r) { return r.pass; })),
              results.size());
  return all ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Graph neural network training, pruning, and dynamics analysis"};
  app.require_subcommand(1);

  std::string config_path, out_override;
  int workers = 1;
  bool allow_deep = false, save_models = false;
  std::uint64_t seed_offset = 0;
  auto* run = app.add_subcommand("run", "Run the sweeps described by a JSON config");
  run->add_option("config", config_path, "experiment config (JSON)")->required();
  run->add_option("--out", out_override, "override the config's output directory");
  run->add_option("--workers", workers, "parallel sweep cells")->check(CLI::PositiveNumber);
  run->add_flag("--allow-deep", allow_deep, "permit depths beyond 64 layers");
  run->add_flag("--save-models", save_models, "write model_<cell>.bin per completed cell");
  run->add_option("--seed-offset", seed_offset, "added to every training seed");

  std::string model_path, dataset_path, analyze_out = "dynamics.csv";
  int fp_iters = 200;
  std::uint64_t analyze_seed = 1;
  auto* analyze = app.add_subcommand(
      "analyze", "Layer-by-layer diagnostics of a saved model on a dataset");
  analyze->add_option("model", model_path, "model file from a training run")->required();
  analyze->add_option("dataset", dataset_path, "dataset spec (JSON)")->required();
  analyze->add_option("--out", analyze_out, "output CSV path");
  analyze->add_option("--fixed-point-iters", fp_iters,
                      "iterations for the weight-tied fixed-point probe (0 disables)");
  analyze->add_option("--seed", analyze_seed, "seed for the probe's random starts");

  std::string spec_path, synth_out;
  auto* synth = app.add_subcommand(
      "synth", "Generate a synthetic dataset and export it in the citation file format");
  synth->add_option("spec", spec_path, "generator parameters (JSON)")->required();
  synth->add_option("out-dir", synth_out, "directory for the emitted files")->required();

  std::uint64_t lemma_seed = 0;
  int spectral_graphs = 50;
  auto* lemma = app.add_subcommand(
      "lemma-suite", "Run the five dynamics property batteries and print pass/fail");
  lemma->add_option("seed", lemma_seed, "base seed for all batteries")->required();
  lemma->add_option("--spectral-graphs", spectral_graphs,
                    "graphs in the spectral-decrease battery")
      ->check(CLI::PositiveNumber);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run)
      return cmd_run(config_path, out_override, workers, allow_deep, save_models, seed_offset);
    if (*analyze)
      return cmd_analyze(model_path, dataset_path, analyze_out, fp_iters, analyze_seed);
    if (*synth) return cmd_synth(spec_path, synth_out);
    if (*lemma) return cmd_lemma_suite(lemma_seed, spectral_graphs);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 1;
}
