#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "gnnlab/graph.hpp"
#include "gnnlab/models.hpp"
#include "gnnlab/prune.hpp"

namespace gnnlab {

// Where the graph comes from: named dataset files on disk, or the
// synthetic generator.
struct DatasetSpec {
  std::string name;  // "cora", "citeseer", "pubmed", "cornell", ..., or "synthetic"
  bool is_synthetic = false;
  bool is_webkb = false;
  std::string content_path, cites_path;  // planetoid files
  std::string node_path, edge_path;      // webkb files
  SyntheticSpec synthetic;
};

struct ExperimentConfig {
  DatasetSpec dataset;
  ModelConfig model;
  TrainConfig train;
  // Present exactly when model.kind == dynamo_gat (validated).
  std::optional<PruneConfig> prune;
  SplitKind split_kind = SplitKind::standard;
  SplitConfig split;
  std::vector<int> depths;        // depth sweep cells
  std::vector<double> homophily;  // homophily sweep cells (synthetic only)
  std::vector<std::uint64_t> seeds;
  std::string out_dir = "results";

  // CLI-level knobs; not part of the config file.
  int workers = 1;
  bool allow_deep = false;    // permit depth > 64
  bool save_models = false;   // also write model_<cell>.bin per cell
  std::uint64_t seed_offset = 0;
};

// Parses and validates a JSON experiment config. Throws
// std::runtime_error naming the offending key or constraint.
ExperimentConfig load_experiment_config(const std::string& path);

// Dataset description from a standalone JSON file: either the object a
// config's "dataset" key takes, or — for synthetic data — the bare
// generator-parameter object.
DatasetSpec load_dataset_spec(const std::string& path);

// Re-checks the cross-field constraints (sweep lists, prune-section
// pairing, the 64-layer cap without allow_deep). The CLI calls this
// again after applying flag overrides.
void validate_experiment_config(const ExperimentConfig& cfg);

// Builds the configured graph (loads files or runs the generator).
// `homophily_override`, if nonnegative, replaces the synthetic spec's
// homophily; `seed` replaces its seed so every sweep cell gets a fresh
// graph draw.
Graph build_dataset(const DatasetSpec& d, double homophily_override, std::uint64_t seed);

// One completed sweep cell.
struct ResultsRecord {
  std::string sweep;  // "depth" | "homophily"
  double cell = 0;    // the depth value or homophily level
  std::uint64_t seed = 0;
  std::string model;        // model kind name
  double test_acc = 0;      // in [0, 1]
  int best_epoch = -1;
  double gflops = 0;        // forward pass at the trained model; pruned edges excluded
  std::int64_t edges_alive = -1;  // summed over layers; -1 for unpruned models
  double mu_last_hidden = 0;      // mu(X) entering the output layer
  double wall_time_s = 0;         // not written to results.csv (not byte-stable)
};

// File tag for per-cell outputs, e.g. "depth32_seed1", "hom0.3_seed2".
std::string cell_tag(const ResultsRecord& r);

// Trains one model per (depth, seed) over cfg.depths x cfg.seeds.
// Resumable: cells already present in <out_dir>/results.csv are not
// re-run; their rows are returned alongside the new ones. A failed
// cell is reported on stderr and skipped. Writes mu_trace_<cell>.csv
// (and prune_log_<cell>.csv for DYNAMO models) per completed cell and
// rewrites <out_dir>/results.csv sorted.
std::vector<ResultsRecord> run_depth_sweep(const ExperimentConfig& cfg);

// Same contract over cfg.homophily x cfg.seeds at fixed cfg.model.depth;
// each cell generates its own synthetic graph.
std::vector<ResultsRecord> run_homophily_sweep(const ExperimentConfig& cfg);

enum class ReportFormat { csv, table };

// csv: <out_dir>/results.csv, one sorted row per record, byte-stable.
// table: <out_dir>/table1.txt, per (model, cell) mean +/- std over
// seeds with GFLOPs and accuracy-per-GFLOP (accuracy in percent), plus
// each model's best row. Returns the written path. Empty records are
// an error.
std::string emit_report(const std::vector<ResultsRecord>& records, ReportFormat format,
                        const std::string& out_dir);

}  // namespace gnnlab
