#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gnnlab/mat.hpp"
#include "gnnlab/rng.hpp"

namespace gnnlab {

// Undirected simple graph with node features and integer labels.
// Adjacency is CSR over both directions of every edge; neighbor lists
// are sorted and contain no self-loops (layers that want self-loops add
// them explicitly).
struct Graph {
  std::int64_t n = 0;
  std::vector<std::int64_t> row_ptr;  // size n + 1
  std::vector<std::int64_t> col_idx;  // size 2 * num_edges
  Mat features;                       // n x feature_dim
  std::vector<int> labels;            // size n, in [0, num_classes)
  int num_classes = 0;
  std::string name;
  // Citation rows whose endpoint id never appeared in the content file.
  std::int64_t dropped_edge_rows = 0;

  std::int64_t num_edges() const { return static_cast<std::int64_t>(col_idx.size()) / 2; }
  std::int64_t degree(std::int64_t i) const { return row_ptr[i + 1] - row_ptr[i]; }
  std::int64_t feature_dim() const { return features.cols; }
  bool has_edge(std::int64_t u, std::int64_t v) const;
};

struct Masks {
  std::vector<std::uint8_t> train, val, test;
  std::int64_t count(const std::vector<std::uint8_t>& m) const {
    std::int64_t c = 0;
    for (auto b : m) c += b;
    return c;
  }
};

enum class SplitKind {
  // Fixed-size split: train_per_class training nodes per class, then
  // val_size validation and test_size test nodes from the remainder.
  standard,
  // Fractional split by node count: p_train / p_val / rest.
  fractional,
};

struct SplitConfig {
  SplitKind kind = SplitKind::standard;
  int train_per_class = 20;
  std::int64_t val_size = 500;
  std::int64_t test_size = 1000;
  double p_train = 0.6;
  double p_val = 0.2;
};

struct SyntheticSpec {
  std::int64_t num_nodes = 256;
  int num_classes = 4;
  std::int64_t feature_dim = 16;
  double avg_degree = 8.0;
  // Fraction of edges whose endpoints share a label.
  double homophily = 0.8;
  // Class centers are N(0, center_scale^2 I); features add unit noise.
  double center_scale = 3.0;
  double feature_noise = 1.0;
  std::uint64_t seed = 1;
};

// Loads the two-file citation format: a content file with rows
// "<id> <f_0> ... <f_{d-1}> <label>" and an edge file with rows
// "<id_a> <id_b>". Labels are mapped to [0, k) in first-seen order.
// Edge rows naming unknown ids are dropped and counted. The edge set
// is symmetrized and deduplicated.
Graph load_planetoid(const std::string& content_path, const std::string& cites_path);

// Same on-disk format; kept separate so callers signal intent and so
// web-graph quirks (URL node ids) have one home.
Graph load_webkb(const std::string& content_path, const std::string& cites_path);

// Random graph with planted class structure. Each edge is drawn
// same-class with probability `homophily`; features are class-center
// Gaussians. The realized graph is simple and undirected. Classes are
// numbered by first appearance in node order.
Graph generate_synthetic(const SyntheticSpec& spec);

// Writes the graph in the two-file citation format the loaders read.
// Features use 17 significant digits, so reloading reproduces the graph
// bit-for-bit whenever classes are numbered by first appearance (as
// generated graphs are) and every class is populated.
void save_citation_files(const Graph& g, const std::string& content_path,
                         const std::string& cites_path);

// Fraction of undirected edges whose endpoints share a label.
double edge_homophily(const Graph& g);

// Seeded split. `standard` requires every class to have at least
// train_per_class nodes and the remainder to cover val + test.
Masks split_masks(const Graph& g, const SplitConfig& cfg, std::uint64_t seed);

}  // namespace gnnlab
