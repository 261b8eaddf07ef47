#include "gnnlab/graph.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

namespace gnnlab {
namespace {

std::vector<std::string> split_ws(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream ss(line);
  std::string tok;
  while (ss >> tok) out.push_back(std::move(tok));
  return out;
}

// Builds sorted CSR from a set of undirected pairs (u < v).
void build_csr(Graph& g, const std::vector<std::pair<std::int64_t, std::int64_t>>& pairs) {
  std::vector<std::int64_t> deg(static_cast<std::size_t>(g.n), 0);
  for (auto [u, v] : pairs) {
    ++deg[static_cast<std::size_t>(u)];
    ++deg[static_cast<std::size_t>(v)];
  }
  g.row_ptr.assign(static_cast<std::size_t>(g.n) + 1, 0);
  for (std::int64_t i = 0; i < g.n; ++i) g.row_ptr[i + 1] = g.row_ptr[i] + deg[i];
  g.col_idx.assign(static_cast<std::size_t>(g.row_ptr[g.n]), 0);
  std::vector<std::int64_t> fill(g.row_ptr.begin(), g.row_ptr.end() - 1);
  for (auto [u, v] : pairs) {
    g.col_idx[static_cast<std::size_t>(fill[u]++)] = v;
    g.col_idx[static_cast<std::size_t>(fill[v]++)] = u;
  }
  for (std::int64_t i = 0; i < g.n; ++i)
    std::sort(g.col_idx.begin() + g.row_ptr[i], g.col_idx.begin() + g.row_ptr[i + 1]);
}

Graph load_citation_files(const std::string& content_path, const std::string& cites_path,
                          const std::string& name) {
  std::ifstream content(content_path);
  if (!content) throw std::runtime_error("cannot open content file: " + content_path);

  Graph g;
  g.name = name;
  std::unordered_map<std::string, std::int64_t> id_of;
  std::unordered_map<std::string, int> label_of;
  std::vector<std::vector<double>> feat_rows;
  std::string line;
  std::int64_t dim = -1;
  while (std::getline(content, line)) {
    auto toks = split_ws(line);
    if (toks.empty()) continue;
    if (toks.size() < 3) throw std::runtime_error("malformed content row: " + line);
    std::int64_t d = static_cast<std::int64_t>(toks.size()) - 2;
    if (dim < 0) dim = d;
    if (d != dim) throw std::runtime_error("inconsistent feature width in " + content_path);
    const std::string& id = toks.front();
    if (!id_of.emplace(id, static_cast<std::int64_t>(feat_rows.size())).second)
      throw std::runtime_error("duplicate node id: " + id);
    std::vector<double> row(static_cast<std::size_t>(dim));
    for (std::int64_t j = 0; j < dim; ++j) row[j] = std::stod(toks[1 + j]);
    feat_rows.push_back(std::move(row));
    const std::string& lab = toks.back();
    auto it = label_of.find(lab);
    if (it == label_of.end()) it = label_of.emplace(lab, static_cast<int>(label_of.size())).first;
    g.labels.push_back(it->second);
  }
  g.n = static_cast<std::int64_t>(feat_rows.size());
  if (g.n == 0) throw std::runtime_error("content file has no rows: " + content_path);
  g.num_classes = static_cast<int>(label_of.size());
  g.features = Mat(g.n, dim);
  for (std::int64_t i = 0; i < g.n; ++i)
    std::copy(feat_rows[i].begin(), feat_rows[i].end(), g.features.row(i));

  std::ifstream cites(cites_path);
  if (!cites) throw std::runtime_error("cannot open edge file: " + cites_path);
  std::unordered_set<std::uint64_t> seen;
  std::vector<std::pair<std::int64_t, std::int64_t>> pairs;
  while (std::getline(cites, line)) {
    auto toks = split_ws(line);
    if (toks.empty()) continue;
    if (toks.size() != 2) throw std::runtime_error("malformed edge row: " + line);
    auto a = id_of.find(toks[0]);
    auto b = id_of.find(toks[1]);
    if (a == id_of.end() || b == id_of.end()) {
      ++g.dropped_edge_rows;
      continue;
    }
    std::int64_t u = a->second, v = b->second;
    if (u == v) continue;
    if (u > v) std::swap(u, v);
    std::uint64_t key = static_cast<std::uint64_t>(u) << 32 | static_cast<std::uint64_t>(v);
    if (seen.insert(key).second) pairs.emplace_back(u, v);
  }
  build_csr(g, pairs);
  return g;
}

}  // namespace

bool Graph::has_edge(std::int64_t u, std::int64_t v) const {
  auto b = col_idx.begin() + row_ptr[u];
  auto e = col_idx.begin() + row_ptr[u + 1];
  return std::binary_search(b, e, v);
}

Graph load_planetoid(const std::string& content_path, const std::string& cites_path) {
  return load_citation_files(content_path, cites_path, "planetoid");
}

Graph load_webkb(const std::string& content_path, const std::string& cites_path) {
  return load_citation_files(content_path, cites_path, "webkb");
}

Graph generate_synthetic(const SyntheticSpec& spec) {
  if (spec.num_nodes < 2 || spec.num_classes < 2)
    throw std::runtime_error("synthetic graph needs >= 2 nodes and >= 2 classes");
  Graph g;
  g.name = "synthetic";
  g.n = spec.num_nodes;
  g.num_classes = spec.num_classes;
  Rng rng(spec.seed);

  // Balanced labels, shuffled.
  g.labels.resize(static_cast<std::size_t>(g.n));
  for (std::int64_t i = 0; i < g.n; ++i) g.labels[i] = static_cast<int>(i % spec.num_classes);
  rng.shuffle(g.labels);
  std::vector<std::vector<std::int64_t>> by_class(static_cast<std::size_t>(spec.num_classes));
  for (std::int64_t i = 0; i < g.n; ++i) by_class[static_cast<std::size_t>(g.labels[i])].push_back(i);

  // Class-center Gaussian features.
  Mat centers(spec.num_classes, spec.feature_dim);
  for (std::int64_t i = 0; i < centers.size(); ++i) centers.v[i] = rng.normal(0.0, spec.center_scale);
  g.features = Mat(g.n, spec.feature_dim);
  for (std::int64_t i = 0; i < g.n; ++i)
    for (std::int64_t j = 0; j < spec.feature_dim; ++j)
      g.features.at(i, j) = centers.at(g.labels[i], j) + rng.normal(0.0, spec.feature_noise);

  // Draw edges one at a time: same-class with probability `homophily`,
  // cross-class otherwise; duplicates and self-loops are rejected.
  std::int64_t target = static_cast<std::int64_t>(spec.avg_degree * static_cast<double>(g.n) / 2.0 + 0.5);
  std::int64_t max_possible = g.n * (g.n - 1) / 2;
  if (target > max_possible) target = max_possible;
  std::unordered_set<std::uint64_t> seen;
  std::vector<std::pair<std::int64_t, std::int64_t>> pairs;
  std::int64_t attempts = 0, attempt_cap = target * 200 + 10000;
  while (static_cast<std::int64_t>(pairs.size()) < target && attempts++ < attempt_cap) {
    std::int64_t u, v;
    if (rng.uniform() < spec.homophily) {
      const auto& cls = by_class[rng.below(static_cast<std::uint64_t>(spec.num_classes))];
      if (cls.size() < 2) continue;
      u = cls[rng.below(cls.size())];
      v = cls[rng.below(cls.size())];
    } else {
      u = static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(g.n)));
      v = static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(g.n)));
      if (g.labels[u] == g.labels[v]) continue;
    }
    if (u == v) continue;
    if (u > v) std::swap(u, v);
    std::uint64_t key = static_cast<std::uint64_t>(u) << 32 | static_cast<std::uint64_t>(v);
    if (seen.insert(key).second) pairs.emplace_back(u, v);
  }
  if (static_cast<std::int64_t>(pairs.size()) < target)
    throw std::runtime_error("synthetic generator could not place requested edges");
  build_csr(g, pairs);

  // Renumber classes by first appearance in node order (a pure renaming:
  // features, edges, and class sizes are untouched). Citation-format
  // loaders assign label ids in first-seen order, so this makes
  // save_citation_files round-trip to a bitwise-identical graph.
  {
    std::vector<int> remap(static_cast<std::size_t>(spec.num_classes), -1);
    int next = 0;
    for (int& l : g.labels) {
      if (remap[static_cast<std::size_t>(l)] < 0) remap[static_cast<std::size_t>(l)] = next++;
      l = remap[static_cast<std::size_t>(l)];
    }
  }
  return g;
}

void save_citation_files(const Graph& g, const std::string& content_path,
                         const std::string& cites_path) {
  std::ofstream content(content_path);
  if (!content) throw std::runtime_error("cannot write content file: " + content_path);
  char buf[40];
  for (std::int64_t i = 0; i < g.n; ++i) {
    content << i;
    for (std::int64_t j = 0; j < g.feature_dim(); ++j) {
      // 17 significant digits: doubles reload bit-for-bit.
      std::snprintf(buf, sizeof(buf), "%.17g", g.features.at(i, j));
      content << ' ' << buf;
    }
    content << ' ' << g.labels[static_cast<std::size_t>(i)] << '\n';
  }
  if (!content) throw std::runtime_error("write failed: " + content_path);

  std::ofstream cites(cites_path);
  if (!cites) throw std::runtime_error("cannot write edge file: " + cites_path);
  for (std::int64_t u = 0; u < g.n; ++u)
    for (std::int64_t k = g.row_ptr[u]; k < g.row_ptr[u + 1]; ++k) {
      std::int64_t v = g.col_idx[static_cast<std::size_t>(k)];
      if (v > u) cites << u << ' ' << v << '\n';
    }
  if (!cites) throw std::runtime_error("write failed: " + cites_path);
}

double edge_homophily(const Graph& g) {
  std::int64_t same = 0, total = 0;
  for (std::int64_t u = 0; u < g.n; ++u)
    for (std::int64_t k = g.row_ptr[u]; k < g.row_ptr[u + 1]; ++k) {
      std::int64_t v = g.col_idx[static_cast<std::size_t>(k)];
      if (v <= u) continue;
      ++total;
      if (g.labels[u] == g.labels[v]) ++same;
    }
  if (total == 0) return 0.0;
  return static_cast<double>(same) / static_cast<double>(total);
}

Masks split_masks(const Graph& g, const SplitConfig& cfg, std::uint64_t seed) {
  Masks m;
  m.train.assign(static_cast<std::size_t>(g.n), 0);
  m.val.assign(static_cast<std::size_t>(g.n), 0);
  m.test.assign(static_cast<std::size_t>(g.n), 0);
  std::vector<std::int64_t> order(static_cast<std::size_t>(g.n));
  for (std::int64_t i = 0; i < g.n; ++i) order[i] = i;
  Rng rng(seed);
  rng.shuffle(order);

  if (cfg.kind == SplitKind::standard) {
    std::vector<int> taken(static_cast<std::size_t>(g.num_classes), 0);
    std::vector<std::int64_t> rest;
    for (std::int64_t i : order) {
      int c = g.labels[static_cast<std::size_t>(i)];
      if (taken[static_cast<std::size_t>(c)] < cfg.train_per_class) {
        m.train[static_cast<std::size_t>(i)] = 1;
        ++taken[static_cast<std::size_t>(c)];
      } else {
        rest.push_back(i);
      }
    }
    for (int c = 0; c < g.num_classes; ++c)
      if (taken[static_cast<std::size_t>(c)] < cfg.train_per_class)
        throw std::runtime_error("split: class " + std::to_string(c) + " has fewer than " +
                                 std::to_string(cfg.train_per_class) + " nodes");
    if (static_cast<std::int64_t>(rest.size()) < cfg.val_size + cfg.test_size)
      throw std::runtime_error("split: not enough nodes left for val + test");
    for (std::int64_t i = 0; i < cfg.val_size; ++i) m.val[static_cast<std::size_t>(rest[i])] = 1;
    for (std::int64_t i = 0; i < cfg.test_size; ++i)
      m.test[static_cast<std::size_t>(rest[cfg.val_size + i])] = 1;
  } else {
    std::int64_t n_train = static_cast<std::int64_t>(cfg.p_train * static_cast<double>(g.n));
    std::int64_t n_val = static_cast<std::int64_t>(cfg.p_val * static_cast<double>(g.n));
    if (n_train <= 0 || n_val <= 0 || n_train + n_val >= g.n)
      throw std::runtime_error("split: fractional sizes leave no test nodes");
    for (std::int64_t i = 0; i < g.n; ++i) {
      std::int64_t node = order[static_cast<std::size_t>(i)];
      if (i < n_train)
        m.train[static_cast<std::size_t>(node)] = 1;
      else if (i < n_train + n_val)
        m.val[static_cast<std::size_t>(node)] = 1;
      else
        m.test[static_cast<std::size_t>(node)] = 1;
    }
  }
  return m;
}

}  // namespace gnnlab
