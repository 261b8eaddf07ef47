#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gnnlab/graph.hpp"
#include "gnnlab/mat.hpp"
#include "gnnlab/models.hpp"

namespace gnnlab {

enum class SignMode { as_written, flipped };

SignMode sign_mode_from_string(const std::string& s);
const char* sign_mode_name(SignMode m);

struct PruneConfig {
  double noise_sigma = 0.1;  // Gaussian noise level
  int noise_samples = 16;    // M resamplings for the covariance estimate
  double beta = 1.0;         // threshold width multiplier
  double r0 = 0.05;          // base pruning rate
  double gamma = 0.5;        // per-layer rate escalation
  double epsilon = 1e-2;     // hard-prune floor on |w|
  SignMode sign_mode = SignMode::as_written;
  int prune_every = 10;      // epochs between pruning passes
  // Probabilities are always clamped to [0,1]; the flag exists so the
  // contract is visible in configs.
  bool clamp_probabilities = true;

  void validate() const;
};

// Per-layer, per-edge pruning state. Edge entries align with the graph
// CSR slots (directed). Self-loop weights live separately: they join
// the aggregation but are exempt from decay and pruning.
struct PruneState {
  std::vector<std::vector<double>> w;             // [layer][slot]
  std::vector<std::vector<std::uint8_t>> pruned;  // [layer][slot]
  std::vector<std::vector<double>> last_p;        // [layer][slot]
  std::vector<std::vector<double>> w_self;        // [layer][node]
  std::int64_t steps = 0;  // completed dynamo_step passes
  bool initialized = false;

  void init_shape(int num_layers, std::int64_t num_slots, std::int64_t num_nodes);
  bool alive(int layer, std::int64_t slot) const {
    return pruned[static_cast<std::size_t>(layer)][static_cast<std::size_t>(slot)] == 0;
  }
  int num_layers() const { return static_cast<int>(w.size()); }
  std::int64_t slots_per_layer() const {
    return w.empty() ? 0 : static_cast<std::int64_t>(w[0].size());
  }
  std::int64_t alive_count(int layer) const;
  std::int64_t pruned_count(int layer) const;
};

// Scalarized covariance: trace inner product over feature dims / d.
// `node[i]` is C_ii; `slot[k]` is C_ij for the CSR slot k = (i, j).
struct PairCovariance {
  std::vector<double> node;
  std::vector<double> slot;
};

// M copies of X with i.i.d. N(0, sigma^2) entries added; copy m is
// deterministic in (seed, m).
std::vector<Mat> inject_noise(const Mat& X, double sigma, std::uint64_t seed, int M);

// Unbiased estimate over the samples (divides by M - 1), restricted to
// the diagonal plus existing edges. Requires M >= 2.
PairCovariance pair_covariance(const std::vector<Mat>& samples, const Graph& g);

// tau = mean(|w|) + beta * population-std(|w|), floored at 1e-12.
// Pass only the unpruned weights; an empty list is an error.
double pruning_threshold(const std::vector<double>& abs_weights, double beta);

// r(t) = r0 * (1 + gamma * t) for layer index t.
double layer_rate(double r0, double gamma, int t);

// p = r * (|w| / tau) * (C_ii + C_jj -/+ 2 C_ij), the sign chosen by
// sgn(w) under `mode` (as_written: minus for positive weights), then
// clamped to [0, 1]. w == 0 gives p == 0.
double pruning_probability(double w, double c_ii, double c_jj, double c_ij, double tau, double r,
                           SignMode mode);

// w <- w * (1 - p); entries with |w| < epsilon become pruned with
// w = 0. Pruned edges never revive. p must align with CSR slots.
void apply_gradual_prune(PruneState& st, int layer, const std::vector<double>& p, double epsilon);

// Renormalizes surviving attention mass per destination node so each
// row sums to 1 again; pruned entries become 0. alpha aligns with
// `edges`. Every node must keep its self-loop.
std::vector<double> recalibrate(const std::vector<double>& alpha, const EdgeList& edges,
                                const PruneState& st, int layer, std::int64_t num_nodes);

struct PruneLogRow {
  int epoch = 0;
  int layer = 0;
  std::int64_t edges_alive = 0;
  double mean_p = 0.0;
  double tau = 0.0;
  double r = 0.0;
};

// One full Algorithm-style pruning pass over every layer: noisy
// trajectories feed a pair covariance per layer, which sets pruning
// probabilities for that layer's weights; the samples then advance
// through the freshly pruned layer. First call initializes w from the
// head-averaged attention coefficients at the clean trajectory.
std::vector<PruneLogRow> dynamo_step(const GnnModel& model, const Graph& g, const Mat& X_input,
                                     PruneState& state, const PruneConfig& cfg, int epoch,
                                     std::uint64_t noise_seed);

// Epoch hook wiring dynamo_step into the training loop on the
// configured cadence. `log`, if given, collects one row per layer per
// firing.
PruneHook make_dynamo_hook(const Graph& g, PruneState& state, const PruneConfig& cfg,
                           std::uint64_t seed, std::vector<PruneLogRow>* log = nullptr);

}  // namespace gnnlab
