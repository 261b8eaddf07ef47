#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "gnnlab/adam.hpp"
#include "gnnlab/graph.hpp"
#include "gnnlab/ops.hpp"
#include "gnnlab/sparse.hpp"
#include "gnnlab/tensor.hpp"

namespace gnnlab {

struct PruneState;  // owned by the pruning module; models only read it

enum class ModelKind { gcn, gat, dynamo_gat };

ModelKind model_kind_from_string(const std::string& s);
const char* model_kind_name(ModelKind k);

// One attention head (or one GCN layer): a linear transform plus, for
// attention models, the scoring vector a of length 2 * d_out.
struct LayerParams {
  Tensor W;
  Tensor a;
  double leaky_slope = 0.2;
};

struct ModelConfig {
  ModelKind kind = ModelKind::gat;
  int depth = 2;
  // Total hidden width; attention models split it across heads.
  std::int64_t hidden_dim = 64;
  int heads_hidden = 8;
  int heads_out = 1;
  Activation activation = Activation::elu;
  double leaky_slope = 0.2;  // attention scoring
  double dropout = 0.6;      // features and attention coefficients
  bool residual = false;     // skip connections on width-preserving layers

  bool is_attention() const { return kind != ModelKind::gcn; }
};

struct TrainConfig {
  double lr = 0.005;
  double weight_decay = 5e-4;
  int max_epochs = 500;
  int patience = 100;
  std::uint64_t seed = 1;
};

struct GnnModel {
  ModelConfig cfg;
  std::int64_t input_dim = 0;
  std::int64_t output_dim = 0;
  // layers[l][h]: GCN uses a single head per layer.
  std::vector<std::vector<LayerParams>> layers;

  std::vector<Tensor> parameters() const;
  // Deep copy of parameter values (for best-epoch snapshots).
  std::vector<Mat> snapshot_values() const;
  void restore_values(const std::vector<Mat>& values);
  int num_layers() const { return static_cast<int>(layers.size()); }
  std::int64_t layer_out_dim(int layer) const;
};

// Glorot-initialized model for the given task shape.
GnnModel init_model(const ModelConfig& cfg, std::int64_t input_dim, std::int64_t num_classes,
                    std::uint64_t seed);

struct TrainReport {
  std::vector<double> train_loss, train_acc, val_loss, val_acc;
  double best_val_acc = 0.0;
  double test_acc = 0.0;
  int best_epoch = -1;
  int epochs_run = 0;
  std::uint64_t seed = 0;
};

// Symmetric-normalized adjacency with self-loops:
// D^{-1/2} (A + I) D^{-1/2}.
std::shared_ptr<const SparseMatrix> build_gcn_adjacency(const Graph& g);

// Directed edges grouped by destination; each group starts with the
// node's self-loop. slot[k] is the graph CSR position backing edge k,
// or -1 for self-loops. With a prune state, edges pruned at `layer`
// are omitted (self-loops never are).
struct EdgeList {
  std::vector<std::int64_t> src, dst, slot;
  std::int64_t count() const { return static_cast<std::int64_t>(src.size()); }
};
EdgeList build_edge_list(const Graph& g, const PruneState* st, int layer);

struct ForwardOptions {
  bool training = false;
  Rng* rng = nullptr;  // required when training and dropout > 0
  const PruneState* prune = nullptr;
};

Tensor gcn_forward(const Tensor& X, const Graph& g, const GnnModel& m,
                   const ForwardOptions& opt);
Tensor gat_forward(const Tensor& X, const Graph& g, const GnnModel& m,
                   const ForwardOptions& opt);
Tensor model_forward(const Tensor& X, const Graph& g, const GnnModel& m,
                     const ForwardOptions& opt);

// Evaluation-mode forward from raw features to a plain matrix.
Mat eval_forward(const Graph& g, const GnnModel& m, const PruneState* prune = nullptr);
// Hidden representation entering the given layer (layer 0: the input
// features), evaluation mode.
Mat eval_layer_input(const Graph& g, const GnnModel& m, int layer,
                     const PruneState* prune = nullptr);
// One layer applied to an explicit input, evaluation mode.
Mat eval_layer_apply(const Mat& X, const Graph& g, const GnnModel& m, int layer,
                     const PruneState* prune = nullptr);

// Attention coefficients of one layer at explicit input features,
// evaluation mode. alpha[h][k] pairs with edges entry k.
struct AttentionCoeffs {
  EdgeList edges;
  std::vector<std::vector<double>> alpha;
};
AttentionCoeffs gat_attention(const Mat& X, const Graph& g, const GnnModel& m, int layer,
                              const PruneState* prune = nullptr);

// Invoked once per epoch, before the epoch's forward pass, with the
// live model; the hook owns its own cadence and state.
using PruneHook = std::function<void(int epoch, const GnnModel& model)>;

struct TrainResult {
  TrainReport report;
  GnnModel model;
};

// Full-batch training with cross-entropy on the train mask and early
// stopping on validation accuracy. Parameters from the best validation
// epoch are restored before test evaluation. Deterministic in
// (graph, configs, seed).
TrainResult train(const Graph& g, const Masks& masks, const ModelConfig& mcfg,
                  const TrainConfig& tcfg, const PruneState* prune = nullptr,
                  const PruneHook& hook = nullptr);

// Largest |slope| of the activation, for contraction-bound arithmetic.
double activation_lipschitz(Activation a, double leaky_slope = 0.2);

}  // namespace gnnlab
