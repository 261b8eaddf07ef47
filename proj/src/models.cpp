#include "gnnlab/models.hpp"

#include <cmath>
#include <stdexcept>

#include "gnnlab/prune.hpp"

namespace gnnlab {
namespace {

struct GatLayerOut {
  Tensor out;  // pre-activation aggregation
  std::vector<Tensor> alpha;
  EdgeList edges;
};

Tensor maybe_dropout(const Tensor& t, const ModelConfig& cfg, const ForwardOptions& opt) {
  if (!opt.training || cfg.dropout == 0.0) return t;
  if (!opt.rng) throw std::runtime_error("training forward needs an rng for dropout");
  return dropout(t, cfg.dropout, *opt.rng);
}

GatLayerOut gat_layer(const Tensor& X, const Graph& g, const GnnModel& m, int layer,
                      const ForwardOptions& opt) {
  GatLayerOut io;
  io.edges = build_edge_list(g, opt.prune, layer);
  const auto& heads = m.layers[static_cast<std::size_t>(layer)];
  Tensor Xd = maybe_dropout(X, m.cfg, opt);
  std::vector<Tensor> outs;
  outs.reserve(heads.size());
  for (const LayerParams& hp : heads) {
    Tensor H = matmul(Xd, hp.W);
    Tensor Hd = gather_rows(H, io.edges.dst);
    Tensor Hs = gather_rows(H, io.edges.src);
    Tensor scores = leaky_relu(matmul(concat_cols({Hd, Hs}), hp.a), hp.leaky_slope);
    Tensor alpha = segment_softmax(scores, io.edges.dst, g.n);
    io.alpha.push_back(alpha);
    Tensor alpha_d = maybe_dropout(alpha, m.cfg, opt);
    outs.push_back(scatter_add_rows(col_scale(Hs, alpha_d), io.edges.dst, g.n));
  }
  if (outs.size() == 1) {
    io.out = outs[0];
  } else if (layer + 1 < m.num_layers()) {
    io.out = concat_cols(outs);  // hidden layers concatenate heads
  } else {
    Tensor sum = outs[0];  // output layer averages heads
    for (std::size_t h = 1; h < outs.size(); ++h) sum = add(sum, outs[h]);
    io.out = scale(sum, 1.0 / static_cast<double>(outs.size()));
  }
  return io;
}

Tensor gcn_layer(const Tensor& X, const std::shared_ptr<const SparseMatrix>& a_hat,
                 const GnnModel& m, int layer, const ForwardOptions& opt) {
  const LayerParams& lp = m.layers[static_cast<std::size_t>(layer)][0];
  Tensor Xd = maybe_dropout(X, m.cfg, opt);
  return spmm(a_hat, matmul(Xd, lp.W));
}

// Shared layer-loop epilogue: activation on hidden layers, optional
// width-preserving skip connection.
Tensor finish_layer(const Tensor& pre, const Tensor& layer_in, const GnnModel& m, int layer) {
  if (layer + 1 >= m.num_layers()) return pre;  // logits stay raw
  Tensor out = apply_activation(pre, m.cfg.activation);
  if (m.cfg.residual && layer_in.cols() == out.cols()) out = add(out, layer_in);
  return out;
}

}  // namespace

ModelKind model_kind_from_string(const std::string& s) {
  if (s == "gcn") return ModelKind::gcn;
  if (s == "gat") return ModelKind::gat;
  if (s == "dynamo_gat") return ModelKind::dynamo_gat;
  throw std::runtime_error("unknown model kind: " + s);
}

const char* model_kind_name(ModelKind k) {
  switch (k) {
    case ModelKind::gcn: return "gcn";
    case ModelKind::gat: return "gat";
    case ModelKind::dynamo_gat: return "dynamo_gat";
  }
  return "?";
}

std::vector<Tensor> GnnModel::parameters() const {
  std::vector<Tensor> ps;
  for (const auto& layer : layers)
    for (const auto& hp : layer) {
      ps.push_back(hp.W);
      if (hp.a.defined()) ps.push_back(hp.a);
    }
  return ps;
}

std::vector<Mat> GnnModel::snapshot_values() const {
  std::vector<Mat> vs;
  for (const auto& p : parameters()) vs.push_back(p.to_mat());
  return vs;
}

void GnnModel::restore_values(const std::vector<Mat>& values) {
  auto ps = parameters();
  if (ps.size() != values.size()) throw std::runtime_error("restore_values: parameter count mismatch");
  for (std::size_t i = 0; i < ps.size(); ++i) {
    if (ps[i].size() != values[i].size()) throw std::runtime_error("restore_values: shape mismatch");
    ps[i].value() = values[i].v;
  }
}

std::int64_t GnnModel::layer_out_dim(int layer) const {
  return layer + 1 >= num_layers() ? output_dim : cfg.hidden_dim;
}

GnnModel init_model(const ModelConfig& cfg, std::int64_t input_dim, std::int64_t num_classes,
                    std::uint64_t seed) {
  if (cfg.depth < 1) throw std::runtime_error("model depth must be >= 1");
  if (cfg.hidden_dim < 1) throw std::runtime_error("hidden_dim must be >= 1");
  if (cfg.heads_hidden < 1 || cfg.heads_out < 1) throw std::runtime_error("heads must be >= 1");
  if (cfg.is_attention() && cfg.hidden_dim % cfg.heads_hidden != 0)
    throw std::runtime_error("hidden_dim must be divisible by heads");

  GnnModel m;
  m.cfg = cfg;
  m.input_dim = input_dim;
  m.output_dim = num_classes;
  Rng rng(seed);
  auto glorot = [&rng](std::int64_t r, std::int64_t c) {
    Mat w(r, c);
    double limit = std::sqrt(6.0 / static_cast<double>(r + c));
    for (auto& v : w.v) v = rng.uniform(-limit, limit);
    return Tensor::leaf(std::move(w), true);
  };

  const int T = cfg.depth;
  for (int l = 0; l < T; ++l) {
    const bool last = (l == T - 1);
    const std::int64_t d_in = (l == 0) ? input_dim : cfg.hidden_dim;
    std::vector<LayerParams> heads;
    if (cfg.kind == ModelKind::gcn) {
      LayerParams lp;
      lp.W = glorot(d_in, last ? num_classes : cfg.hidden_dim);
      heads.push_back(std::move(lp));
    } else {
      const int nh = last ? cfg.heads_out : cfg.heads_hidden;
      const std::int64_t dh = last ? num_classes : cfg.hidden_dim / cfg.heads_hidden;
      for (int h = 0; h < nh; ++h) {
        LayerParams lp;
        lp.W = glorot(d_in, dh);
        lp.a = glorot(2 * dh, 1);
        lp.leaky_slope = cfg.leaky_slope;
        heads.push_back(std::move(lp));
      }
    }
    m.layers.push_back(std::move(heads));
  }
  return m;
}

std::shared_ptr<const SparseMatrix> build_gcn_adjacency(const Graph& g) {
  auto s = std::make_shared<SparseMatrix>();
  s->rows = g.n;
  s->cols = g.n;
  std::vector<double> inv_sqrt_deg(static_cast<std::size_t>(g.n));
  for (std::int64_t i = 0; i < g.n; ++i)
    inv_sqrt_deg[i] = 1.0 / std::sqrt(static_cast<double>(g.degree(i) + 1));
  s->row_ptr.assign(static_cast<std::size_t>(g.n) + 1, 0);
  for (std::int64_t i = 0; i < g.n; ++i) s->row_ptr[i + 1] = s->row_ptr[i] + g.degree(i) + 1;
  s->col_idx.reserve(static_cast<std::size_t>(s->row_ptr[g.n]));
  s->vals.reserve(static_cast<std::size_t>(s->row_ptr[g.n]));
  for (std::int64_t i = 0; i < g.n; ++i) {
    bool self_done = false;
    auto push = [&](std::int64_t j) {
      s->col_idx.push_back(j);
      s->vals.push_back(inv_sqrt_deg[i] * inv_sqrt_deg[j]);
    };
    for (std::int64_t k = g.row_ptr[i]; k < g.row_ptr[i + 1]; ++k) {
      std::int64_t j = g.col_idx[static_cast<std::size_t>(k)];
      if (!self_done && j > i) {
        push(i);
        self_done = true;
      }
      push(j);
    }
    if (!self_done) push(i);
  }
  return s;
}

EdgeList build_edge_list(const Graph& g, const PruneState* st, int layer) {
  EdgeList e;
  const std::int64_t upper = g.n + static_cast<std::int64_t>(g.col_idx.size());
  e.src.reserve(upper);
  e.dst.reserve(upper);
  e.slot.reserve(upper);
  for (std::int64_t i = 0; i < g.n; ++i) {
    e.src.push_back(i);
    e.dst.push_back(i);
    e.slot.push_back(-1);
    for (std::int64_t k = g.row_ptr[i]; k < g.row_ptr[i + 1]; ++k) {
      if (st && st->initialized && !st->alive(layer, k)) continue;
      e.src.push_back(g.col_idx[static_cast<std::size_t>(k)]);
      e.dst.push_back(i);
      e.slot.push_back(k);
    }
  }
  return e;
}

Tensor gcn_forward(const Tensor& X, const Graph& g, const GnnModel& m,
                   const ForwardOptions& opt) {
  auto a_hat = build_gcn_adjacency(g);
  Tensor cur = X;
  for (int l = 0; l < m.num_layers(); ++l)
    cur = finish_layer(gcn_layer(cur, a_hat, m, l, opt), cur, m, l);
  return cur;
}

Tensor gat_forward(const Tensor& X, const Graph& g, const GnnModel& m,
                   const ForwardOptions& opt) {
  Tensor cur = X;
  for (int l = 0; l < m.num_layers(); ++l)
    cur = finish_layer(gat_layer(cur, g, m, l, opt).out, cur, m, l);
  return cur;
}

Tensor model_forward(const Tensor& X, const Graph& g, const GnnModel& m,
                     const ForwardOptions& opt) {
  return m.cfg.kind == ModelKind::gcn ? gcn_forward(X, g, m, opt) : gat_forward(X, g, m, opt);
}

Mat eval_forward(const Graph& g, const GnnModel& m, const PruneState* prune) {
  ForwardOptions opt;
  opt.prune = prune;
  return model_forward(Tensor::leaf(g.features, false), g, m, opt).to_mat();
}

Mat eval_layer_input(const Graph& g, const GnnModel& m, int layer, const PruneState* prune) {
  Mat cur = g.features;
  for (int l = 0; l < layer; ++l) cur = eval_layer_apply(cur, g, m, l, prune);
  return cur;
}

Mat eval_layer_apply(const Mat& X, const Graph& g, const GnnModel& m, int layer,
                     const PruneState* prune) {
  ForwardOptions opt;
  opt.prune = prune;
  Tensor Xt = Tensor::leaf(X, false);
  Tensor pre = m.cfg.kind == ModelKind::gcn
                   ? gcn_layer(Xt, build_gcn_adjacency(g), m, layer, opt)
                   : gat_layer(Xt, g, m, layer, opt).out;
  return finish_layer(pre, Xt, m, layer).to_mat();
}

AttentionCoeffs gat_attention(const Mat& X, const Graph& g, const GnnModel& m, int layer,
                              const PruneState* prune) {
  if (!m.cfg.is_attention()) throw std::runtime_error("gat_attention: not an attention model");
  ForwardOptions opt;
  opt.prune = prune;
  GatLayerOut io = gat_layer(Tensor::leaf(X, false), g, m, layer, opt);
  AttentionCoeffs out;
  out.edges = std::move(io.edges);
  for (auto& a : io.alpha) out.alpha.push_back(a.value());
  return out;
}

TrainResult train(const Graph& g, const Masks& masks, const ModelConfig& mcfg,
                  const TrainConfig& tcfg, const PruneState* prune, const PruneHook& hook) {
  if (static_cast<std::int64_t>(masks.train.size()) != g.n)
    throw std::runtime_error("train: masks do not match graph");
  GnnModel model = init_model(mcfg, g.feature_dim(), g.num_classes, tcfg.seed);
  auto params = model.parameters();
  AdamState ast;
  ast.init(params);
  AdamConfig acfg;
  acfg.lr = tcfg.lr;
  acfg.weight_decay = tcfg.weight_decay;
  Rng drop_rng = Rng(tcfg.seed).fork(0xD0);
  Tensor Xleaf = Tensor::leaf(g.features, false);

  TrainReport rep;
  rep.seed = tcfg.seed;
  std::vector<Mat> best_values = model.snapshot_values();
  double best_val = -1.0;
  int best_epoch = -1;

  for (int epoch = 0; epoch < tcfg.max_epochs; ++epoch) {
    if (hook) hook(epoch, model);

    ForwardOptions topt;
    topt.training = true;
    topt.rng = &drop_rng;
    topt.prune = prune;
    Tensor loss = cross_entropy_masked(model_forward(Xleaf, g, model, topt), g.labels, masks.train);
    if (!std::isfinite(loss.item()))
      throw std::runtime_error("non-finite training loss at epoch " + std::to_string(epoch));
    Tape tape(loss);
    tape.backward();
    adam_step(params, ast, acfg);

    ForwardOptions eopt;
    eopt.prune = prune;
    Tensor elog = model_forward(Xleaf, g, model, eopt);
    Mat em = elog.to_mat();
    rep.train_loss.push_back(cross_entropy_masked(elog, g.labels, masks.train).item());
    rep.val_loss.push_back(cross_entropy_masked(elog, g.labels, masks.val).item());
    rep.train_acc.push_back(masked_accuracy(em, g.labels, masks.train));
    const double va = masked_accuracy(em, g.labels, masks.val);
    rep.val_acc.push_back(va);
    rep.epochs_run = epoch + 1;

    if (va > best_val) {
      best_val = va;
      best_epoch = epoch;
      best_values = model.snapshot_values();
    }
    if (epoch - best_epoch >= tcfg.patience) break;
  }

  model.restore_values(best_values);
  rep.best_val_acc = best_val;
  rep.best_epoch = best_epoch;
  rep.test_acc = masked_accuracy(eval_forward(g, model, prune), g.labels, masks.test);
  return {std::move(rep), std::move(model)};
}

double activation_lipschitz(Activation a, double leaky_slope) {
  switch (a) {
    case Activation::identity: return 1.0;
    case Activation::relu: return 1.0;
    case Activation::leaky_relu: return std::max(1.0, std::abs(leaky_slope));
    case Activation::elu: return 1.0;
    case Activation::tanh: return 1.0;
  }
  return 1.0;
}

}  // namespace gnnlab
