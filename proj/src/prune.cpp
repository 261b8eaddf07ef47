#include "gnnlab/prune.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace gnnlab {
namespace {

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9E3779B97F4A7C15ull * (b + 1);
  z ^= z >> 30;
  z *= 0xBF58476D1CE4E5B9ull;
  z ^= z >> 27;
  z *= 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

void add_noise(Mat& x, double sigma, Rng& rng) {
  for (auto& v : x.v) v += sigma * rng.normal();
}

// Head-averaged attention at X seeds layer `t`'s weights.
void init_layer_weights(PruneState& st, const GnnModel& model, const Graph& g, const Mat& X,
                        int t) {
  AttentionCoeffs att = gat_attention(X, g, model, t, nullptr);
  const double nh = static_cast<double>(att.alpha.size());
  for (std::int64_t k = 0; k < att.edges.count(); ++k) {
    double sum = 0.0;
    for (const auto& head : att.alpha) sum += head[static_cast<std::size_t>(k)];
    const double avg = sum / nh;
    if (att.edges.slot[k] < 0)
      st.w_self[t][static_cast<std::size_t>(att.edges.dst[k])] = avg;
    else
      st.w[t][static_cast<std::size_t>(att.edges.slot[k])] = avg;
  }
}

}  // namespace

SignMode sign_mode_from_string(const std::string& s) {
  if (s == "as_written" || s == "as-written") return SignMode::as_written;
  if (s == "flipped") return SignMode::flipped;
  throw std::runtime_error("unknown sign_mode: " + s);
}

const char* sign_mode_name(SignMode m) {
  return m == SignMode::as_written ? "as_written" : "flipped";
}

void PruneConfig::validate() const {
  if (noise_sigma <= 0.0) throw std::runtime_error("prune: noise_sigma must be > 0");
  if (noise_samples < 2) throw std::runtime_error("prune: noise_samples must be >= 2");
  if (r0 < 0.0) throw std::runtime_error("prune: r0 must be >= 0");
  if (gamma < 0.0) throw std::runtime_error("prune: gamma must be >= 0");
  if (epsilon <= 0.0) throw std::runtime_error("prune: epsilon must be > 0");
  if (prune_every < 1) throw std::runtime_error("prune: prune_every must be >= 1");
}

void PruneState::init_shape(int num_layers, std::int64_t num_slots, std::int64_t num_nodes) {
  w.assign(num_layers, std::vector<double>(static_cast<std::size_t>(num_slots), 0.0));
  pruned.assign(num_layers, std::vector<std::uint8_t>(static_cast<std::size_t>(num_slots), 0));
  last_p.assign(num_layers, std::vector<double>(static_cast<std::size_t>(num_slots), 0.0));
  w_self.assign(num_layers, std::vector<double>(static_cast<std::size_t>(num_nodes), 0.0));
  steps = 0;
  initialized = false;
}

std::int64_t PruneState::alive_count(int layer) const {
  return slots_per_layer() - pruned_count(layer);
}

std::int64_t PruneState::pruned_count(int layer) const {
  std::int64_t c = 0;
  for (auto b : pruned[static_cast<std::size_t>(layer)]) c += b;
  return c;
}

std::vector<Mat> inject_noise(const Mat& X, double sigma, std::uint64_t seed, int M) {
  if (sigma < 0.0) throw std::runtime_error("inject_noise: sigma must be >= 0");
  std::vector<Mat> out;
  out.reserve(static_cast<std::size_t>(M));
  for (int m = 0; m < M; ++m) {
    Rng rng(mix(seed, static_cast<std::uint64_t>(m)));
    Mat copy = X;
    add_noise(copy, sigma, rng);
    out.push_back(std::move(copy));
  }
  return out;
}

PairCovariance pair_covariance(const std::vector<Mat>& samples, const Graph& g) {
  const int M = static_cast<int>(samples.size());
  if (M < 2) throw std::runtime_error("pair_covariance: need at least 2 samples");
  const std::int64_t n = samples[0].rows, d = samples[0].cols;
  if (n != g.n) throw std::runtime_error("pair_covariance: samples do not match graph");
  for (const auto& s : samples)
    if (s.rows != n || s.cols != d) throw std::runtime_error("pair_covariance: ragged samples");

  Mat mean(n, d);
  for (const auto& s : samples)
    for (std::int64_t i = 0; i < s.size(); ++i) mean.v[i] += s.v[i];
  for (auto& v : mean.v) v /= static_cast<double>(M);

  const double scale = 1.0 / (static_cast<double>(d) * static_cast<double>(M - 1));
  PairCovariance c;
  c.node.assign(static_cast<std::size_t>(n), 0.0);
  c.slot.assign(g.col_idx.size(), 0.0);
  for (const auto& s : samples) {
    for (std::int64_t i = 0; i < n; ++i) {
      const double* si = s.row(i);
      const double* mi = mean.row(i);
      double acc = 0.0;
      for (std::int64_t f = 0; f < d; ++f) acc += (si[f] - mi[f]) * (si[f] - mi[f]);
      c.node[static_cast<std::size_t>(i)] += acc;
    }
    for (std::int64_t i = 0; i < n; ++i) {
      const double* si = s.row(i);
      const double* mi = mean.row(i);
      for (std::int64_t k = g.row_ptr[i]; k < g.row_ptr[i + 1]; ++k) {
        const std::int64_t j = g.col_idx[static_cast<std::size_t>(k)];
        const double* sj = s.row(j);
        const double* mj = mean.row(j);
        double acc = 0.0;
        for (std::int64_t f = 0; f < d; ++f) acc += (si[f] - mi[f]) * (sj[f] - mj[f]);
        c.slot[static_cast<std::size_t>(k)] += acc;
      }
    }
  }
  for (auto& v : c.node) v *= scale;
  for (auto& v : c.slot) v *= scale;
  return c;
}

double pruning_threshold(const std::vector<double>& abs_weights, double beta) {
  if (abs_weights.empty()) throw std::runtime_error("pruning_threshold: all edges pruned");
  double mean = 0.0;
  for (double w : abs_weights) mean += std::abs(w);
  mean /= static_cast<double>(abs_weights.size());
  double var = 0.0;
  for (double w : abs_weights) {
    const double dvi = std::abs(w) - mean;
    var += dvi * dvi;
  }
  var /= static_cast<double>(abs_weights.size());  // population variance
  const double tau = mean + beta * std::sqrt(std::max(var, 0.0));
  return std::max(tau, 1e-12);
}

double layer_rate(double r0, double gamma, int t) {
  if (t < 0) throw std::runtime_error("layer_rate: t must be >= 0");
  return r0 * (1.0 + gamma * static_cast<double>(t));
}

double pruning_probability(double w, double c_ii, double c_jj, double c_ij, double tau, double r,
                           SignMode mode) {
  if (tau <= 0.0) throw std::runtime_error("pruning_probability: tau must be > 0");
  if (w == 0.0) return 0.0;
  const double correlated = c_ii + c_jj - 2.0 * c_ij;
  const double anti = c_ii + c_jj + 2.0 * c_ij;
  const bool positive = w > 0.0;
  const double factor = (mode == SignMode::as_written) == positive ? correlated : anti;
  const double p = r * (std::abs(w) / tau) * factor;
  return std::clamp(p, 0.0, 1.0);
}

void apply_gradual_prune(PruneState& st, int layer, const std::vector<double>& p, double epsilon) {
  auto& w = st.w[static_cast<std::size_t>(layer)];
  auto& pruned = st.pruned[static_cast<std::size_t>(layer)];
  auto& last_p = st.last_p[static_cast<std::size_t>(layer)];
  if (p.size() != w.size()) throw std::runtime_error("apply_gradual_prune: size mismatch");
  for (std::size_t k = 0; k < w.size(); ++k) {
    if (pruned[k]) continue;
    const double pk = std::clamp(p[k], 0.0, 1.0);
    last_p[k] = pk;
    w[k] *= (1.0 - pk);
    if (std::abs(w[k]) < epsilon) {
      w[k] = 0.0;
      pruned[k] = 1;
    }
  }
}

std::vector<double> recalibrate(const std::vector<double>& alpha, const EdgeList& edges,
                                const PruneState& st, int layer, std::int64_t num_nodes) {
  if (alpha.size() != static_cast<std::size_t>(edges.count()))
    throw std::runtime_error("recalibrate: alpha does not match edges");
  std::vector<double> out(alpha.size(), 0.0);
  std::vector<double> mass(static_cast<std::size_t>(num_nodes), 0.0);
  for (std::int64_t k = 0; k < edges.count(); ++k) {
    const bool survives = edges.slot[k] < 0 || st.alive(layer, edges.slot[k]);
    if (survives) mass[static_cast<std::size_t>(edges.dst[k])] += alpha[static_cast<std::size_t>(k)];
  }
  for (std::int64_t k = 0; k < edges.count(); ++k) {
    const bool survives = edges.slot[k] < 0 || st.alive(layer, edges.slot[k]);
    if (!survives) continue;
    const double m = mass[static_cast<std::size_t>(edges.dst[k])];
    if (m <= 0.0) throw std::runtime_error("recalibrate: node lost all surviving mass");
    out[static_cast<std::size_t>(k)] = alpha[static_cast<std::size_t>(k)] / m;
  }
  return out;
}

std::vector<PruneLogRow> dynamo_step(const GnnModel& model, const Graph& g, const Mat& X_input,
                                     PruneState& state, const PruneConfig& cfg, int epoch,
                                     std::uint64_t noise_seed) {
  cfg.validate();
  if (!model.cfg.is_attention()) throw std::runtime_error("dynamo_step: attention models only");
  const int L = model.num_layers();
  const int M = cfg.noise_samples;

  if (!state.initialized) {
    state.init_shape(L, static_cast<std::int64_t>(g.col_idx.size()), g.n);
    Mat clean = X_input;
    for (int t = 0; t < L; ++t) {
      init_layer_weights(state, model, g, clean, t);
      clean = eval_layer_apply(clean, g, model, t, nullptr);
    }
    state.initialized = true;
  }

  // Row owner of each CSR slot, for covariance lookups.
  std::vector<std::int64_t> slot_dst(g.col_idx.size());
  for (std::int64_t i = 0; i < g.n; ++i)
    for (std::int64_t k = g.row_ptr[i]; k < g.row_ptr[i + 1]; ++k)
      slot_dst[static_cast<std::size_t>(k)] = i;

  std::vector<Mat> samples(static_cast<std::size_t>(M), X_input);
  std::vector<PruneLogRow> log;
  log.reserve(static_cast<std::size_t>(L));

  for (int t = 0; t < L; ++t) {
    for (int m = 0; m < M; ++m) {
      Rng rng(mix(noise_seed, static_cast<std::uint64_t>(t) * 1000003ull +
                                  static_cast<std::uint64_t>(m)));
      add_noise(samples[static_cast<std::size_t>(m)], cfg.noise_sigma, rng);
    }
    PairCovariance cov = pair_covariance(samples, g);

    PruneLogRow row;
    row.epoch = epoch;
    row.layer = t;
    row.r = layer_rate(cfg.r0, cfg.gamma, t);

    std::vector<double> alive_w;
    alive_w.reserve(state.w[t].size());
    for (std::size_t k = 0; k < state.w[t].size(); ++k)
      if (state.alive(t, static_cast<std::int64_t>(k))) alive_w.push_back(std::abs(state.w[t][k]));

    if (!alive_w.empty()) {
      row.tau = pruning_threshold(alive_w, cfg.beta);
      std::vector<double> p(state.w[t].size(), 0.0);
      double p_sum = 0.0;
      std::int64_t p_cnt = 0;
      for (std::size_t k = 0; k < p.size(); ++k) {
        if (!state.alive(t, static_cast<std::int64_t>(k))) continue;
        const std::int64_t i = slot_dst[k];
        const std::int64_t j = g.col_idx[k];
        p[k] = pruning_probability(state.w[t][k], cov.node[static_cast<std::size_t>(i)],
                                   cov.node[static_cast<std::size_t>(j)], cov.slot[k], row.tau,
                                   row.r, cfg.sign_mode);
        p_sum += p[k];
        ++p_cnt;
      }
      apply_gradual_prune(state, t, p, cfg.epsilon);
      row.mean_p = p_cnt ? p_sum / static_cast<double>(p_cnt) : 0.0;
    }
    row.edges_alive = state.alive_count(t);
    log.push_back(row);

    for (int m = 0; m < M; ++m)
      samples[static_cast<std::size_t>(m)] =
          eval_layer_apply(samples[static_cast<std::size_t>(m)], g, model, t, &state);
  }
  ++state.steps;
  return log;
}

PruneHook make_dynamo_hook(const Graph& g, PruneState& state, const PruneConfig& cfg,
                           std::uint64_t seed, std::vector<PruneLogRow>* log) {
  cfg.validate();
  return [&g, &state, cfg, seed, log](int epoch, const GnnModel& model) {
    if (epoch % cfg.prune_every != 0) return;
    auto rows =
        dynamo_step(model, g, g.features, state, cfg, epoch, mix(seed, static_cast<std::uint64_t>(epoch)));
    if (log) log->insert(log->end(), rows.begin(), rows.end());
  };
}

}  // namespace gnnlab
