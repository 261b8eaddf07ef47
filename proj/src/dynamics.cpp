#include "gnnlab/dynamics.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <stdexcept>

#include "gnnlab/csv.hpp"

namespace gnnlab {
namespace {

using EMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using CMap = Eigen::Map<const EMat>;
using MMap = Eigen::Map<EMat>;

Mat dense_mm(const Mat& a, const Mat& b) {
  if (a.cols != b.rows) throw std::runtime_error("dense_mm: shape mismatch");
  Mat out(a.rows, b.cols);
  MMap(out.v.data(), out.rows, out.cols).noalias() =
      CMap(a.v.data(), a.rows, a.cols) * CMap(b.v.data(), b.rows, b.cols);
  return out;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm2(const std::vector<double>& a) { return std::sqrt(dot(a, a)); }

bool all_finite(const std::vector<double>& a) {
  for (double v : a)
    if (!std::isfinite(v)) return false;
  return true;
}

// Largest |eigenvalue| of [[b00, b01], [b10, b11]]; handles the
// complex-pair case through the discriminant sign.
double max_abs_eig_2x2(double b00, double b01, double b10, double b11) {
  const double tr = b00 + b11;
  const double det = b00 * b11 - b01 * b10;
  const double disc = tr * tr - 4.0 * det;
  if (disc >= 0.0) {
    const double s = std::sqrt(disc);
    return std::max(std::abs((tr + s) / 2.0), std::abs((tr - s) / 2.0));
  }
  return std::sqrt(det);  // conjugate pair: |lambda|^2 = det
}

double elu_scalar(double x) { return x > 0.0 ? x : std::exp(x) - 1.0; }

double activation_scalar(Activation a, double x, double slope) {
  switch (a) {
    case Activation::identity: return x;
    case Activation::relu: return x > 0.0 ? x : 0.0;
    case Activation::leaky_relu: return x > 0.0 ? x : slope * x;
    case Activation::elu: return elu_scalar(x);
    case Activation::tanh: return std::tanh(x);
  }
  return x;
}

}  // namespace

EffectiveAdjacency effective_adjacency(const GnnModel& m, const Graph& g, const Mat& X, int layer,
                                       const PruneState* st) {
  EffectiveAdjacency ea;
  ea.n = g.n;
  ea.dense = Mat(g.n, g.n);
  if (!m.cfg.is_attention()) {
    ea.is_attention = false;
    ea.dense = build_gcn_adjacency(g)->to_dense();
    return ea;
  }
  AttentionCoeffs att = gat_attention(X, g, m, layer, st);
  const double nh = static_cast<double>(att.alpha.size());
  for (std::int64_t k = 0; k < att.edges.count(); ++k) {
    double sum = 0.0;
    for (const auto& head : att.alpha) sum += head[static_cast<std::size_t>(k)];
    ea.dense.at(att.edges.dst[static_cast<std::size_t>(k)],
                att.edges.src[static_cast<std::size_t>(k)]) += sum / nh;
  }
  return ea;
}

Mat pruned_coefficients(const Graph& g, const PruneState& st, int layer) {
  if (!st.initialized) throw std::runtime_error("pruned_coefficients: state not initialized");
  Mat w(g.n, g.n);
  for (std::int64_t i = 0; i < g.n; ++i) {
    w.at(i, i) = st.w_self[static_cast<std::size_t>(layer)][static_cast<std::size_t>(i)];
    for (std::int64_t k = g.row_ptr[i]; k < g.row_ptr[i + 1]; ++k)
      if (st.alive(layer, k))
        w.at(i, g.col_idx[static_cast<std::size_t>(k)]) =
            st.w[static_cast<std::size_t>(layer)][static_cast<std::size_t>(k)];
  }
  return w;
}

LayerMap make_layer_map(const Graph& g, const GnnModel& m, int layer, const PruneState* st) {
  return [&g, &m, layer, st](const Mat& X) { return eval_layer_apply(X, g, m, layer, st); };
}

Mat pruned_layer_apply(const Mat& X, const Graph& g, const GnnModel& m, int layer,
                       const PruneState& st) {
  if (!m.cfg.is_attention()) throw std::runtime_error("pruned_layer_apply: attention models only");
  if (!st.initialized) throw std::runtime_error("pruned_layer_apply: state not initialized");
  Mat coeff = pruned_coefficients(g, st, layer);
  const auto& heads = m.layers[static_cast<std::size_t>(layer)];
  const bool last = (layer + 1 >= m.num_layers());
  std::vector<Mat> outs;
  outs.reserve(heads.size());
  for (const LayerParams& hp : heads) outs.push_back(dense_mm(coeff, dense_mm(X, hp.W.to_mat())));
  Mat pre;
  if (outs.size() == 1) {
    pre = std::move(outs[0]);
  } else if (!last) {
    pre = Mat(g.n, outs[0].cols * static_cast<std::int64_t>(outs.size()));
    for (std::size_t h = 0; h < outs.size(); ++h)
      for (std::int64_t i = 0; i < g.n; ++i)
        for (std::int64_t f = 0; f < outs[h].cols; ++f)
          pre.at(i, static_cast<std::int64_t>(h) * outs[h].cols + f) = outs[h].at(i, f);
  } else {
    pre = Mat(g.n, outs[0].cols);
    for (const auto& o : outs)
      for (std::int64_t i = 0; i < pre.size(); ++i) pre.v[static_cast<std::size_t>(i)] += o.v[static_cast<std::size_t>(i)];
    for (auto& v : pre.v) v /= static_cast<double>(outs.size());
  }
  if (last) return pre;
  for (auto& v : pre.v) v = activation_scalar(m.cfg.activation, v, 0.2);
  if (m.cfg.residual && X.cols == pre.cols)
    for (std::int64_t i = 0; i < pre.size(); ++i) pre.v[static_cast<std::size_t>(i)] += X.v[static_cast<std::size_t>(i)];
  return pre;
}

LayerMap make_pruned_layer_map(const Graph& g, const GnnModel& m, int layer,
                               const PruneState& st) {
  return [&g, &m, layer, &st](const Mat& X) { return pruned_layer_apply(X, g, m, layer, st); };
}

SpectralResult spectral_radius(const LinOp& op, std::int64_t dim, int iters, double tol,
                               std::uint64_t seed) {
  if (dim < 1) throw std::runtime_error("spectral_radius: dim must be >= 1");
  if (iters < 1) throw std::runtime_error("spectral_radius: iters must be >= 1");
  Rng rng(seed);
  std::vector<double> v(static_cast<std::size_t>(dim));
  for (auto& x : v) x = rng.normal();
  const double nv = norm2(v);
  for (auto& x : v) x /= nv;

  std::vector<double> w = op(v);
  if (w.size() != v.size()) throw std::runtime_error("spectral_radius: operator changes dimension");
  if (!all_finite(w)) throw std::runtime_error("spectral_radius: operator returned non-finite values");

  std::deque<double> window;
  double prev = std::numeric_limits<double>::quiet_NaN();
  SpectralResult res;
  for (int it = 1; it <= iters; ++it) {
    res.iters_used = it;
    const double nw = norm2(w);
    if (nw < 1e-300) {
      res.rho = 0.0;  // the operator annihilated the iterate
      res.converged = true;
      return res;
    }
    std::vector<double> z = op(w);
    if (!all_finite(z)) throw std::runtime_error("spectral_radius: operator returned non-finite values");

    // Rayleigh-Ritz on span{v, w}: exact for dominant conjugate pairs.
    const double h = dot(v, w);
    std::vector<double> q2(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) q2[i] = w[i] - h * v[i];
    const double n2 = norm2(q2);
    double est;
    if (n2 <= 1e-13 * nw) {
      est = std::abs(h);  // w is (numerically) parallel to v
    } else {
      for (auto& x : q2) x /= n2;
      std::vector<double> aq2(v.size());
      for (std::size_t i = 0; i < v.size(); ++i) aq2[i] = (z[i] - h * w[i]) / n2;
      est = max_abs_eig_2x2(h, dot(v, aq2), dot(q2, w), dot(q2, aq2));
    }
    window.push_back(est);
    if (window.size() > 10) window.pop_front();
    if (std::isfinite(prev) && std::abs(est - prev) < tol) {
      res.rho = est;
      res.converged = true;
      return res;
    }
    prev = est;
    for (std::size_t i = 0; i < v.size(); ++i) {
      v[i] = w[i] / nw;
      z[i] /= nw;
    }
    w = std::move(z);
  }
  res.rho = *std::max_element(window.begin(), window.end());
  res.converged = false;
  return res;
}

SpectralResult spectral_radius_dense(const Mat& a, int iters, double tol, std::uint64_t seed) {
  if (a.rows != a.cols) throw std::runtime_error("spectral_radius_dense: square matrix required");
  LinOp op = [&a](const std::vector<double>& x) {
    std::vector<double> y(static_cast<std::size_t>(a.rows), 0.0);
    for (std::int64_t i = 0; i < a.rows; ++i) {
      double s = 0.0;
      for (std::int64_t j = 0; j < a.cols; ++j) s += a.at(i, j) * x[static_cast<std::size_t>(j)];
      y[static_cast<std::size_t>(i)] = s;
    }
    return y;
  };
  return spectral_radius(op, a.rows, iters, tol, seed);
}

SpectralResult spectral_radius_jacobian(const LayerMap& f, const Mat& X, int iters, double tol,
                                        std::uint64_t seed) {
  LinOp op = [&f, &X](const std::vector<double>& u) {
    Mat v(X.rows, X.cols);
    v.v = u;
    return jacobian_vector_product(f, X, v).v;
  };
  return spectral_radius(op, X.size(), iters, tol, seed);
}

Mat jacobian_vector_product(const LayerMap& f, const Mat& X, const Mat& v) {
  if (v.rows != X.rows || v.cols != X.cols)
    throw std::runtime_error("jacobian_vector_product: direction shape mismatch");
  const double nv = v.frobenius_norm();
  if (nv <= 0.0) throw std::runtime_error("jacobian_vector_product: zero direction");
  const double h = 1e-5 * (1.0 + X.frobenius_norm()) / nv;
  Mat xp = X, xm = X;
  for (std::int64_t i = 0; i < X.size(); ++i) {
    xp.v[static_cast<std::size_t>(i)] += h * v.v[static_cast<std::size_t>(i)];
    xm.v[static_cast<std::size_t>(i)] -= h * v.v[static_cast<std::size_t>(i)];
  }
  Mat fp = f(xp), fm = f(xm);
  if (fp.rows != fm.rows || fp.cols != fm.cols)
    throw std::runtime_error("jacobian_vector_product: map output shape varies");
  Mat out(fp.rows, fp.cols);
  for (std::int64_t i = 0; i < out.size(); ++i) {
    out.v[static_cast<std::size_t>(i)] =
        (fp.v[static_cast<std::size_t>(i)] - fm.v[static_cast<std::size_t>(i)]) / (2.0 * h);
    if (!std::isfinite(out.v[static_cast<std::size_t>(i)]))
      throw std::runtime_error("jacobian_vector_product: non-finite derivative");
  }
  return out;
}

FixedPointResult iterate_to_fixed_point(const LayerMap& f, const Mat& X0, int max_iter,
                                        double tol) {
  if (max_iter < 1) throw std::runtime_error("iterate_to_fixed_point: max_iter must be >= 1");
  FixedPointResult res;
  res.x = X0;
  for (int it = 0; it < max_iter; ++it) {
    Mat next = f(res.x);
    if (next.rows != res.x.rows || next.cols != res.x.cols)
      throw std::runtime_error("iterate_to_fixed_point: map changes shape");
    const double r = (next - res.x).frobenius_norm();
    res.residuals.push_back(r);
    res.x = std::move(next);
    res.steps = it + 1;
    if (!std::isfinite(r) || r > 1e12) {
      res.diverged = true;
      return res;
    }
    if (r < tol) {
      res.converged = true;
      return res;
    }
  }
  return res;
}

Mat feature_covariance(const Mat& X) {
  if (X.rows < 2) throw std::runtime_error("feature_covariance: need at least 2 rows");
  const double n = static_cast<double>(X.rows);
  std::vector<double> col_mean(static_cast<std::size_t>(X.cols), 0.0);
  for (std::int64_t i = 0; i < X.rows; ++i)
    for (std::int64_t f = 0; f < X.cols; ++f) col_mean[static_cast<std::size_t>(f)] += X.at(i, f);
  for (auto& v : col_mean) v /= n;

  Mat c(X.cols, X.cols);
  // (1/n) X^T X
  for (std::int64_t i = 0; i < X.rows; ++i)
    for (std::int64_t a = 0; a < X.cols; ++a)
      for (std::int64_t b = 0; b < X.cols; ++b) c.at(a, b) += X.at(i, a) * X.at(i, b) / n;
  // minus the mean outer product (the (1/n^2) X^T 1 1^T X term)
  for (std::int64_t a = 0; a < X.cols; ++a)
    for (std::int64_t b = 0; b < X.cols; ++b)
      c.at(a, b) -= col_mean[static_cast<std::size_t>(a)] * col_mean[static_cast<std::size_t>(b)];
  // exact symmetry despite floating summation order
  for (std::int64_t a = 0; a < X.cols; ++a)
    for (std::int64_t b = a + 1; b < X.cols; ++b) {
      const double s = 0.5 * (c.at(a, b) + c.at(b, a));
      c.at(a, b) = s;
      c.at(b, a) = s;
    }
  return c;
}

std::vector<double> symmetric_eigenvalues(const Mat& a) {
  if (a.rows != a.cols) throw std::runtime_error("symmetric_eigenvalues: square matrix required");
  const std::int64_t n = a.rows;
  Mat m = a;
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (std::int64_t p = 0; p < n; ++p)
      for (std::int64_t q = p + 1; q < n; ++q) off += m.at(p, q) * m.at(p, q);
    if (off < 1e-30) break;
    for (std::int64_t p = 0; p < n; ++p) {
      for (std::int64_t q = p + 1; q < n; ++q) {
        const double apq = m.at(p, q);
        if (std::abs(apq) < 1e-300) continue;
        const double theta = 0.5 * std::atan2(2.0 * apq, m.at(q, q) - m.at(p, p));
        const double c = std::cos(theta), s = std::sin(theta);
        for (std::int64_t k = 0; k < n; ++k) {
          const double mkp = m.at(k, p), mkq = m.at(k, q);
          m.at(k, p) = c * mkp - s * mkq;
          m.at(k, q) = s * mkp + c * mkq;
        }
        for (std::int64_t k = 0; k < n; ++k) {
          const double mpk = m.at(p, k), mqk = m.at(q, k);
          m.at(p, k) = c * mpk - s * mqk;
          m.at(q, k) = s * mpk + c * mqk;
        }
      }
    }
  }
  std::vector<double> ev(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) ev[static_cast<std::size_t>(i)] = m.at(i, i);
  std::sort(ev.begin(), ev.end());
  return ev;
}

int numerical_rank(const Mat& c, double rank_tol) {
  std::vector<double> ev = symmetric_eigenvalues(c);
  double smax = 0.0;
  for (double v : ev) smax = std::max(smax, std::abs(v));
  int rank = 0;
  for (double v : ev)
    if (std::abs(v) > rank_tol * smax) ++rank;
  return rank;
}

double oversmoothing_mu(const Mat& X) {
  if (X.rows < 1) throw std::runtime_error("oversmoothing_mu: empty matrix");
  const double n = static_cast<double>(X.rows);
  std::vector<double> col_mean(static_cast<std::size_t>(X.cols), 0.0);
  for (std::int64_t i = 0; i < X.rows; ++i)
    for (std::int64_t f = 0; f < X.cols; ++f) col_mean[static_cast<std::size_t>(f)] += X.at(i, f);
  for (auto& v : col_mean) v /= n;
  double dist2 = 0.0;
  for (std::int64_t i = 0; i < X.rows; ++i)
    for (std::int64_t f = 0; f < X.cols; ++f) {
      const double d = X.at(i, f) - col_mean[static_cast<std::size_t>(f)];
      dist2 += d * d;
    }
  return std::sqrt(dist2) / std::max(X.frobenius_norm(), 1e-30);
}

double pairwise_collapse(const Mat& X) {
  double best = 0.0;
  for (std::int64_t i = 0; i < X.rows; ++i)
    for (std::int64_t j = i + 1; j < X.rows; ++j) {
      double d2 = 0.0;
      for (std::int64_t f = 0; f < X.cols; ++f) {
        const double d = X.at(i, f) - X.at(j, f);
        d2 += d * d;
      }
      best = std::max(best, d2);
    }
  return std::sqrt(best);
}

DynamicsReport analyze_model(const Graph& g, const GnnModel& m, const PruneState* st,
                             const AnalyzeOptions& opt) {
  DynamicsReport rep;
  Mat cur = g.features;
  rep.mu_trace.push_back(oversmoothing_mu(cur));
  rep.covariance_rank.push_back(numerical_rank(feature_covariance(cur)));
  for (int l = 0; l < m.num_layers(); ++l) {
    cur = eval_layer_apply(cur, g, m, l, st);
    rep.mu_trace.push_back(oversmoothing_mu(cur));
    rep.covariance_rank.push_back(numerical_rank(feature_covariance(cur)));
  }
  rep.pairwise_collapse_final = pairwise_collapse(cur);

  // A width-preserving hidden layer supports the weight-tied analyses.
  for (int l = 1; l + 1 < m.num_layers(); ++l) {
    if (m.layer_out_dim(l - 1) == m.layer_out_dim(l)) {
      rep.analyzed_layer = l;
      break;
    }
  }
  if (rep.analyzed_layer >= 0) {
    Mat x_in = eval_layer_input(g, m, rep.analyzed_layer, st);
    LayerMap f = make_layer_map(g, m, rep.analyzed_layer, st);
    if (opt.fixed_point_iters > 0) {
      FixedPointResult fp = iterate_to_fixed_point(f, x_in, opt.fixed_point_iters,
                                                   opt.fixed_point_tol);
      rep.fixed_point_residuals = fp.residuals;
      rep.fixed_point_converged = fp.converged;
      if (!fp.diverged) x_in = fp.x;
    }
    rep.spectral = spectral_radius_jacobian(f, x_in, opt.power_iters, opt.power_tol, opt.seed);
    rep.has_spectral = true;
  }
  return rep;
}

void write_dynamics_csv(const std::string& path, const DynamicsReport& rep) {
  CsvWriter w(path, {"kind", "index", "mu", "covariance_rank", "residual", "spectral_radius",
                     "spectral_converged", "pairwise_collapse"});
  for (std::size_t t = 0; t < rep.mu_trace.size(); ++t)
    w.write_row_raw({"layer", std::to_string(t), fmt_g12(rep.mu_trace[t]),
                     std::to_string(rep.covariance_rank[t]), "", "", "", ""});
  for (std::size_t i = 0; i < rep.fixed_point_residuals.size(); ++i)
    w.write_row_raw({"fixed_point", std::to_string(i), "", "",
                     fmt_g12(rep.fixed_point_residuals[i]), "", "", ""});
  w.write_row_raw({"summary", "0", "", "", "",
                   rep.has_spectral ? fmt_g12(rep.spectral.rho) : "",
                   rep.has_spectral ? (rep.spectral.converged ? "1" : "0") : "",
                   fmt_g12(rep.pairwise_collapse_final)});
  w.flush();
}

}  // namespace gnnlab
