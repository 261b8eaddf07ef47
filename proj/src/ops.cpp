#include "gnnlab/ops.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <stdexcept>
#include <string>

namespace gnnlab {
namespace {

using EMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using CMap = Eigen::Map<const EMat>;
using MMap = Eigen::Map<EMat>;

CMap cmap(const std::vector<double>& v, std::int64_t r, std::int64_t c) {
  return CMap(v.data(), r, c);
}
MMap mmap(std::vector<double>& v, std::int64_t r, std::int64_t c) {
  return MMap(v.data(), r, c);
}

Tensor fresh(std::int64_t rows, std::int64_t cols, std::vector<Tensor> parents) {
  auto d = std::make_shared<TensorData>();
  d->rows = rows;
  d->cols = cols;
  d->value.assign(static_cast<std::size_t>(rows * cols), 0.0);
  for (auto& p : parents) {
    d->needs_grad = d->needs_grad || p.needs_grad();
    d->parents.push_back(p.ptr());
  }
  return Tensor(std::move(d));
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw std::runtime_error(std::string(what) + ": shape mismatch");
}

// Elementwise activation with derivative computed from the saved input.
template <typename F, typename DF>
Tensor unary_elementwise(const Tensor& x, F f, DF df) {
  Tensor out = fresh(x.rows(), x.cols(), {x});
  const auto& xv = x.value();
  auto& ov = out.value();
  for (std::size_t i = 0; i < xv.size(); ++i) ov[i] = f(xv[i]);
  if (out.needs_grad()) {
    out.node()->backward_fn = [df](TensorData& n) {
      TensorData& p = *n.parents[0];
      if (!p.needs_grad) return;
      for (std::size_t i = 0; i < p.value.size(); ++i) p.grad[i] += df(p.value[i]) * n.grad[i];
    };
  }
  return out;
}

}  // namespace

Activation activation_from_string(const std::string& s) {
  if (s == "identity") return Activation::identity;
  if (s == "relu") return Activation::relu;
  if (s == "leaky_relu") return Activation::leaky_relu;
  if (s == "elu") return Activation::elu;
  if (s == "tanh") return Activation::tanh;
  throw std::runtime_error("unknown activation: " + s);
}

const char* activation_name(Activation a) {
  switch (a) {
    case Activation::identity: return "identity";
    case Activation::relu: return "relu";
    case Activation::leaky_relu: return "leaky_relu";
    case Activation::elu: return "elu";
    case Activation::tanh: return "tanh";
  }
  return "?";
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) throw std::runtime_error("matmul: inner dimensions differ");
  Tensor out = fresh(a.rows(), b.cols(), {a, b});
  mmap(out.value(), out.rows(), out.cols()).noalias() =
      cmap(a.value(), a.rows(), a.cols()) * cmap(b.value(), b.rows(), b.cols());
  if (out.needs_grad()) {
    out.node()->backward_fn = [](TensorData& n) {
      TensorData& a = *n.parents[0];
      TensorData& b = *n.parents[1];
      CMap g(n.grad.data(), n.rows, n.cols);
      if (a.needs_grad)
        MMap(a.grad.data(), a.rows, a.cols).noalias() +=
            g * cmap(b.value, b.rows, b.cols).transpose();
      if (b.needs_grad)
        MMap(b.grad.data(), b.rows, b.cols).noalias() +=
            cmap(a.value, a.rows, a.cols).transpose() * g;
    };
  }
  return out;
}

Tensor spmm(const std::shared_ptr<const SparseMatrix>& s, const Tensor& x) {
  if (!s) throw std::runtime_error("spmm: null matrix");
  if (s->cols != x.rows()) throw std::runtime_error("spmm: inner dimensions differ");
  Tensor out = fresh(s->rows, x.cols(), {x});
  const std::int64_t d = x.cols();
  const auto& xv = x.value();
  auto& ov = out.value();
  for (std::int64_t i = 0; i < s->rows; ++i) {
    double* orow = ov.data() + i * d;
    for (std::int64_t k = s->row_ptr[i]; k < s->row_ptr[i + 1]; ++k) {
      const double w = s->vals[static_cast<std::size_t>(k)];
      const double* xrow = xv.data() + s->col_idx[static_cast<std::size_t>(k)] * d;
      for (std::int64_t j = 0; j < d; ++j) orow[j] += w * xrow[j];
    }
  }
  if (out.needs_grad()) {
    out.node()->backward_fn = [s, d](TensorData& n) {
      TensorData& x = *n.parents[0];
      if (!x.needs_grad) return;
      // dX = S^T dY, applied as a scatter so no transpose is built.
      for (std::int64_t i = 0; i < s->rows; ++i) {
        const double* grow = n.grad.data() + i * d;
        for (std::int64_t k = s->row_ptr[i]; k < s->row_ptr[i + 1]; ++k) {
          const double w = s->vals[static_cast<std::size_t>(k)];
          double* xgrow = x.grad.data() + s->col_idx[static_cast<std::size_t>(k)] * d;
          for (std::int64_t j = 0; j < d; ++j) xgrow[j] += w * grow[j];
        }
      }
    };
  }
  return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "add");
  Tensor out = fresh(a.rows(), a.cols(), {a, b});
  const auto& av = a.value();
  const auto& bv = b.value();
  auto& ov = out.value();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] + bv[i];
  if (out.needs_grad()) {
    out.node()->backward_fn = [](TensorData& n) {
      for (int pi = 0; pi < 2; ++pi) {
        TensorData& p = *n.parents[pi];
        if (!p.needs_grad) continue;
        for (std::size_t i = 0; i < p.grad.size(); ++i) p.grad[i] += n.grad[i];
      }
    };
  }
  return out;
}

Tensor scale(const Tensor& a, double c) {
  Tensor out = fresh(a.rows(), a.cols(), {a});
  const auto& av = a.value();
  auto& ov = out.value();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = c * av[i];
  if (out.needs_grad()) {
    out.node()->backward_fn = [c](TensorData& n) {
      TensorData& p = *n.parents[0];
      if (!p.needs_grad) return;
      for (std::size_t i = 0; i < p.grad.size(); ++i) p.grad[i] += c * n.grad[i];
    };
  }
  return out;
}

Tensor relu(const Tensor& x) {
  return unary_elementwise(
      x, [](double v) { return v > 0.0 ? v : 0.0; }, [](double v) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor leaky_relu(const Tensor& x, double slope) {
  return unary_elementwise(
      x, [slope](double v) { return v > 0.0 ? v : slope * v; },
      [slope](double v) { return v > 0.0 ? 1.0 : slope; });
}

Tensor elu(const Tensor& x, double alpha) {
  return unary_elementwise(
      x, [alpha](double v) { return v > 0.0 ? v : alpha * (std::exp(v) - 1.0); },
      [alpha](double v) { return v > 0.0 ? 1.0 : alpha * std::exp(v); });
}

Tensor tanh_act(const Tensor& x) {
  return unary_elementwise(
      x, [](double v) { return std::tanh(v); },
      [](double v) {
        double t = std::tanh(v);
        return 1.0 - t * t;
      });
}

Tensor apply_activation(const Tensor& x, Activation act, double leaky_slope) {
  switch (act) {
    case Activation::identity: return x;
    case Activation::relu: return relu(x);
    case Activation::leaky_relu: return leaky_relu(x, leaky_slope);
    case Activation::elu: return elu(x);
    case Activation::tanh: return tanh_act(x);
  }
  throw std::runtime_error("unreachable activation");
}

Tensor gather_rows(const Tensor& x, const std::vector<std::int64_t>& idx) {
  Tensor out = fresh(static_cast<std::int64_t>(idx.size()), x.cols(), {x});
  const std::int64_t d = x.cols();
  const auto& xv = x.value();
  auto& ov = out.value();
  for (std::size_t k = 0; k < idx.size(); ++k)
    std::copy_n(xv.data() + idx[k] * d, d, ov.data() + static_cast<std::int64_t>(k) * d);
  if (out.needs_grad()) {
    auto ix = std::make_shared<std::vector<std::int64_t>>(idx);
    out.node()->backward_fn = [ix, d](TensorData& n) {
      TensorData& x = *n.parents[0];
      if (!x.needs_grad) return;
      for (std::size_t k = 0; k < ix->size(); ++k) {
        const double* grow = n.grad.data() + static_cast<std::int64_t>(k) * d;
        double* xrow = x.grad.data() + (*ix)[k] * d;
        for (std::int64_t j = 0; j < d; ++j) xrow[j] += grow[j];
      }
    };
  }
  return out;
}

Tensor scatter_add_rows(const Tensor& x, const std::vector<std::int64_t>& idx,
                        std::int64_t out_rows) {
  if (static_cast<std::int64_t>(idx.size()) != x.rows())
    throw std::runtime_error("scatter_add_rows: one index per input row required");
  Tensor out = fresh(out_rows, x.cols(), {x});
  const std::int64_t d = x.cols();
  const auto& xv = x.value();
  auto& ov = out.value();
  for (std::size_t k = 0; k < idx.size(); ++k) {
    const double* xrow = xv.data() + static_cast<std::int64_t>(k) * d;
    double* orow = ov.data() + idx[k] * d;
    for (std::int64_t j = 0; j < d; ++j) orow[j] += xrow[j];
  }
  if (out.needs_grad()) {
    auto ix = std::make_shared<std::vector<std::int64_t>>(idx);
    out.node()->backward_fn = [ix, d](TensorData& n) {
      TensorData& x = *n.parents[0];
      if (!x.needs_grad) return;
      for (std::size_t k = 0; k < ix->size(); ++k) {
        const double* grow = n.grad.data() + (*ix)[k] * d;
        double* xrow = x.grad.data() + static_cast<std::int64_t>(k) * d;
        for (std::int64_t j = 0; j < d; ++j) xrow[j] += grow[j];
      }
    };
  }
  return out;
}

Tensor segment_softmax(const Tensor& scores, const std::vector<std::int64_t>& seg,
                       std::int64_t num_segments) {
  if (scores.cols() != 1) throw std::runtime_error("segment_softmax: scores must be a column");
  if (static_cast<std::int64_t>(seg.size()) != scores.rows())
    throw std::runtime_error("segment_softmax: one segment id per score required");
  Tensor out = fresh(scores.rows(), 1, {scores});
  const auto& sv = scores.value();
  auto& ov = out.value();
  std::vector<double> smax(static_cast<std::size_t>(num_segments),
                           -std::numeric_limits<double>::infinity());
  for (std::size_t k = 0; k < seg.size(); ++k)
    smax[static_cast<std::size_t>(seg[k])] = std::max(smax[static_cast<std::size_t>(seg[k])], sv[k]);
  std::vector<double> ssum(static_cast<std::size_t>(num_segments), 0.0);
  for (std::size_t k = 0; k < seg.size(); ++k) {
    ov[k] = std::exp(sv[k] - smax[static_cast<std::size_t>(seg[k])]);
    ssum[static_cast<std::size_t>(seg[k])] += ov[k];
  }
  for (std::size_t k = 0; k < seg.size(); ++k) ov[k] /= ssum[static_cast<std::size_t>(seg[k])];
  if (out.needs_grad()) {
    auto sg = std::make_shared<std::vector<std::int64_t>>(seg);
    out.node()->backward_fn = [sg, num_segments](TensorData& n) {
      TensorData& p = *n.parents[0];
      if (!p.needs_grad) return;
      // ds_e = a_e * (g_e - sum_{f in segment} a_f g_f)
      std::vector<double> dot(static_cast<std::size_t>(num_segments), 0.0);
      for (std::size_t k = 0; k < sg->size(); ++k)
        dot[static_cast<std::size_t>((*sg)[k])] += n.value[k] * n.grad[k];
      for (std::size_t k = 0; k < sg->size(); ++k)
        p.grad[k] += n.value[k] * (n.grad[k] - dot[static_cast<std::size_t>((*sg)[k])]);
    };
  }
  return out;
}

Tensor col_scale(const Tensor& x, const Tensor& s) {
  if (s.cols() != 1 || s.rows() != x.rows())
    throw std::runtime_error("col_scale: scaler must be a column matching x rows");
  Tensor out = fresh(x.rows(), x.cols(), {x, s});
  const std::int64_t d = x.cols();
  const auto& xv = x.value();
  const auto& svv = s.value();
  auto& ov = out.value();
  for (std::int64_t k = 0; k < x.rows(); ++k)
    for (std::int64_t j = 0; j < d; ++j) ov[k * d + j] = xv[k * d + j] * svv[k];
  if (out.needs_grad()) {
    out.node()->backward_fn = [d](TensorData& n) {
      TensorData& x = *n.parents[0];
      TensorData& s = *n.parents[1];
      for (std::int64_t k = 0; k < n.rows; ++k) {
        const double* grow = n.grad.data() + k * d;
        if (x.needs_grad) {
          double* xrow = x.grad.data() + k * d;
          for (std::int64_t j = 0; j < d; ++j) xrow[j] += grow[j] * s.value[k];
        }
        if (s.needs_grad) {
          const double* xrow = x.value.data() + k * d;
          double acc = 0.0;
          for (std::int64_t j = 0; j < d; ++j) acc += grow[j] * xrow[j];
          s.grad[k] += acc;
        }
      }
    };
  }
  return out;
}

Tensor concat_cols(const std::vector<Tensor>& xs) {
  if (xs.empty()) throw std::runtime_error("concat_cols: empty input");
  std::int64_t rows = xs[0].rows(), cols = 0;
  for (const auto& x : xs) {
    if (x.rows() != rows) throw std::runtime_error("concat_cols: row counts differ");
    cols += x.cols();
  }
  Tensor out = fresh(rows, cols, xs);
  auto& ov = out.value();
  std::int64_t off = 0;
  for (const auto& x : xs) {
    const auto& xv = x.value();
    for (std::int64_t r = 0; r < rows; ++r)
      std::copy_n(xv.data() + r * x.cols(), x.cols(), ov.data() + r * cols + off);
    off += x.cols();
  }
  if (out.needs_grad()) {
    out.node()->backward_fn = [cols](TensorData& n) {
      std::int64_t off = 0;
      for (auto& pp : n.parents) {
        TensorData& p = *pp;
        if (p.needs_grad)
          for (std::int64_t r = 0; r < p.rows; ++r)
            for (std::int64_t j = 0; j < p.cols; ++j)
              p.grad[r * p.cols + j] += n.grad[r * cols + off + j];
        off += p.cols;
      }
    };
  }
  return out;
}

Tensor dropout(const Tensor& x, double p, Rng& rng) {
  if (p < 0.0 || p >= 1.0) throw std::runtime_error("dropout: p must be in [0, 1)");
  if (p == 0.0) return x;
  Tensor out = fresh(x.rows(), x.cols(), {x});
  const double keep_scale = 1.0 / (1.0 - p);
  auto mask = std::make_shared<std::vector<double>>(x.value().size());
  for (auto& m : *mask) m = rng.uniform() < p ? 0.0 : keep_scale;
  const auto& xv = x.value();
  auto& ov = out.value();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = xv[i] * (*mask)[i];
  if (out.needs_grad()) {
    out.node()->backward_fn = [mask](TensorData& n) {
      TensorData& p = *n.parents[0];
      if (!p.needs_grad) return;
      for (std::size_t i = 0; i < p.grad.size(); ++i) p.grad[i] += (*mask)[i] * n.grad[i];
    };
  }
  return out;
}

Tensor cross_entropy_masked(const Tensor& logits, const std::vector<int>& labels,
                            const std::vector<std::uint8_t>& mask) {
  if (static_cast<std::int64_t>(labels.size()) != logits.rows() ||
      static_cast<std::int64_t>(mask.size()) != logits.rows())
    throw std::runtime_error("cross_entropy_masked: labels/mask must match logits rows");
  std::int64_t m = 0;
  for (auto b : mask) m += b;
  if (m == 0) throw std::runtime_error("cross_entropy_masked: empty mask");
  Tensor out = fresh(1, 1, {logits});
  const std::int64_t C = logits.cols();
  const auto& lv = logits.value();
  // Probabilities are saved for the backward pass.
  auto probs = std::make_shared<std::vector<double>>(lv.size(), 0.0);
  double loss = 0.0;
  for (std::int64_t i = 0; i < logits.rows(); ++i) {
    if (!mask[static_cast<std::size_t>(i)]) continue;
    const double* row = lv.data() + i * C;
    double mx = row[0];
    for (std::int64_t c = 1; c < C; ++c) mx = std::max(mx, row[c]);
    double sum = 0.0;
    for (std::int64_t c = 0; c < C; ++c) sum += std::exp(row[c] - mx);
    const double log_z = mx + std::log(sum);
    for (std::int64_t c = 0; c < C; ++c)
      (*probs)[static_cast<std::size_t>(i * C + c)] = std::exp(row[c] - log_z);
    loss -= row[labels[static_cast<std::size_t>(i)]] - log_z;
  }
  out.value()[0] = loss / static_cast<double>(m);
  if (out.needs_grad()) {
    auto lab = std::make_shared<std::vector<int>>(labels);
    auto msk = std::make_shared<std::vector<std::uint8_t>>(mask);
    const double inv_m = 1.0 / static_cast<double>(m);
    out.node()->backward_fn = [probs, lab, msk, inv_m, C](TensorData& n) {
      TensorData& p = *n.parents[0];
      if (!p.needs_grad) return;
      const double g = n.grad[0] * inv_m;
      for (std::int64_t i = 0; i < p.rows; ++i) {
        if (!(*msk)[static_cast<std::size_t>(i)]) continue;
        for (std::int64_t c = 0; c < C; ++c)
          p.grad[i * C + c] += g * (*probs)[static_cast<std::size_t>(i * C + c)];
        p.grad[i * C + (*lab)[static_cast<std::size_t>(i)]] -= g;
      }
    };
  }
  return out;
}

double masked_accuracy(const Mat& logits, const std::vector<int>& labels,
                       const std::vector<std::uint8_t>& mask) {
  std::int64_t correct = 0, total = 0;
  for (std::int64_t i = 0; i < logits.rows; ++i) {
    if (!mask[static_cast<std::size_t>(i)]) continue;
    const double* row = logits.row(i);
    std::int64_t best = 0;
    for (std::int64_t c = 1; c < logits.cols; ++c)
      if (row[c] > row[best]) best = c;
    ++total;
    if (static_cast<int>(best) == labels[static_cast<std::size_t>(i)]) ++correct;
  }
  return total ? static_cast<double>(correct) / static_cast<double>(total) : 0.0;
}

}  // namespace gnnlab
