#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <vector>

#include "gnnlab/mat.hpp"

namespace gnnlab {

struct TensorData;
using TensorDataPtr = std::shared_ptr<TensorData>;

// One node of the computation graph. `backward_fn` accumulates this
// node's adjoint into its parents' grads; it must only be invoked by
// Tape, exactly once, after `grad` is final.
struct TensorData {
  std::int64_t rows = 0;
  std::int64_t cols = 0;
  std::vector<double> value;
  std::vector<double> grad;
  // True for trainable leaves and for any node on a path to one.
  bool needs_grad = false;
  std::vector<TensorDataPtr> parents;
  std::function<void(TensorData&)> backward_fn;

  std::int64_t size() const { return rows * cols; }
  void ensure_grad() {
    if (grad.empty()) grad.assign(static_cast<std::size_t>(size()), 0.0);
  }
};

// Value-semantics handle to a graph node. Copies alias the same node.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(TensorDataPtr d) : d_(std::move(d)) {}

  static Tensor leaf(Mat m, bool requires_grad) {
    auto d = std::make_shared<TensorData>();
    d->rows = m.rows;
    d->cols = m.cols;
    d->value = std::move(m.v);
    d->needs_grad = requires_grad;
    if (requires_grad) d->ensure_grad();
    return Tensor(std::move(d));
  }

  static Tensor zeros(std::int64_t r, std::int64_t c, bool requires_grad = false) {
    return leaf(Mat(r, c), requires_grad);
  }

  bool defined() const { return d_ != nullptr; }
  std::int64_t rows() const { return d_->rows; }
  std::int64_t cols() const { return d_->cols; }
  std::int64_t size() const { return d_->size(); }
  bool needs_grad() const { return d_->needs_grad; }

  std::vector<double>& value() { return d_->value; }
  const std::vector<double>& value() const { return d_->value; }
  std::vector<double>& grad() { return d_->grad; }
  const std::vector<double>& grad() const { return d_->grad; }

  double item() const {
    if (d_->size() != 1) throw std::runtime_error("item() on non-scalar tensor");
    return d_->value[0];
  }

  Mat to_mat() const {
    Mat m(d_->rows, d_->cols);
    m.v = d_->value;
    return m;
  }

  TensorData* node() const { return d_.get(); }
  const TensorDataPtr& ptr() const { return d_; }

 private:
  TensorDataPtr d_;
};

// Reverse-mode replay over the subgraph reachable from one root.
// Construction freezes a topological order; backward() zeroes every
// grad in that order, seeds the root, and runs each node's backward_fn
// exactly once.
class Tape {
 public:
  explicit Tape(const Tensor& root);

  // Seeds d(root)/d(root) = 1; root must be scalar.
  void backward();
  // Seeds an arbitrary adjoint of the root's shape.
  void backward(const std::vector<double>& seed);

  std::size_t node_count() const { return order_.size(); }

 private:
  TensorDataPtr root_;
  std::vector<TensorData*> order_;  // parents-before-children
};

}  // namespace gnnlab
