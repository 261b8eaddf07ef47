#include "gnnlab/tensor.hpp"

#include <algorithm>
#include <unordered_set>

namespace gnnlab {

Tape::Tape(const Tensor& root) : root_(root.ptr()) {
  if (!root_) throw std::runtime_error("Tape over undefined tensor");
  // Iterative post-order DFS; layer stacks can be deep enough that
  // recursion is not worth the risk.
  std::unordered_set<TensorData*> visited;
  std::vector<std::pair<TensorData*, std::size_t>> stack;
  stack.emplace_back(root_.get(), 0);
  visited.insert(root_.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      TensorData* p = node->parents[next++].get();
      if (p->needs_grad && visited.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order_.push_back(node);
      stack.pop_back();
    }
  }
  // Post-order emits parents first; backward wants children first.
  std::reverse(order_.begin(), order_.end());
}

void Tape::backward() {
  if (root_->size() != 1) throw std::runtime_error("backward() without seed needs scalar root");
  backward({1.0});
}

void Tape::backward(const std::vector<double>& seed) {
  if (static_cast<std::int64_t>(seed.size()) != root_->size())
    throw std::runtime_error("backward seed shape mismatch");
  for (TensorData* n : order_) {
    n->ensure_grad();
    std::fill(n->grad.begin(), n->grad.end(), 0.0);
  }
  root_->grad = seed;
  for (TensorData* n : order_)
    if (n->backward_fn) n->backward_fn(*n);
}

}  // namespace gnnlab
