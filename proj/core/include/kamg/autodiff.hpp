#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "kamg/sparse.hpp"
#include "kamg/tensor.hpp"

namespace kamg {

// Constant sparse operator plus its transpose, prepared once so backward
// passes never rebuild CSR structure.
struct SparseOperator {
  SparseMatrix mat;
  SparseMatrix mat_t;

  static SparseOperator make(SparseMatrix m) {
    SparseOperator op;
    op.mat_t = m.transposed();
    op.mat = std::move(m);
    return op;
  }
};

// Record of primitive tensor operations applied during a forward pass.
// Node ids are append-only indices, so creation order is a topological order:
// replay() recomputes every derived value bit-for-bit, and backward() visits
// each node exactly once in reverse.
class Tape {
 public:
  using NodeId = int32_t;

  NodeId input(Tensor value, bool requires_grad = false);
  NodeId constant(Tensor value) { return input(std::move(value), false); }
  // Leaf that references external storage instead of copying it in. The
  // pointee must stay alive and unmodified for the tape's lifetime.
  NodeId borrow(const Tensor* value, bool requires_grad = false);

  NodeId matmul(NodeId a, NodeId b);
  // Constant sparse LHS times dense operand; gradient flows into the operand.
  NodeId spmm(const SparseOperator* op, NodeId x);
  NodeId add(NodeId a, NodeId b);
  NodeId sub(NodeId a, NodeId b);
  NodeId mul(NodeId a, NodeId b);
  // x: [R,C], v: [C]; adds v to every row (bias add).
  NodeId add_rowvec(NodeId x, NodeId v);
  NodeId scale(NodeId x, double s);
  // Multiplies row i of x by the constant factors[i]; factors do not receive
  // gradients (used for mask partitions and fixed coefficients).
  NodeId scale_rows(NodeId x, Tensor factors);
  NodeId relu(NodeId x);
  NodeId gelu(NodeId x);
  // Row-wise layer normalization with learnable gain/offset, eps inside sqrt.
  NodeId layer_norm(NodeId x, NodeId gamma, NodeId beta, double eps = 1e-5);
  NodeId softmax(NodeId x);  // over the last axis
  // Gathers rows of `table` at the given indices.
  NodeId embedding(NodeId table, std::vector<int64_t> ids);
  // Weighted negative log-likelihood over rows: sum_i w_i * (lse_i - z_i[t_i]).
  NodeId cross_entropy(NodeId logits, std::vector<int64_t> targets, std::vector<double> weights);
  NodeId sum(NodeId x);
  NodeId mean(NodeId x);
  NodeId transpose(NodeId x);
  NodeId slice_cols(NodeId x, int64_t begin, int64_t count);
  NodeId concat_cols(const std::vector<NodeId>& parts);

  const Tensor& value(NodeId id) const {
    const Node& n = nodes_[static_cast<size_t>(id)];
    return n.external ? *n.external : n.value;
  }
  bool requires_grad(NodeId id) const { return nodes_[static_cast<size_t>(id)].requires_grad; }

  // Accumulated gradient; only meaningful after backward(). Nodes never
  // reached by the loss report has_grad() == false.
  bool has_grad(NodeId id) const { return nodes_[static_cast<size_t>(id)].grad_ready; }
  const Tensor& grad(NodeId id) const;
  Tensor grad_or_zeros(NodeId id) const;
  // Moves the gradient out (zeros when the node was never reached).
  Tensor release_grad(NodeId id);

  // Reverse-mode sweep from a scalar loss node.
  void backward(NodeId loss);

  // Recomputes every derived node value from the leaves, in creation order.
  void replay();

  size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    const Tensor* external = nullptr;  // set for borrowed leaves
    Tensor grad;
    bool requires_grad = false;
    bool grad_ready = false;
    std::vector<NodeId> inputs;
    std::function<void(Tape&)> recompute;  // empty for leaves
    std::function<void(Tape&)> backprop;   // empty for leaves
    const char* name = "";
  };

  NodeId make_node(const char* name, std::vector<NodeId> inputs);
  Node& node(NodeId id) { return nodes_[static_cast<size_t>(id)]; }
  Tensor& ensure_grad(NodeId id);
  void check_exists(NodeId id) const;

  std::vector<Node> nodes_;
};

}  // namespace kamg
