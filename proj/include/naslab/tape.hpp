#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <vector>

#include "naslab/param.hpp"
#include "naslab/tensor.hpp"

namespace naslab {

using NodeId = std::int32_t;

/// Define-by-run reverse-mode tape over dense float64 tensors. A tape is
/// rebuilt for every forward pass; nodes are append-only so input ids always
/// precede their consumers.
class Tape {
 public:
  struct Node {
    const char* kind;
    std::vector<NodeId> inputs;
    Tensor value;
    Tensor grad;
    Param* param = nullptr;                // set for leaves
    std::function<void(Tape&, Node&)> bw;  // empty for leaves/constants
  };

  NodeId constant(Tensor v);
  NodeId leaf(Param& p);

  NodeId matmul(NodeId a, NodeId b);   // (N,d) x (d,k) -> (N,k)
  NodeId matvec(NodeId m, NodeId v);   // (r,c) x (c,) -> (r,)
  NodeId add(NodeId a, NodeId b);      // same shape
  NodeId scale(NodeId x, NodeId s);    // s scalar node, broadcast multiply
  NodeId scale_const(NodeId x, double c);
  NodeId tanh_op(NodeId x);
  NodeId relu(NodeId x);
  NodeId sigmoid(NodeId x);            // elementwise
  NodeId softmax(NodeId v);            // rank-1 input
  NodeId select(NodeId v, std::size_t i);  // scalar from vector
  NodeId concat(NodeId a, NodeId b);       // vectors
  NodeId mean_over_batch(NodeId x);        // (N,d) -> (d,)
  /// 0.5 * mean over rows of ||pred_row - target_row||^2.
  NodeId squared_error(NodeId pred, NodeId target);
  /// Mean over rows of logsumexp(logits_row) - logits_row[label].
  NodeId cross_entropy_logits(NodeId logits, const std::vector<int>& labels);

  /// Reverse sweep from a scalar loss node. Populates node grads; when
  /// `accumulate_params` is set, leaf grads are added into their Param.grad.
  void backward(NodeId loss, bool accumulate_params = true);

  const Tensor& value(NodeId id) const { return nodes_[id].value; }
  const Tensor& grad(NodeId id) const { return nodes_[id].grad; }
  const Node& node(NodeId id) const { return nodes_[id]; }
  std::size_t size() const { return nodes_.size(); }

 private:
  NodeId push(Node n);
  Node& at(NodeId id) { return nodes_[id]; }

  std::deque<Node> nodes_;
};

}  // namespace naslab
