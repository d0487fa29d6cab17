#pragma once

#include <cstdint>
#include <vector>

#include "cnp/tensor.hpp"

namespace cnp {

enum class OpKind {
  Leaf,
  Conv2d,
  TConv2d,
  MaxPool2,
  AvgPool2,
  PRelu,
  Add,
  Sub,
  Mul,
  Scale,
  ConcatC,
  SliceC,
  ImageGradient,
  ReduceSum,
  ReduceMean,
  Pick,
};

/// Reverse-mode tape. Nodes are appended in execution order (which is a
/// topological order by construction) and backward() walks them once in
/// reverse. Values are computed eagerly on op creation.
///
/// A tape instance must not be evaluated from two threads at once; tensors
/// and finished tapes may be moved freely between threads.
template <typename T>
class Tape {
 public:
  using Id = std::int32_t;

  struct Node {
    OpKind kind = OpKind::Leaf;
    Id a = -1, b = -1, c = -1;  // input node ids, -1 when unused
    TensorT<T> value;
    TensorT<T> grad;  // allocated lazily in backward()
    bool requires_grad = false;
    // op attributes
    int stride = 1, pad = 0;
    double factor = 1.0;           // Scale
    int from = 0, count = 0;       // SliceC
    int iy = 0, ix = 0, ib = 0, ic = 0;  // Pick
    std::vector<std::int32_t> argmax;    // MaxPool2 backward routing
  };

  Id leaf(TensorT<T> v, bool requires_grad = false);

  /// weight [outC, inC, k, k], bias [1, outC, 1, 1] (or -1 for none).
  Id conv2d(Id x, Id weight, Id bias, int stride, int pad);
  /// weight [inC, outC, 3, 3]; fixed stride 2, pad 1, output padding 1 so the
  /// output is exactly 2x the input spatially. Adjoint of conv2d stride 2.
  Id transposed_conv2d(Id x, Id weight, Id bias);
  Id maxpool2(Id x);
  Id avgpool2(Id x);
  /// slopes [1, C, 1, 1], one learnable slope per channel.
  Id prelu(Id x, Id slopes);
  Id add(Id a, Id b);
  Id sub(Id a, Id b);
  Id mul(Id a, Id b);
  Id scale(Id x, double factor);
  Id concat_c(Id a, Id b);
  Id slice_c(Id x, int from, int count);
  /// Forward differences; output has 2C channels: dx then dy, zero at the
  /// trailing column/row.
  Id image_gradient(Id x);
  Id reduce_sum(Id x);
  Id reduce_mean(Id x);
  /// Single element as a 1x1x1x1 scalar node.
  Id pick(Id x, int b, int c, int y, int x_pos);

  const TensorT<T>& value(Id id) const { return nodes_[id].value; }
  const TensorT<T>& grad(Id id) const { return nodes_[id].grad; }
  bool has_grad(Id id) const { return nodes_[id].grad.size() > 0; }
  std::size_t node_count() const { return nodes_.size(); }

  /// Accumulates gradients of `root` (must be 1x1x1x1) into every node that
  /// requires them. Visits each recorded node exactly once, in reverse
  /// topological order.
  void backward(Id root);

 private:
  Id push(Node n);
  void ensure_grad(Id id);
  void backprop_node(Id id);

  std::vector<Node> nodes_;
};

extern template class Tape<float>;
extern template class Tape<double>;

}  // namespace cnp
