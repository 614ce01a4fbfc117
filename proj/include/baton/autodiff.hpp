#pragma once

#include "baton/common.hpp"

#include <functional>
#include <string>
#include <vector>

namespace baton {

// A learnable tensor. Gradient always has the same shape as the value and
// is accumulated by Tape::backward until explicitly cleared.
struct ParamTensor {
  std::string name;
  Mat value;
  Mat grad;
  real lr_scale = 1.0;  // e.g. 0.3 on encoder parameters

  ParamTensor() = default;
  ParamTensor(std::string n, Mat v) : name(std::move(n)), value(std::move(v)) {
    grad = Mat::Zero(value.rows(), value.cols());
  }
  void zero_grad() { grad.setZero(); }
};

// Reverse-mode tape over matrix-valued nodes. Columns are the batch
// dimension. One tape holds one forward trace; backward() may be called
// once per trace. A tape is confined to a single thread.
class Tape {
 public:
  struct VarId {
    int i = -1;
    bool valid() const { return i >= 0; }
  };

  VarId constant(Mat v);
  // Trainable leaf: after backward, d(loss)/d(leaf) is added to p.grad.
  VarId leaf(ParamTensor& p);
  // Frozen leaf: participates in the graph (gradients flow through ops
  // that consume it) but accumulates nothing.
  VarId frozen(const ParamTensor& p);

  // y = A * B
  VarId matmul(VarId a, VarId b);
  // y = x with column vector b added to every column
  VarId add_col(VarId x, VarId b);
  VarId add(VarId a, VarId b);
  VarId sub(VarId a, VarId b);
  VarId hadamard(VarId a, VarId b);
  VarId scale(VarId x, real s);
  // y = s*x + c elementwise, s and c scalars
  VarId affine(VarId x, real s, real c);
  // y = x .* m, m a constant matrix of identical shape (masks, weights)
  VarId cmul(VarId x, const Mat& m);
  // y = x with every column scaled elementwise by constant column v
  VarId cmul_colvec(VarId x, const Vec& v);
  VarId mish(VarId x);
  VarId tanh_(VarId x);
  VarId exp_(VarId x);
  VarId log_(VarId x);
  VarId square(VarId x);
  // sign(x) * (exp(|x|) - 1)
  VarId symexp_(VarId x);
  // LayerNorm over rows, per column; g and b are column-vector params.
  VarId layer_norm(VarId x, VarId g, VarId b, real eps = 1e-5);
  // Softmax over each consecutive group of L rows, per column.
  VarId grouped_softmax(VarId x, int group);
  // Softmax / log-softmax over all rows, per column.
  VarId softmax(VarId x);
  VarId log_softmax(VarId x);
  VarId vstack(const std::vector<VarId>& parts);
  VarId rows(VarId x, int r0, int count);
  // Value copy with no backward edge (stop-gradient).
  VarId detach(VarId x);
  // 1x1 node holding the sum of all entries.
  VarId sum_all(VarId x);
  // 1 x cols node of per-column sums.
  VarId colwise_sum(VarId x);

  const Mat& value(VarId v) const { return node(v).value; }
  int size() const { return static_cast<int>(nodes_.size()); }

  // Seeds d(loss)/d(loss) = 1 and sweeps the trace in reverse. loss must
  // be 1x1 and finite. Throws NumericsError on a non-finite loss and
  // Error when no trace exists.
  void backward(VarId loss);

 private:
  struct Node {
    Mat value;
    Mat grad;
    std::function<void(Tape&, int)> back;  // nullptr for constants
    ParamTensor* param = nullptr;
    bool grad_live = false;
  };

  Node& node(VarId v);
  const Node& node(VarId v) const;
  VarId push(Mat value, std::function<void(Tape&, int)> back);
  Mat& grad_of(int i);
  void accumulate(int i, const Mat& g);

  std::vector<Node> nodes_;
  bool backward_done_ = false;
};

// Elementwise kernels shared by the tape ops and the no-grad inference
// path so both compute identical values.
namespace kernels {

inline Mat softplus(const Mat& x) {
  return x.array().max(real(0)) + (-x.array().abs()).exp().log1p();
}

inline Mat sigmoid(const Mat& x) {
  return (real(0.5) * ((real(0.5) * x.array()).tanh() + real(1))).matrix();
}

inline Mat mish(const Mat& x) {
  Mat sp = softplus(x);
  return (x.array() * sp.array().tanh()).matrix();
}

inline Mat mish_grad(const Mat& x) {
  Mat sp = softplus(x);
  Mat t = sp.array().tanh().matrix();
  Mat sg = sigmoid(x);
  return (t.array() + x.array() * (real(1) - t.array().square()) * sg.array()).matrix();
}

inline Mat symexp(const Mat& x) {
  return (x.array().sign() * (x.array().abs().exp() - real(1))).matrix();
}

// Per-column softmax over each consecutive group of `group` rows.
Mat grouped_softmax(const Mat& x, int group);
// Per-column log-softmax over all rows.
Mat log_softmax(const Mat& x);
inline Mat softmax(const Mat& x) { return grouped_softmax(x, static_cast<int>(x.rows())); }

struct LayerNormOut {
  Mat normalized;  // x_hat
  Vec inv_std;     // per column
};
LayerNormOut layer_norm_raw(const Mat& x, real eps);

}  // namespace kernels

}  // namespace baton
