#include "baton/autodiff.hpp"

#include <cmath>

namespace baton {

namespace kernels {

Mat grouped_softmax(const Mat& x, int group) {
  if (group <= 0 || x.rows() % group != 0) {
    throw DimensionError("grouped_softmax: " + std::to_string(x.rows()) +
                         " rows not divisible by group " + std::to_string(group));
  }
  Mat y(x.rows(), x.cols());
  const int ngroups = static_cast<int>(x.rows()) / group;
  for (int g = 0; g < ngroups; ++g) {
    auto block = x.middleRows(g * group, group);
    RowVec mx = block.colwise().maxCoeff();
    Mat e = (block.rowwise() - mx).array().exp().matrix();
    RowVec denom = e.colwise().sum();
    y.middleRows(g * group, group) = e.array().rowwise() / denom.array();
  }
  return y;
}

Mat log_softmax(const Mat& x) {
  RowVec mx = x.colwise().maxCoeff();
  Mat shifted = x.rowwise() - mx;
  RowVec lse = shifted.array().exp().colwise().sum().log();
  return shifted.rowwise() - lse;
}

LayerNormOut layer_norm_raw(const Mat& x, real eps) {
  LayerNormOut out;
  const real d = static_cast<real>(x.rows());
  RowVec mean = x.colwise().sum() / d;
  Mat centered = x.rowwise() - mean;
  RowVec var = centered.array().square().colwise().sum() / d;
  out.inv_std = (var.array() + eps).sqrt().inverse().transpose();
  out.normalized = centered.array().rowwise() * out.inv_std.transpose().array();
  return out;
}

}  // namespace kernels

Tape::Node& Tape::node(VarId v) {
  if (!v.valid() || v.i >= static_cast<int>(nodes_.size())) {
    throw Error("tape: invalid variable (backward before forward?)");
  }
  return nodes_[static_cast<size_t>(v.i)];
}

const Tape::Node& Tape::node(VarId v) const {
  if (!v.valid() || v.i >= static_cast<int>(nodes_.size())) {
    throw Error("tape: invalid variable (backward before forward?)");
  }
  return nodes_[static_cast<size_t>(v.i)];
}

Tape::VarId Tape::push(Mat value, std::function<void(Tape&, int)> back) {
  Node n;
  n.value = std::move(value);
  n.back = std::move(back);
  nodes_.push_back(std::move(n));
  return VarId{static_cast<int>(nodes_.size()) - 1};
}

Mat& Tape::grad_of(int i) {
  Node& n = nodes_[static_cast<size_t>(i)];
  if (!n.grad_live) {
    n.grad = Mat::Zero(n.value.rows(), n.value.cols());
    n.grad_live = true;
  }
  return n.grad;
}

void Tape::accumulate(int i, const Mat& g) { grad_of(i) += g; }

Tape::VarId Tape::constant(Mat v) { return push(std::move(v), nullptr); }

Tape::VarId Tape::leaf(ParamTensor& p) {
  VarId v = push(p.value, nullptr);
  nodes_.back().param = &p;
  return v;
}

Tape::VarId Tape::frozen(const ParamTensor& p) { return push(p.value, nullptr); }

Tape::VarId Tape::matmul(VarId a, VarId b) {
  const Mat& A = value(a);
  const Mat& B = value(b);
  if (A.cols() != B.rows()) {
    throw DimensionError("matmul: " + std::to_string(A.cols()) + " vs " + std::to_string(B.rows()));
  }
  return push(A * B, [a, b](Tape& t, int self) {
    const Mat& g = t.nodes_[self].grad;
    t.accumulate(a.i, g * t.value(b).transpose());
    t.accumulate(b.i, t.value(a).transpose() * g);
  });
}

Tape::VarId Tape::add_col(VarId x, VarId b) {
  const Mat& X = value(x);
  const Mat& B = value(b);
  if (B.cols() != 1 || B.rows() != X.rows()) {
    throw DimensionError("add_col: bias shape mismatch");
  }
  return push(X.colwise() + Vec(B.col(0)), [x, b](Tape& t, int self) {
    const Mat& g = t.nodes_[self].grad;
    t.accumulate(x.i, g);
    t.accumulate(b.i, g.rowwise().sum());
  });
}

Tape::VarId Tape::add(VarId a, VarId b) {
  return push(value(a) + value(b), [a, b](Tape& t, int self) {
    const Mat& g = t.nodes_[self].grad;
    t.accumulate(a.i, g);
    t.accumulate(b.i, g);
  });
}

Tape::VarId Tape::sub(VarId a, VarId b) {
  return push(value(a) - value(b), [a, b](Tape& t, int self) {
    const Mat& g = t.nodes_[self].grad;
    t.accumulate(a.i, g);
    t.accumulate(b.i, -g);
  });
}

Tape::VarId Tape::hadamard(VarId a, VarId b) {
  return push(value(a).cwiseProduct(value(b)), [a, b](Tape& t, int self) {
    const Mat& g = t.nodes_[self].grad;
    t.accumulate(a.i, g.cwiseProduct(t.value(b)));
    t.accumulate(b.i, g.cwiseProduct(t.value(a)));
  });
}

Tape::VarId Tape::scale(VarId x, real s) {
  return push(value(x) * s, [x, s](Tape& t, int self) {
    t.accumulate(x.i, t.nodes_[self].grad * s);
  });
}

Tape::VarId Tape::affine(VarId x, real s, real c) {
  return push((value(x).array() * s + c).matrix(), [x, s](Tape& t, int self) {
    t.accumulate(x.i, t.nodes_[self].grad * s);
  });
}

Tape::VarId Tape::cmul(VarId x, const Mat& m) {
  return push(value(x).cwiseProduct(m), [x, m](Tape& t, int self) {
    t.accumulate(x.i, t.nodes_[self].grad.cwiseProduct(m));
  });
}

Tape::VarId Tape::cmul_colvec(VarId x, const Vec& v) {
  if (v.rows() != value(x).rows()) throw DimensionError("cmul_colvec: shape mismatch");
  return push((value(x).array().colwise() * v.array()).matrix(), [x, v](Tape& t, int self) {
    t.accumulate(x.i, (t.nodes_[self].grad.array().colwise() * v.array()).matrix());
  });
}

Tape::VarId Tape::mish(VarId x) {
  return push(kernels::mish(value(x)), [x](Tape& t, int self) {
    t.accumulate(x.i, t.nodes_[self].grad.cwiseProduct(kernels::mish_grad(t.value(x))));
  });
}

Tape::VarId Tape::tanh_(VarId x) {
  return push(value(x).array().tanh().matrix(), [x](Tape& t, int self) {
    const Mat& y = t.nodes_[self].value;
    t.accumulate(x.i, (t.nodes_[self].grad.array() * (real(1) - y.array().square())).matrix());
  });
}

Tape::VarId Tape::exp_(VarId x) {
  return push(value(x).array().exp().matrix(), [x](Tape& t, int self) {
    t.accumulate(x.i, t.nodes_[self].grad.cwiseProduct(t.nodes_[self].value));
  });
}

Tape::VarId Tape::log_(VarId x) {
  return push(value(x).array().log().matrix(), [x](Tape& t, int self) {
    t.accumulate(x.i, (t.nodes_[self].grad.array() / t.value(x).array()).matrix());
  });
}

Tape::VarId Tape::square(VarId x) {
  return push(value(x).array().square().matrix(), [x](Tape& t, int self) {
    t.accumulate(x.i, (real(2) * t.nodes_[self].grad.array() * t.value(x).array()).matrix());
  });
}

Tape::VarId Tape::symexp_(VarId x) {
  return push(kernels::symexp(value(x)), [x](Tape& t, int self) {
    // d/dx symexp = exp(|x|)
    t.accumulate(x.i, (t.nodes_[self].grad.array() * t.value(x).array().abs().exp()).matrix());
  });
}

Tape::VarId Tape::layer_norm(VarId x, VarId g, VarId b, real eps) {
  const Mat& X = value(x);
  const Mat& G = value(g);
  const Mat& B = value(b);
  if (G.cols() != 1 || B.cols() != 1 || G.rows() != X.rows() || B.rows() != X.rows()) {
    throw DimensionError("layer_norm: scale/offset shape mismatch");
  }
  auto ln = kernels::layer_norm_raw(X, eps);
  Mat xhat = ln.normalized;
  Vec inv_std = ln.inv_std;
  Mat y = (xhat.array().colwise() * G.col(0).array()).matrix().colwise() + Vec(B.col(0));
  return push(std::move(y), [x, g, b, xhat, inv_std](Tape& t, int self) {
    const Mat& go = t.nodes_[self].grad;
    const Mat& G = t.value(g);
    const real d = static_cast<real>(xhat.rows());
    // dL/dxhat
    Mat gh = (go.array().colwise() * G.col(0).array()).matrix();
    RowVec mean_gh = gh.colwise().sum() / d;
    RowVec mean_ghx = gh.cwiseProduct(xhat).colwise().sum() / d;
    Mat dx = ((gh.rowwise() - mean_gh) - (xhat.array().rowwise() * mean_ghx.array()).matrix());
    dx = (dx.array().rowwise() * inv_std.transpose().array()).matrix();
    t.accumulate(x.i, dx);
    t.accumulate(g.i, go.cwiseProduct(xhat).rowwise().sum());
    t.accumulate(b.i, go.rowwise().sum());
  });
}

Tape::VarId Tape::grouped_softmax(VarId x, int group) {
  Mat p = kernels::grouped_softmax(value(x), group);
  return push(p, [x, group](Tape& t, int self) {
    const Mat& g = t.nodes_[self].grad;
    const Mat& p = t.nodes_[self].value;
    Mat dx(p.rows(), p.cols());
    const int ngroups = static_cast<int>(p.rows()) / group;
    for (int k = 0; k < ngroups; ++k) {
      auto gp = g.middleRows(k * group, group);
      auto pp = p.middleRows(k * group, group);
      RowVec s = gp.cwiseProduct(pp).colwise().sum();
      dx.middleRows(k * group, group) = pp.cwiseProduct(gp.rowwise() - s);
    }
    t.accumulate(x.i, dx);
  });
}

Tape::VarId Tape::softmax(VarId x) { return grouped_softmax(x, static_cast<int>(value(x).rows())); }

Tape::VarId Tape::log_softmax(VarId x) {
  Mat y = kernels::log_softmax(value(x));
  return push(y, [x](Tape& t, int self) {
    const Mat& g = t.nodes_[self].grad;
    const Mat& y = t.nodes_[self].value;
    Mat p = y.array().exp().matrix();
    RowVec colsum = g.colwise().sum();
    t.accumulate(x.i, g - (p.array().rowwise() * colsum.array()).matrix());
  });
}

Tape::VarId Tape::vstack(const std::vector<VarId>& parts) {
  if (parts.empty()) throw DimensionError("vstack: no parts");
  Eigen::Index cols = value(parts[0]).cols();
  Eigen::Index rows = 0;
  for (VarId p : parts) {
    if (value(p).cols() != cols) throw DimensionError("vstack: column count mismatch");
    rows += value(p).rows();
  }
  Mat y(rows, cols);
  Eigen::Index r = 0;
  std::vector<std::pair<int, Eigen::Index>> spans;
  for (VarId p : parts) {
    const Mat& v = value(p);
    y.middleRows(r, v.rows()) = v;
    spans.emplace_back(p.i, v.rows());
    r += v.rows();
  }
  return push(std::move(y), [spans](Tape& t, int self) {
    const Mat& g = t.nodes_[self].grad;
    Eigen::Index r = 0;
    for (auto [idx, n] : spans) {
      t.accumulate(idx, g.middleRows(r, n));
      r += n;
    }
  });
}

Tape::VarId Tape::rows(VarId x, int r0, int count) {
  const Mat& X = value(x);
  if (r0 < 0 || count < 0 || r0 + count > X.rows()) throw DimensionError("rows: slice out of range");
  return push(X.middleRows(r0, count), [x, r0, count](Tape& t, int self) {
    t.grad_of(x.i).middleRows(r0, count) += t.nodes_[self].grad;
  });
}

Tape::VarId Tape::detach(VarId x) { return push(value(x), nullptr); }

Tape::VarId Tape::sum_all(VarId x) {
  Mat y(1, 1);
  y(0, 0) = value(x).sum();
  return push(std::move(y), [x](Tape& t, int self) {
    t.grad_of(x.i).array() += t.nodes_[self].grad(0, 0);
  });
}

Tape::VarId Tape::colwise_sum(VarId x) {
  Mat y = value(x).colwise().sum();
  return push(std::move(y), [x](Tape& t, int self) {
    const Mat& g = t.nodes_[self].grad;  // 1 x cols
    Mat& gx = t.grad_of(x.i);
    gx.array().rowwise() += g.row(0).array();
  });
}

void Tape::backward(VarId loss) {
  if (nodes_.empty()) throw Error("backward without forward trace");
  if (backward_done_) throw Error("backward called twice on one tape");
  const Mat& L = value(loss);
  if (L.rows() != 1 || L.cols() != 1) throw DimensionError("backward: loss must be 1x1");
  if (!std::isfinite(static_cast<double>(L(0, 0)))) {
    throw NumericsError("backward: non-finite loss " + std::to_string(static_cast<double>(L(0, 0))));
  }
  backward_done_ = true;
  grad_of(loss.i)(0, 0) = real(1);
  for (int i = loss.i; i >= 0; --i) {
    Node& n = nodes_[static_cast<size_t>(i)];
    if (n.back && n.grad_live) n.back(*this, i);
  }
  for (Node& n : nodes_) {
    if (n.param && n.grad_live) n.param->grad += n.grad;
  }
}

}  // namespace baton
