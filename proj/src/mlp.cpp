#include "baton/mlp.hpp"

#include <cmath>

namespace baton {

void MlpSpec::validate() const {
  if (input_dim <= 0 || hidden_dim <= 0 || output_dim <= 0 || num_layers < 1) {
    throw ConfigError("MlpSpec: dims must be positive and num_layers >= 1");
  }
  if (out_act == OutAct::SemNorm && output_dim % sem_group != 0) {
    throw ConfigError("MlpSpec: SemNorm output dim " + std::to_string(output_dim) +
                      " not divisible by simplex length " + std::to_string(sem_group));
  }
}

Mlp Mlp::create(const MlpSpec& spec, const std::string& name, Rng& rng,
                bool zero_output_layer, real lr_scale) {
  spec.validate();
  Mlp m;
  m.spec_ = spec;
  m.name_ = name;

  auto init_linear = [&](int out, int in, const std::string& tag, bool zero) {
    real bound = zero ? real(0) : std::sqrt(real(1) / static_cast<real>(in));
    std::uniform_real_distribution<double> dist(-static_cast<double>(bound), static_cast<double>(bound));
    Mat w(out, in);
    for (Eigen::Index j = 0; j < w.cols(); ++j)
      for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = static_cast<real>(dist(rng));
    Vec b(out);
    for (Eigen::Index i = 0; i < b.rows(); ++i) b(i) = static_cast<real>(dist(rng));
    LayerRef ref;
    ref.w = static_cast<int>(m.params_.size());
    m.params_.emplace_back(name + "/" + tag + "/w", w);
    ref.b = static_cast<int>(m.params_.size());
    m.params_.emplace_back(name + "/" + tag + "/b", Mat(b));
    return ref;
  };

  int in = spec.input_dim;
  for (int l = 0; l < spec.num_layers; ++l) {
    LayerRef ref = init_linear(spec.hidden_dim, in, "h" + std::to_string(l), false);
    if (spec.use_layer_norm) {
      ref.ln_g = static_cast<int>(m.params_.size());
      m.params_.emplace_back(name + "/h" + std::to_string(l) + "/ln_g",
                             Mat(Vec::Ones(spec.hidden_dim)));
      ref.ln_b = static_cast<int>(m.params_.size());
      m.params_.emplace_back(name + "/h" + std::to_string(l) + "/ln_b",
                             Mat(Vec::Zero(spec.hidden_dim)));
    }
    m.hidden_.push_back(ref);
    in = spec.hidden_dim;
  }
  m.out_ = init_linear(spec.output_dim, in, "out", zero_output_layer);
  for (auto& p : m.params_) p.lr_scale = lr_scale;
  return m;
}

Tape::VarId Mlp::forward(Tape& tape, Tape::VarId input) {
  if (tape.value(input).rows() != spec_.input_dim) {
    throw DimensionError(name_ + ": input dim " + std::to_string(tape.value(input).rows()) +
                         ", expected " + std::to_string(spec_.input_dim));
  }
  Tape::VarId x = input;
  for (size_t l = 0; l < hidden_.size(); ++l) {
    const LayerRef& ref = hidden_[l];
    Tape::VarId h = tape.add_col(tape.matmul(tape.leaf(params_[ref.w]), x),
                                 tape.leaf(params_[ref.b]));
    if (spec_.use_layer_norm) {
      h = tape.layer_norm(h, tape.leaf(params_[ref.ln_g]), tape.leaf(params_[ref.ln_b]));
    }
    x = tape.mish(h);
  }
  Tape::VarId y = tape.add_col(tape.matmul(tape.leaf(params_[out_.w]), x),
                               tape.leaf(params_[out_.b]));
  switch (spec_.out_act) {
    case OutAct::Linear: return y;
    case OutAct::Tanh: return tape.tanh_(y);
    case OutAct::SemNorm: return tape.grouped_softmax(y, spec_.sem_group);
  }
  throw Error("unreachable");
}

Tape::VarId Mlp::forward_frozen(Tape& tape, Tape::VarId input) const {
  if (tape.value(input).rows() != spec_.input_dim) {
    throw DimensionError(name_ + ": input dim " + std::to_string(tape.value(input).rows()) +
                         ", expected " + std::to_string(spec_.input_dim));
  }
  Tape::VarId x = input;
  for (size_t l = 0; l < hidden_.size(); ++l) {
    const LayerRef& ref = hidden_[l];
    Tape::VarId h = tape.add_col(tape.matmul(tape.frozen(params_[ref.w]), x),
                                 tape.frozen(params_[ref.b]));
    if (spec_.use_layer_norm) {
      h = tape.layer_norm(h, tape.frozen(params_[ref.ln_g]), tape.frozen(params_[ref.ln_b]));
    }
    x = tape.mish(h);
  }
  Tape::VarId y = tape.add_col(tape.matmul(tape.frozen(params_[out_.w]), x),
                               tape.frozen(params_[out_.b]));
  switch (spec_.out_act) {
    case OutAct::Linear: return y;
    case OutAct::Tanh: return tape.tanh_(y);
    case OutAct::SemNorm: return tape.grouped_softmax(y, spec_.sem_group);
  }
  throw Error("unreachable");
}

Mat Mlp::apply_out_act(Mat&& y) const {
  switch (spec_.out_act) {
    case OutAct::Linear: return std::move(y);
    case OutAct::Tanh: return y.array().tanh().matrix();
    case OutAct::SemNorm: return kernels::grouped_softmax(y, spec_.sem_group);
  }
  throw Error("unreachable");
}

Mat Mlp::infer(const Mat& input) const {
  if (input.rows() != spec_.input_dim) {
    throw DimensionError(name_ + ": input dim " + std::to_string(input.rows()) + ", expected " +
                         std::to_string(spec_.input_dim));
  }
  Mat x = input;
  for (const LayerRef& ref : hidden_) {
    Mat h = (params_[ref.w].value * x).colwise() + Vec(params_[ref.b].value.col(0));
    if (spec_.use_layer_norm) {
      auto ln = kernels::layer_norm_raw(h, 1e-5);
      h = (ln.normalized.array().colwise() * params_[ref.ln_g].value.col(0).array()).matrix();
      h = h.colwise() + Vec(params_[ref.ln_b].value.col(0));
    }
    x = kernels::mish(h);
  }
  Mat y = (params_[out_.w].value * x).colwise() + Vec(params_[out_.b].value.col(0));
  return apply_out_act(std::move(y));
}

Mat Mlp::infer_with(const std::vector<Mat>& values, const Mat& input) const {
  if (values.size() != params_.size()) throw DimensionError(name_ + ": shadow value count mismatch");
  if (input.rows() != spec_.input_dim) {
    throw DimensionError(name_ + ": input dim " + std::to_string(input.rows()) + ", expected " +
                         std::to_string(spec_.input_dim));
  }
  Mat x = input;
  for (const LayerRef& ref : hidden_) {
    Mat h = (values[ref.w] * x).colwise() + Vec(values[ref.b].col(0));
    if (spec_.use_layer_norm) {
      auto ln = kernels::layer_norm_raw(h, 1e-5);
      h = (ln.normalized.array().colwise() * values[ref.ln_g].col(0).array()).matrix();
      h = h.colwise() + Vec(values[ref.ln_b].col(0));
    }
    x = kernels::mish(h);
  }
  Mat y = (values[out_.w] * x).colwise() + Vec(values[out_.b].col(0));
  return apply_out_act(std::move(y));
}

std::vector<Mat> Mlp::param_values() const {
  std::vector<Mat> out;
  out.reserve(params_.size());
  for (const auto& p : params_) out.push_back(p.value);
  return out;
}

void Mlp::zero_grads() {
  for (auto& p : params_) p.zero_grad();
}

int64_t Mlp::param_count() const {
  int64_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

}  // namespace baton
