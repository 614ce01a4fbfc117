#include "baton/adam.hpp"

#include <cmath>

namespace baton {

AdamState AdamState::create(const std::vector<ParamTensor>& params, real lr) {
  AdamState s;
  s.learning_rate = lr;
  s.m.reserve(params.size());
  s.v.reserve(params.size());
  for (const auto& p : params) {
    s.m.push_back(Mat::Zero(p.value.rows(), p.value.cols()));
    s.v.push_back(Mat::Zero(p.value.rows(), p.value.cols()));
  }
  return s;
}

bool adam_step(std::vector<ParamTensor>& params, AdamState& state) {
  if (state.m.size() != params.size()) throw DimensionError("adam_step: state/param group mismatch");
  if (state.learning_rate <= 0) throw ConfigError("adam_step: learning_rate must be positive");
  for (const auto& p : params) {
    if (!p.grad.allFinite()) return false;
  }
  state.step_count += 1;
  const real t = static_cast<real>(state.step_count);
  const real bc1 = real(1) - std::pow(state.beta1, t);
  const real bc2 = real(1) - std::pow(state.beta2, t);
  for (size_t i = 0; i < params.size(); ++i) {
    ParamTensor& p = params[i];
    if (p.grad.rows() != p.value.rows() || p.grad.cols() != p.value.cols()) {
      throw DimensionError("adam_step: gradient shape mismatch on " + p.name);
    }
    state.m[i] = state.beta1 * state.m[i] + (real(1) - state.beta1) * p.grad;
    state.v[i] = (state.beta2 * state.v[i].array() +
                  (real(1) - state.beta2) * p.grad.array().square())
                     .matrix();
    const real lr = state.learning_rate * p.lr_scale;
    Mat mhat = state.m[i] / bc1;
    Mat vhat = state.v[i] / bc2;
    p.value.array() -= lr * mhat.array() / (vhat.array().sqrt() + state.epsilon);
  }
  return true;
}

}  // namespace baton
