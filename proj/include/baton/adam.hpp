#pragma once

#include "baton/autodiff.hpp"

#include <vector>

namespace baton {

struct AdamState {
  std::vector<Mat> m;  // first moments, shaped like the parameters
  std::vector<Mat> v;  // second moments
  int64_t step_count = 0;
  real learning_rate = 5e-4;
  real beta1 = 0.9;
  real beta2 = 0.999;
  real epsilon = 1e-8;

  static AdamState create(const std::vector<ParamTensor>& params, real lr);
};

// One Adam update over a parameter group. Per-parameter lr_scale applies
// on top of state.learning_rate (encoder heads carry 0.3). Returns false
// and leaves parameters and moments untouched when any gradient entry is
// non-finite; the caller decides how to report the skip.
bool adam_step(std::vector<ParamTensor>& params, AdamState& state);

}  // namespace baton
