#pragma once

#include "baton/autodiff.hpp"

#include <string>
#include <vector>

namespace baton {

enum class OutAct { Linear, Tanh, SemNorm };

struct MlpSpec {
  int input_dim = 0;
  int hidden_dim = 0;
  int num_layers = 1;  // hidden layers
  int output_dim = 0;
  OutAct out_act = OutAct::Linear;
  bool use_layer_norm = true;
  int sem_group = 8;  // simplex length for SemNorm outputs

  void validate() const;
};

// Mish-activated MLP. LayerNorm, when enabled, sits between each hidden
// linear map and its activation. The output layer is a plain linear map
// followed by the configured output activation.
class Mlp {
 public:
  Mlp() = default;
  static Mlp create(const MlpSpec& spec, const std::string& name, Rng& rng,
                    bool zero_output_layer = false, real lr_scale = 1.0);

  Tape::VarId forward(Tape& tape, Tape::VarId input);
  // Same graph but parameters enter as frozen leaves (no accumulation).
  Tape::VarId forward_frozen(Tape& tape, Tape::VarId input) const;
  // No-grad batched forward; columns are samples. Identical math to the
  // tape path (shared kernels), asserted by tests.
  Mat infer(const Mat& input) const;
  // Forward with externally supplied weights of matching shapes (used by
  // the target critic, which shadows live parameter values).
  Mat infer_with(const std::vector<Mat>& values, const Mat& input) const;

  const MlpSpec& spec() const { return spec_; }
  std::vector<ParamTensor>& params() { return params_; }
  const std::vector<ParamTensor>& params() const { return params_; }
  std::vector<Mat> param_values() const;
  void zero_grads();
  int64_t param_count() const;

 private:
  struct LayerRef {
    int w, b;
    int ln_g = -1, ln_b = -1;
  };
  Mat apply_out_act(Mat&& y) const;

  MlpSpec spec_;
  std::string name_;
  std::vector<ParamTensor> params_;
  std::vector<LayerRef> hidden_;
  LayerRef out_;
};

}  // namespace baton
