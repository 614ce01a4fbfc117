#pragma once

#include "baton/replay.hpp"
#include "baton/worldmodel.hpp"

#include <functional>
#include <vector>

namespace baton::testing {

// Central finite differences against already-accumulated analytic
// gradients. The loss closure must evaluate against FIXED stage-one
// inputs so detached targets stay constant, matching the stop-gradient
// semantics the analytic gradient implements.
inline real max_rel_grad_error(const std::function<real()>& eval_loss,
                               const std::vector<ParamTensor*>& params, real eps = 1e-5,
                               real floor = 1e-6) {
  std::vector<Mat> analytic;
  analytic.reserve(params.size());
  for (const ParamTensor* p : params) analytic.push_back(p->grad);
  real max_err = 0;
  for (size_t pi = 0; pi < params.size(); ++pi) {
    ParamTensor* p = params[pi];
    for (Eigen::Index j = 0; j < p->value.cols(); ++j) {
      for (Eigen::Index i = 0; i < p->value.rows(); ++i) {
        const real orig = p->value(i, j);
        p->value(i, j) = orig + eps;
        const real up = eval_loss();
        p->value(i, j) = orig - eps;
        const real dn = eval_loss();
        p->value(i, j) = orig;
        const real fd = (up - dn) / (2 * eps);
        const real an = analytic[pi](i, j);
        const real denom = std::max({std::abs(fd), std::abs(an), floor});
        max_err = std::max(max_err, std::abs(fd - an) / denom);
      }
    }
  }
  return max_err;
}

inline std::vector<ParamTensor*> head_params(Mlp& head) {
  std::vector<ParamTensor*> out;
  for (ParamTensor& p : head.params()) out.push_back(&p);
  return out;
}

inline AgentConfig tiny_agent_config(int index = 0, int n_agents = 2) {
  AgentConfig c;
  c.index = index;
  c.n_agents = n_agents;
  c.obs_dim = 3;
  c.act_dim = 2;
  c.latent_dim = 8;
  c.hidden_dim = 8;
  c.num_layers = 2;
  c.num_bins = 11;
  c.horizon = 2;
  c.nstep = 3;
  return c;
}

// Random but structurally valid batch: one truncated window, one
// terminal, the rest full length.
inline TrajectoryBatch tiny_batch(const AgentConfig& cfg, int batch, Rng& rng) {
  const int W = cfg.horizon + cfg.nstep;
  std::normal_distribution<double> normal(0, 1);
  std::uniform_real_distribution<double> uni(-1, 1);
  TrajectoryBatch b;
  b.batch = batch;
  b.window = W;
  b.obs.assign(static_cast<size_t>(cfg.n_agents),
               std::vector<Mat>(static_cast<size_t>(W) + 1, Mat::Zero(cfg.obs_dim, batch)));
  b.act.assign(static_cast<size_t>(cfg.n_agents),
               std::vector<Mat>(static_cast<size_t>(W), Mat::Zero(cfg.act_dim, batch)));
  b.rewards = Mat::Zero(W, batch);
  b.valid_len.assign(static_cast<size_t>(batch), W);
  b.terminal.assign(static_cast<size_t>(batch), 0);
  if (batch > 1) {
    b.valid_len[0] = std::max(cfg.horizon, W - 2);  // truncated tail
    b.valid_len[1] = std::max(cfg.horizon, W - 1);
    b.terminal[1] = 1;  // true termination
  }
  for (int a = 0; a < cfg.n_agents; ++a) {
    for (int s = 0; s <= W; ++s) {
      for (int k = 0; k < batch; ++k) {
        if (s > b.valid_len[static_cast<size_t>(k)]) continue;
        for (int d = 0; d < cfg.obs_dim; ++d) {
          b.obs[static_cast<size_t>(a)][static_cast<size_t>(s)](d, k) =
              static_cast<real>(normal(rng));
        }
      }
    }
    for (int s = 0; s < W; ++s) {
      for (int k = 0; k < batch; ++k) {
        if (s >= b.valid_len[static_cast<size_t>(k)]) continue;
        for (int d = 0; d < cfg.act_dim; ++d) {
          b.act[static_cast<size_t>(a)][static_cast<size_t>(s)](d, k) =
              static_cast<real>(uni(rng));
        }
      }
    }
  }
  for (int s = 0; s < W; ++s) {
    for (int k = 0; k < batch; ++k) {
      if (s >= b.valid_len[static_cast<size_t>(k)]) continue;
      b.rewards(s, k) = static_cast<real>(uni(rng));
    }
  }
  return b;
}

inline MessageViews random_views(const AgentConfig& cfg, int batch, Rng& rng) {
  std::normal_distribution<double> normal(0, 0.3);
  MessageViews v;
  const int W = cfg.horizon + cfg.nstep;
  auto rand_mat = [&](int rows) {
    Mat m(rows, batch);
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = static_cast<real>(normal(rng));
    }
    return m;
  };
  for (int s = 0; s < cfg.horizon; ++s) v.main.push_back(rand_mat(cfg.msg_dim()));
  for (int s = 0; s <= W; ++s) v.full.push_back(rand_mat(cfg.msg_dim()));
  return v;
}

inline void zero_head(Mlp& head) {
  for (ParamTensor& p : head.params()) {
    if (p.name.find("ln_g") != std::string::npos) continue;  // keep LN scale at 1
    p.value.setZero();
  }
}

}  // namespace baton::testing
