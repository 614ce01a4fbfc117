#include "baton/worldmodel.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace baton {

namespace {
constexpr real kLog2Pi = real(1.8378770664093454836);
constexpr real kTanhCorrEps = real(1e-6);
}  // namespace

void AgentConfig::validate() const {
  if (n_agents < 1 || index < 0 || index >= n_agents) throw ConfigError("AgentConfig: bad index");
  if (obs_dim <= 0 || act_dim <= 0) throw ConfigError("AgentConfig: obs/act dims must be positive");
  if (latent_dim <= 0 || latent_dim % sem_group != 0) {
    throw ConfigError("AgentConfig: latent_dim must be a positive multiple of the simplex length");
  }
  if (horizon < 1 || nstep < 1) throw ConfigError("AgentConfig: horizon and nstep must be >= 1");
  if (!(step_decay > 0 && step_decay <= 1)) throw ConfigError("AgentConfig: step_decay in (0,1]");
  if (num_bins < 2) throw ConfigError("AgentConfig: num_bins >= 2");
}

AgentModel AgentModel::create(const AgentConfig& cfg, uint64_t seed) {
  cfg.validate();
  AgentModel m;
  m.cfg = cfg;
  m.grid = codec::BinGrid(cfg.num_bins, cfg.grid_low, cfg.grid_high);
  m.qscale.ema = cfg.qscale_ema;
  m.qscale.floor = cfg.qscale_floor;
  m.qscale.scale = 1;

  const int in_sac = cfg.latent_dim + cfg.act_dim + cfg.msg_dim();
  const int in_actor = cfg.latent_dim + cfg.msg_dim();

  auto mk = [&](const char* name, int in, int out, OutAct act, bool zero_out, real lr_scale,
                uint64_t stream) {
    MlpSpec spec;
    spec.input_dim = in;
    spec.hidden_dim = cfg.hidden_dim;
    spec.num_layers = cfg.num_layers;
    spec.output_dim = out;
    spec.out_act = act;
    spec.use_layer_norm = true;
    spec.sem_group = cfg.sem_group;
    Rng rng(seed_stream(seed, 0xa11ceULL, static_cast<uint64_t>(cfg.index), stream));
    return Mlp::create(spec, name, rng, zero_out, lr_scale);
  };

  m.encoder = mk("encoder", cfg.obs_dim, cfg.latent_dim, OutAct::SemNorm, false,
                 cfg.encoder_lr_scale, 1);
  m.dynamics = mk("dynamics", in_sac, cfg.latent_dim, OutAct::SemNorm, false, 1.0, 2);
  m.reward_head = mk("reward", in_sac, cfg.num_bins, OutAct::Linear, true, 1.0, 3);
  m.critic = mk("critic", in_sac, cfg.num_bins, OutAct::Linear, true, 1.0, 4);
  m.actor = mk("actor", in_actor, 2 * cfg.act_dim, OutAct::Linear, true, 1.0, 5);

  m.adam_encoder = AdamState::create(m.encoder.params(), cfg.lr);
  m.adam_dynamics = AdamState::create(m.dynamics.params(), cfg.lr);
  m.adam_reward = AdamState::create(m.reward_head.params(), cfg.lr);
  m.adam_critic = AdamState::create(m.critic.params(), cfg.lr);
  m.adam_actor = AdamState::create(m.actor.params(), cfg.lr);

  m.sync_target();
  return m;
}

Mat AgentModel::assemble(const Mat& z, const Mat& a, const Mat& e) const {
  if (z.rows() != cfg.latent_dim) throw DimensionError("assemble: latent dim mismatch");
  if (a.rows() != cfg.act_dim || a.cols() != z.cols()) {
    throw DimensionError("assemble: action shape mismatch");
  }
  if (e.rows() != cfg.msg_dim()) throw DimensionError("assemble: message layout mismatch");
  Mat x(cfg.latent_dim + cfg.act_dim + cfg.msg_dim(), z.cols());
  x.topRows(cfg.latent_dim) = z;
  x.middleRows(cfg.latent_dim, cfg.act_dim) = a;
  if (e.cols() == z.cols()) {
    x.bottomRows(cfg.msg_dim()) = e;
  } else if (e.cols() == 1) {
    x.bottomRows(cfg.msg_dim()) = e.replicate(1, z.cols());
  } else {
    throw DimensionError("assemble: message column count mismatch");
  }
  return x;
}

Mat AgentModel::assemble_actor(const Mat& z, const Mat& e) const {
  if (z.rows() != cfg.latent_dim) throw DimensionError("assemble_actor: latent dim mismatch");
  if (e.rows() != cfg.msg_dim()) throw DimensionError("assemble_actor: message layout mismatch");
  Mat x(cfg.latent_dim + cfg.msg_dim(), z.cols());
  x.topRows(cfg.latent_dim) = z;
  if (e.cols() == z.cols()) {
    x.bottomRows(cfg.msg_dim()) = e;
  } else if (e.cols() == 1) {
    x.bottomRows(cfg.msg_dim()) = e.replicate(1, z.cols());
  } else {
    throw DimensionError("assemble_actor: message column count mismatch");
  }
  return x;
}

Mat AgentModel::encode(const Mat& obs) const { return encoder.infer(obs); }
Vec AgentModel::encode(const Vec& obs) const { return Vec(encoder.infer(obs).col(0)); }

AgentModel::StepOut AgentModel::predict_step(const Mat& z, const Mat& a, const Mat& e) const {
  Mat x = assemble(z, a, e);
  StepOut out;
  out.z_next = dynamics.infer(x);
  out.r_logits = reward_head.infer(x);
  return out;
}

std::pair<Vec, Vec> AgentModel::predict_step(const Vec& z, const Vec& a, const Message& e) const {
  if (e.n_agents() != cfg.n_agents || e.act_dim() != cfg.act_dim || e.mode() != cfg.msg_mode ||
      (cfg.msg_mode == MessageMode::Full && e.latent_dim() != cfg.latent_dim)) {
    throw DimensionError("predict_step: message layout mismatch");
  }
  StepOut out = predict_step(Mat(z), Mat(a), Mat(e.to_input()));
  return {Vec(out.z_next.col(0)), Vec(out.r_logits.col(0))};
}

Mat AgentModel::critic_logits(const Mat& z, const Mat& a, const Mat& e, bool use_target) const {
  Mat x = assemble(z, a, e);
  return use_target ? critic.infer_with(target_critic, x) : critic.infer(x);
}

Vec AgentModel::critic_values(const Mat& z, const Mat& a, const Mat& e, bool use_target) const {
  return codec::twohot_decode_batch(critic_logits(z, a, e, use_target), grid);
}

real AgentModel::critic_value(const Vec& z, const Vec& a, const Message& e, bool use_target) const {
  if (e.n_agents() != cfg.n_agents || e.act_dim() != cfg.act_dim || e.mode() != cfg.msg_mode) {
    throw DimensionError("critic_value: message layout mismatch");
  }
  return critic_values(Mat(z), Mat(a), Mat(e.to_input()), use_target)(0);
}

AgentModel::ActorOut AgentModel::actor_forward(const Mat& z, const Mat& e) const {
  Mat out = actor.infer(assemble_actor(z, e));
  ActorOut res;
  res.mean = out.topRows(cfg.act_dim);
  Mat raw = out.bottomRows(cfg.act_dim);
  const real half = (cfg.logstd_max - cfg.logstd_min) / 2;
  const real mid = (cfg.logstd_max + cfg.logstd_min) / 2;
  res.log_std = (raw.array().tanh() * half + mid).matrix();
  return res;
}

Vec AgentModel::actor_sample(const Vec& z, const Vec& e_input, bool stochastic, Rng& rng,
                             real* log_prob) const {
  ActorOut head = actor_forward(Mat(z), Mat(e_input));
  Vec mean = head.mean.col(0);
  Vec log_std = head.log_std.col(0);
  Vec eps = Vec::Zero(cfg.act_dim);
  if (stochastic) {
    std::normal_distribution<double> normal(0, 1);
    for (int i = 0; i < cfg.act_dim; ++i) eps(i) = static_cast<real>(normal(rng));
  }
  Vec u = mean + log_std.array().exp().matrix().cwiseProduct(eps);
  Vec a = u.array().tanh().matrix();
  if (log_prob) {
    real lp = 0;
    for (int i = 0; i < cfg.act_dim; ++i) {
      lp += real(-0.5) * eps(i) * eps(i) - log_std(i) - real(0.5) * kLog2Pi;
      lp -= std::log(real(1) - a(i) * a(i) + kTanhCorrEps);
    }
    *log_prob = lp;
  }
  return a;
}

Vec AgentModel::actor_sample(const Vec& z, const Message& e, bool stochastic, Rng& rng,
                             real* log_prob) const {
  return actor_sample(z, Vec(e.to_input()), stochastic, rng, log_prob);
}

Mat AgentModel::actor_sample_batch(const Mat& z, const Mat& e, bool stochastic, Rng& rng) const {
  ActorOut head = actor_forward(z, e);
  if (!stochastic) return head.mean.array().tanh().matrix();
  Mat eps(cfg.act_dim, z.cols());
  std::normal_distribution<double> normal(0, 1);
  for (Eigen::Index c = 0; c < eps.cols(); ++c) {
    for (Eigen::Index r = 0; r < eps.rows(); ++r) eps(r, c) = static_cast<real>(normal(rng));
  }
  Mat u = head.mean + head.log_std.array().exp().matrix().cwiseProduct(eps);
  return u.array().tanh().matrix();
}

void AgentModel::sync_target() { target_critic = critic.param_values(); }

void AgentModel::update_target(real ema) {
  const auto& live = critic.params();
  for (size_t i = 0; i < target_critic.size(); ++i) {
    target_critic[i] = ema * target_critic[i] + (real(1) - ema) * live[i].value;
  }
}

void AgentModel::zero_grads() {
  encoder.zero_grads();
  dynamics.zero_grads();
  reward_head.zero_grads();
  critic.zero_grads();
  actor.zero_grads();
}

int64_t AgentModel::param_count() const {
  return encoder.param_count() + dynamics.param_count() + reward_head.param_count() +
         critic.param_count() + actor.param_count();
}

// --- checkpoint hydration ----------------------------------------------

namespace {

void save_head(StateMap& st, const std::string& prefix, const Mlp& head, const AdamState& adam) {
  for (const auto& p : head.params()) st.put(prefix + p.name, p.value);
  for (size_t i = 0; i < adam.m.size(); ++i) {
    st.put(prefix + head.params()[i].name + "/adam_m", adam.m[i]);
    st.put(prefix + head.params()[i].name + "/adam_v", adam.v[i]);
  }
  st.put_scalar(prefix + head.params()[0].name + "/adam_step",
                static_cast<real>(adam.step_count));
}

void load_head(const StateMap& st, const std::string& prefix, Mlp& head, AdamState& adam) {
  for (auto& p : head.params()) {
    const Mat& v = st.get(prefix + p.name);
    if (v.rows() != p.value.rows() || v.cols() != p.value.cols()) {
      throw DimensionError("checkpoint: shape mismatch on " + prefix + p.name);
    }
    p.value = v;
    p.zero_grad();
  }
  for (size_t i = 0; i < adam.m.size(); ++i) {
    adam.m[i] = st.get(prefix + head.params()[i].name + "/adam_m");
    adam.v[i] = st.get(prefix + head.params()[i].name + "/adam_v");
  }
  adam.step_count =
      static_cast<int64_t>(st.get_scalar(prefix + head.params()[0].name + "/adam_step"));
}

}  // namespace

void AgentModel::save_state(StateMap& st, const std::string& prefix) const {
  save_head(st, prefix, encoder, adam_encoder);
  save_head(st, prefix, dynamics, adam_dynamics);
  save_head(st, prefix, reward_head, adam_reward);
  save_head(st, prefix, critic, adam_critic);
  save_head(st, prefix, actor, adam_actor);
  for (size_t i = 0; i < target_critic.size(); ++i) {
    st.put(prefix + "target_critic/" + std::to_string(i), target_critic[i]);
  }
  st.put_scalar(prefix + "qscale", qscale.scale);
}

void AgentModel::load_state(const StateMap& st, const std::string& prefix) {
  load_head(st, prefix, encoder, adam_encoder);
  load_head(st, prefix, dynamics, adam_dynamics);
  load_head(st, prefix, reward_head, adam_reward);
  load_head(st, prefix, critic, adam_critic);
  load_head(st, prefix, actor, adam_actor);
  for (size_t i = 0; i < target_critic.size(); ++i) {
    target_critic[i] = st.get(prefix + "target_critic/" + std::to_string(i));
  }
  qscale.scale = st.get_scalar(prefix + "qscale");
}

// --- masking -------------------------------------------------------------

std::vector<int> sample_comm_order(int n_agents, bool permute, Rng& rng) {
  std::vector<int> order(static_cast<size_t>(n_agents));
  std::iota(order.begin(), order.end(), 0);
  if (permute) {
    for (int i = n_agents - 1; i > 0; --i) {
      std::uniform_int_distribution<int> pick(0, i);
      std::swap(order[static_cast<size_t>(i)], order[static_cast<size_t>(pick(rng))]);
    }
  }
  return order;
}

TrainingMasks sample_masks(int n_agents, int steps, int batch, real drop_prob, bool permute,
                           Rng& rng) {
  if (drop_prob < 0 || drop_prob > 1) throw ConfigError("sample_masks: drop_prob in [0,1]");
  TrainingMasks masks;
  masks.order = sample_comm_order(n_agents, permute, rng);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  masks.keep.resize(static_cast<size_t>(n_agents));
  for (int r = 0; r < n_agents; ++r) {
    masks.keep[static_cast<size_t>(r)].resize(static_cast<size_t>(n_agents));
    for (int s = 0; s < n_agents; ++s) {
      Mat keep(steps + 1, batch);
      for (Eigen::Index i = 0; i < keep.rows(); ++i) {
        for (Eigen::Index j = 0; j < keep.cols(); ++j) {
          keep(i, j) = uni(rng) < static_cast<double>(drop_prob) ? real(0) : real(1);
        }
      }
      masks.keep[static_cast<size_t>(r)][static_cast<size_t>(s)] = std::move(keep);
    }
  }
  return masks;
}

void random_mask(Message& msg, real drop_prob, Rng& rng) {
  if (drop_prob < 0 || drop_prob > 1) throw ConfigError("random_mask: drop_prob in [0,1]");
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  for (int s = 0; s < msg.n_agents(); ++s) {
    if (msg.valid(s) && uni(rng) < static_cast<double>(drop_prob)) msg.clear_slot(s);
  }
}

// --- batch plumbing ----------------------------------------------------------

namespace {

// Executed action of `agent` at step s; items whose window ended earlier
// repeat their final action (used only for truncated bootstrap states).
Mat action_at(const TrajectoryBatch& batch, int agent, int s) {
  const int base = std::min(s, batch.window - 1);
  Mat a = batch.act[static_cast<size_t>(agent)][static_cast<size_t>(base)];
  for (int b = 0; b < batch.batch; ++b) {
    const int len = batch.valid_len[static_cast<size_t>(b)];
    if (len <= s) {
      a.col(b) = batch.act[static_cast<size_t>(agent)][static_cast<size_t>(len - 1)].col(b);
    }
  }
  return a;
}

Mat build_msg_tensor(const AgentConfig& cfg, const std::vector<int>& preds,
                     const std::vector<Mat*>& latent_by_agent,
                     const std::vector<Mat>& action_by_agent, const TrainingMasks* masks,
                     int receiver, int step, int batch) {
  Mat e = Mat::Zero(cfg.msg_dim(), batch);
  const int w = cfg.msg_slot_width();
  for (int j : preds) {
    Mat slot(w, batch);
    if (cfg.msg_mode == MessageMode::Full) {
      slot.topRows(cfg.latent_dim) = *latent_by_agent[static_cast<size_t>(j)];
      slot.bottomRows(cfg.act_dim) = action_by_agent[static_cast<size_t>(j)];
    } else {
      slot = action_by_agent[static_cast<size_t>(j)];
    }
    if (masks) {
      const Mat& keep = masks->keep[static_cast<size_t>(receiver)][static_cast<size_t>(j)];
      slot = (slot.array().rowwise() * keep.row(step).array()).matrix();
    }
    e.middleRows(j * w, w) = slot;
  }
  return e;
}

}  // namespace

std::vector<Mat> rollout_latents(const AgentModel& m, const TrajectoryBatch& batch,
                                 const std::vector<Mat>& msgs, int steps) {
  const int self = m.cfg.index;
  std::vector<Mat> z;
  z.reserve(static_cast<size_t>(steps) + 1);
  z.push_back(m.encode(batch.obs[static_cast<size_t>(self)][0]));
  for (int s = 0; s < steps; ++s) {
    z.push_back(m.predict_step(z.back(),
                               batch.act[static_cast<size_t>(self)][static_cast<size_t>(s)],
                               msgs[static_cast<size_t>(s)])
                    .z_next);
  }
  return z;
}

Mat compute_td_targets(const AgentModel& m, const TrajectoryBatch& batch,
                       const std::vector<Mat>& enc_self, const std::vector<Mat>& msg_full) {
  const AgentConfig& cfg = m.cfg;
  const int H = cfg.horizon;
  const int B = batch.batch;
  Mat G(H, B);
  for (int h = 0; h < H; ++h) {
    Mat zb = Mat::Zero(cfg.latent_dim, B);
    Mat ab = Mat::Zero(cfg.act_dim, B);
    Mat eb = Mat::Zero(cfg.msg_dim(), B);
    Vec disc = Vec::Zero(B);
    std::vector<uint8_t> boot(static_cast<size_t>(B), 0);
    for (int b = 0; b < B; ++b) {
      const int len = batch.valid_len[static_cast<size_t>(b)];
      const int m_steps = std::min(cfg.nstep, len - h);
      real g = 0;
      real d = 1;
      for (int k = 0; k < m_steps; ++k) {
        g += d * batch.rewards(h + k, b);
        d *= cfg.gamma;
      }
      const int s = h + m_steps;
      const bool bootstrap = !(batch.terminal[static_cast<size_t>(b)] && s == len);
      G(h, b) = g;
      if (bootstrap) {
        boot[static_cast<size_t>(b)] = 1;
        disc(b) = d;
        zb.col(b) = enc_self[static_cast<size_t>(s)].col(b);
        const int a_idx = std::min(s, len - 1);
        ab.col(b) =
            batch.act[static_cast<size_t>(cfg.index)][static_cast<size_t>(a_idx)].col(b);
        eb.col(b) = msg_full[static_cast<size_t>(s)].col(b);
      }
    }
    Vec q = m.critic_values(zb, ab, eb, /*use_target=*/true);
    for (int b = 0; b < B; ++b) {
      if (boot[static_cast<size_t>(b)]) G(h, b) += disc(b) * q(b);
    }
  }
  return G;
}

ModelLossInputs prepare_model_loss(const AgentModel& m, const TrajectoryBatch& batch,
                                   const MessageViews& views, bool teacher_forced) {
  const AgentConfig& cfg = m.cfg;
  const int H = cfg.horizon;
  const int self = cfg.index;
  if (static_cast<int>(views.main.size()) < H) {
    throw DimensionError("prepare_model_loss: missing message steps");
  }
  for (const auto& len : batch.valid_len) {
    if (len < H) throw DimensionError("prepare_model_loss: window shorter than horizon");
  }

  ModelLossInputs in;
  in.obs0 = batch.obs[static_cast<size_t>(self)][0];
  std::vector<Mat> enc_self;
  enc_self.reserve(static_cast<size_t>(batch.window) + 1);
  for (int s = 0; s <= batch.window; ++s) {
    enc_self.push_back(m.encode(batch.obs[static_cast<size_t>(self)][static_cast<size_t>(s)]));
  }
  for (int h = 0; h < H; ++h) {
    in.exec_actions.push_back(batch.act[static_cast<size_t>(self)][static_cast<size_t>(h)]);
    in.msgs.push_back(views.main[static_cast<size_t>(h)]);
    in.latent_targets.push_back(enc_self[static_cast<size_t>(h + 1)]);
    Mat rt(cfg.num_bins, batch.batch);
    for (int b = 0; b < batch.batch; ++b) {
      rt.col(b) = codec::twohot_encode(batch.rewards(h, b), m.grid);
    }
    in.reward_twohot.push_back(std::move(rt));
  }
  in.td_targets = compute_td_targets(m, batch, enc_self, views.full);
  for (int h = 0; h < H; ++h) {
    Mat qt(cfg.num_bins, batch.batch);
    for (int b = 0; b < batch.batch; ++b) {
      qt.col(b) = codec::twohot_encode(in.td_targets(h, b), m.grid);
    }
    in.q_twohot.push_back(std::move(qt));
  }
  in.teacher_forced = teacher_forced;
  if (teacher_forced) {
    for (int h = 0; h < H; ++h) in.teacher_latents.push_back(enc_self[static_cast<size_t>(h)]);
  }
  return in;
}

LossReport model_loss(AgentModel& m, const ModelLossInputs& in, bool accumulate_grads) {
  const AgentConfig& cfg = m.cfg;
  const int H = static_cast<int>(in.exec_actions.size());
  const int B = static_cast<int>(in.obs0.cols());
  LossReport rep;

  Tape t;
  Tape::VarId z = m.encoder.forward(t, t.constant(in.obs0));
  Tape::VarId total = t.constant(Mat::Zero(1, 1));
  real w = 1;
  for (int h = 0; h < H; ++h) {
    if (in.teacher_forced && h > 0) {
      z = t.constant(in.teacher_latents[static_cast<size_t>(h)]);
    }
    Tape::VarId x = t.vstack({z, t.constant(in.exec_actions[static_cast<size_t>(h)]),
                              t.constant(in.msgs[static_cast<size_t>(h)])});
    Tape::VarId z_next = m.dynamics.forward(t, x);
    Tape::VarId r_logits = m.reward_head.forward(t, x);
    Tape::VarId q_logits = m.critic.forward(t, x);

    Tape::VarId diff = t.sub(z_next, t.constant(in.latent_targets[static_cast<size_t>(h)]));
    Tape::VarId dyn_row = t.colwise_sum(t.square(diff));
    Tape::VarId r_ce = t.scale(
        t.colwise_sum(t.hadamard(t.constant(in.reward_twohot[static_cast<size_t>(h)]),
                                 t.log_softmax(r_logits))),
        -1);
    Tape::VarId q_ce = t.scale(
        t.colwise_sum(t.hadamard(t.constant(in.q_twohot[static_cast<size_t>(h)]),
                                 t.log_softmax(q_logits))),
        -1);

    const real dyn_mean = t.value(dyn_row).mean();
    const real r_mean = t.value(r_ce).mean();
    const real q_mean = t.value(q_ce).mean();
    rep.step_weights.push_back(w);
    rep.step_dynamics.push_back(dyn_mean);
    rep.step_reward.push_back(r_mean);
    rep.step_q.push_back(q_mean);
    rep.dynamics_loss += w * dyn_mean;
    rep.reward_loss += w * r_mean;
    rep.q_loss += w * q_mean;
    if (!std::isfinite(static_cast<double>(dyn_mean)) ||
        !std::isfinite(static_cast<double>(r_mean)) ||
        !std::isfinite(static_cast<double>(q_mean))) {
      throw NumericsError("model_loss: non-finite term at step " + std::to_string(h) +
                          " (dyn=" + std::to_string(static_cast<double>(dyn_mean)) +
                          ", r=" + std::to_string(static_cast<double>(r_mean)) +
                          ", q=" + std::to_string(static_cast<double>(q_mean)) + ")");
    }

    Tape::VarId step = t.add(t.scale(dyn_row, cfg.dynamics_coef),
                             t.add(t.scale(r_ce, cfg.reward_coef), t.scale(q_ce, cfg.q_coef)));
    total = t.add(total, t.scale(t.sum_all(step), w / static_cast<real>(B)));
    w *= cfg.step_decay;
    z = z_next;
  }
  rep.total = t.value(total)(0, 0);
  if (accumulate_grads) t.backward(total);
  return rep;
}

ActorLossInputs prepare_actor_loss(const AgentModel& m, const TrajectoryBatch& batch,
                                   const MessageViews& views, Rng& rng) {
  const int H = m.cfg.horizon;
  ActorLossInputs in;
  in.msgs.assign(views.main.begin(), views.main.begin() + H);
  in.latents = rollout_latents(m, batch, in.msgs, H - 1);  // steps 0..H-1
  std::normal_distribution<double> normal(0, 1);
  for (int h = 0; h < H; ++h) {
    Mat eps(m.cfg.act_dim, batch.batch);
    for (Eigen::Index c = 0; c < eps.cols(); ++c) {
      for (Eigen::Index r = 0; r < eps.rows(); ++r) eps(r, c) = static_cast<real>(normal(rng));
    }
    in.noise.push_back(std::move(eps));
  }
  in.q_scale = m.qscale.scale;
  return in;
}

real actor_loss(AgentModel& m, const ActorLossInputs& in, bool accumulate_grads,
                real* entropy_out) {
  const AgentConfig& cfg = m.cfg;
  const int H = static_cast<int>(in.latents.size());
  const int B = static_cast<int>(in.latents[0].cols());
  const int A = cfg.act_dim;
  const real half = (cfg.logstd_max - cfg.logstd_min) / 2;
  const real mid = (cfg.logstd_max + cfg.logstd_min) / 2;

  Tape t;
  Tape::VarId total = t.constant(Mat::Zero(1, 1));
  real w = 1;
  real entropy_acc = 0;
  for (int h = 0; h < H; ++h) {
    Tape::VarId zc = t.constant(in.latents[static_cast<size_t>(h)]);
    Tape::VarId e = t.constant(in.msgs[static_cast<size_t>(h)]);
    Tape::VarId head = m.actor.forward(t, t.vstack({zc, e}));
    Tape::VarId mean = t.rows(head, 0, A);
    Tape::VarId log_std = t.affine(t.tanh_(t.rows(head, A, A)), half, mid);
    Tape::VarId u =
        t.add(mean, t.hadamard(t.exp_(log_std), t.constant(in.noise[static_cast<size_t>(h)])));
    Tape::VarId a = t.tanh_(u);

    // log pi(a) = sum_d [-eps^2/2 - log_std - log(2pi)/2] - sum_d log(1 - a^2 + c)
    Mat gauss_const(1, B);
    for (int b = 0; b < B; ++b) {
      real c = 0;
      for (int d = 0; d < A; ++d) {
        const real eps = in.noise[static_cast<size_t>(h)](d, b);
        c += real(-0.5) * eps * eps - real(0.5) * kLog2Pi;
      }
      gauss_const(0, b) = c;
    }
    Tape::VarId lp = t.add(t.scale(t.colwise_sum(log_std), -1), t.constant(gauss_const));
    Tape::VarId corr =
        t.colwise_sum(t.log_(t.affine(t.square(a), -1, real(1) + kTanhCorrEps)));
    lp = t.sub(lp, corr);

    Tape::VarId q_logits = m.critic.forward_frozen(t, t.vstack({zc, a, e}));
    Tape::VarId q_mean_bin = t.colwise_sum(t.cmul_colvec(t.softmax(q_logits), m.grid.centers()));
    Tape::VarId q_row = t.symexp_(q_mean_bin);

    // minimize  -Q/scale + alpha * log pi  (maximizes Q + alpha * entropy)
    Tape::VarId step = t.add(t.scale(q_row, real(-1) / in.q_scale),
                             t.scale(lp, cfg.entropy_coef));
    total = t.add(total, t.scale(t.sum_all(step), w / static_cast<real>(B)));
    entropy_acc += -t.value(lp).mean() / static_cast<real>(H);
    w *= cfg.step_decay;
  }
  if (entropy_out) *entropy_out = entropy_acc;
  const real loss = t.value(total)(0, 0);
  if (!std::isfinite(static_cast<double>(loss))) {
    throw NumericsError("actor_loss: non-finite loss");
  }
  if (accumulate_grads) t.backward(total);
  return loss;
}

namespace {

// Incremental view construction shared by the update scheme (which
// refreshes predictions agent by agent) and by offline consumers.
class ViewBuilder {
 public:
  ViewBuilder(const std::vector<AgentModel>& agents, const TrajectoryBatch& batch,
              const TrainingMasks& masks)
      : agents_(agents), batch_(batch), masks_(masks),
        enc_(agents.size()), rollout_(agents.size()) {}

  MessageViews build(int i, const std::vector<int>& preds) const {
    const int n = static_cast<int>(agents_.size());
    const int H = agents_[static_cast<size_t>(i)].cfg.horizon;
    const int W = batch_.window;
    const int B = batch_.batch;
    MessageViews v;
    for (int s = 0; s < H; ++s) {
      std::vector<Mat*> lat(static_cast<size_t>(n), nullptr);
      std::vector<Mat> act(static_cast<size_t>(n));
      for (int j : preds) {
        lat[static_cast<size_t>(j)] =
            const_cast<Mat*>(&rollout_[static_cast<size_t>(j)][static_cast<size_t>(s)]);
        act[static_cast<size_t>(j)] = batch_.act[static_cast<size_t>(j)][static_cast<size_t>(s)];
      }
      v.main.push_back(build_msg_tensor(agents_[static_cast<size_t>(i)].cfg, preds, lat, act,
                                        &masks_, i, s, B));
    }
    for (int s = 0; s <= W; ++s) {
      std::vector<Mat*> lat(static_cast<size_t>(n), nullptr);
      std::vector<Mat> act(static_cast<size_t>(n));
      for (int j : preds) {
        lat[static_cast<size_t>(j)] =
            const_cast<Mat*>(&enc_[static_cast<size_t>(j)][static_cast<size_t>(s)]);
        act[static_cast<size_t>(j)] = action_at(batch_, j, s);
      }
      v.full.push_back(build_msg_tensor(agents_[static_cast<size_t>(i)].cfg, preds, lat, act,
                                        &masks_, i, s, B));
    }
    return v;
  }

  // Recomputes agent j's encoder latents and chained rollout from its
  // current parameters, using the given message views as its inputs.
  void refresh(int j, const MessageViews& own_views) {
    const AgentModel& m = agents_[static_cast<size_t>(j)];
    const int W = batch_.window;
    enc_[static_cast<size_t>(j)].clear();
    for (int s = 0; s <= W; ++s) {
      enc_[static_cast<size_t>(j)].push_back(
          m.encode(batch_.obs[static_cast<size_t>(j)][static_cast<size_t>(s)]));
    }
    rollout_[static_cast<size_t>(j)] = rollout_latents(m, batch_, own_views.main, m.cfg.horizon);
  }

 private:
  const std::vector<AgentModel>& agents_;
  const TrajectoryBatch& batch_;
  const TrainingMasks& masks_;
  std::vector<std::vector<Mat>> enc_;      // [agent][s], s = 0..W
  std::vector<std::vector<Mat>> rollout_;  // [agent][s], s = 0..H
};

}  // namespace

std::vector<MessageViews> build_all_views(const std::vector<AgentModel>& agents,
                                          const TrajectoryBatch& batch,
                                          const TrainingMasks& masks) {
  ViewBuilder builder(agents, batch, masks);
  std::vector<MessageViews> views(agents.size());
  std::vector<int> preds;
  for (int i : masks.order) {
    views[static_cast<size_t>(i)] = builder.build(i, preds);
    builder.refresh(i, views[static_cast<size_t>(i)]);
    preds.push_back(i);
  }
  return views;
}

std::vector<LossReport> sequential_update(std::vector<AgentModel>& agents,
                                          const TrajectoryBatch& batch,
                                          const UpdateOptions& opts, Rng& rng) {
  const int n = static_cast<int>(agents.size());
  if (n == 0) throw ConfigError("sequential_update: no agents");
  const int W = batch.window;
  const int B = batch.batch;

  TrainingMasks masks = sample_masks(n, W, B, opts.drop_prob, opts.permute, rng);

  ViewBuilder builder(agents, batch, masks);
  std::vector<MessageViews> views(static_cast<size_t>(n));
  std::vector<LossReport> reports(static_cast<size_t>(n));

  // Phase 1: world-model heads, in communication order.
  std::vector<int> preds;
  for (int k = 0; k < n; ++k) {
    const int i = masks.order[static_cast<size_t>(k)];
    AgentModel& m = agents[static_cast<size_t>(i)];
    views[static_cast<size_t>(i)] = builder.build(i, preds);
    ModelLossInputs inputs =
        prepare_model_loss(m, batch, views[static_cast<size_t>(i)], opts.teacher_forced);
    {
      Eigen::Map<const Vec> flat(inputs.td_targets.data(), inputs.td_targets.size());
      codec::percentile_update(m.qscale, Vec(flat));
    }
    m.zero_grads();
    reports[static_cast<size_t>(i)] = model_loss(m, inputs, /*accumulate_grads=*/true);
    bool ok = adam_step(m.encoder.params(), m.adam_encoder);
    ok = adam_step(m.dynamics.params(), m.adam_dynamics) && ok;
    ok = adam_step(m.reward_head.params(), m.adam_reward) && ok;
    ok = adam_step(m.critic.params(), m.adam_critic) && ok;
    reports[static_cast<size_t>(i)].model_step_applied = ok;
    if (!ok) m.skipped_steps += 1;
    m.update_target(m.cfg.target_ema);

    builder.refresh(i, views[static_cast<size_t>(i)]);
    preds.push_back(i);
  }

  // Phase 2: actors, against the fully updated world models.
  if (opts.update_actors) {
    for (int k = 0; k < n; ++k) {
      const int i = masks.order[static_cast<size_t>(k)];
      AgentModel& m = agents[static_cast<size_t>(i)];
      ActorLossInputs inputs = prepare_actor_loss(m, batch, views[static_cast<size_t>(i)], rng);
      m.actor.zero_grads();
      real entropy = 0;
      reports[static_cast<size_t>(i)].actor_loss =
          actor_loss(m, inputs, /*accumulate_grads=*/true, &entropy);
      reports[static_cast<size_t>(i)].entropy = entropy;
      bool ok = adam_step(m.actor.params(), m.adam_actor);
      reports[static_cast<size_t>(i)].actor_step_applied = ok;
      if (!ok) m.skipped_steps += 1;
    }
  }
  return reports;
}

}  // namespace baton
