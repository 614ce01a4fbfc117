#include "baton/planner.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <numeric>

namespace baton {

void PlannerConfig::validate() const {
  if (horizon < 1 || iterations < 1) throw ConfigError("planner: horizon and iterations >= 1");
  if (!(temperature > 0)) throw ConfigError("planner: temperature must be positive");
  if (num_samples < 0 || actor_samples < 0 || num_samples + actor_samples < 1) {
    throw ConfigError("planner: need at least one candidate source");
  }
  if (elites < 1 || elites > num_samples + actor_samples) {
    throw ConfigError("planner: elites must be in [1, num_samples + actor_samples]");
  }
  if (cutoff_ratio != 0 && !(cutoff_ratio > 0 && cutoff_ratio < real(0.5))) {
    throw ConfigError("planner: cutoff_ratio must be 0 or in (0, 0.5)");
  }
  if (!(sigma_floor > 0) || !(sigma_init >= sigma_floor)) {
    throw ConfigError("planner: sigma_init >= sigma_floor > 0 required");
  }
  if (kl_threshold < 0) throw ConfigError("planner: kl_threshold must be >= 0");
}

Mat AgentModelView::step(const Mat& z, const Mat& a, const Vec& e, Vec* reward) const {
  if (reward) {
    AgentModel::StepOut out = m_->predict_step(z, a, Mat(e));
    *reward = codec::twohot_decode_batch(out.r_logits, m_->grid);
    return out.z_next;
  }
  return m_->dynamics.infer(m_->assemble(z, a, Mat(e)));
}

Vec AgentModelView::q_value(const Mat& z, const Mat& a, const Vec& e) const {
  return m_->critic_values(z, a, Mat(e), /*use_target=*/false);
}

Mat AgentModelView::actor_act(const Mat& z, const Vec& e, bool stochastic, Rng& rng) const {
  return m_->actor_sample_batch(z, Mat(e), stochastic, rng);
}

Mat lowpass_filter(const Mat& x, real cutoff_ratio) {
  if (!(cutoff_ratio > 0 && cutoff_ratio < real(0.5))) {
    throw ConfigError("lowpass_filter: cutoff_ratio must lie in (0, 0.5)");
  }
  const real c = std::tan(real(M_PI) * cutoff_ratio);
  const real beta = (real(1) - c) / (real(1) + c);
  const real gain = (real(1) - beta) / 2;
  Mat y = x;
  for (Eigen::Index t = 1; t < x.rows(); ++t) {
    y.row(t) = gain * (x.row(t) + x.row(t - 1)) + beta * y.row(t - 1);
  }
  return y;
}

namespace {

// Same recursion as lowpass_filter with time as the vector index; each
// entry is act_dim x N.
void lowpass_filter_steps(std::vector<Mat>& x, real cutoff_ratio) {
  const real c = std::tan(real(M_PI) * cutoff_ratio);
  const real beta = (real(1) - c) / (real(1) + c);
  const real gain = (real(1) - beta) / 2;
  Mat prev_x = x[0];
  for (size_t t = 1; t < x.size(); ++t) {
    Mat cur = x[t];
    x[t] = gain * (cur + prev_x) + beta * x[t - 1];
    prev_x = std::move(cur);
  }
}

Vec resolve_msg(const std::vector<Vec>& msgs, size_t h) {
  return msgs.size() == 1 ? msgs[0] : msgs.at(h);
}

}  // namespace

CandidateSet sample_candidates(const ActionDistribution& dist, const PlannerModel& model,
                               const Vec& z0, const std::vector<Vec>& msg_inputs,
                               const PlannerConfig& cfg, Rng& rng) {
  cfg.validate();
  const int H = cfg.horizon;
  const int A = model.act_dim();
  const int Np = cfg.num_samples;
  const int Na = cfg.actor_samples;
  if (dist.mean.rows() != A || dist.mean.cols() != H) {
    throw DimensionError("sample_candidates: distribution shape mismatch");
  }

  std::vector<Mat> noise;
  noise.reserve(static_cast<size_t>(H));
  std::normal_distribution<double> normal(0, 1);
  for (int h = 0; h < H; ++h) {
    Mat n(A, Np);
    for (Eigen::Index c = 0; c < n.cols(); ++c) {
      for (Eigen::Index r = 0; r < n.rows(); ++r) n(r, c) = static_cast<real>(normal(rng));
    }
    noise.push_back(std::move(n));
  }
  if (cfg.cutoff_ratio > 0 && H > 1) lowpass_filter_steps(noise, cfg.cutoff_ratio);

  CandidateSet set;
  set.actions.reserve(static_cast<size_t>(H));
  for (int h = 0; h < H; ++h) {
    Mat a(A, Np + Na);
    a.leftCols(Np) = ((noise[static_cast<size_t>(h)].array().colwise() *
                       dist.std.col(h).array())
                          .colwise() +
                      dist.mean.col(h).array())
                         .cwiseMax(real(-1))
                         .cwiseMin(real(1))
                         .matrix();
    set.actions.push_back(std::move(a));
  }

  if (Na > 0) {
    Mat z = z0.replicate(1, Na);
    for (int h = 0; h < H; ++h) {
      Vec e = resolve_msg(msg_inputs, static_cast<size_t>(h));
      Mat a = model.actor_act(z, e, /*stochastic=*/true, rng);
      set.actions[static_cast<size_t>(h)].rightCols(Na) = a;
      if (h + 1 < H) z = model.step(z, a, e, nullptr);
    }
  }

  set.from_actor.assign(static_cast<size_t>(Np + Na), 0);
  for (int i = 0; i < Na; ++i) set.from_actor[static_cast<size_t>(Np + i)] = 1;
  set.values = Vec::Zero(Np + Na);
  return set;
}

void evaluate_candidates(CandidateSet& set, const PlannerModel& model, const Vec& z0,
                         const std::vector<Vec>& msg_inputs, const PlannerConfig& cfg) {
  const int H = static_cast<int>(set.actions.size());
  const int N = set.count();
  Mat z = z0.replicate(1, N);
  Vec values = Vec::Zero(N);
  real disc = 1;
  for (int h = 0; h < H; ++h) {
    Vec e = resolve_msg(msg_inputs, static_cast<size_t>(h));
    Vec r(N);
    z = model.step(z, set.actions[static_cast<size_t>(h)], e, &r);
    values += disc * r;
    disc *= cfg.discount;
  }
  Vec e_last = resolve_msg(msg_inputs, static_cast<size_t>(H));
  Rng unused(0);  // deterministic terminal action draws nothing
  Mat a_last = model.actor_act(z, e_last, /*stochastic=*/false, unused);
  values += disc * model.q_value(z, a_last, e_last);

  set.discarded = 0;
  for (int i = 0; i < N; ++i) {
    if (!std::isfinite(static_cast<double>(values(i)))) {
      values(i) = -std::numeric_limits<real>::infinity();
      set.discarded += 1;
    }
  }
  if (set.discarded > 0) {
    std::cerr << "planner: discarded " << set.discarded << " non-finite candidate values\n";
  }
  set.values = std::move(values);
}

ActionDistribution update_distribution(const ActionDistribution& dist, const CandidateSet& set,
                                       const PlannerConfig& cfg) {
  const int N = set.count();
  const int H = static_cast<int>(set.actions.size());
  const int A = static_cast<int>(dist.mean.rows());

  std::vector<int> idx;
  idx.reserve(static_cast<size_t>(N));
  for (int i = 0; i < N; ++i) {
    if (std::isfinite(static_cast<double>(set.values(i)))) idx.push_back(i);
  }
  if (idx.empty()) return dist;  // nothing usable this iteration

  const int M = std::min<int>(cfg.elites, static_cast<int>(idx.size()));
  std::partial_sort(idx.begin(), idx.begin() + M, idx.end(), [&](int a, int b) {
    if (set.values(a) != set.values(b)) return set.values(a) > set.values(b);
    return a < b;
  });
  idx.resize(static_cast<size_t>(M));

  real vmax = set.values(idx[0]);
  Vec w(M);
  for (int m = 0; m < M; ++m) {
    w(m) = std::exp(cfg.temperature * (set.values(idx[static_cast<size_t>(m)]) - vmax));
  }
  const real wsum = w.sum();

  ActionDistribution out;
  out.mean = Mat::Zero(A, H);
  out.std = Mat::Zero(A, H);
  for (int h = 0; h < H; ++h) {
    const Mat& acts = set.actions[static_cast<size_t>(h)];
    Vec mu = Vec::Zero(A);
    for (int m = 0; m < M; ++m) mu += w(m) * acts.col(idx[static_cast<size_t>(m)]);
    mu /= wsum;
    Vec var = Vec::Zero(A);
    for (int m = 0; m < M; ++m) {
      Vec d = acts.col(idx[static_cast<size_t>(m)]) - mu;
      var += w(m) * d.cwiseProduct(d);
    }
    var /= wsum;
    out.mean.col(h) = mu.cwiseMax(real(-1)).cwiseMin(real(1));
    out.std.col(h) = var.cwiseSqrt().cwiseMax(cfg.sigma_floor);
  }
  return out;
}

real kl_diag_gaussian(const ActionDistribution& p, const ActionDistribution& q) {
  if (p.mean.rows() != q.mean.rows() || p.mean.cols() != q.mean.cols()) {
    throw DimensionError("kl_diag_gaussian: shape mismatch");
  }
  real kl = 0;
  for (Eigen::Index c = 0; c < p.mean.cols(); ++c) {
    for (Eigen::Index r = 0; r < p.mean.rows(); ++r) {
      const real sp = p.std(r, c);
      const real sq = q.std(r, c);
      const real dm = p.mean(r, c) - q.mean(r, c);
      kl += std::log(sq / sp) + (sp * sp + dm * dm) / (2 * sq * sq) - real(0.5);
    }
  }
  return kl;
}

PlanResult plan(const PlannerModel& model, const Vec& obs, const std::vector<Message>& incoming,
                const std::optional<ActionDistribution>& warm, const PlannerConfig& cfg,
                uint64_t seed, long t0) {
  cfg.validate();
  const int H = cfg.horizon;
  const int A = model.act_dim();
  if (incoming.empty()) throw DimensionError("plan: need at least one incoming message");
  if (incoming.size() != 1 && static_cast<int>(incoming.size()) != H + 1) {
    throw DimensionError("plan: incoming message schedule must have 1 or horizon+1 entries");
  }

  std::vector<Vec> msg_inputs;
  msg_inputs.reserve(incoming.size());
  for (const Message& m : incoming) msg_inputs.push_back(m.to_input());

  Vec z0 = model.encode(obs);

  ActionDistribution dist;
  dist.std = Mat::Constant(A, H, cfg.sigma_init);
  if (warm.has_value()) {
    // receding-horizon shift: drop the executed step, repeat the last
    dist.mean = Mat(A, H);
    if (H > 1) dist.mean.leftCols(H - 1) = warm->mean.rightCols(H - 1);
    dist.mean.col(H - 1) = warm->mean.col(warm->mean.cols() - 1);
  } else {
    dist.mean = Mat::Zero(A, H);
  }

  Rng rng(seed);
  PlanResult res;
  res.iterations_used = 0;
  for (int k = 0; k < cfg.iterations; ++k) {
    CandidateSet set = sample_candidates(dist, model, z0, msg_inputs, cfg, rng);
    evaluate_candidates(set, model, z0, msg_inputs, cfg);
    res.discarded += set.discarded;
    ActionDistribution next = update_distribution(dist, set, cfg);
    const real kl = kl_diag_gaussian(next, dist);
    dist = std::move(next);
    res.iterations_used = k + 1;
    if (cfg.kl_threshold > 0 && kl < cfg.kl_threshold) break;
  }

  // Roll the final mean once more for the outgoing intention.
  res.trajectory.t0 = t0;
  res.trajectory.latents = Mat(model.latent_dim(), H + 1);
  res.trajectory.actions = Mat(A, H + 1);
  Mat z = z0;
  res.trajectory.latents.col(0) = z0;
  for (int h = 0; h < H; ++h) {
    res.trajectory.actions.col(h) = dist.mean.col(h);
    z = model.step(z, Mat(dist.mean.col(h)), resolve_msg(msg_inputs, static_cast<size_t>(h)),
                   nullptr);
    res.trajectory.latents.col(h + 1) = z.col(0);
  }
  Rng unused(0);
  Vec e_last = resolve_msg(msg_inputs, static_cast<size_t>(H));
  res.trajectory.actions.col(H) = model.actor_act(z, e_last, false, unused).col(0);

  res.action = dist.mean.col(0);
  res.dist = std::move(dist);
  return res;
}

}  // namespace baton
