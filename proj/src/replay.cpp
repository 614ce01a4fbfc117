#include "baton/replay.hpp"

namespace baton {

ReplayBuffer::ReplayBuffer(int64_t capacity_transitions) : capacity_(capacity_transitions) {
  if (capacity_ < 1) throw ConfigError("ReplayBuffer: capacity must be positive");
}

void ReplayBuffer::add(Episode ep) {
  const int T = ep.length();
  if (T < 1) throw DimensionError("ReplayBuffer: empty episode");
  if (ep.obs.empty() || ep.obs[0].cols() != T + 1) {
    throw DimensionError("ReplayBuffer: episode needs T+1 observation columns");
  }
  transitions_ += T;
  episodes_.push_back(std::move(ep));
  while (transitions_ > capacity_ && episodes_.size() > 1) {
    transitions_ -= episodes_.front().length();
    episodes_.pop_front();
  }
}

bool ReplayBuffer::can_sample(int min_len) const {
  for (const Episode& ep : episodes_) {
    if (ep.length() >= min_len) return true;
  }
  return false;
}

TrajectoryBatch ReplayBuffer::sample(int batch, int window, int min_len, Rng& rng) const {
  if (batch < 1 || window < 1 || min_len < 1 || min_len > window) {
    throw ConfigError("ReplayBuffer::sample: bad batch/window/min_len");
  }
  // Eligible starts per episode: t in [0, T - min_len].
  std::vector<int64_t> cum;
  cum.reserve(episodes_.size());
  int64_t total = 0;
  for (const Episode& ep : episodes_) {
    const int64_t starts = std::max<int64_t>(0, ep.length() - min_len + 1);
    total += starts;
    cum.push_back(total);
  }
  if (total == 0) throw Error("ReplayBuffer::sample: no window of the requested length stored");

  const int n_agents = static_cast<int>(episodes_.front().obs.size());
  const int obs_dim = static_cast<int>(episodes_.front().obs[0].rows());
  const int act_dim = static_cast<int>(episodes_.front().act[0].rows());

  TrajectoryBatch out;
  out.batch = batch;
  out.window = window;
  out.obs.assign(static_cast<size_t>(n_agents),
                 std::vector<Mat>(static_cast<size_t>(window) + 1, Mat::Zero(obs_dim, batch)));
  out.act.assign(static_cast<size_t>(n_agents),
                 std::vector<Mat>(static_cast<size_t>(window), Mat::Zero(act_dim, batch)));
  out.rewards = Mat::Zero(window, batch);
  out.valid_len.assign(static_cast<size_t>(batch), 0);
  out.terminal.assign(static_cast<size_t>(batch), 0);

  std::uniform_int_distribution<int64_t> pick(0, total - 1);
  for (int b = 0; b < batch; ++b) {
    const int64_t r = pick(rng);
    size_t e = static_cast<size_t>(
        std::lower_bound(cum.begin(), cum.end(), r + 1) - cum.begin());
    const Episode& ep = episodes_[e];
    const int64_t base = e == 0 ? 0 : cum[e - 1];
    const int t = static_cast<int>(r - base);
    const int T = ep.length();
    const int len = std::min(window, T - t);
    out.valid_len[static_cast<size_t>(b)] = len;
    out.terminal[static_cast<size_t>(b)] = (ep.terminal && t + len == T) ? 1 : 0;
    for (int a = 0; a < n_agents; ++a) {
      for (int s = 0; s <= len; ++s) {
        out.obs[static_cast<size_t>(a)][static_cast<size_t>(s)].col(b) =
            ep.obs[static_cast<size_t>(a)].col(t + s);
      }
      for (int s = 0; s < len; ++s) {
        out.act[static_cast<size_t>(a)][static_cast<size_t>(s)].col(b) =
            ep.act[static_cast<size_t>(a)].col(t + s);
      }
    }
    for (int s = 0; s < len; ++s) out.rewards(s, b) = ep.rewards(t + s);
  }
  return out;
}

}  // namespace baton
