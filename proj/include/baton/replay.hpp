#pragma once

#include "baton/worldmodel.hpp"

#include <deque>

namespace baton {

struct Episode {
  std::vector<Mat> obs;  // per agent: obs_dim x (T+1)
  std::vector<Mat> act;  // per agent: act_dim x T
  Vec rewards;           // T
  bool terminal = false;  // ended by true termination rather than the step limit

  int length() const { return static_cast<int>(rewards.size()); }
};

// Episode-keyed ring buffer. Windows are sampled uniformly over all
// (episode, start) pairs leaving at least min_len transitions, so a
// window never crosses an episode boundary; shorter-than-window tails
// surface through TrajectoryBatch::valid_len.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(int64_t capacity_transitions);

  void add(Episode ep);
  int64_t transitions() const { return transitions_; }
  size_t episodes() const { return episodes_.size(); }
  bool can_sample(int min_len) const;

  TrajectoryBatch sample(int batch, int window, int min_len, Rng& rng) const;

 private:
  int64_t capacity_;
  int64_t transitions_ = 0;
  std::deque<Episode> episodes_;
};

}  // namespace baton
