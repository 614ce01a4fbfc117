#pragma once

#include "baton/common.hpp"

#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

namespace baton {

enum class MessageMode : uint8_t { Full = 0, ActionOnly = 1 };

// Fixed-length masked concatenation of predecessor predictions: one slot
// per agent, slot j holding (z_j || a_j) in Full mode or a_j alone in
// ActionOnly mode. Invalid slots keep an all-zero payload.
class Message {
 public:
  Message() = default;
  Message(int n_agents, int act_dim, int latent_dim, MessageMode mode);

  int n_agents() const { return n_; }
  int act_dim() const { return act_dim_; }
  int latent_dim() const { return latent_dim_; }
  MessageMode mode() const { return mode_; }
  int slot_width() const {
    return act_dim_ + (mode_ == MessageMode::Full ? latent_dim_ : 0);
  }
  int slot_offset(int slot) const { return slot * slot_width(); }
  int payload_size() const { return n_ * slot_width(); }

  bool valid(int slot) const { return valid_.at(static_cast<size_t>(slot)) != 0; }
  bool from_cache(int slot) const { return cached_.at(static_cast<size_t>(slot)) != 0; }
  const Vec& payload() const { return payload_; }

  // Fills slot `slot` with (z || a); throws on double fill.
  void append_slot(int slot, const Vec& z, const Vec& a, bool from_cache = false);
  void clear_slot(int slot);
  std::pair<Vec, Vec> read_slot(int slot) const;  // (z, a); z empty in ActionOnly mode

  // Model-input view: payload with invalid slots forced to zero, so any
  // consumer is invariant to garbage bytes behind a false validity bit.
  Vec to_input() const;

  // Wire format (little-endian): u8 version, u8 mode, u16 n, u32 act_dim,
  // u32 latent_dim, validity bitmap (ceil(n/8) bytes), then all n slots
  // as float32, invalid slots serialized as zeros.
  std::vector<uint8_t> serialize() const;
  static Message deserialize(const std::vector<uint8_t>& bytes);

 private:
  int n_ = 0, act_dim_ = 0, latent_dim_ = 0;
  MessageMode mode_ = MessageMode::Full;
  Vec payload_;
  std::vector<uint8_t> valid_;
  std::vector<uint8_t> cached_;
};

inline Message empty_message(int n_agents, int act_dim, int latent_dim, MessageMode mode) {
  return Message(n_agents, act_dim, latent_dim, mode);
}

// Per-link Bernoulli drop model, independent across timesteps. Draws are
// a pure hash of (seed, sender, receiver, t), so outcomes do not depend
// on call order.
struct LinkModel {
  real drop_prob = 0;
  uint64_t seed = 0;

  bool delivered(int sender, int receiver, long t) const {
    if (drop_prob <= 0) return true;
    if (drop_prob >= 1) return false;
    uint64_t h = seed_stream(seed, 0x6c696e6bULL + static_cast<uint64_t>(sender),
                             static_cast<uint64_t>(receiver), static_cast<uint64_t>(t));
    real u = static_cast<real>(h >> 11) * real(0x1.0p-53);
    return u >= drop_prob;
  }
};

// A sender's predicted (latent, action) slices for timesteps t0..t0+S-1:
// the planner's outgoing intention and the cache's stored entry.
struct PredictedTrajectory {
  long t0 = 0;
  Mat latents;  // latent_dim x S (zero rows in ActionOnly mode)
  Mat actions;  // act_dim x S
  int steps() const { return static_cast<int>(actions.cols()); }
};

// Receiver-owned store of each predecessor's last transmitted prediction;
// consulted when a fresh message fails to arrive.
class CommCache {
 public:
  explicit CommCache(int n_agents) : slots_(static_cast<size_t>(n_agents)) {}

  void store(int sender, PredictedTrajectory pred);
  // (z, a) the sender predicted for timestep t, or nullopt when nothing
  // stored, t precedes the stored window, or t is beyond its horizon.
  std::optional<std::pair<Vec, Vec>> lookup(int sender, long t) const;
  bool empty(int sender) const { return !slots_.at(static_cast<size_t>(sender)).has_value(); }

  int64_t hits = 0;
  int64_t misses = 0;

 private:
  std::vector<std::optional<PredictedTrajectory>> slots_;
};

// Delivers `now` to `receiver_index` at timestep t. Surviving slots pass
// through unchanged and the sender's next-step payload (from `next_pred`)
// is cached; dropped slots fall back to the cached prediction for t, kept
// valid but flagged as cache-sourced, or go invalid when the cache cannot
// answer.
Message transmit(const Message& now, const Message& next_pred, const LinkModel& link,
                 CommCache& cache, int receiver_index, long t);

}  // namespace baton
