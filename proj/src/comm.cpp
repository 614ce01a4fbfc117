#include "baton/comm.hpp"

#include <bit>
#include <cstring>

static_assert(std::endian::native == std::endian::little,
              "message wire format assumes a little-endian host");

namespace baton {

Message::Message(int n_agents, int act_dim, int latent_dim, MessageMode mode)
    : n_(n_agents), act_dim_(act_dim), latent_dim_(latent_dim), mode_(mode) {
  if (n_ <= 0 || act_dim_ <= 0 || latent_dim_ <= 0) {
    throw DimensionError("Message: dims must be positive");
  }
  payload_ = Vec::Zero(payload_size());
  valid_.assign(static_cast<size_t>(n_), 0);
  cached_.assign(static_cast<size_t>(n_), 0);
}

void Message::append_slot(int slot, const Vec& z, const Vec& a, bool from_cache) {
  if (slot < 0 || slot >= n_) throw DimensionError("Message: slot out of range");
  if (valid_[static_cast<size_t>(slot)]) {
    throw Error("Message: slot " + std::to_string(slot) + " already filled");
  }
  if (a.size() != act_dim_) throw DimensionError("Message: action length mismatch");
  const int off = slot_offset(slot);
  if (mode_ == MessageMode::Full) {
    if (z.size() != latent_dim_) throw DimensionError("Message: latent length mismatch");
    payload_.segment(off, latent_dim_) = z;
    payload_.segment(off + latent_dim_, act_dim_) = a;
  } else {
    payload_.segment(off, act_dim_) = a;
  }
  valid_[static_cast<size_t>(slot)] = 1;
  cached_[static_cast<size_t>(slot)] = from_cache ? 1 : 0;
}

void Message::clear_slot(int slot) {
  if (slot < 0 || slot >= n_) throw DimensionError("Message: slot out of range");
  payload_.segment(slot_offset(slot), slot_width()).setZero();
  valid_[static_cast<size_t>(slot)] = 0;
  cached_[static_cast<size_t>(slot)] = 0;
}

std::pair<Vec, Vec> Message::read_slot(int slot) const {
  if (slot < 0 || slot >= n_) throw DimensionError("Message: slot out of range");
  const int off = slot_offset(slot);
  if (mode_ == MessageMode::Full) {
    return {payload_.segment(off, latent_dim_), payload_.segment(off + latent_dim_, act_dim_)};
  }
  return {Vec(), payload_.segment(off, act_dim_)};
}

Vec Message::to_input() const {
  Vec out = Vec::Zero(payload_size());
  for (int s = 0; s < n_; ++s) {
    if (valid_[static_cast<size_t>(s)]) {
      out.segment(slot_offset(s), slot_width()) =
          payload_.segment(slot_offset(s), slot_width());
    }
  }
  return out;
}

std::vector<uint8_t> Message::serialize() const {
  const size_t bitmap_len = static_cast<size_t>((n_ + 7) / 8);
  std::vector<uint8_t> out;
  out.reserve(12 + bitmap_len + sizeof(float) * static_cast<size_t>(payload_size()));
  out.push_back(1);  // version
  out.push_back(static_cast<uint8_t>(mode_));
  uint16_t n16 = static_cast<uint16_t>(n_);
  uint32_t a32 = static_cast<uint32_t>(act_dim_);
  uint32_t z32 = static_cast<uint32_t>(latent_dim_);
  auto put = [&out](const void* p, size_t len) {
    const auto* b = static_cast<const uint8_t*>(p);
    out.insert(out.end(), b, b + len);
  };
  put(&n16, 2);
  put(&a32, 4);
  put(&z32, 4);
  std::vector<uint8_t> bitmap(bitmap_len, 0);
  for (int s = 0; s < n_; ++s) {
    if (valid_[static_cast<size_t>(s)]) bitmap[static_cast<size_t>(s / 8)] |= uint8_t(1u << (s % 8));
  }
  put(bitmap.data(), bitmap.size());
  for (int s = 0; s < n_; ++s) {
    for (int i = 0; i < slot_width(); ++i) {
      float f = valid_[static_cast<size_t>(s)]
                    ? static_cast<float>(payload_(slot_offset(s) + i))
                    : 0.0f;
      put(&f, 4);
    }
  }
  return out;
}

Message Message::deserialize(const std::vector<uint8_t>& bytes) {
  size_t pos = 0;
  auto need = [&](size_t len) {
    if (pos + len > bytes.size()) throw Error("Message: truncated wire payload");
  };
  need(2);
  uint8_t version = bytes[pos++];
  if (version != 1) throw Error("Message: unsupported wire version " + std::to_string(version));
  uint8_t mode_raw = bytes[pos++];
  if (mode_raw > 1) throw Error("Message: bad mode byte");
  auto get = [&](void* p, size_t len) {
    need(len);
    std::memcpy(p, bytes.data() + pos, len);
    pos += len;
  };
  uint16_t n16 = 0;
  uint32_t a32 = 0, z32 = 0;
  get(&n16, 2);
  get(&a32, 4);
  get(&z32, 4);
  Message m(static_cast<int>(n16), static_cast<int>(a32), static_cast<int>(z32),
            static_cast<MessageMode>(mode_raw));
  const size_t bitmap_len = static_cast<size_t>((m.n_ + 7) / 8);
  need(bitmap_len);
  const uint8_t* bitmap = bytes.data() + pos;
  pos += bitmap_len;
  for (int s = 0; s < m.n_; ++s) {
    bool v = (bitmap[static_cast<size_t>(s / 8)] >> (s % 8)) & 1u;
    for (int i = 0; i < m.slot_width(); ++i) {
      float f = 0;
      get(&f, 4);
      if (v) m.payload_(m.slot_offset(s) + i) = static_cast<real>(f);
    }
    m.valid_[static_cast<size_t>(s)] = v ? 1 : 0;
  }
  if (pos != bytes.size()) throw Error("Message: trailing bytes on wire payload");
  return m;
}

void CommCache::store(int sender, PredictedTrajectory pred) {
  slots_.at(static_cast<size_t>(sender)) = std::move(pred);
}

std::optional<std::pair<Vec, Vec>> CommCache::lookup(int sender, long t) const {
  const auto& slot = slots_.at(static_cast<size_t>(sender));
  if (!slot.has_value()) return std::nullopt;
  long idx = t - slot->t0;
  if (idx < 0 || idx >= slot->steps()) return std::nullopt;
  Vec z = slot->latents.size() > 0 ? Vec(slot->latents.col(idx)) : Vec();
  return std::make_pair(std::move(z), Vec(slot->actions.col(idx)));
}

Message transmit(const Message& now, const Message& next_pred, const LinkModel& link,
                 CommCache& cache, int receiver_index, long t) {
  Message out(now.n_agents(), now.act_dim(), now.latent_dim(), now.mode());
  for (int s = 0; s < now.n_agents(); ++s) {
    if (!now.valid(s)) continue;
    if (link.delivered(s, receiver_index, t)) {
      auto [z, a] = now.read_slot(s);
      out.append_slot(s, z, a, false);
      if (next_pred.valid(s)) {
        auto [zn, an] = next_pred.read_slot(s);
        PredictedTrajectory pred;
        pred.t0 = t + 1;
        pred.latents = zn.size() > 0 ? Mat(zn) : Mat(0, 1);
        pred.actions = Mat(an);
        cache.store(s, std::move(pred));
      }
    } else {
      auto cached = cache.lookup(s, t);
      if (cached.has_value()) {
        Vec z = cached->first.size() > 0 ? cached->first : Vec::Zero(now.latent_dim());
        out.append_slot(s, z, cached->second, true);
        cache.hits += 1;
      } else {
        cache.misses += 1;  // slot stays invalid; downstream degrades to decentralized
      }
    }
  }
  return out;
}

}  // namespace baton
