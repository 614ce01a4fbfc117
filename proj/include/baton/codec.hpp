#pragma once

#include "baton/common.hpp"

namespace baton::codec {

// sign(x) * ln(1 + |x|) and its exact inverse.
inline real symlog(real x) { return std::copysign(std::log1p(std::abs(x)), x); }
inline real symexp(real x) { return std::copysign(std::expm1(std::abs(x)), x); }

// Uniform bin centers in symlog space. Encoding and decoding both work
// on symlog-transformed scalars; out-of-range values clamp to the edge
// bins. Centers are materialized once so every consumer sees bitwise
// identical values.
struct BinGrid {
  int num_bins = 101;
  real low = -20;   // first center, symlog space
  real high = 20;   // last center

  BinGrid() { rebuild(); }
  BinGrid(int bins, real lo, real hi) : num_bins(bins), low(lo), high(hi) { rebuild(); }
  void validate() const {
    if (num_bins < 2) throw ConfigError("BinGrid: need at least 2 bins");
    if (!(high > low)) throw ConfigError("BinGrid: range_high must exceed range_low");
  }
  real spacing() const { return (high - low) / static_cast<real>(num_bins - 1); }
  real center(int i) const { return centers_(i); }
  const Vec& centers() const { return centers_; }

 private:
  void rebuild() {
    validate();
    centers_ = Vec(num_bins);
    for (int i = 0; i < num_bins; ++i) {
      centers_(i) = low + spacing() * static_cast<real>(i);
    }
    centers_(num_bins - 1) = high;
  }
  Vec centers_;
};

// Weights over the two bins adjacent to symlog(r): non-negative, sum to
// one, at most two contiguous nonzeros.
Vec twohot_encode(real r, const BinGrid& grid);

// symexp of the probability-weighted bin center. Input may be logits
// (softmax applied) or an existing probability vector.
real twohot_decode_probs(const Vec& probs, const BinGrid& grid);
real twohot_decode(const Vec& logits, const BinGrid& grid);
// Column-batched decode of logits.
Vec twohot_decode_batch(const Mat& logits, const BinGrid& grid);

// -sum_i twohot(target)_i * log softmax(logits)_i
real soft_cross_entropy(const Vec& logits, real target, const BinGrid& grid);

// Grouped softmax onto length-L simplices; len(z) must divide by L.
Vec sem_norm(const Vec& z, int L);

// EMA of the p95-p5 spread of a value batch, floored so downstream
// divisions stay bounded.
struct PercentileScaler {
  real scale = 1.0;
  real ema = 0.99;
  real floor = 1e-2;
};

// Linear-interpolation percentile (rank = q*(n-1)) of an unsorted batch.
real percentile(const Vec& values, real q);

void percentile_update(PercentileScaler& scaler, const Vec& value_batch);

}  // namespace baton::codec
