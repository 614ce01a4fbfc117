#include "baton/codec.hpp"

#include "baton/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace baton::codec {

Vec twohot_encode(real r, const BinGrid& grid) {
  if (!std::isfinite(static_cast<double>(r))) throw NumericsError("twohot_encode: non-finite input");
  const int B = grid.num_bins;
  Vec w = Vec::Zero(B);
  real x = symlog(r);
  if (x <= grid.low) {
    w(0) = 1;
    return w;
  }
  if (x >= grid.high) {
    w(B - 1) = 1;
    return w;
  }
  // k = number of centers <= x (1-based). The floor division only hints;
  // the literal comparison rule decides, so boundary values land exactly
  // where the counting definition puts them.
  int k = static_cast<int>(std::floor((x - grid.low) / grid.spacing())) + 1;
  k = std::clamp(k, 1, B - 1);
  while (k > 1 && grid.center(k - 1) > x) --k;
  while (k < B - 1 && grid.center(k) <= x) ++k;
  real bk = grid.center(k - 1);
  real bk1 = grid.center(k);
  real d = bk1 - bk;
  w(k - 1) = (bk1 - x) / d;
  w(k) = (x - bk) / d;
  return w;
}

real twohot_decode_probs(const Vec& probs, const BinGrid& grid) {
  if (probs.size() != grid.num_bins) throw DimensionError("twohot_decode: probability length mismatch");
  return symexp(probs.dot(grid.centers()));
}

real twohot_decode(const Vec& logits, const BinGrid& grid) {
  if (logits.size() != grid.num_bins) throw DimensionError("twohot_decode: logit length mismatch");
  Mat p = kernels::grouped_softmax(logits, static_cast<int>(logits.size()));
  return twohot_decode_probs(p.col(0), grid);
}

Vec twohot_decode_batch(const Mat& logits, const BinGrid& grid) {
  if (logits.rows() != grid.num_bins) throw DimensionError("twohot_decode: logit length mismatch");
  Mat p = kernels::grouped_softmax(logits, static_cast<int>(logits.rows()));
  Vec m = (grid.centers().transpose() * p).transpose();
  Vec out(m.size());
  for (Eigen::Index i = 0; i < m.size(); ++i) out(i) = symexp(m(i));
  return out;
}

real soft_cross_entropy(const Vec& logits, real target, const BinGrid& grid) {
  if (logits.size() != grid.num_bins) throw DimensionError("soft_cross_entropy: logit length mismatch");
  if (!logits.allFinite()) throw NumericsError("soft_cross_entropy: non-finite logits");
  Mat ls = kernels::log_softmax(logits);
  Vec t = twohot_encode(target, grid);
  return -t.dot(ls.col(0));
}

Vec sem_norm(const Vec& z, int L) {
  if (L <= 0 || z.size() % L != 0) {
    throw DimensionError("sem_norm: length " + std::to_string(z.size()) +
                         " not divisible by simplex length " + std::to_string(L));
  }
  return kernels::grouped_softmax(z, L).col(0);
}

real percentile(const Vec& values, real q) {
  if (values.size() == 0) throw DimensionError("percentile: empty batch");
  std::vector<real> sorted(values.data(), values.data() + values.size());
  std::sort(sorted.begin(), sorted.end());
  const real rank = q * static_cast<real>(sorted.size() - 1);
  const auto lo = static_cast<size_t>(std::floor(rank));
  const auto hi = static_cast<size_t>(std::ceil(rank));
  const real frac = rank - static_cast<real>(lo);
  return sorted[lo] + (sorted[hi] - sorted[lo]) * frac;
}

void percentile_update(PercentileScaler& scaler, const Vec& value_batch) {
  const real spread = percentile(value_batch, real(0.95)) - percentile(value_batch, real(0.05));
  scaler.scale = scaler.ema * scaler.scale + (real(1) - scaler.ema) * spread;
  scaler.scale = std::max(scaler.scale, scaler.floor);
}

}  // namespace baton::codec
