#pragma once

#include "baton/common.hpp"

#include <fstream>
#include <string>
#include <vector>

namespace baton {

struct MetricsRow {
  int64_t step = 0;
  int64_t episode = 0;
  real episode_return = 0;
  int success = 0;
  real dyn_loss = 0;
  real rew_loss = 0;
  real q_loss = 0;
  real actor_loss = 0;
  real entropy = 0;
  real plan_iters = 0;
  real step_ms = 0;  // wall time; excluded from determinism comparisons
  real q_scale = 0;
};

// Append-only CSV, one row per episode, header first, flushed per row so
// the file parses after abrupt termination (any trailing partial line is
// ignored by the reader).
class MetricsWriter {
 public:
  explicit MetricsWriter(const std::string& path);
  void append(const MetricsRow& row);
  static const char* header();

 private:
  std::ofstream out_;
};

std::vector<MetricsRow> read_metrics(const std::string& path);

}  // namespace baton
