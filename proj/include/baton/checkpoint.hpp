#pragma once

#include "baton/common.hpp"

#include <map>
#include <string>
#include <vector>

namespace baton {

// Flat collection of named matrices, the unit of checkpoint IO. Scalars
// (Adam step counts, the percentile scale) travel as 1x1 entries.
class StateMap {
 public:
  void put(const std::string& name, Mat value);
  void put_scalar(const std::string& name, real value);
  const Mat& get(const std::string& name) const;
  real get_scalar(const std::string& name) const;
  bool contains(const std::string& name) const;
  const std::vector<std::pair<std::string, Mat>>& entries() const { return entries_; }

 private:
  std::vector<std::pair<std::string, Mat>> entries_;
  std::map<std::string, size_t> index_;
};

// On-disk layout: magic "BATONCK1", u32 format version, u64 manifest
// length, JSON manifest [{name, rows, cols, offset}], then one
// little-endian float64 array per entry in column-major order. Offsets
// are relative to the start of the data section. Writes go through a
// temp file and rename.
void save_checkpoint(const std::string& path, const StateMap& state);
StateMap load_checkpoint(const std::string& path);

}  // namespace baton
