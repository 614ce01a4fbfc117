#pragma once

#include "baton/common.hpp"

#include <iosfwd>
#include <map>
#include <string>
#include <vector>

namespace baton {

enum class KeyType { Str, Int, Real, Bool };

struct ConfigKey {
  const char* name;
  KeyType type;
  const char* default_value;
  const char* doc;
};

// Flat typed key-value configuration. Every key is declared up front with
// a default; loading a file or setting an unknown or ill-typed key is a
// hard error.
class RunConfig {
 public:
  RunConfig();

  // File format: one `key = value` per line, '#' starts a comment.
  void load_file(const std::string& path);
  void set(const std::string& key, const std::string& value);

  const std::string& get_str(const std::string& key) const;
  int64_t get_int(const std::string& key) const;
  real get_real(const std::string& key) const;
  bool get_bool(const std::string& key) const;

  static const std::vector<ConfigKey>& schema();
  static void print_schema(std::ostream& os);

  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  const ConfigKey& key_info(const std::string& key) const;
  std::map<std::string, std::string> values_;
};

}  // namespace baton
