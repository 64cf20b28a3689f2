#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>

namespace t2ic {

// Flat UTF-8 "key = value" configuration. '#' starts a comment; blank lines
// are ignored. Callers validate the key set against their schema.
class Config {
 public:
  static Config parse_file(const std::string& path);
  static Config parse_text(const std::string& text);

  bool has(const std::string& key) const { return kv_.count(key) > 0; }
  std::string get_str(const std::string& key) const;
  std::string get_str(const std::string& key, const std::string& def) const;
  double get_num(const std::string& key, double def) const;
  std::int64_t get_int(const std::string& key, std::int64_t def) const;

  // Throws listing any key not in `allowed`.
  void check_keys(const std::set<std::string>& allowed) const;

  const std::map<std::string, std::string>& entries() const { return kv_; }

 private:
  std::map<std::string, std::string> kv_;
};

}  // namespace t2ic
