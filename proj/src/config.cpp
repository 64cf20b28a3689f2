#include "t2ic/config.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace t2ic {

namespace {
std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}
}  // namespace

Config Config::parse_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open config: " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_text(ss.str());
}

Config Config::parse_text(const std::string& text) {
  Config c;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    std::string s = trim(line);
    if (s.empty() || s[0] == '#') continue;
    std::size_t eq = s.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error("config line " + std::to_string(lineno) +
                               ": expected 'key = value'");
    std::string key = trim(s.substr(0, eq));
    std::string val = trim(s.substr(eq + 1));
    if (key.empty()) throw std::runtime_error("config line " + std::to_string(lineno) + ": empty key");
    if (c.kv_.count(key))
      throw std::runtime_error("config: duplicate key '" + key + "'");
    c.kv_[key] = val;
  }
  return c;
}

std::string Config::get_str(const std::string& key) const {
  auto it = kv_.find(key);
  if (it == kv_.end()) throw std::runtime_error("config: missing key '" + key + "'");
  return it->second;
}

std::string Config::get_str(const std::string& key, const std::string& def) const {
  auto it = kv_.find(key);
  return it == kv_.end() ? def : it->second;
}

double Config::get_num(const std::string& key, double def) const {
  auto it = kv_.find(key);
  if (it == kv_.end()) return def;
  try {
    return std::stod(it->second);
  } catch (...) {
    throw std::runtime_error("config: key '" + key + "' is not a number");
  }
}

std::int64_t Config::get_int(const std::string& key, std::int64_t def) const {
  auto it = kv_.find(key);
  if (it == kv_.end()) return def;
  try {
    return std::stoll(it->second);
  } catch (...) {
    throw std::runtime_error("config: key '" + key + "' is not an integer");
  }
}

void Config::check_keys(const std::set<std::string>& allowed) const {
  for (const auto& [k, v] : kv_)
    if (!allowed.count(k)) throw std::runtime_error("config: unknown key '" + k + "'");
}

}  // namespace t2ic
