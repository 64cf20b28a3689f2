#include "t2ic/vocab.hpp"

#include <sstream>
#include <stdexcept>
#include <unordered_map>

namespace t2ic {

const std::vector<std::string>& vocab() {
  static const std::vector<std::string> v = {
      "<pad>",   "<s>",    "a",      "the",    "is",       "there",
      "on",      "in",     "at",     "of",     "small",    "medium",
      "large",   "red",    "green",  "blue",   "yellow",   "cyan",
      "magenta", "orange", "white",  "black",  "gray",     "circle",
      "square",  "triangle", "background", "top", "middle", "bottom",
      "left",    "center", "right",  "shape",  "sized",    "and",
      "drawn",   "its",    "color",  "with"};
  return v;
}

int token_id(const std::string& word) {
  static const std::unordered_map<std::string, int> index = [] {
    std::unordered_map<std::string, int> m;
    const auto& v = vocab();
    for (int i = 0; i < static_cast<int>(v.size()); ++i) m[v[i]] = i;
    return m;
  }();
  auto it = index.find(word);
  if (it == index.end()) throw std::runtime_error("unknown word: '" + word + "'");
  return it->second;
}

std::vector<std::uint16_t> tokenize(const std::string& text) {
  std::vector<std::uint16_t> ids;
  std::istringstream ss(text);
  std::string w;
  while (ss >> w) ids.push_back(static_cast<std::uint16_t>(token_id(w)));
  return ids;
}

std::string detokenize(const std::vector<std::uint16_t>& tokens) {
  std::string out;
  const auto& v = vocab();
  for (auto t : tokens) {
    if (t == kPadToken) continue;
    if (!out.empty()) out += ' ';
    out += v.at(t);
  }
  return out;
}

}  // namespace t2ic
