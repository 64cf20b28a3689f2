#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "t2ic/tensor.hpp"

namespace t2ic {

// Shared tensor container: magic "T2IC", version u32, tensor count u32, then
// per tensor: name length u16 + UTF-8 name, rank u8, dims as u32, raw
// little-endian f32 payload. Used for datasets, checkpoints and feature dumps.
class TensorFile {
 public:
  static constexpr std::uint32_t kVersion = 1;

  void put(const std::string& name, Tensor<float> t) {
    for (auto& e : entries_)
      if (e.first == name) {
        e.second = std::move(t);
        return;
      }
    entries_.emplace_back(name, std::move(t));
  }

  template <typename T>
  void put_as_f32(const std::string& name, const Tensor<T>& t) {
    Tensor<float> f(t.shape());
    for (std::size_t i = 0; i < t.numel(); ++i) f[i] = static_cast<float>(t[i]);
    put(name, std::move(f));
  }

  bool has(const std::string& name) const {
    for (auto& e : entries_)
      if (e.first == name) return true;
    return false;
  }

  const Tensor<float>& get(const std::string& name) const {
    for (auto& e : entries_)
      if (e.first == name) return e.second;
    throw std::runtime_error("tensor file: missing tensor '" + name + "'");
  }

  template <typename T>
  Tensor<T> get_as(const std::string& name) const {
    const Tensor<float>& f = get(name);
    Tensor<T> t(f.shape());
    for (std::size_t i = 0; i < f.numel(); ++i) t[i] = static_cast<T>(f[i]);
    return t;
  }

  const std::vector<std::pair<std::string, Tensor<float>>>& entries() const {
    return entries_;
  }

  void save(const std::string& path) const {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open for writing: " + path);
    os.write("T2IC", 4);
    write_u32(os, kVersion);
    write_u32(os, static_cast<std::uint32_t>(entries_.size()));
    for (const auto& [name, t] : entries_) {
      if (name.size() > 0xffff) throw std::runtime_error("tensor name too long");
      write_u16(os, static_cast<std::uint16_t>(name.size()));
      os.write(name.data(), static_cast<std::streamsize>(name.size()));
      os.put(static_cast<char>(t.rank()));
      for (auto d : t.shape()) write_u32(os, static_cast<std::uint32_t>(d));
      os.write(reinterpret_cast<const char*>(t.data()),
               static_cast<std::streamsize>(t.numel() * sizeof(float)));
    }
    if (!os) throw std::runtime_error("write failed: " + path);
  }

  static TensorFile load(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open: " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "T2IC", 4) != 0)
      throw std::runtime_error("bad magic in " + path);
    std::uint32_t version = read_u32(is, path);
    if (version != kVersion)
      throw std::runtime_error("unsupported version " + std::to_string(version) +
                               " in " + path);
    std::uint32_t count = read_u32(is, path);
    TensorFile tf;
    for (std::uint32_t i = 0; i < count; ++i) {
      std::uint16_t nlen = read_u16(is, path);
      std::string name(nlen, '\0');
      is.read(name.data(), nlen);
      int rank = is.get();
      if (rank < 0) throw std::runtime_error("truncated file: " + path);
      std::vector<std::size_t> shape(static_cast<std::size_t>(rank));
      for (auto& d : shape) d = read_u32(is, path);
      Tensor<float> t(shape);
      is.read(reinterpret_cast<char*>(t.data()),
              static_cast<std::streamsize>(t.numel() * sizeof(float)));
      if (!is) throw std::runtime_error("truncated file: " + path);
      tf.entries_.emplace_back(std::move(name), std::move(t));
    }
    return tf;
  }

  // Bit-exact u64 storage (e.g. RNG state) as two f32 bit patterns.
  void put_u64(const std::string& name, std::uint64_t v) {
    Tensor<float> t({2});
    std::uint32_t lo = static_cast<std::uint32_t>(v & 0xffffffffULL);
    std::uint32_t hi = static_cast<std::uint32_t>(v >> 32);
    std::memcpy(&t[0], &lo, 4);
    std::memcpy(&t[1], &hi, 4);
    put(name, std::move(t));
  }

  std::uint64_t get_u64(const std::string& name) const {
    const Tensor<float>& t = get(name);
    if (t.numel() != 2) throw std::runtime_error("bad u64 tensor: " + name);
    std::uint32_t lo, hi;
    std::memcpy(&lo, &t[0], 4);
    std::memcpy(&hi, &t[1], 4);
    return (static_cast<std::uint64_t>(hi) << 32) | lo;
  }

 private:
  static void write_u16(std::ostream& os, std::uint16_t v) {
    char b[2] = {static_cast<char>(v & 0xff), static_cast<char>(v >> 8)};
    os.write(b, 2);
  }
  static void write_u32(std::ostream& os, std::uint32_t v) {
    char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    os.write(b, 4);
  }
  static std::uint16_t read_u16(std::istream& is, const std::string& path) {
    unsigned char b[2];
    is.read(reinterpret_cast<char*>(b), 2);
    if (!is) throw std::runtime_error("truncated file: " + path);
    return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
  }
  static std::uint32_t read_u32(std::istream& is, const std::string& path) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    if (!is) throw std::runtime_error("truncated file: " + path);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) |
           (static_cast<std::uint32_t>(b[3]) << 24);
  }

  std::vector<std::pair<std::string, Tensor<float>>> entries_;
};

}  // namespace t2ic
