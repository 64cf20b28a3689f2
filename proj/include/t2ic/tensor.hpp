#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace t2ic {

// Dense row-major tensor. Float for training, double for oracle/grad-check builds.
template <typename T>
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(std::vector<std::size_t> shape, T fill = T(0))
      : shape_(std::move(shape)),
        data_(numel_of(shape_), fill) {}

  Tensor(std::vector<std::size_t> shape, std::vector<T> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    if (numel_of(shape_) != data_.size())
      throw std::invalid_argument("tensor: shape/data size mismatch");
  }

  static std::size_t numel_of(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    return n;
  }

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t numel() const { return data_.size(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::vector<T>& vec() { return data_; }
  const std::vector<T>& vec() const { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  T& at2(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
  const T& at2(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  // Reinterprets the buffer under a new shape with the same element count.
  Tensor<T> reshaped(std::vector<std::size_t> shape) const {
    if (numel_of(shape) != data_.size())
      throw std::invalid_argument("reshape: element count mismatch");
    Tensor<T> out;
    out.shape_ = std::move(shape);
    out.data_ = data_;
    return out;
  }

  bool all_finite() const {
    for (T v : data_)
      if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
  }

  void check_finite(const std::string& what) const {
    if (!all_finite()) throw std::runtime_error("non-finite values in " + what);
  }

 private:
  std::vector<std::size_t> shape_;
  std::vector<T> data_;
};

template <typename T>
using TensorPtr = std::shared_ptr<Tensor<T>>;

template <typename T>
TensorPtr<T> make_tensor(std::vector<std::size_t> shape, T fill = T(0)) {
  return std::make_shared<Tensor<T>>(std::move(shape), fill);
}

}  // namespace t2ic
