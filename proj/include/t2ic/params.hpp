#pragma once

#include <cmath>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "t2ic/io.hpp"
#include "t2ic/rng.hpp"
#include "t2ic/tape.hpp"
#include "t2ic/tensor.hpp"

namespace t2ic {

template <typename T>
struct Param {
  std::string name;
  TensorPtr<T> value;
  Tensor<T> grad;
  Tensor<T> adam_m, adam_v;
  typename Tape<T>::Value bound = -1;
  bool trainable = true;
};

// Ordered collection of named parameters belonging to one model. Binding puts
// every parameter on a tape as a leaf once per step; collect() pulls the tape
// gradients back into the store.
template <typename T>
class ParamStore {
 public:
  explicit ParamStore(std::string prefix) : prefix_(std::move(prefix)) {}

  Param<T>* add(const std::string& name, Tensor<T> init) {
    return add_impl(name, std::move(init), true);
  }

  // Saved and restored but never updated by the optimizer (running stats).
  Param<T>* add_buffer(const std::string& name, Tensor<T> init) {
    return add_impl(name, std::move(init), false);
  }

  Param<T>* find(const std::string& name) {
    for (auto& p : params_)
      if (p->name == name) return p.get();
    throw std::runtime_error("param not found: " + prefix_ + name);
  }

  void bind_all(Tape<T>& tp) {
    for (auto& p : params_) p->bound = tp.leaf(p->value);
  }

  void zero_grads() {
    for (auto& p : params_) p->grad.fill(T(0));
  }

  void collect(Tape<T>& tp) {
    for (auto& p : params_) {
      if (p->bound >= 0 && tp.grad_set(p->bound)) {
        const Tensor<T>& g = tp.grad(p->bound);
        for (std::size_t i = 0; i < g.numel(); ++i) p->grad[i] += g[i];
      }
      p->bound = -1;
    }
  }

  void adam_step(T lr, T beta1, T beta2, T eps) {
    ++steps_;
    T bc1 = T(1) - std::pow(beta1, static_cast<T>(steps_));
    T bc2 = T(1) - std::pow(beta2, static_cast<T>(steps_));
    for (auto& p : params_) {
      if (!p->trainable) continue;
      Tensor<T>& v = *p->value;
      for (std::size_t i = 0; i < v.numel(); ++i) {
        T g = p->grad[i];
        p->adam_m[i] = beta1 * p->adam_m[i] + (T(1) - beta1) * g;
        p->adam_v[i] = beta2 * p->adam_v[i] + (T(1) - beta2) * g * g;
        T mhat = p->adam_m[i] / bc1;
        T vhat = p->adam_v[i] / bc2;
        v[i] -= lr * mhat / (std::sqrt(vhat) + eps);
      }
    }
  }

  void check_finite() const {
    for (const auto& p : params_) p->value->check_finite(prefix_ + p->name);
  }

  void save(TensorFile& tf, bool with_optimizer_state = true) const {
    for (const auto& p : params_) {
      tf.put_as_f32(prefix_ + p->name, *p->value);
      if (with_optimizer_state && p->trainable) {
        tf.put_as_f32("opt." + prefix_ + p->name + ".m", p->adam_m);
        tf.put_as_f32("opt." + prefix_ + p->name + ".v", p->adam_v);
      }
    }
    if (with_optimizer_state) {
      Tensor<float> s({1});
      s[0] = static_cast<float>(steps_);
      tf.put("opt." + prefix_ + "steps", std::move(s));
    }
  }

  void load(const TensorFile& tf) {
    for (auto& p : params_) {
      Tensor<T> v = tf.template get_as<T>(prefix_ + p->name);
      if (v.shape() != p->value->shape())
        throw std::runtime_error("checkpoint shape mismatch for " + prefix_ + p->name);
      *p->value = std::move(v);
      if (p->trainable && tf.has("opt." + prefix_ + p->name + ".m")) {
        p->adam_m = tf.template get_as<T>("opt." + prefix_ + p->name + ".m");
        p->adam_v = tf.template get_as<T>("opt." + prefix_ + p->name + ".v");
      }
    }
    if (tf.has("opt." + prefix_ + "steps"))
      steps_ = static_cast<long>(tf.get("opt." + prefix_ + "steps")[0]);
  }

  const std::string& prefix() const { return prefix_; }
  const std::vector<std::unique_ptr<Param<T>>>& params() const { return params_; }
  long steps() const { return steps_; }

 private:
  Param<T>* add_impl(const std::string& name, Tensor<T> init, bool trainable) {
    auto p = std::make_unique<Param<T>>();
    p->name = name;
    p->value = std::make_shared<Tensor<T>>(std::move(init));
    p->grad = Tensor<T>(p->value->shape());
    p->adam_m = Tensor<T>(p->value->shape());
    p->adam_v = Tensor<T>(p->value->shape());
    p->trainable = trainable;
    params_.push_back(std::move(p));
    return params_.back().get();
  }

  std::string prefix_;
  std::vector<std::unique_ptr<Param<T>>> params_;
  long steps_ = 0;
};

// Kaiming-style fan-in scaled normal init.
template <typename T>
Tensor<T> init_normal(std::vector<std::size_t> shape, Rng& rng, double fan_in) {
  Tensor<T> t(std::move(shape));
  double std = std::sqrt(2.0 / std::max(1.0, fan_in));
  for (std::size_t i = 0; i < t.numel(); ++i)
    t[i] = static_cast<T>(rng.normal() * std);
  return t;
}

}  // namespace t2ic
