#pragma once

#include <cblas.h>

#include <cmath>
#include <cstring>
#include <functional>
#include <memory>
#include <stdexcept>
#include <vector>

#include "t2ic/tensor.hpp"

namespace t2ic {

inline void gemm(bool ta, bool tb, int m, int n, int k, float alpha,
                 const float* a, int lda, const float* b, int ldb, float beta,
                 float* c, int ldc) {
  cblas_sgemm(CblasRowMajor, ta ? CblasTrans : CblasNoTrans,
              tb ? CblasTrans : CblasNoTrans, m, n, k, alpha, a, lda, b, ldb,
              beta, c, ldc);
}

inline void gemm(bool ta, bool tb, int m, int n, int k, double alpha,
                 const double* a, int lda, const double* b, int ldb, double beta,
                 double* c, int ldc) {
  cblas_dgemm(CblasRowMajor, ta ? CblasTrans : CblasNoTrans,
              tb ? CblasTrans : CblasNoTrans, m, n, k, alpha, a, lda, b, ldb,
              beta, c, ldc);
}

// Reverse-mode tape over a fixed set of dense tensor operations. Values are
// immutable once produced; the tape records a backward closure per node and
// replays them in reverse creation order (a valid topological order).
template <typename T>
class Tape {
 public:
  using Value = int;

  struct Node {
    TensorPtr<T> value;
    Tensor<T> grad;  // allocated on first touch
    bool grad_set = false;
    std::function<void()> backward;  // null for leaves / constants
  };

  Value leaf(TensorPtr<T> v) {
    nodes_.push_back(Node{std::move(v), {}, false, nullptr});
    return static_cast<Value>(nodes_.size() - 1);
  }

  Value leaf(Tensor<T> v) { return leaf(std::make_shared<Tensor<T>>(std::move(v))); }

  Value create(TensorPtr<T> v, std::function<void()> bwd) {
    nodes_.push_back(Node{std::move(v), {}, false, std::move(bwd)});
    return static_cast<Value>(nodes_.size() - 1);
  }

  const Tensor<T>& val(Value v) const { return *nodes_[v].value; }
  TensorPtr<T> val_ptr(Value v) const { return nodes_[v].value; }

  Tensor<T>& grad(Value v) {
    Node& n = nodes_[v];
    if (!n.grad_set) {
      n.grad = Tensor<T>(n.value->shape());
      n.grad_set = true;
    }
    return n.grad;
  }
  bool grad_set(Value v) const { return nodes_[v].grad_set; }

  // Gradient of the node whose backward closure is currently running.
  const Tensor<T>& out_grad() const { return nodes_[cur_].grad; }

  void backward(Value root) {
    if (val(root).numel() != 1)
      throw std::invalid_argument("backward: root must be scalar");
    grad(root)[0] = T(1);
    for (int i = root; i >= 0; --i) {
      Node& n = nodes_[i];
      if (n.grad_set && n.backward) {
        cur_ = i;
        n.backward();
      }
    }
  }

  void clear() { nodes_.clear(); }
  std::size_t size() const { return nodes_.size(); }

  // ---- elementwise ----

  Value add(Value a, Value b) { return binary_ew(a, b, [](T x, T y) { return x + y; },
      [](T) { return T(1); }, [](T) { return T(1); }); }
  Value sub(Value a, Value b) { return binary_ew(a, b, [](T x, T y) { return x - y; },
      [](T) { return T(1); }, [](T) { return T(-1); }); }

  Value mul(Value a, Value b) {
    const Tensor<T>& x = val(a);
    const Tensor<T>& y = val(b);
    if (x.shape() != y.shape()) throw std::invalid_argument("mul: shape mismatch");
    auto out = make_tensor<T>(x.shape());
    for (std::size_t i = 0; i < x.numel(); ++i) (*out)[i] = x[i] * y[i];
    return create(out, [this, a, b, out]() {
      Value self = cur_;
      const Tensor<T>& g = nodes_[self].grad;
      Tensor<T>& ga = grad(a);
      Tensor<T>& gb = grad(b);
      const Tensor<T>& x = val(a);
      const Tensor<T>& y = val(b);
      for (std::size_t i = 0; i < g.numel(); ++i) {
        ga[i] += g[i] * y[i];
        gb[i] += g[i] * x[i];
      }
    });
  }

  // alpha * a + beta, elementwise with scalar constants
  Value affine(Value a, T alpha, T beta) {
    const Tensor<T>& x = val(a);
    auto out = make_tensor<T>(x.shape());
    for (std::size_t i = 0; i < x.numel(); ++i) (*out)[i] = alpha * x[i] + beta;
    return create(out, [this, a, alpha]() {
      const Tensor<T>& g = nodes_[cur_].grad;
      Tensor<T>& ga = grad(a);
      for (std::size_t i = 0; i < g.numel(); ++i) ga[i] += alpha * g[i];
    });
  }

  Value add_scaled(Value a, Value b, T alpha) {
    const Tensor<T>& x = val(a);
    const Tensor<T>& y = val(b);
    if (x.shape() != y.shape()) throw std::invalid_argument("add_scaled: shape mismatch");
    auto out = make_tensor<T>(x.shape());
    for (std::size_t i = 0; i < x.numel(); ++i) (*out)[i] = x[i] + alpha * y[i];
    return create(out, [this, a, b, alpha]() {
      const Tensor<T>& g = nodes_[cur_].grad;
      Tensor<T>& ga = grad(a);
      Tensor<T>& gb = grad(b);
      for (std::size_t i = 0; i < g.numel(); ++i) {
        ga[i] += g[i];
        gb[i] += alpha * g[i];
      }
    });
  }

  Value add_const(Value a, Tensor<T> c) {
    const Tensor<T>& x = val(a);
    if (x.shape() != c.shape()) throw std::invalid_argument("add_const: shape mismatch");
    auto out = make_tensor<T>(x.shape());
    for (std::size_t i = 0; i < x.numel(); ++i) (*out)[i] = x[i] + c[i];
    return create(out, [this, a]() {
      const Tensor<T>& g = nodes_[cur_].grad;
      Tensor<T>& ga = grad(a);
      for (std::size_t i = 0; i < g.numel(); ++i) ga[i] += g[i];
    });
  }

  Value mul_const(Value a, Tensor<T> c) {
    const Tensor<T>& x = val(a);
    if (x.shape() != c.shape()) throw std::invalid_argument("mul_const: shape mismatch");
    auto out = make_tensor<T>(x.shape());
    auto cc = std::make_shared<Tensor<T>>(std::move(c));
    for (std::size_t i = 0; i < x.numel(); ++i) (*out)[i] = x[i] * (*cc)[i];
    return create(out, [this, a, cc]() {
      const Tensor<T>& g = nodes_[cur_].grad;
      Tensor<T>& ga = grad(a);
      for (std::size_t i = 0; i < g.numel(); ++i) ga[i] += g[i] * (*cc)[i];
    });
  }

  Value relu(Value a) { return unary_ew(a, [](T x) { return x > T(0) ? x : T(0); },
      [](T x, T) { return x > T(0) ? T(1) : T(0); }); }
  Value lrelu(Value a, T slope = T(0.2)) {
    return unary_ew(a, [slope](T x) { return x > T(0) ? x : slope * x; },
                    [slope](T x, T) { return x > T(0) ? T(1) : slope; });
  }
  Value tanh_(Value a) { return unary_ew(a, [](T x) { return std::tanh(x); },
      [](T, T y) { return T(1) - y * y; }); }
  Value sigmoid_(Value a) { return unary_ew(a, [](T x) { return T(1) / (T(1) + std::exp(-x)); },
      [](T, T y) { return y * (T(1) - y); }); }
  Value exp_(Value a) { return unary_ew(a, [](T x) { return std::exp(x); },
      [](T, T y) { return y; }); }
  Value log_(Value a) { return unary_ew(a, [](T x) { return std::log(x); },
      [](T x, T) { return T(1) / x; }); }
  Value square(Value a) { return unary_ew(a, [](T x) { return x * x; },
      [](T x, T) { return T(2) * x; }); }

  // ---- reductions / reshapes ----

  Value sum_all(Value a) {
    const Tensor<T>& x = val(a);
    auto out = make_tensor<T>({1});
    T s = 0;
    for (std::size_t i = 0; i < x.numel(); ++i) s += x[i];
    (*out)[0] = s;
    return create(out, [this, a]() {
      T g = nodes_[cur_].grad[0];
      Tensor<T>& ga = grad(a);
      for (std::size_t i = 0; i < ga.numel(); ++i) ga[i] += g;
    });
  }

  Value mean_all(Value a) {
    std::size_t n = val(a).numel();
    return affine(sum_all(a), T(1) / static_cast<T>(n), T(0));
  }

  Value reshape(Value a, std::vector<std::size_t> shape) {
    const Tensor<T>& x = val(a);
    auto out = std::make_shared<Tensor<T>>(x.reshaped(std::move(shape)));
    return create(out, [this, a]() {
      const Tensor<T>& g = nodes_[cur_].grad;
      Tensor<T>& ga = grad(a);
      for (std::size_t i = 0; i < g.numel(); ++i) ga[i] += g[i];
    });
  }

  // ---- matrix ops (rank-2 operands) ----

  Value matmul(Value a, Value b, bool ta = false, bool tb = false) {
    const Tensor<T>& x = val(a);
    const Tensor<T>& y = val(b);
    if (x.rank() != 2 || y.rank() != 2) throw std::invalid_argument("matmul: rank-2 only");
    int m = static_cast<int>(ta ? x.dim(1) : x.dim(0));
    int k = static_cast<int>(ta ? x.dim(0) : x.dim(1));
    int k2 = static_cast<int>(tb ? y.dim(1) : y.dim(0));
    int n = static_cast<int>(tb ? y.dim(0) : y.dim(1));
    if (k != k2) throw std::invalid_argument("matmul: inner dim mismatch");
    auto out = make_tensor<T>({static_cast<std::size_t>(m), static_cast<std::size_t>(n)});
    gemm(ta, tb, m, n, k, T(1), x.data(), static_cast<int>(x.dim(1)), y.data(),
         static_cast<int>(y.dim(1)), T(0), out->data(), n);
    return create(out, [this, a, b, ta, tb, m, n, k]() {
      const Tensor<T>& g = nodes_[cur_].grad;
      const Tensor<T>& x = val(a);
      const Tensor<T>& y = val(b);
      Tensor<T>& ga = grad(a);
      Tensor<T>& gb = grad(b);
      int ldx = static_cast<int>(x.dim(1));
      int ldy = static_cast<int>(y.dim(1));
      // dA
      if (!ta) {
        // dA = G * op(B)^T : (m,k)
        gemm(false, !tb, m, k, n, T(1), g.data(), n, y.data(), ldy, T(1), ga.data(), ldx);
      } else {
        // A is (k,m) stored; dA^T = G * op(B)^T  => dA = op(B) * G^T : (k,m)
        gemm(tb, true, k, m, n, T(1), y.data(), ldy, g.data(), n, T(1), ga.data(), ldx);
      }
      if (!tb) {
        // dB = op(A)^T * G : (k,n)
        gemm(!ta, false, k, n, m, T(1), x.data(), ldx, g.data(), n, T(1), gb.data(), ldy);
      } else {
        // B is (n,k) stored; dB = G^T * op(A) : (n,k)
        gemm(true, ta, n, k, m, T(1), g.data(), n, x.data(), ldx, T(1), gb.data(), ldy);
      }
    });
  }

  Value transpose2d(Value a) {
    const Tensor<T>& x = val(a);
    if (x.rank() != 2) throw std::invalid_argument("transpose2d: rank-2 only");
    std::size_t r = x.dim(0), c = x.dim(1);
    auto out = make_tensor<T>({c, r});
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) (*out)[j * r + i] = x[i * c + j];
    return create(out, [this, a, r, c]() {
      const Tensor<T>& g = nodes_[cur_].grad;
      Tensor<T>& ga = grad(a);
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) ga[i * c + j] += g[j * r + i];
    });
  }

  // l2-normalize each row; zero rows are an error (cosine contract).
  Value row_normalize(Value a) {
    const Tensor<T>& x = val(a);
    if (x.rank() != 2) throw std::invalid_argument("row_normalize: rank-2 only");
    std::size_t n = x.dim(0), d = x.dim(1);
    auto out = make_tensor<T>(x.shape());
    auto norms = std::make_shared<std::vector<T>>(n);
    for (std::size_t i = 0; i < n; ++i) {
      T s = 0;
      for (std::size_t j = 0; j < d; ++j) s += x[i * d + j] * x[i * d + j];
      T nr = std::sqrt(s);
      if (!(nr > T(0))) throw std::runtime_error("row_normalize: zero-norm row");
      (*norms)[i] = nr;
      for (std::size_t j = 0; j < d; ++j) (*out)[i * d + j] = x[i * d + j] / nr;
    }
    return create(out, [this, a, out, norms, n, d]() {
      const Tensor<T>& g = nodes_[cur_].grad;
      Tensor<T>& ga = grad(a);
      for (std::size_t i = 0; i < n; ++i) {
        T dot = 0;
        for (std::size_t j = 0; j < d; ++j) dot += g[i * d + j] * (*out)[i * d + j];
        T inv = T(1) / (*norms)[i];
        for (std::size_t j = 0; j < d; ++j)
          ga[i * d + j] += (g[i * d + j] - (*out)[i * d + j] * dot) * inv;
      }
    });
  }

  Value rowdot(Value a, Value b) {
    const Tensor<T>& x = val(a);
    const Tensor<T>& y = val(b);
    if (x.shape() != y.shape() || x.rank() != 2)
      throw std::invalid_argument("rowdot: rank-2 same shape");
    std::size_t n = x.dim(0), d = x.dim(1);
    auto out = make_tensor<T>({n});
    for (std::size_t i = 0; i < n; ++i) {
      T s = 0;
      for (std::size_t j = 0; j < d; ++j) s += x[i * d + j] * y[i * d + j];
      (*out)[i] = s;
    }
    return create(out, [this, a, b, n, d]() {
      const Tensor<T>& g = nodes_[cur_].grad;
      const Tensor<T>& x = val(a);
      const Tensor<T>& y = val(b);
      Tensor<T>& ga = grad(a);
      Tensor<T>& gb = grad(b);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) {
          ga[i * d + j] += g[i] * y[i * d + j];
          gb[i * d + j] += g[i] * x[i * d + j];
        }
    });
  }

  Value softmax_rows(Value a) {
    const Tensor<T>& x = val(a);
    if (x.rank() != 2) throw std::invalid_argument("softmax_rows: rank-2 only");
    std::size_t n = x.dim(0), m = x.dim(1);
    auto out = make_tensor<T>(x.shape());
    for (std::size_t i = 0; i < n; ++i) softmax_row(&x[i * m], &(*out)[i * m], m);
    return create(out, [this, a, out, n, m]() {
      const Tensor<T>& g = nodes_[cur_].grad;
      Tensor<T>& ga = grad(a);
      for (std::size_t i = 0; i < n; ++i) {
        T dot = 0;
        for (std::size_t j = 0; j < m; ++j) dot += g[i * m + j] * (*out)[i * m + j];
        for (std::size_t j = 0; j < m; ++j)
          ga[i * m + j] += (*out)[i * m + j] * (g[i * m + j] - dot);
      }
    });
  }

  Value log_softmax_rows(Value a) {
    const Tensor<T>& x = val(a);
    if (x.rank() != 2) throw std::invalid_argument("log_softmax_rows: rank-2 only");
    std::size_t n = x.dim(0), m = x.dim(1);
    auto out = make_tensor<T>(x.shape());
    for (std::size_t i = 0; i < n; ++i) {
      T mx = x[i * m];
      for (std::size_t j = 1; j < m; ++j) mx = std::max(mx, x[i * m + j]);
      T s = 0;
      for (std::size_t j = 0; j < m; ++j) s += std::exp(x[i * m + j] - mx);
      T lse = mx + std::log(s);
      for (std::size_t j = 0; j < m; ++j) (*out)[i * m + j] = x[i * m + j] - lse;
    }
    return create(out, [this, a, out, n, m]() {
      const Tensor<T>& g = nodes_[cur_].grad;
      Tensor<T>& ga = grad(a);
      for (std::size_t i = 0; i < n; ++i) {
        T gs = 0;
        for (std::size_t j = 0; j < m; ++j) gs += g[i * m + j];
        for (std::size_t j = 0; j < m; ++j)
          ga[i * m + j] += g[i * m + j] - std::exp((*out)[i * m + j]) * gs;
      }
    });
  }

  Value logsumexp_rows(Value a) {
    const Tensor<T>& x = val(a);
    if (x.rank() != 2) throw std::invalid_argument("logsumexp_rows: rank-2 only");
    std::size_t n = x.dim(0), m = x.dim(1);
    auto out = make_tensor<T>({n});
    for (std::size_t i = 0; i < n; ++i) {
      T mx = x[i * m];
      for (std::size_t j = 1; j < m; ++j) mx = std::max(mx, x[i * m + j]);
      T s = 0;
      for (std::size_t j = 0; j < m; ++j) s += std::exp(x[i * m + j] - mx);
      (*out)[i] = mx + std::log(s);
    }
    return create(out, [this, a, out, n, m]() {
      const Tensor<T>& g = nodes_[cur_].grad;
      const Tensor<T>& x = val(a);
      Tensor<T>& ga = grad(a);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j)
          ga[i * m + j] += g[i] * std::exp(x[i * m + j] - (*out)[i]);
    });
  }

  // ---- gather / scatter / layout ----

  Value gather_rows(Value table, std::vector<int> ids) {
    const Tensor<T>& x = val(table);
    if (x.rank() != 2) throw std::invalid_argument("gather_rows: rank-2 table");
    std::size_t d = x.dim(1);
    auto out = make_tensor<T>({ids.size(), d});
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= x.dim(0))
        throw std::out_of_range("gather_rows: id out of range");
      std::memcpy(&(*out)[i * d], &x[static_cast<std::size_t>(ids[i]) * d], d * sizeof(T));
    }
    auto idv = std::make_shared<std::vector<int>>(std::move(ids));
    return create(out, [this, table, idv, d]() {
      const Tensor<T>& g = nodes_[cur_].grad;
      Tensor<T>& gt = grad(table);
      for (std::size_t i = 0; i < idv->size(); ++i)
        for (std::size_t j = 0; j < d; ++j)
          gt[static_cast<std::size_t>((*idv)[i]) * d + j] += g[i * d + j];
    });
  }

  Value gather_elems(Value a, std::vector<int> cols) {
    const Tensor<T>& x = val(a);
    if (x.rank() != 2 || cols.size() != x.dim(0))
      throw std::invalid_argument("gather_elems: one column index per row");
    std::size_t m = x.dim(1);
    auto out = make_tensor<T>({cols.size()});
    for (std::size_t i = 0; i < cols.size(); ++i)
      (*out)[i] = x[i * m + static_cast<std::size_t>(cols[i])];
    auto cv = std::make_shared<std::vector<int>>(std::move(cols));
    return create(out, [this, a, cv, m]() {
      const Tensor<T>& g = nodes_[cur_].grad;
      Tensor<T>& ga = grad(a);
      for (std::size_t i = 0; i < cv->size(); ++i)
        ga[i * m + static_cast<std::size_t>((*cv)[i])] += g[i];
    });
  }

  Value stack_scalars(std::vector<Value> vals, std::vector<std::size_t> shape) {
    auto out = make_tensor<T>(shape);
    if (out->numel() != vals.size())
      throw std::invalid_argument("stack_scalars: count mismatch");
    for (std::size_t i = 0; i < vals.size(); ++i) {
      if (val(vals[i]).numel() != 1)
        throw std::invalid_argument("stack_scalars: non-scalar element");
      (*out)[i] = val(vals[i])[0];
    }
    auto vv = std::make_shared<std::vector<Value>>(std::move(vals));
    return create(out, [this, vv]() {
      const Tensor<T>& g = nodes_[cur_].grad;
      for (std::size_t i = 0; i < vv->size(); ++i) grad((*vv)[i])[0] += g[i];
    });
  }

  Value concat_cols(Value a, Value b) {
    const Tensor<T>& x = val(a);
    const Tensor<T>& y = val(b);
    if (x.rank() != 2 || y.rank() != 2 || x.dim(0) != y.dim(0))
      throw std::invalid_argument("concat_cols: row count mismatch");
    std::size_t n = x.dim(0), da = x.dim(1), db = y.dim(1);
    auto out = make_tensor<T>({n, da + db});
    for (std::size_t i = 0; i < n; ++i) {
      std::memcpy(&(*out)[i * (da + db)], &x[i * da], da * sizeof(T));
      std::memcpy(&(*out)[i * (da + db) + da], &y[i * db], db * sizeof(T));
    }
    return create(out, [this, a, b, n, da, db]() {
      const Tensor<T>& g = nodes_[cur_].grad;
      Tensor<T>& ga = grad(a);
      Tensor<T>& gb = grad(b);
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < da; ++j) ga[i * da + j] += g[i * (da + db) + j];
        for (std::size_t j = 0; j < db; ++j) gb[i * db + j] += g[i * (da + db) + da + j];
      }
    });
  }

  Value slice_cols(Value a, std::size_t c0, std::size_t c1) {
    const Tensor<T>& x = val(a);
    if (x.rank() != 2 || c1 > x.dim(1) || c0 >= c1)
      throw std::invalid_argument("slice_cols: bad range");
    std::size_t n = x.dim(0), m = x.dim(1), w = c1 - c0;
    auto out = make_tensor<T>({n, w});
    for (std::size_t i = 0; i < n; ++i)
      std::memcpy(&(*out)[i * w], &x[i * m + c0], w * sizeof(T));
    return create(out, [this, a, c0, n, m, w]() {
      const Tensor<T>& g = nodes_[cur_].grad;
      Tensor<T>& ga = grad(a);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < w; ++j) ga[i * m + c0 + j] += g[i * w + j];
    });
  }

  Value slice_rows(Value a, std::size_t r0, std::size_t r1) {
    const Tensor<T>& x = val(a);
    if (x.rank() != 2 || r1 > x.dim(0) || r0 >= r1)
      throw std::invalid_argument("slice_rows: bad range");
    std::size_t m = x.dim(1), h = r1 - r0;
    auto out = make_tensor<T>({h, m});
    std::memcpy(out->data(), &x[r0 * m], h * m * sizeof(T));
    return create(out, [this, a, r0, m, h]() {
      const Tensor<T>& g = nodes_[cur_].grad;
      Tensor<T>& ga = grad(a);
      for (std::size_t i = 0; i < h * m; ++i) ga[r0 * m + i] += g[i];
    });
  }

  // Rows 2k from a, rows 2k+1 from b (positive-pair interleaving).
  Value interleave_rows(Value a, Value b) {
    const Tensor<T>& x = val(a);
    const Tensor<T>& y = val(b);
    if (x.shape() != y.shape() || x.rank() != 2)
      throw std::invalid_argument("interleave_rows: rank-2 same shape");
    std::size_t n = x.dim(0), d = x.dim(1);
    auto out = make_tensor<T>({2 * n, d});
    for (std::size_t i = 0; i < n; ++i) {
      std::memcpy(&(*out)[(2 * i) * d], &x[i * d], d * sizeof(T));
      std::memcpy(&(*out)[(2 * i + 1) * d], &y[i * d], d * sizeof(T));
    }
    return create(out, [this, a, b, n, d]() {
      const Tensor<T>& g = nodes_[cur_].grad;
      Tensor<T>& ga = grad(a);
      Tensor<T>& gb = grad(b);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) {
          ga[i * d + j] += g[(2 * i) * d + j];
          gb[i * d + j] += g[(2 * i + 1) * d + j];
        }
    });
  }

 private:
  static void softmax_row(const T* x, T* y, std::size_t m) {
    T mx = x[0];
    for (std::size_t j = 1; j < m; ++j) mx = std::max(mx, x[j]);
    T s = 0;
    for (std::size_t j = 0; j < m; ++j) s += (y[j] = std::exp(x[j] - mx));
    for (std::size_t j = 0; j < m; ++j) y[j] /= s;
  }

  template <typename FwdF, typename DxF>
  Value unary_ew(Value a, FwdF f, DxF df) {
    const Tensor<T>& x = val(a);
    auto out = make_tensor<T>(x.shape());
    for (std::size_t i = 0; i < x.numel(); ++i) (*out)[i] = f(x[i]);
    return create(out, [this, a, out, df]() {
      const Tensor<T>& g = nodes_[cur_].grad;
      const Tensor<T>& x = val(a);
      Tensor<T>& ga = grad(a);
      for (std::size_t i = 0; i < g.numel(); ++i) ga[i] += g[i] * df(x[i], (*out)[i]);
    });
  }

  template <typename FwdF, typename DaF, typename DbF>
  Value binary_ew(Value a, Value b, FwdF f, DaF da, DbF db) {
    const Tensor<T>& x = val(a);
    const Tensor<T>& y = val(b);
    if (x.shape() != y.shape()) throw std::invalid_argument("elementwise: shape mismatch");
    auto out = make_tensor<T>(x.shape());
    for (std::size_t i = 0; i < x.numel(); ++i) (*out)[i] = f(x[i], y[i]);
    return create(out, [this, a, b, da, db]() {
      const Tensor<T>& g = nodes_[cur_].grad;
      const Tensor<T>& x = val(a);
      Tensor<T>& ga = grad(a);
      Tensor<T>& gb = grad(b);
      for (std::size_t i = 0; i < g.numel(); ++i) {
        ga[i] += g[i] * da(x[i]);
        gb[i] += g[i] * db(x[i]);
      }
    });
  }

  std::vector<Node> nodes_;
  // Node currently being differentiated; set by the backward loop so closures
  // can reach their own grad without storing their node id.
  int cur_ = -1;
};

}  // namespace t2ic
