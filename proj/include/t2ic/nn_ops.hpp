#pragma once

#include <cmath>
#include <cstring>
#include <memory>
#include <stdexcept>
#include <vector>

#include "t2ic/tape.hpp"

namespace t2ic {

namespace detail {

template <typename T>
void im2col(const T* x, int c, int h, int w, int kh, int kw, int stride,
            int pad, int ho, int wo, T* col) {
  for (int ch = 0; ch < c; ++ch)
    for (int ki = 0; ki < kh; ++ki)
      for (int kj = 0; kj < kw; ++kj) {
        T* dst = col + ((ch * kh + ki) * kw + kj) * (ho * wo);
        for (int oi = 0; oi < ho; ++oi) {
          int ii = oi * stride - pad + ki;
          for (int oj = 0; oj < wo; ++oj) {
            int jj = oj * stride - pad + kj;
            dst[oi * wo + oj] = (ii >= 0 && ii < h && jj >= 0 && jj < w)
                                    ? x[(ch * h + ii) * w + jj]
                                    : T(0);
          }
        }
      }
}

template <typename T>
void col2im_add(const T* col, int c, int h, int w, int kh, int kw, int stride,
                int pad, int ho, int wo, T* x) {
  for (int ch = 0; ch < c; ++ch)
    for (int ki = 0; ki < kh; ++ki)
      for (int kj = 0; kj < kw; ++kj) {
        const T* src = col + ((ch * kh + ki) * kw + kj) * (ho * wo);
        for (int oi = 0; oi < ho; ++oi) {
          int ii = oi * stride - pad + ki;
          if (ii < 0 || ii >= h) continue;
          for (int oj = 0; oj < wo; ++oj) {
            int jj = oj * stride - pad + kj;
            if (jj >= 0 && jj < w) x[(ch * h + ii) * w + jj] += src[oi * wo + oj];
          }
        }
      }
}

}  // namespace detail

// 2-D convolution, NCHW input, (F,C,kh,kw) weights, per-output-channel bias.
// im2col + GEMM; the column buffer is recomputed in backward to bound memory.
template <typename T>
typename Tape<T>::Value conv2d(Tape<T>& tp, typename Tape<T>::Value x,
                               typename Tape<T>::Value w,
                               typename Tape<T>::Value b, int stride, int pad) {
  const Tensor<T>& xv = tp.val(x);
  const Tensor<T>& wv = tp.val(w);
  if (xv.rank() != 4 || wv.rank() != 4) throw std::invalid_argument("conv2d: rank-4 only");
  int n = static_cast<int>(xv.dim(0)), c = static_cast<int>(xv.dim(1));
  int h = static_cast<int>(xv.dim(2)), wd = static_cast<int>(xv.dim(3));
  int f = static_cast<int>(wv.dim(0)), kh = static_cast<int>(wv.dim(2)),
      kw = static_cast<int>(wv.dim(3));
  if (static_cast<int>(wv.dim(1)) != c) throw std::invalid_argument("conv2d: channel mismatch");
  int ho = (h + 2 * pad - kh) / stride + 1;
  int wo = (wd + 2 * pad - kw) / stride + 1;
  int ckk = c * kh * kw, hw = ho * wo;

  auto out = make_tensor<T>({static_cast<std::size_t>(n), static_cast<std::size_t>(f),
                             static_cast<std::size_t>(ho), static_cast<std::size_t>(wo)});
  const Tensor<T>& bv = tp.val(b);
  if (static_cast<int>(bv.numel()) != f) throw std::invalid_argument("conv2d: bias size");
  std::vector<T> col(static_cast<std::size_t>(ckk) * hw);
  for (int i = 0; i < n; ++i) {
    detail::im2col(xv.data() + static_cast<std::size_t>(i) * c * h * wd, c, h, wd,
                   kh, kw, stride, pad, ho, wo, col.data());
    T* o = out->data() + static_cast<std::size_t>(i) * f * hw;
    gemm(false, false, f, hw, ckk, T(1), wv.data(), ckk, col.data(), hw, T(0), o, hw);
    for (int fc = 0; fc < f; ++fc)
      for (int p = 0; p < hw; ++p) o[fc * hw + p] += bv[fc];
  }

  return tp.create(out, [&tp, x, w, b, n, c, h, wd, f, kh, kw, stride, pad, ho, wo,
                         ckk, hw]() {
    const Tensor<T>& g = tp.out_grad();
    const Tensor<T>& xv = tp.val(x);
    const Tensor<T>& wv = tp.val(w);
    Tensor<T>& gx = tp.grad(x);
    Tensor<T>& gw = tp.grad(w);
    Tensor<T>& gb = tp.grad(b);
    std::vector<T> col(static_cast<std::size_t>(ckk) * hw);
    std::vector<T> dcol(static_cast<std::size_t>(ckk) * hw);
    for (int i = 0; i < n; ++i) {
      const T* gn = g.data() + static_cast<std::size_t>(i) * f * hw;
      detail::im2col(xv.data() + static_cast<std::size_t>(i) * c * h * wd, c, h,
                     wd, kh, kw, stride, pad, ho, wo, col.data());
      gemm(false, true, f, ckk, hw, T(1), gn, hw, col.data(), hw, T(1), gw.data(), ckk);
      gemm(true, false, ckk, hw, f, T(1), wv.data(), ckk, gn, hw, T(0), dcol.data(), hw);
      detail::col2im_add(dcol.data(), c, h, wd, kh, kw, stride, pad, ho, wo,
                         gx.data() + static_cast<std::size_t>(i) * c * h * wd);
      for (int fc = 0; fc < f; ++fc)
        for (int p = 0; p < hw; ++p) gb[fc] += gn[fc * hw + p];
    }
  });
}

// StyleGAN2-style modulated 3x3 convolution: per-sample scales s (N,C) modulate
// the shared weights, then each output filter is demodulated to unit norm.
template <typename T>
typename Tape<T>::Value modulated_conv3x3(Tape<T>& tp, typename Tape<T>::Value x,
                                          typename Tape<T>::Value w,
                                          typename Tape<T>::Value s,
                                          T eps = T(1e-8)) {
  const Tensor<T>& xv = tp.val(x);
  const Tensor<T>& wv = tp.val(w);
  const Tensor<T>& sv = tp.val(s);
  int n = static_cast<int>(xv.dim(0)), c = static_cast<int>(xv.dim(1));
  int h = static_cast<int>(xv.dim(2)), wd = static_cast<int>(xv.dim(3));
  int f = static_cast<int>(wv.dim(0));
  if (static_cast<int>(wv.dim(1)) != c || wv.dim(2) != 3 || wv.dim(3) != 3)
    throw std::invalid_argument("modulated_conv3x3: weight shape");
  if (static_cast<int>(sv.dim(0)) != n || static_cast<int>(sv.dim(1)) != c)
    throw std::invalid_argument("modulated_conv3x3: scale shape");
  int ckk = c * 9, hw = h * wd;

  auto out = make_tensor<T>({static_cast<std::size_t>(n), static_cast<std::size_t>(f),
                             static_cast<std::size_t>(h), static_cast<std::size_t>(wd)});
  auto demod = [&](int i, std::vector<T>& wn) {
    // wn = (w .* s_i) / sqrt(sum((w .* s_i)^2) + eps) per output filter
    for (int fc = 0; fc < f; ++fc) {
      T ss = 0;
      for (int cc = 0; cc < c; ++cc) {
        T sc = sv[static_cast<std::size_t>(i) * c + cc];
        for (int k = 0; k < 9; ++k) {
          T a = wv[(static_cast<std::size_t>(fc) * c + cc) * 9 + k] * sc;
          wn[(static_cast<std::size_t>(fc) * c + cc) * 9 + k] = a;
          ss += a * a;
        }
      }
      T inv = T(1) / std::sqrt(ss + eps);
      for (int j = 0; j < ckk; ++j) wn[static_cast<std::size_t>(fc) * ckk + j] *= inv;
    }
  };

  std::vector<T> wn(static_cast<std::size_t>(f) * ckk);
  std::vector<T> col(static_cast<std::size_t>(ckk) * hw);
  for (int i = 0; i < n; ++i) {
    demod(i, wn);
    detail::im2col(xv.data() + static_cast<std::size_t>(i) * c * h * wd, c, h, wd,
                   3, 3, 1, 1, h, wd, col.data());
    gemm(false, false, f, hw, ckk, T(1), wn.data(), ckk, col.data(), hw, T(0),
         out->data() + static_cast<std::size_t>(i) * f * hw, hw);
  }

  return tp.create(out, [&tp, x, w, s, n, c, h, wd, f, ckk, hw, eps]() {
    const Tensor<T>& g = tp.out_grad();
    const Tensor<T>& xv = tp.val(x);
    const Tensor<T>& wv = tp.val(w);
    const Tensor<T>& sv = tp.val(s);
    Tensor<T>& gx = tp.grad(x);
    Tensor<T>& gw = tp.grad(w);
    Tensor<T>& gs = tp.grad(s);
    std::vector<T> a(static_cast<std::size_t>(f) * ckk);
    std::vector<T> wn(static_cast<std::size_t>(f) * ckk);
    std::vector<T> gwn(static_cast<std::size_t>(f) * ckk);
    std::vector<T> col(static_cast<std::size_t>(ckk) * hw);
    std::vector<T> dcol(static_cast<std::size_t>(ckk) * hw);
    std::vector<T> sigma(static_cast<std::size_t>(f));
    for (int i = 0; i < n; ++i) {
      // recompute modulated weights for this sample
      for (int fc = 0; fc < f; ++fc) {
        T ss = 0;
        for (int cc = 0; cc < c; ++cc) {
          T sc = sv[static_cast<std::size_t>(i) * c + cc];
          for (int k = 0; k < 9; ++k) {
            std::size_t idx = (static_cast<std::size_t>(fc) * c + cc) * 9 + k;
            a[idx] = wv[idx] * sc;
            ss += a[idx] * a[idx];
          }
        }
        sigma[fc] = std::sqrt(ss + eps);
        T inv = T(1) / sigma[fc];
        for (int j = 0; j < ckk; ++j)
          wn[static_cast<std::size_t>(fc) * ckk + j] = a[static_cast<std::size_t>(fc) * ckk + j] * inv;
      }
      const T* gn = g.data() + static_cast<std::size_t>(i) * f * hw;
      detail::im2col(xv.data() + static_cast<std::size_t>(i) * c * h * wd, c, h,
                     wd, 3, 3, 1, 1, h, wd, col.data());
      // grads wrt demodulated weights and input
      std::fill(gwn.begin(), gwn.end(), T(0));
      gemm(false, true, f, ckk, hw, T(1), gn, hw, col.data(), hw, T(0), gwn.data(), ckk);
      gemm(true, false, ckk, hw, f, T(1), wn.data(), ckk, gn, hw, T(0), dcol.data(), hw);
      detail::col2im_add(dcol.data(), c, h, wd, 3, 3, 1, 1, h, wd,
                         gx.data() + static_cast<std::size_t>(i) * c * h * wd);
      // chain through demodulation: wn = a / sigma, sigma = sqrt(|a|^2 + eps)
      for (int fc = 0; fc < f; ++fc) {
        T proj = 0;
        for (int j = 0; j < ckk; ++j)
          proj += gwn[static_cast<std::size_t>(fc) * ckk + j] * a[static_cast<std::size_t>(fc) * ckk + j];
        T inv = T(1) / sigma[fc];
        T inv3 = inv * inv * inv;
        for (int cc = 0; cc < c; ++cc) {
          T sc = sv[static_cast<std::size_t>(i) * c + cc];
          T gsc = 0;
          for (int k = 0; k < 9; ++k) {
            std::size_t idx = (static_cast<std::size_t>(fc) * c + cc) * 9 + k;
            T da = gwn[idx] * inv - a[idx] * proj * inv3;
            gw[idx] += da * sc;
            gsc += da * wv[idx];
          }
          gs[static_cast<std::size_t>(i) * c + cc] += gsc;
        }
      }
    }
  });
}

template <typename T>
typename Tape<T>::Value upsample2x(Tape<T>& tp, typename Tape<T>::Value x) {
  const Tensor<T>& xv = tp.val(x);
  if (xv.rank() != 4) throw std::invalid_argument("upsample2x: rank-4 only");
  std::size_t n = xv.dim(0), c = xv.dim(1), h = xv.dim(2), w = xv.dim(3);
  auto out = make_tensor<T>({n, c, 2 * h, 2 * w});
  for (std::size_t i = 0; i < n * c; ++i)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t z = 0; z < w; ++z) {
        T v = xv[(i * h + y) * w + z];
        T* o = &(*out)[(i * 2 * h + 2 * y) * 2 * w + 2 * z];
        o[0] = v;
        o[1] = v;
        o[2 * w] = v;
        o[2 * w + 1] = v;
      }
  return tp.create(out, [&tp, x, n, c, h, w]() {
    const Tensor<T>& g = tp.out_grad();
    Tensor<T>& gx = tp.grad(x);
    for (std::size_t i = 0; i < n * c; ++i)
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t z = 0; z < w; ++z) {
          const T* go = &g[(i * 2 * h + 2 * y) * 2 * w + 2 * z];
          gx[(i * h + y) * w + z] += go[0] + go[1] + go[2 * w] + go[2 * w + 1];
        }
  });
}

template <typename T>
typename Tape<T>::Value avgpool2x2(Tape<T>& tp, typename Tape<T>::Value x) {
  const Tensor<T>& xv = tp.val(x);
  std::size_t n = xv.dim(0), c = xv.dim(1), h = xv.dim(2), w = xv.dim(3);
  auto out = make_tensor<T>({n, c, h / 2, w / 2});
  for (std::size_t i = 0; i < n * c; ++i)
    for (std::size_t y = 0; y < h / 2; ++y)
      for (std::size_t z = 0; z < w / 2; ++z) {
        const T* p = &xv[(i * h + 2 * y) * w + 2 * z];
        (*out)[(i * (h / 2) + y) * (w / 2) + z] =
            (p[0] + p[1] + p[w] + p[w + 1]) * T(0.25);
      }
  return tp.create(out, [&tp, x, n, c, h, w]() {
    const Tensor<T>& g = tp.out_grad();
    Tensor<T>& gx = tp.grad(x);
    for (std::size_t i = 0; i < n * c; ++i)
      for (std::size_t y = 0; y < h / 2; ++y)
        for (std::size_t z = 0; z < w / 2; ++z) {
          T gv = g[(i * (h / 2) + y) * (w / 2) + z] * T(0.25);
          T* p = &gx[(i * h + 2 * y) * w + 2 * z];
          p[0] += gv;
          p[1] += gv;
          p[w] += gv;
          p[w + 1] += gv;
        }
  });
}

// (N,C,H,W) -> (N,C) spatial mean
template <typename T>
typename Tape<T>::Value global_avg_pool(Tape<T>& tp, typename Tape<T>::Value x) {
  const Tensor<T>& xv = tp.val(x);
  std::size_t n = xv.dim(0), c = xv.dim(1), hw = xv.dim(2) * xv.dim(3);
  auto out = make_tensor<T>({n, c});
  for (std::size_t i = 0; i < n * c; ++i) {
    T s = 0;
    for (std::size_t p = 0; p < hw; ++p) s += xv[i * hw + p];
    (*out)[i] = s / static_cast<T>(hw);
  }
  return tp.create(out, [&tp, x, n, c, hw]() {
    const Tensor<T>& g = tp.out_grad();
    Tensor<T>& gx = tp.grad(x);
    T inv = T(1) / static_cast<T>(hw);
    for (std::size_t i = 0; i < n * c; ++i)
      for (std::size_t p = 0; p < hw; ++p) gx[i * hw + p] += g[i] * inv;
  });
}

// Batch normalization (training mode): per-channel statistics over (N,H,W).
// Returns the normalized tensor; batch mean/var are reported through out
// parameters for running-stat updates.
template <typename T>
typename Tape<T>::Value batchnorm_train(Tape<T>& tp, typename Tape<T>::Value x,
                                        T eps, std::vector<T>* mean_out = nullptr,
                                        std::vector<T>* var_out = nullptr) {
  const Tensor<T>& xv = tp.val(x);
  if (xv.rank() != 4) throw std::invalid_argument("batchnorm: rank-4 only");
  std::size_t n = xv.dim(0), c = xv.dim(1), hw = xv.dim(2) * xv.dim(3);
  std::size_t m = n * hw;
  if (m < 2) throw std::invalid_argument("batchnorm: needs more than one element per channel");
  auto out = make_tensor<T>(xv.shape());
  auto invstd = std::make_shared<std::vector<T>>(c);
  if (mean_out) mean_out->assign(c, T(0));
  if (var_out) var_out->assign(c, T(0));
  for (std::size_t ch = 0; ch < c; ++ch) {
    T mu = 0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t p = 0; p < hw; ++p) mu += xv[(i * c + ch) * hw + p];
    mu /= static_cast<T>(m);
    T var = 0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t p = 0; p < hw; ++p) {
        T d = xv[(i * c + ch) * hw + p] - mu;
        var += d * d;
      }
    var /= static_cast<T>(m);
    T is = T(1) / std::sqrt(var + eps);
    (*invstd)[ch] = is;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t p = 0; p < hw; ++p)
        (*out)[(i * c + ch) * hw + p] = (xv[(i * c + ch) * hw + p] - mu) * is;
    if (mean_out) (*mean_out)[ch] = mu;
    if (var_out) (*var_out)[ch] = var;
  }
  return tp.create(out, [&tp, x, out, invstd, n, c, hw]() {
    const Tensor<T>& g = tp.out_grad();
    Tensor<T>& gx = tp.grad(x);
    std::size_t m = n * hw;
    for (std::size_t ch = 0; ch < c; ++ch) {
      T sg = 0, sgx = 0;
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t p = 0; p < hw; ++p) {
          std::size_t idx = (i * c + ch) * hw + p;
          sg += g[idx];
          sgx += g[idx] * (*out)[idx];
        }
      T is = (*invstd)[ch];
      T mg = sg / static_cast<T>(m);
      T mgx = sgx / static_cast<T>(m);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t p = 0; p < hw; ++p) {
          std::size_t idx = (i * c + ch) * hw + p;
          gx[idx] += is * (g[idx] - mg - (*out)[idx] * mgx);
        }
    }
  });
}

// Per-channel affine with constant coefficients (inference-mode normalization).
template <typename T>
typename Tape<T>::Value chan_affine_const(Tape<T>& tp, typename Tape<T>::Value x,
                                          std::vector<T> scale, std::vector<T> shift) {
  const Tensor<T>& xv = tp.val(x);
  std::size_t n = xv.dim(0), c = xv.dim(1), hw = xv.dim(2) * xv.dim(3);
  auto out = make_tensor<T>(xv.shape());
  auto sc = std::make_shared<std::vector<T>>(std::move(scale));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t p = 0; p < hw; ++p)
        (*out)[(i * c + ch) * hw + p] = xv[(i * c + ch) * hw + p] * (*sc)[ch] + shift[ch];
  return tp.create(out, [&tp, x, sc, n, c, hw]() {
    const Tensor<T>& g = tp.out_grad();
    Tensor<T>& gx = tp.grad(x);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t p = 0; p < hw; ++p)
          gx[(i * c + ch) * hw + p] += g[(i * c + ch) * hw + p] * (*sc)[ch];
  });
}

// x (N,C,H,W) * s (N,C) broadcast over space
template <typename T>
typename Tape<T>::Value mul_channel(Tape<T>& tp, typename Tape<T>::Value x,
                                    typename Tape<T>::Value s) {
  const Tensor<T>& xv = tp.val(x);
  const Tensor<T>& sv = tp.val(s);
  std::size_t n = xv.dim(0), c = xv.dim(1), hw = xv.dim(2) * xv.dim(3);
  if (sv.dim(0) != n || sv.dim(1) != c) throw std::invalid_argument("mul_channel: shape");
  auto out = make_tensor<T>(xv.shape());
  for (std::size_t i = 0; i < n * c; ++i)
    for (std::size_t p = 0; p < hw; ++p) (*out)[i * hw + p] = xv[i * hw + p] * sv[i];
  return tp.create(out, [&tp, x, s, n, c, hw]() {
    const Tensor<T>& g = tp.out_grad();
    const Tensor<T>& xv = tp.val(x);
    const Tensor<T>& sv = tp.val(s);
    Tensor<T>& gx = tp.grad(x);
    Tensor<T>& gs = tp.grad(s);
    for (std::size_t i = 0; i < n * c; ++i) {
      T acc = 0;
      for (std::size_t p = 0; p < hw; ++p) {
        gx[i * hw + p] += g[i * hw + p] * sv[i];
        acc += g[i * hw + p] * xv[i * hw + p];
      }
      gs[i] += acc;
    }
  });
}

// x (N,C,H,W) * m (N,1,H,W) broadcast over channels
template <typename T>
typename Tape<T>::Value mul_mask(Tape<T>& tp, typename Tape<T>::Value x,
                                 typename Tape<T>::Value m) {
  const Tensor<T>& xv = tp.val(x);
  const Tensor<T>& mv = tp.val(m);
  std::size_t n = xv.dim(0), c = xv.dim(1), hw = xv.dim(2) * xv.dim(3);
  if (mv.dim(0) != n || mv.dim(1) != 1 || mv.dim(2) * mv.dim(3) != hw)
    throw std::invalid_argument("mul_mask: shape");
  auto out = make_tensor<T>(xv.shape());
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t p = 0; p < hw; ++p)
        (*out)[(i * c + ch) * hw + p] = xv[(i * c + ch) * hw + p] * mv[i * hw + p];
  return tp.create(out, [&tp, x, m, n, c, hw]() {
    const Tensor<T>& g = tp.out_grad();
    const Tensor<T>& xv = tp.val(x);
    const Tensor<T>& mv = tp.val(m);
    Tensor<T>& gx = tp.grad(x);
    Tensor<T>& gm = tp.grad(m);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t p = 0; p < hw; ++p) {
          std::size_t idx = (i * c + ch) * hw + p;
          gx[idx] += g[idx] * mv[i * hw + p];
          gm[i * hw + p] += g[idx] * xv[idx];
        }
  });
}

// Outer broadcast m (N,1,H,W) x s (N,C) -> (N,C,H,W)
template <typename T>
typename Tape<T>::Value mask_outer(Tape<T>& tp, typename Tape<T>::Value m,
                                   typename Tape<T>::Value s) {
  const Tensor<T>& mv = tp.val(m);
  const Tensor<T>& sv = tp.val(s);
  std::size_t n = mv.dim(0), hw = mv.dim(2) * mv.dim(3), c = sv.dim(1);
  if (sv.dim(0) != n || mv.dim(1) != 1) throw std::invalid_argument("mask_outer: shape");
  auto out = make_tensor<T>({n, c, mv.dim(2), mv.dim(3)});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t p = 0; p < hw; ++p)
        (*out)[(i * c + ch) * hw + p] = mv[i * hw + p] * sv[i * c + ch];
  return tp.create(out, [&tp, m, s, n, c, hw]() {
    const Tensor<T>& g = tp.out_grad();
    const Tensor<T>& mv = tp.val(m);
    const Tensor<T>& sv = tp.val(s);
    Tensor<T>& gm = tp.grad(m);
    Tensor<T>& gs = tp.grad(s);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t ch = 0; ch < c; ++ch) {
        T acc = 0;
        for (std::size_t p = 0; p < hw; ++p) {
          std::size_t idx = (i * c + ch) * hw + p;
          gm[i * hw + p] += g[idx] * sv[i * c + ch];
          acc += g[idx] * mv[i * hw + p];
        }
        gs[i * c + ch] += acc;
      }
  });
}

// x + b[c] broadcast
template <typename T>
typename Tape<T>::Value add_channel_bias(Tape<T>& tp, typename Tape<T>::Value x,
                                         typename Tape<T>::Value b) {
  const Tensor<T>& xv = tp.val(x);
  const Tensor<T>& bv = tp.val(b);
  std::size_t n = xv.dim(0), c = xv.dim(1), hw = xv.dim(2) * xv.dim(3);
  if (bv.numel() != c) throw std::invalid_argument("add_channel_bias: size");
  auto out = make_tensor<T>(xv.shape());
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t p = 0; p < hw; ++p)
        (*out)[(i * c + ch) * hw + p] = xv[(i * c + ch) * hw + p] + bv[ch];
  return tp.create(out, [&tp, x, b, n, c, hw]() {
    const Tensor<T>& g = tp.out_grad();
    Tensor<T>& gx = tp.grad(x);
    Tensor<T>& gb = tp.grad(b);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t p = 0; p < hw; ++p) {
          std::size_t idx = (i * c + ch) * hw + p;
          gx[idx] += g[idx];
          gb[ch] += g[idx];
        }
  });
}

// x + strength * noise (noise is a fixed seeded tensor, strength is learnable)
template <typename T>
typename Tape<T>::Value add_noise(Tape<T>& tp, typename Tape<T>::Value x,
                                  typename Tape<T>::Value strength, Tensor<T> noise) {
  const Tensor<T>& xv = tp.val(x);
  if (noise.shape() != xv.shape()) throw std::invalid_argument("add_noise: shape");
  if (tp.val(strength).numel() != 1) throw std::invalid_argument("add_noise: strength scalar");
  auto nz = std::make_shared<Tensor<T>>(std::move(noise));
  T s = tp.val(strength)[0];
  auto out = make_tensor<T>(xv.shape());
  for (std::size_t i = 0; i < xv.numel(); ++i) (*out)[i] = xv[i] + s * (*nz)[i];
  return tp.create(out, [&tp, x, strength, nz]() {
    const Tensor<T>& g = tp.out_grad();
    Tensor<T>& gx = tp.grad(x);
    Tensor<T>& gs = tp.grad(strength);
    T acc = 0;
    for (std::size_t i = 0; i < g.numel(); ++i) {
      gx[i] += g[i];
      acc += g[i] * (*nz)[i];
    }
    gs[0] += acc;
  });
}

}  // namespace t2ic
