#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "t2ic/encoders.hpp"
#include "t2ic/nn_ops.hpp"
#include "t2ic/params.hpp"
#include "t2ic/tape.hpp"

namespace t2ic {

constexpr std::size_t kZDim = 64;
constexpr std::size_t kWDim = 128;
constexpr int kMapLayers = 8;

enum class BlockType { ssacn, style };

inline BlockType block_type_from_string(const std::string& s) {
  if (s == "ssacn") return BlockType::ssacn;
  if (s == "style") return BlockType::style;
  throw std::invalid_argument("unknown block type: " + s);
}

struct GeneratorConfig {
  BlockType block_type = BlockType::ssacn;
};

// Two 3x3 convs + sigmoid; values strictly inside (0, 1).
template <typename T>
typename Tape<T>::Value mask_predict(Tape<T>& tp, typename Tape<T>::Value x,
                                     typename Tape<T>::Value w1, typename Tape<T>::Value b1,
                                     typename Tape<T>::Value w2, typename Tape<T>::Value b2) {
  auto h = tp.lrelu(conv2d(tp, x, w1, b1, 1, 1));
  return tp.sigmoid_(conv2d(tp, h, w2, b2, 1, 1));
}

// Spatially gated conditional batch normalization:
//   out = BN(x) * (1 + m * gamma(e)) + m * beta(e)
// gamma/beta are linear in the sentence vector, broadcast over space; m gates
// where the text is injected. Training mode uses batch statistics and updates
// the running buffers; eval mode normalizes with the buffers.
template <typename T>
typename Tape<T>::Value sscbn(Tape<T>& tp, typename Tape<T>::Value x,
                              typename Tape<T>::Value ebar, typename Tape<T>::Value m,
                              typename Tape<T>::Value gamma_w, typename Tape<T>::Value beta_w,
                              Tensor<T>& run_mean, Tensor<T>& run_var, bool train,
                              T momentum = T(0.1), T eps = T(1e-5)) {
  const Tensor<T>& xv = tp.val(x);
  if (xv.rank() != 4) throw std::invalid_argument("sscbn: rank-4 input");
  std::size_t c = xv.dim(1);
  typename Tape<T>::Value bn;
  if (train) {
    if (xv.dim(0) < 2)
      throw std::invalid_argument("sscbn: batch size 1 undefined in training mode");
    std::vector<T> mean, var;
    bn = batchnorm_train(tp, x, eps, &mean, &var);
    for (std::size_t j = 0; j < c; ++j) {
      run_mean[j] = (T(1) - momentum) * run_mean[j] + momentum * mean[j];
      run_var[j] = (T(1) - momentum) * run_var[j] + momentum * var[j];
    }
  } else {
    std::vector<T> scale(c), shift(c);
    for (std::size_t j = 0; j < c; ++j) {
      scale[j] = T(1) / std::sqrt(run_var[j] + eps);
      shift[j] = -run_mean[j] * scale[j];
    }
    bn = chan_affine_const(tp, x, std::move(scale), std::move(shift));
  }
  auto gamma = tp.matmul(ebar, gamma_w);  // (N, C)
  auto beta = tp.matmul(ebar, beta_w);
  auto gated = tp.add(tp.mul(bn, mask_outer(tp, m, gamma)), mask_outer(tp, m, beta));
  return tp.add(bn, gated);
}

// Modulated 3x3 conv with noise injection and learned bias. The per-channel
// scales come from an affine map of w; demodulation keeps output variance
// independent of the scale magnitude.
template <typename T>
typename Tape<T>::Value style_block(Tape<T>& tp, typename Tape<T>::Value x,
                                    typename Tape<T>::Value w,
                                    typename Tape<T>::Value aff_w, typename Tape<T>::Value aff_b,
                                    typename Tape<T>::Value conv_w,
                                    typename Tape<T>::Value noise_strength,
                                    typename Tape<T>::Value bias, Tensor<T> noise) {
  std::size_t n = tp.val(x).dim(0);
  auto s = tp.add(tp.matmul(w, aff_w), detail::broadcast_rows(tp, aff_b, n));
  auto y = modulated_conv3x3(tp, x, conv_w, s);
  y = add_noise(tp, y, noise_strength, std::move(noise));
  return add_channel_bias(tp, y, bias);
}

// Single-pair conditional generator: learned 4x4 constant, three
// upsample/residual stages fused with either spatially gated conditional
// normalization or modulated convolutions, then a tanh-bounded RGB head.
template <typename T>
class Generator {
 public:
  Generator(Rng& rng, GeneratorConfig cfg) : cfg_(cfg), gen_("gen."), map_("map.") {
    gen_.add("const", init_normal<T>({1, kChannels[0], 4, 4}, rng, 2));
    if (cfg_.block_type == BlockType::ssacn)
      gen_.add("zproj.w", init_normal<T>({kZDim, kChannels[0] * 16}, rng, kZDim));
    for (int i = 0; i < kStages; ++i) {
      std::size_t ci = kChannels[i], co = kChannels[i + 1];
      std::string p = "s" + std::to_string(i) + ".";
      gen_.add(p + "res.w", init_normal<T>({co, ci, 3, 3}, rng, ci * 9));
      gen_.add(p + "res.b", Tensor<T>({co}));
      gen_.add(p + "skip.w", init_normal<T>({co, ci, 1, 1}, rng, ci));
      gen_.add(p + "skip.b", Tensor<T>({co}));
      if (cfg_.block_type == BlockType::ssacn) {
        gen_.add(p + "mp1.w", init_normal<T>({8, co, 3, 3}, rng, co * 9));
        gen_.add(p + "mp1.b", Tensor<T>({8}));
        gen_.add(p + "mp2.w", init_normal<T>({1, 8, 3, 3}, rng, 8 * 9));
        gen_.add(p + "mp2.b", Tensor<T>({1}));
        gen_.add(p + "g.w", init_normal<T>({kCommonDim, co}, rng, kCommonDim * 4));
        gen_.add(p + "b.w", init_normal<T>({kCommonDim, co}, rng, kCommonDim * 4));
        gen_.add_buffer(p + "bn.rm", Tensor<T>({co}));
        Tensor<T> rv({co});
        rv.fill(T(1));
        gen_.add_buffer(p + "bn.rv", std::move(rv));
      } else {
        gen_.add(p + "aff.w", init_normal<T>({kWDim, co}, rng, kWDim));
        Tensor<T> ab({1, co});
        ab.fill(T(1));
        gen_.add(p + "aff.b", std::move(ab));
        gen_.add(p + "sc.w", init_normal<T>({co, co, 3, 3}, rng, co * 9));
        gen_.add(p + "noise", Tensor<T>({1}));
        gen_.add(p + "bias", Tensor<T>({co}));
      }
    }
    gen_.add("rgb.w", init_normal<T>({3, kChannels[kStages], 3, 3}, rng,
                                     kChannels[kStages] * 9));
    gen_.add("rgb.b", Tensor<T>({3}));
    if (cfg_.block_type == BlockType::style) {
      std::size_t in = kZDim + kCommonDim;
      for (int l = 0; l < kMapLayers; ++l) {
        std::string p = "fc" + std::to_string(l) + ".";
        map_.add(p + "w", init_normal<T>({in, kWDim}, rng, in));
        map_.add(p + "b", Tensor<T>({1, kWDim}));
        in = kWDim;
      }
    }
  }

  const GeneratorConfig& config() const { return cfg_; }
  ParamStore<T>& params() { return gen_; }
  ParamStore<T>& map_params() { return map_; }

  void bind_all(Tape<T>& tp) {
    gen_.bind_all(tp);
    map_.bind_all(tp);
  }

  // Disentangled latent from (z, sentence vector), (N, 128).
  typename Tape<T>::Value map_latent(Tape<T>& tp, typename Tape<T>::Value z,
                                     typename Tape<T>::Value ebar) const {
    if (cfg_.block_type != BlockType::style)
      throw std::logic_error("map_latent: mapping network exists only for style blocks");
    check_cond(tp, z, ebar);
    std::size_t n = tp.val(z).dim(0);
    auto h = tp.concat_cols(z, ebar);
    for (int l = 0; l < kMapLayers; ++l) {
      std::string p = "fc" + std::to_string(l) + ".";
      h = tp.lrelu(tp.add(tp.matmul(h, map_.find(p + "w")->bound),
                          detail::broadcast_rows(tp, map_.find(p + "b")->bound, n)));
    }
    return h;
  }

  typename Tape<T>::Value generate(Tape<T>& tp, typename Tape<T>::Value z,
                                   typename Tape<T>::Value ebar, Rng& noise_rng,
                                   bool train) const {
    check_cond(tp, z, ebar);
    std::size_t n = tp.val(z).dim(0);

    // batch-tiled learned constant
    auto cflat = tp.reshape(gen_.find("const")->bound, {1, kChannels[0] * 16});
    Tensor<T> ones({n, 1});
    ones.fill(T(1));
    auto x = tp.matmul(tp.leaf(std::move(ones)), cflat);
    if (cfg_.block_type == BlockType::ssacn)
      x = tp.add(x, tp.matmul(z, gen_.find("zproj.w")->bound));
    x = tp.reshape(x, {n, kChannels[0], 4, 4});

    typename Tape<T>::Value w = -1;
    if (cfg_.block_type == BlockType::style) w = map_latent(tp, z, ebar);

    for (int i = 0; i < kStages; ++i) {
      std::string p = "s" + std::to_string(i) + ".";
      auto up = upsample2x(tp, x);
      auto res = tp.lrelu(conv2d(tp, up, gen_.find(p + "res.w")->bound,
                                 gen_.find(p + "res.b")->bound, 1, 1));
      auto skip = conv2d(tp, up, gen_.find(p + "skip.w")->bound,
                         gen_.find(p + "skip.b")->bound, 1, 0);
      auto y = tp.add(res, skip);
      if (cfg_.block_type == BlockType::ssacn) {
        auto m = mask_predict(tp, y, gen_.find(p + "mp1.w")->bound,
                              gen_.find(p + "mp1.b")->bound, gen_.find(p + "mp2.w")->bound,
                              gen_.find(p + "mp2.b")->bound);
        x = tp.lrelu(sscbn(tp, y, ebar, m, gen_.find(p + "g.w")->bound,
                           gen_.find(p + "b.w")->bound, *gen_.find(p + "bn.rm")->value,
                           *gen_.find(p + "bn.rv")->value, train));
      } else {
        const Tensor<T>& yv = tp.val(y);
        Tensor<T> noise(yv.shape());
        for (auto& v : noise.vec()) v = static_cast<T>(noise_rng.normal());
        x = tp.lrelu(style_block(tp, y, w, gen_.find(p + "aff.w")->bound,
                                 gen_.find(p + "aff.b")->bound, gen_.find(p + "sc.w")->bound,
                                 gen_.find(p + "noise")->bound, gen_.find(p + "bias")->bound,
                                 std::move(noise)));
      }
    }
    auto rgb = conv2d(tp, x, gen_.find("rgb.w")->bound, gen_.find("rgb.b")->bound, 1, 1);
    return tp.tanh_(rgb);
  }

 private:
  static constexpr int kStages = 3;
  static constexpr std::size_t kChannels[4] = {128, 128, 64, 32};

  void check_cond(Tape<T>& tp, typename Tape<T>::Value z,
                  typename Tape<T>::Value ebar) const {
    const Tensor<T>& zv = tp.val(z);
    const Tensor<T>& ev = tp.val(ebar);
    if (zv.rank() != 2 || zv.dim(1) != kZDim)
      throw std::invalid_argument("generate: z must be (N, 64)");
    if (ev.rank() != 2 || ev.dim(1) != kCommonDim || ev.dim(0) != zv.dim(0))
      throw std::invalid_argument("generate: sentence vectors must be (N, 64)");
  }

  GeneratorConfig cfg_;
  mutable ParamStore<T> gen_;
  mutable ParamStore<T> map_;
};

// Residual downsampling conv stack to 4x4; the score combines an
// unconditional head with a projection onto the embedded sentence vector.
template <typename T>
class Discriminator {
 public:
  explicit Discriminator(Rng& rng) : ps_("disc.") {
    for (int i = 0; i < kStages; ++i) {
      std::size_t ci = kChannels[i], co = kChannels[i + 1];
      std::string p = "d" + std::to_string(i) + ".";
      ps_.add(p + "main.w", init_normal<T>({co, ci, 3, 3}, rng, ci * 9));
      ps_.add(p + "main.b", Tensor<T>({co}));
      ps_.add(p + "skip.w", init_normal<T>({co, ci, 1, 1}, rng, ci));
      ps_.add(p + "skip.b", Tensor<T>({co}));
    }
    ps_.add("head.w", init_normal<T>({kChannels[kStages], 1}, rng, kChannels[kStages]));
    ps_.add("head.b", Tensor<T>({1, 1}));
    ps_.add("emb.w", init_normal<T>({kCommonDim, kChannels[kStages]}, rng, kCommonDim));
  }

  ParamStore<T>& params() { return ps_; }

  // (N) scores, unbounded.
  typename Tape<T>::Value discriminate(Tape<T>& tp, typename Tape<T>::Value image,
                                       typename Tape<T>::Value ebar) const {
    const Tensor<T>& xv = tp.val(image);
    if (xv.rank() != 4 || xv.dim(1) != 3 || xv.dim(2) != kImageSize || xv.dim(3) != kImageSize)
      throw std::invalid_argument("discriminate: expects (N, 3, 32, 32)");
    std::size_t n = xv.dim(0);
    auto x = image;
    for (int i = 0; i < kStages; ++i) {
      std::string p = "d" + std::to_string(i) + ".";
      auto main = tp.lrelu(conv2d(tp, x, ps_.find(p + "main.w")->bound,
                                  ps_.find(p + "main.b")->bound, 2, 1));
      auto skip = conv2d(tp, x, ps_.find(p + "skip.w")->bound,
                         ps_.find(p + "skip.b")->bound, 2, 0);
      x = tp.add(main, skip);
    }
    auto feat = global_avg_pool(tp, x);  // (N, 128)
    auto uncond = tp.add(tp.matmul(feat, ps_.find("head.w")->bound),
                         detail::broadcast_rows(tp, ps_.find("head.b")->bound, n));
    auto proj = tp.rowdot(feat, tp.matmul(ebar, ps_.find("emb.w")->bound));
    return tp.add(tp.reshape(uncond, {n}), proj);
  }

 private:
  static constexpr int kStages = 3;
  static constexpr std::size_t kChannels[4] = {3, 32, 64, 128};

  mutable ParamStore<T> ps_;
};

}  // namespace t2ic
