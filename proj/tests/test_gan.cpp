#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "t2ic/gan.hpp"
#include "tape_check.hpp"

using namespace t2ic;
using namespace t2ic::testing;

namespace {

Tensor<double> randn(std::vector<std::size_t> shape, Rng& rng, double scale = 1.0) {
  Tensor<double> t(std::move(shape));
  for (auto& x : t.vec()) x = rng.normal() * scale;
  return t;
}

}  // namespace

TEST_CASE("map_latent: shape, determinism, caption sensitivity") {
  Rng rng(3);
  Generator<double> gen(rng, {BlockType::style});

  Tape<double> tp;
  gen.bind_all(tp);
  Rng dr(9);
  auto z = tp.leaf(randn({2, kZDim}, dr));
  auto e1 = tp.leaf(randn({2, kCommonDim}, dr));
  auto e2 = tp.leaf(randn({2, kCommonDim}, dr));
  auto w1 = gen.map_latent(tp, z, e1);
  CHECK(tp.val(w1).shape() == std::vector<std::size_t>({2, kWDim}));
  CHECK(tp.val(w1).all_finite());

  auto w1b = gen.map_latent(tp, z, e1);
  CHECK(tp.val(w1b).vec() == tp.val(w1).vec());

  // same z, different sentence vector: conditioning reaches W
  auto w2 = gen.map_latent(tp, z, e2);
  double diff = 0;
  for (std::size_t i = 0; i < tp.val(w1).numel(); ++i)
    diff += std::abs(tp.val(w1)[i] - tp.val(w2)[i]);
  CHECK(diff > 1e-6);

  Rng rng2(4);
  Generator<double> sg(rng2, {BlockType::ssacn});
  Tape<double> tp2;
  sg.bind_all(tp2);
  CHECK_THROWS(sg.map_latent(tp2, tp2.leaf(randn({1, kZDim}, dr)),
                             tp2.leaf(randn({1, kCommonDim}, dr))));
}

TEST_CASE("style_block: demodulation identity and scale cancellation") {
  Rng rng(7);
  Tape<double> tp;
  std::size_t n = 2, ci = 3, co = 4, h = 5;

  // weights normalized to unit norm per output channel
  Tensor<double> wt = randn({co, ci, 3, 3}, rng);
  for (std::size_t o = 0; o < co; ++o) {
    double s2 = 0;
    for (std::size_t k = 0; k < ci * 9; ++k) s2 += wt[o * ci * 9 + k] * wt[o * ci * 9 + k];
    for (std::size_t k = 0; k < ci * 9; ++k) wt[o * ci * 9 + k] /= std::sqrt(s2);
  }
  auto x = tp.leaf(randn({n, ci, h, h}, rng));
  auto conv_w = tp.leaf(wt);
  auto wlat = tp.leaf(randn({n, 2}, rng));
  auto aff_w = tp.leaf(Tensor<double>({2, ci}));  // zero: s depends on bias only
  auto zero_strength = tp.leaf(Tensor<double>({1}));
  auto zero_bias = tp.leaf(Tensor<double>({co}));

  auto with_scale = [&](double s) {
    Tensor<double> ab({1, ci});
    ab.fill(s);
    return tp.val(style_block(tp, x, wlat, aff_w, tp.leaf(std::move(ab)), conv_w,
                              zero_strength, zero_bias, Tensor<double>({n, co, h, h})));
  };
  // s = 1 and unit-norm weights: demodulation is the identity
  auto plain = tp.val(conv2d(tp, x, conv_w, tp.leaf(Tensor<double>({co})), 1, 1));
  auto s1 = with_scale(1.0);
  for (std::size_t i = 0; i < plain.numel(); ++i)
    CHECK(s1[i] == doctest::Approx(plain[i]).epsilon(1e-6));

  // doubling the modulation scales does not double the output
  auto s2 = with_scale(2.0);
  for (std::size_t i = 0; i < s1.numel(); ++i)
    CHECK(s2[i] == doctest::Approx(s1[i]).epsilon(1e-5));
}

TEST_CASE("style_block: output per-channel std stays near unit variance") {
  Rng rng(17);
  Tape<double> tp;
  std::size_t n = 4, ci = 8, co = 8, h = 16;
  auto x = tp.leaf(randn({n, ci, h, h}, rng));  // unit-variance input
  auto wlat = tp.leaf(randn({n, 6}, rng));
  auto aff_w = tp.leaf(randn({6, ci}, rng, 0.3));
  Tensor<double> ab({1, ci});
  ab.fill(1.0);
  auto out = tp.val(style_block(tp, x, wlat, aff_w, tp.leaf(std::move(ab)),
                                tp.leaf(randn({co, ci, 3, 3}, rng, 1.0 / std::sqrt(ci * 9.0))),
                                tp.leaf(Tensor<double>({1})), tp.leaf(Tensor<double>({co})),
                                Tensor<double>({n, co, h, h})));
  for (std::size_t c = 0; c < co; ++c) {
    double s2 = 0;
    std::size_t cnt = 0;
    for (std::size_t b = 0; b < n; ++b)
      for (std::size_t p = 0; p < h * h; ++p) {
        double v = out[(b * co + c) * h * h + p];
        s2 += v * v;
        ++cnt;
      }
    double sd = std::sqrt(s2 / cnt);
    CHECK(sd > 0.5);
    CHECK(sd < 2.0);
  }
}

TEST_CASE("sscbn: boundary cases and batch-1 rules") {
  Rng rng(23);
  std::size_t n = 3, c = 4, h = 5;

  Tape<double> tp;
  auto x = tp.leaf(randn({n, c, h, h}, rng));
  auto ebar = tp.leaf(randn({n, 6}, rng));
  Tensor<double> rm({c}), rv({c});
  rv.fill(1.0);

  auto zeros_m = tp.leaf(Tensor<double>({n, 1, h, h}));
  Tensor<double> ones_m_t({n, 1, h, h});
  ones_m_t.fill(1.0);
  auto ones_m = tp.leaf(std::move(ones_m_t));
  auto gw = tp.leaf(randn({6, c}, rng));
  auto bw = tp.leaf(randn({6, c}, rng));
  auto zero_gw = tp.leaf(Tensor<double>({6, c}));
  auto zero_bw = tp.leaf(Tensor<double>({6, c}));

  auto bn = tp.val(batchnorm_train(tp, x, 1e-5));
  // m = 0: no text injection anywhere
  auto o0 = tp.val(sscbn(tp, x, ebar, zeros_m, gw, bw, rm, rv, true));
  CHECK(o0.shape() == tp.val(x).shape());
  for (std::size_t i = 0; i < bn.numel(); ++i)
    CHECK(o0[i] == doctest::Approx(bn[i]).epsilon(1e-6));
  // m = 1 but zero text affine: still plain normalization
  auto o1 = tp.val(sscbn(tp, x, ebar, ones_m, zero_gw, zero_bw, rm, rv, true));
  for (std::size_t i = 0; i < bn.numel(); ++i)
    CHECK(o1[i] == doctest::Approx(bn[i]).epsilon(1e-6));

  // batch of one: error in training mode, fine in eval mode via running stats
  Tape<double> t1;
  auto x1 = t1.leaf(randn({1, c, h, h}, rng));
  auto e1 = t1.leaf(randn({1, 6}, rng));
  auto m1 = t1.leaf(Tensor<double>({1, 1, h, h}));
  auto g1 = t1.leaf(Tensor<double>({6, c}));
  CHECK_THROWS(sscbn(t1, x1, e1, m1, g1, g1, rm, rv, true));
  Tensor<double> rm2({c}), rv2({c});
  for (std::size_t j = 0; j < c; ++j) {
    rm2[j] = 0.5 * j;
    rv2[j] = 1.0 + j;
  }
  auto oe = t1.val(sscbn(t1, x1, e1, m1, g1, g1, rm2, rv2, false));
  for (std::size_t j = 0; j < c; ++j)
    for (std::size_t p = 0; p < h * h; ++p) {
      double want = (t1.val(x1)[j * h * h + p] - rm2[j]) / std::sqrt(rv2[j] + 1e-5);
      CHECK(oe[j * h * h + p] == doctest::Approx(want).epsilon(1e-9));
    }
}

TEST_CASE("mask_predict: range and zero-init midpoint") {
  Rng rng(29);
  Tape<double> tp;
  std::size_t n = 2, c = 4, h = 6;
  auto x = tp.leaf(randn({n, c, h, h}, rng));
  auto w1 = tp.leaf(randn({8, c, 3, 3}, rng, 0.2));
  auto b1 = tp.leaf(Tensor<double>({8}));
  auto w2 = tp.leaf(randn({1, 8, 3, 3}, rng, 0.2));
  auto b2 = tp.leaf(Tensor<double>({1}));
  auto m = tp.val(mask_predict(tp, x, w1, b1, w2, b2));
  CHECK(m.shape() == std::vector<std::size_t>({n, 1, h, h}));
  for (double v : m.vec()) {
    CHECK(v > 0.0);
    CHECK(v < 1.0);
  }
  // zero input and zero-initialized final conv: sigmoid(0) everywhere
  auto zx = tp.leaf(Tensor<double>({n, c, h, h}));
  auto zw2 = tp.leaf(Tensor<double>({1, 8, 3, 3}));
  auto m0 = tp.val(mask_predict(tp, zx, w1, b1, zw2, b2));
  for (double v : m0.vec()) CHECK(v == 0.5);
}

TEST_CASE("generate: bounds, determinism, batch-1 training rule") {
  for (BlockType bt : {BlockType::ssacn, BlockType::style}) {
    CAPTURE(static_cast<int>(bt));
    Rng rng(41);
    Generator<float> gen(rng, {bt});

    auto run = [&](std::uint64_t data_seed) {
      Tape<float> tp;
      gen.bind_all(tp);
      Rng dr(data_seed), noise(100);
      Tensor<float> z({2, kZDim}), e({2, kCommonDim});
      for (auto& v : z.vec()) v = static_cast<float>(dr.normal());
      for (auto& v : e.vec()) v = static_cast<float>(dr.normal());
      auto img = gen.generate(tp, tp.leaf(std::move(z)), tp.leaf(std::move(e)), noise, true);
      return tp.val(img);
    };
    auto a = run(5);
    CHECK(a.shape() == std::vector<std::size_t>({2, 3, kImageSize, kImageSize}));
    CHECK(a.all_finite());
    for (float v : a.vec()) {
      CHECK(v >= -1.0f);
      CHECK(v <= 1.0f);
    }
    if (bt == BlockType::style) {
      auto b = run(5);
      CHECK(a.vec() == b.vec());  // same z, caption, noise seed
    }

    Tape<float> tp;
    gen.bind_all(tp);
    Rng noise(1);
    Tensor<float> z1({1, kZDim}), e1({1, kCommonDim});
    if (bt == BlockType::ssacn)
      CHECK_THROWS(gen.generate(tp, tp.leaf(std::move(z1)), tp.leaf(std::move(e1)), noise, true));
  }
}

TEST_CASE("generate + discriminate: every trainable parameter gets gradient") {
  for (BlockType bt : {BlockType::ssacn, BlockType::style}) {
    CAPTURE(static_cast<int>(bt));
    Rng rng(43);
    Generator<double> gen(rng, {bt});
    Discriminator<double> disc(rng);

    Tape<double> tp;
    gen.bind_all(tp);
    disc.params().bind_all(tp);
    Rng dr(6), noise(7);
    auto z = tp.leaf(randn({2, kZDim}, dr));
    auto e = tp.leaf(randn({2, kCommonDim}, dr));
    auto fake = gen.generate(tp, z, e, noise, true);
    auto scores = disc.discriminate(tp, fake, e);
    CHECK(tp.val(scores).shape() == std::vector<std::size_t>({2}));
    CHECK(tp.val(scores).all_finite());
    tp.backward(tp.mean_all(scores));
    gen.params().collect(tp);
    gen.map_params().collect(tp);
    disc.params().collect(tp);

    auto check_store = [](ParamStore<double>& ps) {
      for (const auto& p : ps.params()) {
        if (!p->trainable) continue;
        double mag = 0;
        for (std::size_t i = 0; i < p->grad.numel(); ++i) mag += std::abs(p->grad[i]);
        INFO(ps.prefix() << p->name);
        CHECK(mag > 0.0);
      }
    };
    check_store(gen.params());
    check_store(gen.map_params());
    check_store(disc.params());
  }
}

TEST_CASE("discriminate: determinism and caption dependence") {
  Rng rng(47);
  Discriminator<double> disc(rng);
  Tape<double> tp;
  disc.params().bind_all(tp);
  Rng dr(8);
  auto img = tp.leaf(randn({2, 3, kImageSize, kImageSize}, dr, 0.3));
  auto e1 = tp.leaf(randn({2, kCommonDim}, dr));
  auto e2 = tp.leaf(randn({2, kCommonDim}, dr));
  auto s1 = tp.val(disc.discriminate(tp, img, e1));
  auto s1b = tp.val(disc.discriminate(tp, img, e1));
  auto s2 = tp.val(disc.discriminate(tp, img, e2));
  CHECK(s1.vec() == s1b.vec());
  CHECK(s1[0] != s2[0]);
  CHECK_THROWS(disc.discriminate(tp, e1, e1));
}

TEST_CASE("gradient check: sscbn and style fusion paths") {
  Rng rng(53);
  std::size_t n = 2, c = 3, h = 4;

  // x, ebar, m, gamma_w, beta_w
  double err1 = check_loss(
      {{n, c, h, h}, {n, 5}, {n, 1, h, h}, {5, c}, {5, c}},
      [&](DTape& tp, const std::vector<DValue>& v) {
        Tensor<double> rm({c}), rv({c});
        rv.fill(1.0);
        auto m = tp.sigmoid_(v[2]);  // keep the mask inside (0,1)
        auto out = sscbn(tp, v[0], v[1], m, v[3], v[4], rm, rv, true);
        return tp.mean_all(tp.square(out));
      },
      rng, 0.8);
  CHECK(err1 <= 1e-4);

  // x, w, aff_w, aff_b, conv_w, strength, bias
  Rng nz(5);
  Tensor<double> noise = randn({n, 4, h, h}, nz);
  double err2 = check_loss(
      {{n, c, h, h}, {n, 5}, {5, c}, {1, c}, {4, c, 3, 3}, {1}, {4}},
      [&](DTape& tp, const std::vector<DValue>& v) {
        auto out = style_block(tp, v[0], v[1], v[2], v[3], v[4], v[5], v[6], noise);
        return tp.mean_all(tp.square(out));
      },
      rng, 0.8);
  CHECK(err2 <= 1e-4);
}
