#pragma once

#include <cstdint>
#include <fstream>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "t2ic/losses.hpp"
#include "t2ic/nn_ops.hpp"
#include "t2ic/params.hpp"
#include "t2ic/synthdata.hpp"
#include "t2ic/tape.hpp"

namespace t2ic {

constexpr std::size_t kCommonDim = 64;   // shared text/image embedding width
constexpr std::size_t kTextHidden = 32;  // per direction
constexpr std::size_t kEmbedDim = 32;
constexpr std::size_t kNumRegions = 64;  // 8x8 local grid

template <typename T>
struct DamsmGammas {
  T g1 = T(5);   // attention sharpening
  T g2 = T(5);   // region-relevance sharpening
  T g3 = T(10);  // posterior sharpening

  void validate() const {
    if (!(g1 > T(0) && g2 > T(0) && g3 > T(0)))
      throw std::invalid_argument("damsm gammas must be > 0");
  }
};

namespace detail {

// b is (1, d); tile it to (n, d) rows via a ones column.
template <typename T>
typename Tape<T>::Value broadcast_rows(Tape<T>& tp, typename Tape<T>::Value b,
                                       std::size_t n) {
  Tensor<T> ones({n, 1});
  ones.fill(T(1));
  return tp.matmul(tp.leaf(std::move(ones)), b);
}

template <typename T>
struct LstmState {
  typename Tape<T>::Value h, c;
};

// One step of a standard LSTM cell; gates packed [i, f, g, o] along columns.
template <typename T>
LstmState<T> lstm_step(Tape<T>& tp, typename Tape<T>::Value x, LstmState<T> st,
                       typename Tape<T>::Value wx, typename Tape<T>::Value wh,
                       typename Tape<T>::Value b, std::size_t hid) {
  std::size_t n = tp.val(x).dim(0);
  auto gates = tp.add(tp.add(tp.matmul(x, wx), tp.matmul(st.h, wh)),
                      broadcast_rows(tp, b, n));
  auto i = tp.sigmoid_(tp.slice_cols(gates, 0, hid));
  auto f = tp.sigmoid_(tp.slice_cols(gates, hid, 2 * hid));
  auto g = tp.tanh_(tp.slice_cols(gates, 2 * hid, 3 * hid));
  auto o = tp.sigmoid_(tp.slice_cols(gates, 3 * hid, 4 * hid));
  auto c = tp.add(tp.mul(f, st.c), tp.mul(i, g));
  auto h = tp.mul(o, tp.tanh_(c));
  return {h, c};
}

// 0/1 step mask tiled to width d.
template <typename T>
Tensor<T> step_mask(const std::vector<int>& lengths, int t, std::size_t d,
                    bool invert = false) {
  Tensor<T> m({lengths.size(), d});
  for (std::size_t i = 0; i < lengths.size(); ++i) {
    T v = (t < lengths[i]) != invert ? T(1) : T(0);
    for (std::size_t j = 0; j < d; ++j) m[i * d + j] = v;
  }
  return m;
}

}  // namespace detail

// Batched text encoding. Word features live in a flat (N, T*D) matrix with
// padded steps zeroed; the sentence vector concatenates the two directions'
// final states.
template <typename T>
struct TextEncoding {
  typename Tape<T>::Value words_flat;  // (N, kMaxCaptionLen * kCommonDim)
  typename Tape<T>::Value sent;        // (N, kCommonDim)
  std::vector<int> lengths;
};

// Word feature matrix (len_i, D) of one batch item.
template <typename T>
typename Tape<T>::Value word_matrix(Tape<T>& tp, const TextEncoding<T>& te,
                                    std::size_t i) {
  auto row = tp.gather_rows(te.words_flat, {static_cast<int>(i)});
  auto mat = tp.reshape(row, {static_cast<std::size_t>(kMaxCaptionLen), kCommonDim});
  return tp.slice_rows(mat, 0, static_cast<std::size_t>(te.lengths[i]));
}

// Bidirectional recurrent text encoder, hidden 32 per direction.
template <typename T>
class TextEncoder {
 public:
  explicit TextEncoder(Rng& rng) : ps_("txt.") {
    ps_.add("embed", init_normal<T>({kVocabSize, kEmbedDim}, rng, kEmbedDim));
    for (const char* dir : {"f", "b"}) {
      std::string d(dir);
      ps_.add("wx_" + d, init_normal<T>({kEmbedDim, 4 * kTextHidden}, rng, kEmbedDim));
      ps_.add("wh_" + d, init_normal<T>({kTextHidden, 4 * kTextHidden}, rng, kTextHidden));
      ps_.add("b_" + d, Tensor<T>({1, 4 * kTextHidden}));
    }
  }

  ParamStore<T>& params() { return ps_; }

  TextEncoding<T> encode(Tape<T>& tp, const std::vector<std::vector<std::uint16_t>>& tokens,
                         const std::vector<int>& lengths) const {
    const std::size_t n = tokens.size();
    const int tmax = kMaxCaptionLen;
    if (n == 0 || lengths.size() != n)
      throw std::invalid_argument("encode_text: empty batch or length mismatch");
    for (std::size_t i = 0; i < n; ++i) {
      if (lengths[i] < 1 || lengths[i] > tmax)
        throw std::invalid_argument("encode_text: caption length out of range");
      if (tokens[i].size() < static_cast<std::size_t>(lengths[i]))
        throw std::invalid_argument("encode_text: tokens shorter than stated length");
    }

    auto embed = ps_.find("embed")->bound;
    auto step_input = [&](int t) {
      std::vector<int> ids(n);
      for (std::size_t i = 0; i < n; ++i)
        ids[i] = t < static_cast<int>(tokens[i].size()) ? tokens[i][t] : 0;
      return tp.gather_rows(embed, std::move(ids));
    };
    auto masked = [&](typename Tape<T>::Value nw, typename Tape<T>::Value old, int t) {
      return tp.add(tp.mul_const(nw, detail::step_mask<T>(lengths, t, kTextHidden)),
                    tp.mul_const(old, detail::step_mask<T>(lengths, t, kTextHidden, true)));
    };

    auto run = [&](const std::string& d, bool reverse) {
      detail::LstmState<T> st{tp.leaf(Tensor<T>({n, kTextHidden})),
                              tp.leaf(Tensor<T>({n, kTextHidden}))};
      auto wx = ps_.find("wx_" + d)->bound;
      auto wh = ps_.find("wh_" + d)->bound;
      auto b = ps_.find("b_" + d)->bound;
      std::vector<typename Tape<T>::Value> hs(tmax);
      for (int k = 0; k < tmax; ++k) {
        int t = reverse ? tmax - 1 - k : k;
        auto nx = detail::lstm_step(tp, step_input(t), st, wx, wh, b, kTextHidden);
        st = {masked(nx.h, st.h, t), masked(nx.c, st.c, t)};
        hs[t] = st.h;
      }
      return std::pair(hs, st.h);
    };
    auto [hf, sent_f] = run("f", false);
    auto [hb, sent_b] = run("b", true);

    TextEncoding<T> out;
    out.lengths = lengths;
    out.sent = tp.concat_cols(sent_f, sent_b);
    typename Tape<T>::Value flat = -1;
    for (int t = 0; t < tmax; ++t) {
      auto w = tp.mul_const(tp.concat_cols(hf[t], hb[t]),
                            detail::step_mask<T>(lengths, t, kCommonDim));
      flat = (t == 0) ? w : tp.concat_cols(flat, w);
    }
    out.words_flat = flat;
    return out;
  }

 private:
  mutable ParamStore<T> ps_;
};

// Image encoding: per-sample (D, R) local feature matrix plus pooled global.
template <typename T>
struct ImageEncoding {
  typename Tape<T>::Value regions_flat;  // (N, D * R), per sample row-major (D, R)
  typename Tape<T>::Value global_;       // (N, D)
  std::size_t n = 0;
};

template <typename T>
typename Tape<T>::Value region_matrix(Tape<T>& tp, const ImageEncoding<T>& ie,
                                      std::size_t i) {
  auto row = tp.gather_rows(ie.regions_flat, {static_cast<int>(i)});
  return tp.reshape(row, {kCommonDim, kNumRegions});
}

// Strided conv stack to an 8x8 64-channel local map; global = pooled + linear.
template <typename T>
class ImageEncoder {
 public:
  explicit ImageEncoder(Rng& rng, std::string prefix = "img.") : ps_(std::move(prefix)) {
    ps_.add("c1.w", init_normal<T>({32, 3, 3, 3}, rng, 3 * 9));
    ps_.add("c1.b", Tensor<T>({32}));
    ps_.add("c2.w", init_normal<T>({64, 32, 3, 3}, rng, 32 * 9));
    ps_.add("c2.b", Tensor<T>({64}));
    ps_.add("c3.w", init_normal<T>({kCommonDim, 64, 3, 3}, rng, 64 * 9));
    ps_.add("c3.b", Tensor<T>({kCommonDim}));
    ps_.add("proj.w", init_normal<T>({kCommonDim, kCommonDim}, rng, kCommonDim));
    ps_.add("proj.b", Tensor<T>({1, kCommonDim}));
  }

  ParamStore<T>& params() { return ps_; }

  ImageEncoding<T> encode(Tape<T>& tp, typename Tape<T>::Value images) const {
    const Tensor<T>& x = tp.val(images);
    if (x.rank() != 4 || x.dim(1) != 3 || x.dim(2) != kImageSize || x.dim(3) != kImageSize)
      throw std::invalid_argument("encode_image: expects (N, 3, 32, 32)");
    std::size_t n = x.dim(0);
    auto conv = [&](typename Tape<T>::Value h, const char* name, int stride) {
      return tp.lrelu(conv2d(tp, h, ps_.find(std::string(name) + ".w")->bound,
                             ps_.find(std::string(name) + ".b")->bound, stride, 1));
    };
    auto h = conv(images, "c1", 2);  // (N, 32, 16, 16)
    h = conv(h, "c2", 2);            // (N, 64, 8, 8)
    h = conv(h, "c3", 1);            // (N, 64, 8, 8)

    ImageEncoding<T> out;
    out.n = n;
    out.regions_flat = tp.reshape(h, {n, kCommonDim * kNumRegions});
    auto pooled = global_avg_pool(tp, h);
    out.global_ = tp.add(tp.matmul(pooled, ps_.find("proj.w")->bound),
                         detail::broadcast_rows(tp, ps_.find("proj.b")->bound, n));
    return out;
  }

 private:
  mutable ParamStore<T> ps_;
};

// Word-to-region attention context. Two-step normalization: softmax over words
// per region, then softmax over regions of the sharpened relevance.
template <typename T>
typename Tape<T>::Value word_region_attention(Tape<T>& tp, typename Tape<T>::Value e,
                                              typename Tape<T>::Value v, T gamma1) {
  if (!(gamma1 >= T(0))) throw std::invalid_argument("word_region_attention: gamma1 < 0");
  auto s = tp.matmul(e, v);  // (len, R)
  auto sbar = tp.transpose2d(tp.softmax_rows(tp.transpose2d(s)));
  auto alpha = tp.softmax_rows(tp.affine(sbar, gamma1, T(0)));
  return tp.matmul(alpha, v, false, true);  // (len, D)
}

// Plain-value form of the matching-loss inputs so tests can feed leaves
// directly; word/region entries are per batch item.
template <typename T>
struct DamsmBatch {
  std::vector<typename Tape<T>::Value> words;    // (len_i, D) each
  typename Tape<T>::Value sent;                  // (N, D)
  std::vector<typename Tape<T>::Value> regions;  // (D, R) each
  typename Tape<T>::Value global_;               // (N, D)
};

template <typename T>
DamsmBatch<T> make_damsm_batch(Tape<T>& tp, const TextEncoding<T>& te,
                               const ImageEncoding<T>& ie) {
  if (te.lengths.size() != ie.n)
    throw std::invalid_argument("damsm: text/image batch size mismatch");
  DamsmBatch<T> b;
  b.sent = te.sent;
  b.global_ = ie.global_;
  for (std::size_t i = 0; i < ie.n; ++i) {
    b.words.push_back(word_matrix(tp, te, i));
    b.regions.push_back(region_matrix(tp, ie, i));
  }
  return b;
}

// Word- and sentence-level matching loss. Posteriors over the batch in both
// directions, sharpened by g3; each of the four NLL terms is a batch mean, so
// a single-candidate batch scores exactly zero.
template <typename T>
typename Tape<T>::Value damsm_loss(Tape<T>& tp, const DamsmBatch<T>& batch,
                                   const DamsmGammas<T>& g) {
  g.validate();
  const std::size_t n = batch.words.size();
  if (n == 0) throw std::invalid_argument("damsm_loss: empty batch");
  if (batch.regions.size() != n || tp.val(batch.sent).dim(0) != n ||
      tp.val(batch.global_).dim(0) != n)
    throw std::invalid_argument("damsm_loss: inconsistent batch");

  // word-level score matrix, rows = images, cols = captions
  std::vector<typename Tape<T>::Value> scores;
  scores.reserve(n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      auto e = batch.words[j];
      auto ctx = word_region_attention(tp, e, batch.regions[i], g.g1);
      auto cosr = tp.rowdot(tp.row_normalize(ctx), tp.row_normalize(e));
      auto lse = tp.logsumexp_rows(
          tp.reshape(tp.affine(cosr, g.g2, T(0)), {1, tp.val(cosr).numel()}));
      scores.push_back(tp.affine(lse, T(1) / g.g2, T(0)));
    }
  auto rw = tp.stack_scalars(std::move(scores), {n, n});
  auto rs = tp.matmul(tp.row_normalize(batch.global_), tp.row_normalize(batch.sent),
                      false, true);

  std::vector<int> diag(n);
  std::iota(diag.begin(), diag.end(), 0);
  auto nll = [&](typename Tape<T>::Value m) {
    auto logp = tp.log_softmax_rows(tp.affine(m, g.g3, T(0)));
    return tp.affine(tp.mean_all(tp.gather_elems(logp, diag)), T(-1), T(0));
  };
  auto word_terms = tp.add(nll(rw), nll(tp.transpose2d(rw)));
  auto sent_terms = tp.add(nll(rs), nll(tp.transpose2d(rs)));
  return tp.add(word_terms, sent_terms);
}

// Conv context encoder + teacher-forced recurrent decoder over the vocabulary.
template <typename T>
class Captioner {
 public:
  static constexpr std::size_t kHidden = 64;

  explicit Captioner(Rng& rng) : enc_(rng, "cap.cnn."), ps_("cap.") {
    ps_.add("embed", init_normal<T>({kVocabSize, kEmbedDim}, rng, kEmbedDim));
    ps_.add("wx", init_normal<T>({kEmbedDim + kCommonDim, 4 * kHidden}, rng,
                                 kEmbedDim + kCommonDim));
    ps_.add("wh", init_normal<T>({kHidden, 4 * kHidden}, rng, kHidden));
    ps_.add("b", Tensor<T>({1, 4 * kHidden}));
    // zero head so the untrained captioner emits uniform logits
    ps_.add("head.w", Tensor<T>({kHidden, kVocabSize}));
    ps_.add("head.b", Tensor<T>({1, kVocabSize}));
  }

  ParamStore<T>& params() { return ps_; }
  ParamStore<T>& conv_params() { return enc_.params(); }

  void bind_all(Tape<T>& tp) {
    enc_.params().bind_all(tp);
    ps_.bind_all(tp);
  }

  // Per-image context vectors for the decoder, (N, D).
  typename Tape<T>::Value encode_context(Tape<T>& tp, typename Tape<T>::Value images) const {
    return enc_.encode(tp, images).global_;
  }

  // Teacher-forced per-step vocabulary logits, (len(prefix), V). ctx is the
  // (1, D) context row of this image.
  typename Tape<T>::Value decode_logits(Tape<T>& tp, typename Tape<T>::Value ctx,
                                        const std::vector<int>& prefix) const {
    if (prefix.empty())
      throw std::invalid_argument("recaption_logits: empty prefix (start token required)");
    auto embed = ps_.find("embed")->bound;
    auto wx = ps_.find("wx")->bound;
    auto wh = ps_.find("wh")->bound;
    auto b = ps_.find("b")->bound;
    auto hw = ps_.find("head.w")->bound;
    auto hb = ps_.find("head.b")->bound;
    detail::LstmState<T> st{tp.leaf(Tensor<T>({1, kHidden})), tp.leaf(Tensor<T>({1, kHidden}))};
    typename Tape<T>::Value cols = -1;  // (V, t) accumulated transposed logits
    for (std::size_t t = 0; t < prefix.size(); ++t) {
      auto x = tp.concat_cols(tp.gather_rows(embed, {prefix[t]}), ctx);
      st = detail::lstm_step(tp, x, st, wx, wh, b, kHidden);
      auto lg = tp.transpose2d(tp.add(tp.matmul(st.h, hw), hb));  // (V, 1)
      cols = (t == 0) ? lg : tp.concat_cols(cols, lg);
    }
    return tp.transpose2d(cols);
  }

  typename Tape<T>::Value recaption_logits(Tape<T>& tp, typename Tape<T>::Value image,
                                           const std::vector<int>& prefix) const {
    return decode_logits(tp, encode_context(tp, image), prefix);
  }

  // Mean teacher-forced cross-entropy over a caption batch.
  typename Tape<T>::Value caption_batch_loss(Tape<T>& tp, typename Tape<T>::Value images,
                                             const std::vector<std::vector<int>>& captions) const {
    if (captions.empty()) throw std::invalid_argument("caption_batch_loss: empty batch");
    auto ctx = encode_context(tp, images);
    std::vector<typename Tape<T>::Value> per_sample;
    for (std::size_t i = 0; i < captions.size(); ++i) {
      const auto& cap = captions[i];
      if (cap.empty()) throw std::invalid_argument("caption_batch_loss: empty caption");
      std::vector<int> prefix(cap.size());
      prefix[0] = kStartToken;
      std::copy(cap.begin(), cap.end() - 1, prefix.begin() + 1);
      auto logits = decode_logits(tp, tp.gather_rows(ctx, {static_cast<int>(i)}), prefix);
      per_sample.push_back(recaption_loss(tp, logits, cap));
    }
    std::size_t count = per_sample.size();
    return tp.mean_all(tp.stack_scalars(std::move(per_sample), {count}));
  }

 private:
  ImageEncoder<T> enc_;
  mutable ParamStore<T> ps_;
};

struct PretrainOptions {
  int epochs = 20;
  int batch_size = 16;
  double lr = 2e-3;
  std::uint64_t seed = 1;
  double gamma1 = 5, gamma2 = 5, gamma3 = 10;
  double tau = 0.5;
};

namespace detail {

template <typename T>
Tensor<T> image_batch(const Dataset& ds, const std::vector<std::size_t>& ids) {
  Tensor<T> out({ids.size(), 3, kImageSize, kImageSize});
  const std::size_t sz = 3 * kImageSize * kImageSize;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    Tensor<float> img = ds.image(ids[i]);
    for (std::size_t j = 0; j < sz; ++j) out[i * sz + j] = static_cast<T>(img[j]);
  }
  return out;
}

inline std::vector<std::size_t> shuffled_indices(std::size_t n, Rng& rng) {
  std::vector<std::size_t> ids(n);
  std::iota(ids.begin(), ids.end(), std::size_t{0});
  for (std::size_t i = n; i > 1; --i) std::swap(ids[i - 1], ids[rng.below(i)]);
  return ids;
}

}  // namespace detail

// Joint pretraining of the text and image encoders on the matching loss plus
// a contrastive term over (global, sentence) pairs. Writes per-epoch losses
// to csv_path and the final parameters to ckpt_path.
template <typename T>
void pretrain_encoders(const Dataset& ds, const PretrainOptions& opt,
                       TextEncoder<T>& txt, ImageEncoder<T>& img,
                       const std::string& ckpt_path, const std::string& csv_path) {
  if (opt.epochs < 1 || opt.batch_size < 1 || !(opt.lr > 0))
    throw std::invalid_argument("pretrain_encoders: bad options");
  DamsmGammas<T> g{static_cast<T>(opt.gamma1), static_cast<T>(opt.gamma2),
                   static_cast<T>(opt.gamma3)};
  g.validate();
  Rng rng(opt.seed);
  std::ofstream csv(csv_path);
  if (!csv) throw std::runtime_error("pretrain_encoders: cannot write " + csv_path);
  csv << "epoch,matching,contrastive,total\n";

  for (int epoch = 0; epoch < opt.epochs; ++epoch) {
    auto ids = detail::shuffled_indices(ds.train_count(), rng);
    double sum_d = 0, sum_c = 0;
    std::size_t batches = 0;
    for (std::size_t off = 0; off + opt.batch_size <= ids.size();
         off += opt.batch_size) {
      std::vector<std::size_t> bi(ids.begin() + off, ids.begin() + off + opt.batch_size);
      std::vector<std::vector<std::uint16_t>> toks;
      std::vector<int> lens;
      for (auto i : bi) {
        int k = static_cast<int>(rng.below(kCaptionsPerImage));
        toks.push_back(ds.caption(i, k));
        lens.push_back(ds.caption_length(i, k));
      }
      Tape<T> tp;
      txt.params().zero_grads();
      img.params().zero_grads();
      txt.params().bind_all(tp);
      img.params().bind_all(tp);
      auto te = txt.encode(tp, toks, lens);
      auto ie = img.encode(tp, tp.leaf(detail::image_batch<T>(ds, bi)));
      auto l_match = damsm_loss(tp, make_damsm_batch(tp, te, ie), g);
      auto l_con = nt_xent(tp, tp.interleave_rows(ie.global_, te.sent),
                           static_cast<T>(opt.tau));
      auto loss = tp.add(l_match, l_con);
      if (!tp.val(loss).all_finite())
        throw std::runtime_error("pretrain_encoders: non-finite loss, aborting");
      tp.backward(loss);
      txt.params().collect(tp);
      img.params().collect(tp);
      txt.params().adam_step(static_cast<T>(opt.lr), T(0.9), T(0.999), T(1e-8));
      img.params().adam_step(static_cast<T>(opt.lr), T(0.9), T(0.999), T(1e-8));
      sum_d += static_cast<double>(tp.val(l_match)[0]);
      sum_c += static_cast<double>(tp.val(l_con)[0]);
      ++batches;
    }
    if (batches == 0) throw std::runtime_error("pretrain_encoders: dataset smaller than one batch");
    double md = sum_d / batches, mc = sum_c / batches;
    csv << epoch + 1 << "," << md << "," << mc << "," << md + mc << "\n";
    csv.flush();
  }
  TensorFile tf;
  txt.params().save(tf);
  img.params().save(tf);
  tf.save(ckpt_path);
}

// Teacher-forced captioner pretraining; returns the final epoch's mean
// cross-entropy.
template <typename T>
double pretrain_captioner(const Dataset& ds, const PretrainOptions& opt,
                          Captioner<T>& cap, const std::string& ckpt_path,
                          const std::string& csv_path) {
  if (opt.epochs < 1 || opt.batch_size < 1 || !(opt.lr > 0))
    throw std::invalid_argument("pretrain_captioner: bad options");
  Rng rng(opt.seed);
  std::ofstream csv(csv_path);
  if (!csv) throw std::runtime_error("pretrain_captioner: cannot write " + csv_path);
  csv << "epoch,cross_entropy\n";

  double last = 0;
  for (int epoch = 0; epoch < opt.epochs; ++epoch) {
    auto ids = detail::shuffled_indices(ds.train_count(), rng);
    double sum = 0;
    std::size_t batches = 0;
    for (std::size_t off = 0; off + opt.batch_size <= ids.size();
         off += opt.batch_size) {
      std::vector<std::size_t> bi(ids.begin() + off, ids.begin() + off + opt.batch_size);
      std::vector<std::vector<int>> caps;
      for (auto i : bi) {
        int k = static_cast<int>(rng.below(kCaptionsPerImage));
        auto toks = ds.caption(i, k);
        int len = ds.caption_length(i, k);
        caps.emplace_back(toks.begin(), toks.begin() + len);
      }
      Tape<T> tp;
      cap.params().zero_grads();
      cap.conv_params().zero_grads();
      cap.bind_all(tp);
      auto loss = cap.caption_batch_loss(tp, tp.leaf(detail::image_batch<T>(ds, bi)), caps);
      if (!tp.val(loss).all_finite())
        throw std::runtime_error("pretrain_captioner: non-finite loss, aborting");
      tp.backward(loss);
      cap.params().collect(tp);
      cap.conv_params().collect(tp);
      cap.params().adam_step(static_cast<T>(opt.lr), T(0.9), T(0.999), T(1e-8));
      cap.conv_params().adam_step(static_cast<T>(opt.lr), T(0.9), T(0.999), T(1e-8));
      sum += static_cast<double>(tp.val(loss)[0]);
      ++batches;
    }
    if (batches == 0) throw std::runtime_error("pretrain_captioner: dataset smaller than one batch");
    last = sum / batches;
    csv << epoch + 1 << "," << last << "\n";
    csv.flush();
  }
  TensorFile tf;
  cap.conv_params().save(tf);
  cap.params().save(tf);
  tf.save(ckpt_path);
  return last;
}

}  // namespace t2ic
