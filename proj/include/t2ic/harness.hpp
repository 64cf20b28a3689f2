#pragma once

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "t2ic/config.hpp"
#include "t2ic/gan.hpp"
#include "t2ic/metrics.hpp"
#include "t2ic/ppm.hpp"

namespace t2ic {

// Full training-run configuration, parsed from the flat key=value format.
// The seed is mandatory; every random choice in a run derives from it.
struct RunConfig {
  std::string data, out_dir;
  std::string encoders, captioner, classifier;
  std::uint64_t seed = 0;
  int epochs = 30;
  int batch_size = 16;
  int eval_every = 5;  // epochs between evaluations
  std::size_t eval_n = 200;
  BlockType block_type = BlockType::ssacn;
  double lr_g = 1e-4, lr_d = 2e-4;
  double beta1 = 0.0, beta2 = 0.9;
  double lambda1 = 0.05, lambda2 = 0.2, lambda3 = 0.2, lambda4 = 1.0;
  double tau = 0.5;
  double gamma1 = 5, gamma2 = 5, gamma3 = 10;
  bool damsm_both = false;  // also match the second fake against its caption

  template <typename T>
  LossWeights<T> weights() const {
    LossWeights<T> w;
    w.lambda1 = static_cast<T>(lambda1);
    w.lambda2 = static_cast<T>(lambda2);
    w.lambda3 = static_cast<T>(lambda3);
    w.lambda4 = static_cast<T>(lambda4);
    w.tau = static_cast<T>(tau);
    return w;
  }

  template <typename T>
  DamsmGammas<T> gammas() const {
    return {static_cast<T>(gamma1), static_cast<T>(gamma2), static_cast<T>(gamma3)};
  }

  static RunConfig from_config(const Config& c) {
    c.check_keys({"data", "out_dir", "encoders", "captioner", "classifier", "seed",
                  "epochs", "batch_size", "eval_every", "eval_n", "block_type", "lr_g",
                  "lr_d", "beta1", "beta2", "lambda1", "lambda2", "lambda3", "lambda4",
                  "tau", "gamma1", "gamma2", "gamma3", "damsm_both"});
    RunConfig rc;
    if (!c.has("seed")) throw std::invalid_argument("run config: seed is required");
    rc.seed = static_cast<std::uint64_t>(c.get_int("seed", 0));
    rc.data = c.get_str("data");
    rc.out_dir = c.get_str("out_dir");
    rc.encoders = c.get_str("encoders");
    rc.captioner = c.get_str("captioner");
    rc.classifier = c.get_str("classifier");
    rc.epochs = static_cast<int>(c.get_int("epochs", rc.epochs));
    rc.batch_size = static_cast<int>(c.get_int("batch_size", rc.batch_size));
    rc.eval_every = static_cast<int>(c.get_int("eval_every", rc.eval_every));
    rc.eval_n = static_cast<std::size_t>(c.get_int("eval_n", static_cast<std::int64_t>(rc.eval_n)));
    rc.block_type = block_type_from_string(c.get_str("block_type", "ssacn"));
    rc.lr_g = c.get_num("lr_g", rc.lr_g);
    rc.lr_d = c.get_num("lr_d", rc.lr_d);
    rc.beta1 = c.get_num("beta1", rc.beta1);
    rc.beta2 = c.get_num("beta2", rc.beta2);
    rc.lambda1 = c.get_num("lambda1", rc.lambda1);
    rc.lambda2 = c.get_num("lambda2", rc.lambda2);
    rc.lambda3 = c.get_num("lambda3", rc.lambda3);
    rc.lambda4 = c.get_num("lambda4", rc.lambda4);
    rc.tau = c.get_num("tau", rc.tau);
    rc.gamma1 = c.get_num("gamma1", rc.gamma1);
    rc.gamma2 = c.get_num("gamma2", rc.gamma2);
    rc.gamma3 = c.get_num("gamma3", rc.gamma3);
    rc.damsm_both = c.get_int("damsm_both", 0) != 0;
    rc.validate();
    return rc;
  }

  static RunConfig from_file(const std::string& path) {
    return from_config(Config::parse_file(path));
  }

  void validate() const {
    if (batch_size < 2)
      throw std::invalid_argument("run config: batch_size must be >= 2 (batch statistics)");
    if (epochs < 1 || eval_every < 1)
      throw std::invalid_argument("run config: epochs and eval_every must be >= 1");
    if (eval_n < 8) throw std::invalid_argument("run config: eval_n must be >= 8");
    if (!(lr_g > 0) || !(lr_d > 0))
      throw std::invalid_argument("run config: learning rates must be > 0");
    if (data.empty() || out_dir.empty() || encoders.empty() || captioner.empty() ||
        classifier.empty())
      throw std::invalid_argument(
          "run config: data, out_dir, encoders, captioner and classifier are required");
  }
};

struct LedgerRow {
  long step = 0;
  double l_g = 0, l_d = 0, l_damsm = 0, l_cr = 0, l_cf = 0, l_cp = 0, l = 0;
  double wall = 0;  // seconds since run start, written to a separate timing file
};

namespace detail {

inline std::string fmt_g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

template <typename T>
void unbind(ParamStore<T>& ps) {
  for (auto& p : ps.params()) p->bound = -1;
}

}  // namespace detail

// Per-step loss log. The aggregate column is recomputed in double from the
// component columns, so every flushed row satisfies the weighted-sum identity
// exactly. Wall-clock goes to a separate file to keep the loss log a pure
// function of config + seed.
class RunLedger {
 public:
  void push(LedgerRow row) { rows_.push_back(row); }
  const std::vector<LedgerRow>& rows() const { return rows_; }

  void flush(const std::string& csv_path, const std::string& timing_path) const {
    std::ofstream csv(csv_path);
    if (!csv) throw std::runtime_error("ledger: cannot write " + csv_path);
    csv << "step,L_G,L_D,L_DAMSM,L_CR,L_CF,L_CP,L\n";
    for (const auto& r : rows_)
      csv << r.step << "," << detail::fmt_g17(r.l_g) << "," << detail::fmt_g17(r.l_d)
          << "," << detail::fmt_g17(r.l_damsm) << "," << detail::fmt_g17(r.l_cr) << ","
          << detail::fmt_g17(r.l_cf) << "," << detail::fmt_g17(r.l_cp) << ","
          << detail::fmt_g17(r.l) << "\n";
    std::ofstream tim(timing_path);
    if (!tim) throw std::runtime_error("ledger: cannot write " + timing_path);
    tim << "step,seconds\n";
    for (const auto& r : rows_) tim << r.step << "," << detail::fmt_g17(r.wall) << "\n";
  }

 private:
  std::vector<LedgerRow> rows_;
};

namespace detail {

// Globals of the frozen image encoder, chunked, as doubles.
template <typename T>
Tensor<double> image_globals(ImageEncoder<T>& img, const Tensor<T>& images) {
  std::size_t n = images.dim(0), sz = 3 * kImageSize * kImageSize;
  Tensor<double> out({n, kCommonDim});
  const std::size_t chunk = 64;
  for (std::size_t off = 0; off < n; off += chunk) {
    std::size_t m = std::min(chunk, n - off);
    Tensor<T> part({m, 3, kImageSize, kImageSize});
    std::copy(images.data() + off * sz, images.data() + (off + m) * sz, part.data());
    Tape<T> tp;
    img.params().bind_all(tp);
    auto enc = img.encode(tp, tp.leaf(std::move(part)));
    const Tensor<T>& g = tp.val(enc.global_);
    for (std::size_t i = 0; i < m * kCommonDim; ++i)
      out[off * kCommonDim + i] = static_cast<double>(g[i]);
    unbind(img.params());
  }
  return out;
}

// Sentence vectors of the frozen text encoder, chunked.
template <typename T>
Tensor<T> caption_sents(TextEncoder<T>& txt,
                        const std::vector<std::vector<std::uint16_t>>& toks,
                        const std::vector<int>& lens) {
  std::size_t n = toks.size();
  Tensor<T> out({n, kCommonDim});
  const std::size_t chunk = 64;
  for (std::size_t off = 0; off < n; off += chunk) {
    std::size_t m = std::min(chunk, n - off);
    std::vector<std::vector<std::uint16_t>> t(toks.begin() + off, toks.begin() + off + m);
    std::vector<int> l(lens.begin() + off, lens.begin() + off + m);
    Tape<T> tp;
    txt.params().bind_all(tp);
    auto te = txt.encode(tp, t, l);
    const Tensor<T>& s = tp.val(te.sent);
    std::copy(s.data(), s.data() + m * kCommonDim, out.data() + off * kCommonDim);
    unbind(txt.params());
  }
  return out;
}

template <typename T>
Tensor<double> to_f64(const Tensor<T>& t) {
  Tensor<double> out(t.shape());
  for (std::size_t i = 0; i < t.numel(); ++i) out[i] = static_cast<double>(t[i]);
  return out;
}

}  // namespace detail

// Scores a generator against the eval split: Frechet feature distance and
// retrieval precision through the frozen image/text encoders, classifier-split
// score through the certified shape classifier. Optionally dumps the feature
// sets for offline inspection.
template <typename T>
MetricReport evaluate_model(const Dataset& ds, Generator<T>& gen, TextEncoder<T>& txt,
                            ImageEncoder<T>& img, IsClassifier<T>& cls, std::size_t n,
                            std::uint64_t seed, const std::string& dump_path = "") {
  if (ds.eval_count() == 0) throw std::invalid_argument("evaluate: empty eval split");
  if (n < 8) throw std::invalid_argument("evaluate: need at least 8 samples");
  double cls_acc = cls.eval_accuracy(ds);
  if (cls_acc < 0.80)
    throw std::runtime_error("evaluate: scoring classifier uncertified (eval accuracy " +
                             std::to_string(cls_acc) + " < 0.80)");

  Rng rng(seed);
  Rng noise_rng = Rng(seed).fork(9);

  // eval captions and latents for the fakes
  std::vector<std::vector<std::uint16_t>> toks(n);
  std::vector<int> lens(n);
  Tensor<T> z({n, kZDim});
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t idx = ds.train_count() + (i % ds.eval_count());
    int k = static_cast<int>(rng.below(kCaptionsPerImage));
    toks[i] = ds.caption(idx, k);
    lens[i] = ds.caption_length(idx, k);
    for (std::size_t j = 0; j < kZDim; ++j)
      z[i * kZDim + j] = static_cast<T>(rng.normal());
  }
  Tensor<T> sents = detail::caption_sents(txt, toks, lens);

  Tensor<T> fakes({n, 3, kImageSize, kImageSize});
  const std::size_t chunk = 50, img_sz = 3 * kImageSize * kImageSize;
  for (std::size_t off = 0; off < n; off += chunk) {
    std::size_t m = std::min(chunk, n - off);
    Tensor<T> zc({m, kZDim}), ec({m, kCommonDim});
    std::copy(z.data() + off * kZDim, z.data() + (off + m) * kZDim, zc.data());
    std::copy(sents.data() + off * kCommonDim, sents.data() + (off + m) * kCommonDim,
              ec.data());
    Tape<T> tp;
    gen.bind_all(tp);
    auto fake = gen.generate(tp, tp.leaf(std::move(zc)), tp.leaf(std::move(ec)),
                             noise_rng, false);
    const Tensor<T>& fv = tp.val(fake);
    std::copy(fv.data(), fv.data() + m * img_sz, fakes.data() + off * img_sz);
    detail::unbind(gen.params());
    detail::unbind(gen.map_params());
  }

  // real side: every eval image
  Tensor<T> reals({ds.eval_count(), 3, kImageSize, kImageSize});
  for (std::size_t i = 0; i < ds.eval_count(); ++i) {
    Tensor<float> im = ds.image(ds.train_count() + i);
    for (std::size_t j = 0; j < img_sz; ++j)
      reals[i * img_sz + j] = static_cast<T>(im[j]);
  }
  Tensor<double> real_feats = detail::image_globals(img, reals);
  Tensor<double> fake_feats = detail::image_globals(img, fakes);

  MetricReport r;
  r.fid = fid(real_feats, fake_feats);
  Tensor<double> probs = cls.probabilities(fakes);
  auto [im_, is_] = inception_score(probs);
  r.is_mean = im_;
  r.is_std = is_;

  // mismatching pool drawn from train-split captions
  const std::size_t pool_n = 500;
  std::vector<std::vector<std::uint16_t>> ptoks(pool_n);
  std::vector<int> plens(pool_n);
  for (std::size_t p = 0; p < pool_n; ++p) {
    std::size_t idx = p % ds.train_count();
    int k = static_cast<int>(rng.below(kCaptionsPerImage));
    ptoks[p] = ds.caption(idx, k);
    plens[p] = ds.caption_length(idx, k);
  }
  Tensor<double> pool = detail::to_f64(detail::caption_sents(txt, ptoks, plens));
  r.r_precision = r_precision(fake_feats, detail::to_f64(sents), pool, seed);
  r.n_samples = n;
  r.seed = seed;

  if (!dump_path.empty()) {
    TensorFile tf;
    tf.put_as_f32("feats.real", real_feats);
    tf.put_as_f32("feats.fake", fake_feats);
    tf.put_as_f32("probs.fake", probs);
    tf.save(dump_path);
  }
  return r;
}

template <typename T>
struct ModelSet {
  TextEncoder<T> txt;
  ImageEncoder<T> img;
  Captioner<T> cap;
  IsClassifier<T> cls;
  Generator<T> gen;
  Discriminator<T> disc;

  ModelSet(Rng rng, GeneratorConfig gc)
      : txt(rng), img(rng), cap(rng), cls(rng), gen(rng, gc), disc(rng) {}
};

// Adversarial trainer for one generator/discriminator pair. The text encoder,
// image encoder, captioner and scoring classifier are loaded from pretraining
// checkpoints and frozen; gradients flow through them into the generator but
// their parameters never move.
template <typename T>
class Trainer {
 public:
  explicit Trainer(RunConfig cfg)
      : cfg_(std::move(cfg)),
        ds_(Dataset::load(cfg_.data)),
        models_(Rng(cfg_.seed).fork(1), GeneratorConfig{cfg_.block_type}) {
    cfg_.validate();
    TensorFile enc = TensorFile::load(cfg_.encoders);
    models_.txt.params().load(enc);
    models_.img.params().load(enc);
    TensorFile cap = TensorFile::load(cfg_.captioner);
    models_.cap.conv_params().load(cap);
    models_.cap.params().load(cap);
    TensorFile cls = TensorFile::load(cfg_.classifier);
    models_.cls.params().load(cls);
    if (ds_.train_count() < static_cast<std::size_t>(cfg_.batch_size))
      throw std::invalid_argument("trainer: dataset smaller than one batch");
  }

  const RunConfig& config() const { return cfg_; }
  const Dataset& dataset() const { return ds_; }
  ModelSet<T>& models() { return models_; }
  const RunLedger& ledger() const { return ledger_; }

  // Runs the configured number of epochs and returns the last evaluation.
  // Evaluations happen before training and after every eval_every epochs; if
  // eval_every exceeds epochs the run is purely a training loop.
  MetricReport train() {
    namespace fs = std::filesystem;
    fs::create_directories(cfg_.out_dir);
    Rng loop = Rng(cfg_.seed).fork(2);
    Rng noise = Rng(cfg_.seed).fork(3);
    start_ = std::chrono::steady_clock::now();
    MetricReport last;
    bool with_evals = cfg_.eval_every <= cfg_.epochs;
    long step = 0;
    try {
      if (with_evals) last = run_eval(0);
      for (int epoch = 1; epoch <= cfg_.epochs; ++epoch) {
        auto ids = detail::shuffled_indices(ds_.train_count(), loop);
        for (std::size_t off = 0;
             off + static_cast<std::size_t>(cfg_.batch_size) <= ids.size();
             off += cfg_.batch_size) {
          std::vector<std::size_t> bi(ids.begin() + off, ids.begin() + off + cfg_.batch_size);
          train_step(bi, loop, noise, ++step);
        }
        if (with_evals && (epoch % cfg_.eval_every == 0 || epoch == cfg_.epochs)) {
          flush();
          last = run_eval(step);
          save_checkpoint(cfg_.out_dir + "/ckpt_e" + std::to_string(epoch) + ".t2ic");
        }
      }
    } catch (...) {
      flush();
      throw;
    }
    flush();
    save_checkpoint(cfg_.out_dir + "/ckpt_final.t2ic");
    return last;
  }

  MetricReport evaluate(std::size_t n, std::uint64_t seed, const std::string& dump = "") {
    return evaluate_model(ds_, models_.gen, models_.txt, models_.img, models_.cls, n,
                          seed, dump);
  }

  void save_checkpoint(const std::string& path) {
    TensorFile tf;
    Tensor<float> bt({1});
    bt[0] = cfg_.block_type == BlockType::style ? 1.0f : 0.0f;
    tf.put("meta.block_type", std::move(bt));
    models_.gen.params().save(tf);
    models_.gen.map_params().save(tf);
    models_.disc.params().save(tf);
    models_.txt.params().save(tf, false);
    models_.img.params().save(tf, false);
    models_.cap.conv_params().save(tf, false);
    models_.cap.params().save(tf, false);
    models_.cls.params().save(tf, false);
    tf.save(path);
  }

  void load_checkpoint(const std::string& path) {
    TensorFile tf = TensorFile::load(path);
    BlockType bt = tf.get("meta.block_type")[0] != 0 ? BlockType::style : BlockType::ssacn;
    if (bt != cfg_.block_type)
      throw std::runtime_error("checkpoint block type does not match the run config");
    models_.gen.params().load(tf);
    models_.gen.map_params().load(tf);
    models_.disc.params().load(tf);
    models_.txt.params().load(tf);
    models_.img.params().load(tf);
    models_.cap.conv_params().load(tf);
    models_.cap.params().load(tf);
    models_.cls.params().load(tf);
  }

 private:
  using Value = typename Tape<T>::Value;

  void train_step(const std::vector<std::size_t>& bi, Rng& loop, Rng& noise, long step) {
    std::size_t n = bi.size();
    // two distinct paraphrases of each scene plus their latents
    std::vector<std::vector<std::uint16_t>> toks_a(n), toks_b(n);
    std::vector<int> lens_a(n), lens_b(n);
    std::vector<std::vector<int>> caps_a(n);
    for (std::size_t i = 0; i < n; ++i) {
      int ka = static_cast<int>(loop.below(kCaptionsPerImage));
      int kb = (ka + 1 + static_cast<int>(loop.below(kCaptionsPerImage - 1))) %
               kCaptionsPerImage;
      toks_a[i] = ds_.caption(bi[i], ka);
      lens_a[i] = ds_.caption_length(bi[i], ka);
      toks_b[i] = ds_.caption(bi[i], kb);
      lens_b[i] = ds_.caption_length(bi[i], kb);
      caps_a[i].assign(toks_a[i].begin(), toks_a[i].begin() + lens_a[i]);
    }
    Tensor<T> z_a({n, kZDim}), z_b({n, kZDim});
    for (auto& v : z_a.vec()) v = static_cast<T>(loop.normal());
    for (auto& v : z_b.vec()) v = static_cast<T>(loop.normal());
    Tensor<T> real = detail::image_batch<T>(ds_, bi);

    // generator-side graph: both fakes from the current generator
    Tape<T> tg;
    models_.gen.params().zero_grads();
    models_.gen.map_params().zero_grads();
    models_.gen.bind_all(tg);
    models_.txt.params().bind_all(tg);
    auto te_a = models_.txt.encode(tg, toks_a, lens_a);
    auto te_b = models_.txt.encode(tg, toks_b, lens_b);
    auto fake_a = models_.gen.generate(tg, tg.leaf(std::move(z_a)), te_a.sent, noise, true);
    auto fake_b = models_.gen.generate(tg, tg.leaf(std::move(z_b)), te_b.sent, noise, true);

    // discriminator step on detached fakes and frozen embeddings
    double ld;
    {
      Tape<T> td;
      models_.disc.params().zero_grads();
      models_.disc.params().bind_all(td);
      const Tensor<T>& eav = tg.val(te_a.sent);
      Tensor<T> eb(eav.shape()), ebm(eav.shape());
      std::copy(eav.data(), eav.data() + eav.numel(), eb.data());
      for (std::size_t i = 0; i < n; ++i)  // rotate rows: mismatched pairs
        std::copy(eav.data() + ((i + 1) % n) * kCommonDim,
                  eav.data() + ((i + 1) % n + 1) * kCommonDim,
                  ebm.data() + i * kCommonDim);
      Tensor<T> fa_val(tg.val(fake_a).shape());
      std::copy(tg.val(fake_a).data(), tg.val(fake_a).data() + fa_val.numel(),
                fa_val.data());
      auto e = td.leaf(std::move(eb));
      auto d_real = models_.disc.discriminate(td, td.leaf(real), e);
      auto d_fake = models_.disc.discriminate(td, td.leaf(std::move(fa_val)), e);
      auto d_mis = models_.disc.discriminate(td, td.leaf(real), td.leaf(std::move(ebm)));
      auto l_d = adversarial_d_loss(td, d_real, d_fake, d_mis);
      if (!td.val(l_d).all_finite())
        throw std::runtime_error("train: non-finite component L_D at step " +
                                 std::to_string(step));
      td.backward(l_d);
      models_.disc.params().collect(td);
      models_.disc.params().adam_step(static_cast<T>(cfg_.lr_d),
                                      static_cast<T>(cfg_.beta1),
                                      static_cast<T>(cfg_.beta2), T(1e-8));
      ld = static_cast<double>(td.val(l_d)[0]);
    }

    // generator step against the updated discriminator
    models_.img.params().bind_all(tg);
    models_.cap.bind_all(tg);
    models_.disc.params().bind_all(tg);
    auto s_fake = models_.disc.discriminate(tg, fake_a, te_a.sent);
    auto l_g = adversarial_g_loss(tg, s_fake);
    auto ie_fa = models_.img.encode(tg, fake_a);
    auto ie_fb = models_.img.encode(tg, fake_b);
    auto ie_real = models_.img.encode(tg, tg.leaf(std::move(real)));
    auto l_damsm = damsm_loss(tg, make_damsm_batch(tg, te_a, ie_fa), cfg_.gammas<T>());
    if (cfg_.damsm_both) {
      auto other = damsm_loss(tg, make_damsm_batch(tg, te_b, ie_fb), cfg_.gammas<T>());
      l_damsm = tg.affine(tg.add(l_damsm, other), T(0.5), T(0));
    }
    auto w = cfg_.weights<T>();
    auto l_cr = f2r_loss(tg, ie_fa.global_, ie_real.global_, w.tau);
    auto l_cf = f2f_loss(tg, ie_fa.global_, ie_fb.global_, w.tau);
    auto l_cp = models_.cap.caption_batch_loss(tg, fake_a, caps_a);
    auto total = total_loss(tg, l_g, l_damsm, l_cr, l_cf, l_cp, w);
    tg.backward(total);
    models_.gen.params().collect(tg);
    models_.gen.map_params().collect(tg);
    models_.gen.params().adam_step(static_cast<T>(cfg_.lr_g), static_cast<T>(cfg_.beta1),
                                   static_cast<T>(cfg_.beta2), T(1e-8));
    models_.gen.map_params().adam_step(static_cast<T>(cfg_.lr_g),
                                       static_cast<T>(cfg_.beta1),
                                       static_cast<T>(cfg_.beta2), T(1e-8));
    detail::unbind(models_.txt.params());
    detail::unbind(models_.img.params());
    detail::unbind(models_.cap.params());
    detail::unbind(models_.cap.conv_params());
    detail::unbind(models_.disc.params());

    LedgerRow row;
    row.step = step;
    row.l_g = static_cast<double>(tg.val(l_g)[0]);
    row.l_d = ld;
    row.l_damsm = static_cast<double>(tg.val(l_damsm)[0]);
    row.l_cr = static_cast<double>(tg.val(l_cr)[0]);
    row.l_cf = static_cast<double>(tg.val(l_cf)[0]);
    row.l_cp = static_cast<double>(tg.val(l_cp)[0]);
    row.l = row.l_g + cfg_.lambda1 * row.l_damsm + cfg_.lambda2 * row.l_cr +
            cfg_.lambda3 * row.l_cf + cfg_.lambda4 * row.l_cp;
    row.wall = seconds();
    ledger_.push(row);
  }

  MetricReport run_eval(long step) {
    std::string dump = step == 0 ? "" : cfg_.out_dir + "/features.t2ic";
    MetricReport r = evaluate(cfg_.eval_n, cfg_.seed, dump);
    metric_rows_.push_back({step, r});
    flush();
    return r;
  }

  void flush() {
    ledger_.flush(cfg_.out_dir + "/ledger.csv", cfg_.out_dir + "/timing.csv");
    std::ofstream csv(cfg_.out_dir + "/metrics.csv");
    if (!csv) throw std::runtime_error("trainer: cannot write metrics.csv");
    csv << "step,toy_fid,is_mean,is_std,r_precision,n_samples,seed\n";
    for (const auto& [st, r] : metric_rows_)
      csv << st << "," << detail::fmt_g17(r.fid) << "," << detail::fmt_g17(r.is_mean)
          << "," << detail::fmt_g17(r.is_std) << "," << detail::fmt_g17(r.r_precision)
          << "," << r.n_samples << "," << r.seed << "\n";
  }

  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

  RunConfig cfg_;
  Dataset ds_;
  ModelSet<T> models_;
  RunLedger ledger_;
  std::vector<std::pair<long, MetricReport>> metric_rows_;
  std::chrono::steady_clock::time_point start_;
};

// Named loss-weight variants for ablation rows. "base" keeps only the
// adversarial and matching terms; "+F2F", "+F2R" and "+R" switch the
// fake-to-fake, fake-to-real and re-captioning weights back to their
// configured values, e.g. "base", "+F2F", "+F2F+F2R", "+F2F+F2R+R".
inline void apply_ablation_row(const std::string& row, RunConfig& rc) {
  double l2 = rc.lambda2, l3 = rc.lambda3, l4 = rc.lambda4;
  rc.lambda2 = rc.lambda3 = rc.lambda4 = 0;
  std::size_t pos = 0;
  while (pos < row.size()) {
    std::size_t next = row.find('+', pos + 1);
    std::string tok = row.substr(pos, next == std::string::npos ? next : next - pos);
    if (!tok.empty() && tok[0] == '+') tok.erase(0, 1);
    if (tok == "F2F")
      rc.lambda3 = l3;
    else if (tok == "F2R")
      rc.lambda2 = l2;
    else if (tok == "R")
      rc.lambda4 = l4;
    else if (tok != "base" && !tok.empty())
      throw std::invalid_argument("ablation: unknown row token '" + tok + "'");
    if (next == std::string::npos) break;
    pos = next;
  }
}

// Trains one run per row with an identical seed and writes a comparison
// table. A failed row is marked and the remaining rows still run.
template <typename T>
void ablate(const RunConfig& base, const std::vector<std::string>& rows,
            const std::string& csv_path) {
  if (rows.empty()) throw std::invalid_argument("ablate: no rows");
  std::ofstream csv(csv_path);
  if (!csv) throw std::runtime_error("ablate: cannot write " + csv_path);
  csv << "row,toy_fid,is_mean,is_std,r_precision,status\n";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    RunConfig rc = base;
    apply_ablation_row(rows[i], rc);
    rc.out_dir = base.out_dir + "/row" + std::to_string(i);
    try {
      Trainer<T> tr(rc);
      MetricReport r = tr.train();
      csv << rows[i] << "," << detail::fmt_g17(r.fid) << ","
          << detail::fmt_g17(r.is_mean) << "," << detail::fmt_g17(r.is_std) << ","
          << detail::fmt_g17(r.r_precision) << ",ok\n";
    } catch (const std::exception& e) {
      std::string msg = e.what();
      for (auto& ch : msg)
        if (ch == ',' || ch == '\n') ch = ';';
      csv << rows[i] << ",,,,," << "failed: " << msg << "\n";
    }
    csv.flush();
  }
}

// Renders one grid row per caption line, eight samples per row with varying
// latents, to a binary PPM. Unknown caption words fail naming word and line.
template <typename T>
void generate_grid(const std::string& ckpt_path, const std::string& captions_path,
                   const std::string& out_path, std::uint64_t seed) {
  std::ifstream in(captions_path);
  if (!in) throw std::runtime_error("grid: cannot open " + captions_path);
  std::vector<std::vector<std::uint16_t>> caps;
  std::vector<int> lens;
  std::string line;
  for (int ln = 1; std::getline(in, line); ++ln) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::vector<std::uint16_t> toks;
    try {
      toks = tokenize(line);
    } catch (const std::exception& e) {
      throw std::runtime_error("grid: captions line " + std::to_string(ln) + ": " +
                               e.what());
    }
    if (toks.empty() || toks.size() > static_cast<std::size_t>(kMaxCaptionLen))
      throw std::runtime_error("grid: captions line " + std::to_string(ln) +
                               ": caption must have 1.." + std::to_string(kMaxCaptionLen) +
                               " words");
    lens.push_back(static_cast<int>(toks.size()));
    toks.resize(kMaxCaptionLen, 0);
    caps.push_back(std::move(toks));
  }
  if (caps.empty()) throw std::runtime_error("grid: no captions in " + captions_path);

  TensorFile tf = TensorFile::load(ckpt_path);
  BlockType bt = tf.get("meta.block_type")[0] != 0 ? BlockType::style : BlockType::ssacn;
  Rng init(1);
  TextEncoder<T> txt(init);
  Generator<T> gen(init, GeneratorConfig{bt});
  txt.params().load(tf);
  gen.params().load(tf);
  gen.map_params().load(tf);

  const std::size_t per_row = 8;
  Rng zr(seed);
  Rng noise = Rng(seed).fork(1);
  std::vector<Tensor<float>> tiles;
  for (std::size_t c = 0; c < caps.size(); ++c) {
    std::vector<std::vector<std::uint16_t>> toks(per_row, caps[c]);
    std::vector<int> ls(per_row, lens[c]);
    Tensor<T> z({per_row, kZDim});
    for (auto& v : z.vec()) v = static_cast<T>(zr.normal());
    Tape<T> tp;
    txt.params().bind_all(tp);
    gen.bind_all(tp);
    auto te = txt.encode(tp, toks, ls);
    auto fake = gen.generate(tp, tp.leaf(std::move(z)), te.sent, noise, false);
    const Tensor<T>& fv = tp.val(fake);
    const std::size_t sz = 3 * kImageSize * kImageSize;
    for (std::size_t i = 0; i < per_row; ++i) {
      Tensor<float> tile({3, kImageSize, kImageSize});
      for (std::size_t j = 0; j < sz; ++j)
        tile[j] = static_cast<float>(fv[i * sz + j]);
      tiles.push_back(std::move(tile));
    }
    detail::unbind(txt.params());
    detail::unbind(gen.params());
    detail::unbind(gen.map_params());
  }
  write_ppm_grid(out_path, tiles, caps.size(), per_row);
}

}  // namespace t2ic
