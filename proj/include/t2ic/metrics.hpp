#pragma once

#include <cmath>
#include <cstdint>
#include <iostream>
#include <utility>
#include <vector>

#include "t2ic/encoders.hpp"
#include "t2ic/numerics.hpp"
#include "t2ic/synthdata.hpp"

namespace t2ic {

struct MetricReport {
  double fid = 0;
  double is_mean = 1, is_std = 0;
  double r_precision = 0;
  std::size_t n_samples = 0;
  std::uint64_t seed = 0;
};

// Frechet distance between Gaussian fits of two feature sets:
//   |mu_x - mu_y|^2 + Tr(Sx + Sy - 2 (Sx Sy)^{1/2})
// The cross term is evaluated as sqrt(Sx)^T Sy sqrt(Sx) to keep the product
// symmetric PSD. Tiny negative totals from the numerical square root are
// clipped to zero with a warning.
inline double fid(const Tensor<double>& real_feats, const Tensor<double>& fake_feats) {
  if (real_feats.rank() != 2 || fake_feats.rank() != 2 ||
      real_feats.dim(1) != fake_feats.dim(1))
    throw std::invalid_argument("fid: feature sets must be (n, d) with matching d");
  real_feats.check_finite("fid real features");
  fake_feats.check_finite("fid fake features");
  std::size_t d = real_feats.dim(1);
  if (real_feats.dim(0) < d + 1 || fake_feats.dim(0) < d + 1)
    std::cerr << "fid: warning: fewer than d+1 samples, covariance estimate is rank-deficient\n";

  auto sx = gaussian_stats(real_feats);
  auto sy = gaussian_stats(fake_feats);

  double mean_term = 0;
  for (std::size_t j = 0; j < d; ++j) {
    double diff = sx.mean[j] - sy.mean[j];
    mean_term += diff * diff;
  }

  Tensor<double> rx = matrix_sqrt_psd(sx.cov);
  Tensor<double> tmp({d, d}), prod({d, d});
  gemm(false, false, static_cast<int>(d), static_cast<int>(d), static_cast<int>(d), 1.0,
       rx.data(), static_cast<int>(d), sy.cov.data(), static_cast<int>(d), 0.0,
       tmp.data(), static_cast<int>(d));
  gemm(false, false, static_cast<int>(d), static_cast<int>(d), static_cast<int>(d), 1.0,
       tmp.data(), static_cast<int>(d), rx.data(), static_cast<int>(d), 0.0,
       prod.data(), static_cast<int>(d));
  Tensor<double> cross = matrix_sqrt_psd(prod);

  double trace_term = 0;
  for (std::size_t j = 0; j < d; ++j)
    trace_term += sx.cov[j * d + j] + sy.cov[j * d + j] - 2.0 * cross[j * d + j];

  double total = mean_term + trace_term;
  if (total < 0) {
    if (total < -1e-6)
      throw std::runtime_error("fid: distance came out significantly negative");
    std::cerr << "fid: warning: clipping tiny negative value " << total << " to 0\n";
    total = 0;
  }
  return total;
}

// Split-based classifier-entropy score over probability rows; returns
// (mean, std) over the folds. Rows must be normalized distributions.
inline std::pair<double, double> inception_score(const Tensor<double>& probs,
                                                 int splits = 4) {
  if (probs.rank() != 2) throw std::invalid_argument("inception_score: rank-2 probs");
  std::size_t n = probs.dim(0), c = probs.dim(1);
  if (n < static_cast<std::size_t>(splits))
    throw std::invalid_argument("inception_score: fewer rows than splits");
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0;
    for (std::size_t y = 0; y < c; ++y) {
      double p = probs[i * c + y];
      if (!(p >= 0) || !std::isfinite(p))
        throw std::invalid_argument("inception_score: invalid probability entry");
      s += p;
    }
    if (std::abs(s - 1.0) > 1e-5)
      throw std::invalid_argument("inception_score: row does not sum to 1");
  }

  std::vector<double> fold_scores;
  for (int f = 0; f < splits; ++f) {
    std::size_t lo = n * f / splits, hi = n * (f + 1) / splits;
    std::size_t fn = hi - lo;
    std::vector<double> marginal(c, 0.0);
    for (std::size_t i = lo; i < hi; ++i)
      for (std::size_t y = 0; y < c; ++y) marginal[y] += probs[i * c + y] / fn;
    double mean_kl = 0;
    for (std::size_t i = lo; i < hi; ++i) {
      double kl = 0;
      for (std::size_t y = 0; y < c; ++y) {
        double p = probs[i * c + y];
        if (p > 0) kl += p * (std::log(p) - std::log(marginal[y]));
      }
      mean_kl += kl / fn;
    }
    fold_scores.push_back(std::exp(mean_kl));
  }
  double mean = 0;
  for (double s : fold_scores) mean += s / splits;
  double var = 0;
  for (double s : fold_scores) var += (s - mean) * (s - mean) / splits;
  return {mean, std::sqrt(var)};
}

// Fraction of fakes whose ground-truth caption outranks 99 sampled
// mismatching captions by cosine similarity to the image feature. A hit
// requires strict rank 1.
inline double r_precision(const Tensor<double>& image_feats, const Tensor<double>& gt_caps,
                          const Tensor<double>& distractor_pool, std::uint64_t seed,
                          int n_distractors = 99) {
  if (image_feats.rank() != 2 || gt_caps.shape() != image_feats.shape())
    throw std::invalid_argument("r_precision: image/caption feature shape mismatch");
  if (distractor_pool.rank() != 2 || distractor_pool.dim(1) != image_feats.dim(1))
    throw std::invalid_argument("r_precision: distractor pool dimension mismatch");
  if (distractor_pool.dim(0) < static_cast<std::size_t>(n_distractors))
    throw std::invalid_argument("r_precision: distractor pool smaller than requested count");
  std::size_t n = image_feats.dim(0), d = image_feats.dim(1);
  if (n == 0) throw std::invalid_argument("r_precision: empty batch");

  Rng rng(seed);
  std::size_t hits = 0;
  Tensor<double> img({d}), cap({d});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      img[j] = image_feats[i * d + j];
      cap[j] = gt_caps[i * d + j];
    }
    double gt_sim = cosine_sim(img, cap);
    bool top = true;
    for (int k = 0; k < n_distractors; ++k) {
      std::size_t pick = rng.below(distractor_pool.dim(0));
      for (std::size_t j = 0; j < d; ++j) cap[j] = distractor_pool[pick * d + j];
      if (cosine_sim(img, cap) >= gt_sim) {
        top = false;
        break;
      }
    }
    if (top) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(n);
}

// Small conv classifier over the 24 synthetic classes; the probability rows
// feed inception_score in place of an external pretrained network.
template <typename T>
class IsClassifier {
 public:
  explicit IsClassifier(Rng& rng) : ps_("cls.") {
    ps_.add("c1.w", init_normal<T>({16, 3, 3, 3}, rng, 3 * 9));
    ps_.add("c1.b", Tensor<T>({16}));
    ps_.add("c2.w", init_normal<T>({32, 16, 3, 3}, rng, 16 * 9));
    ps_.add("c2.b", Tensor<T>({32}));
    ps_.add("c2b.w", init_normal<T>({32, 32, 3, 3}, rng, 32 * 9));
    ps_.add("c2b.b", Tensor<T>({32}));
    ps_.add("c3.w", init_normal<T>({64, 32, 3, 3}, rng, 32 * 9));
    ps_.add("c3.b", Tensor<T>({64}));
    ps_.add("head.w", init_normal<T>({64 * 16, kNumClasses}, rng, 64 * 16));
    ps_.add("head.b", Tensor<T>({1, kNumClasses}));
  }

  ParamStore<T>& params() { return ps_; }

  typename Tape<T>::Value logits(Tape<T>& tp, typename Tape<T>::Value images) const {
    const Tensor<T>& xv = tp.val(images);
    if (xv.rank() != 4 || xv.dim(1) != 3)
      throw std::invalid_argument("classifier: expects (N, 3, 32, 32)");
    std::size_t n = xv.dim(0);
    auto conv = [&](typename Tape<T>::Value h, const char* name, int stride) {
      return tp.lrelu(conv2d(tp, h, ps_.find(std::string(name) + ".w")->bound,
                             ps_.find(std::string(name) + ".b")->bound, stride, 1));
    };
    auto h = conv(images, "c1", 2);
    h = conv(h, "c2", 2);
    h = conv(h, "c2b", 1);
    h = conv(h, "c3", 2);
    auto feat = tp.reshape(h, {n, 64 * 16});  // keep the 4x4 layout for shape cues
    return tp.add(tp.matmul(feat, ps_.find("head.w")->bound),
                  detail::broadcast_rows(tp, ps_.find("head.b")->bound, n));
  }

  // Softmax rows for a plain image tensor, (n, 24).
  Tensor<double> probabilities(const Tensor<T>& images) const {
    Tape<T> tp;
    ps_.bind_all(tp);
    auto p = tp.softmax_rows(logits(tp, tp.leaf(images)));
    const Tensor<T>& pv = tp.val(p);
    Tensor<double> out(pv.shape());
    for (std::size_t i = 0; i < pv.numel(); ++i) out[i] = static_cast<double>(pv[i]);
    for (auto& param : ps_.params()) param->bound = -1;
    return out;
  }

  int predict_one(const Tensor<T>& image) const {
    Tensor<T> batch = image.reshaped({1, 3, kImageSize, kImageSize});
    Tensor<double> p = probabilities(batch);
    int best = 0;
    for (int y = 1; y < kNumClasses; ++y)
      if (p[y] > p[best]) best = y;
    return best;
  }

  double eval_accuracy(const Dataset& ds) const {
    std::size_t correct = 0;
    for (std::size_t i = ds.train_count(); i < ds.size(); ++i) {
      Tensor<float> img = ds.image(i);
      Tensor<T> conv(img.shape());
      for (std::size_t j = 0; j < img.numel(); ++j) conv[j] = static_cast<T>(img[j]);
      if (predict_one(conv) == ds.label(i)) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(ds.eval_count());
  }

 private:
  mutable ParamStore<T> ps_;
};

struct ClassifierOptions {
  int epochs = 40;
  int batch_size = 32;
  double lr = 3e-3;
  std::uint64_t seed = 1;
};

// Trains the scoring classifier and certifies it for metric use. Returns the
// eval accuracy; refuses checkpoints below the 80% floor.
template <typename T>
double train_is_classifier(const Dataset& ds, const ClassifierOptions& opt,
                           IsClassifier<T>& cls, const std::string& ckpt_path) {
  if (opt.epochs < 0 || opt.batch_size < 1 || !(opt.lr > 0))
    throw std::invalid_argument("train_is_classifier: bad options");
  Rng rng(opt.seed);
  for (int epoch = 0; epoch < opt.epochs; ++epoch) {
    auto ids = detail::shuffled_indices(ds.train_count(), rng);
    for (std::size_t off = 0; off + opt.batch_size <= ids.size(); off += opt.batch_size) {
      std::vector<std::size_t> bi(ids.begin() + off, ids.begin() + off + opt.batch_size);
      std::vector<int> labels;
      for (auto i : bi) labels.push_back(ds.label(i));
      Tensor<T> images = detail::image_batch<T>(ds, bi);
      // horizontal flips: class labels are mirror-invariant
      const std::size_t hw = kImageSize, plane = hw * hw, img_sz = 3 * plane;
      for (std::size_t i = 0; i < bi.size(); ++i) {
        if (rng.below(2) == 0) continue;
        T* base = images.data() + i * img_sz;
        for (std::size_t ch = 0; ch < 3; ++ch)
          for (std::size_t y = 0; y < hw; ++y)
            for (std::size_t x = 0; x < hw / 2; ++x)
              std::swap(base[ch * plane + y * hw + x],
                        base[ch * plane + y * hw + (hw - 1 - x)]);
      }
      Tape<T> tp;
      cls.params().zero_grads();
      cls.params().bind_all(tp);
      auto lg = cls.logits(tp, tp.leaf(std::move(images)));
      auto logp = tp.log_softmax_rows(lg);
      auto loss = tp.affine(tp.mean_all(tp.gather_elems(logp, labels)), T(-1), T(0));
      if (!tp.val(loss).all_finite())
        throw std::runtime_error("train_is_classifier: non-finite loss");
      tp.backward(loss);
      cls.params().collect(tp);
      cls.params().adam_step(static_cast<T>(opt.lr), T(0.9), T(0.999), T(1e-8));
    }
  }
  double acc = cls.eval_accuracy(ds);
  if (acc < 0.80)
    throw std::runtime_error("train_is_classifier: eval accuracy " + std::to_string(acc) +
                             " below 0.80, refusing to certify checkpoint");
  TensorFile tf;
  cls.params().save(tf);
  tf.save(ckpt_path);
  return acc;
}

}  // namespace t2ic
