#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "t2ic/tape.hpp"

namespace t2ic {

// Aggregate-loss configuration: weights for DAMSM, fake-to-real, fake-to-fake
// and re-captioning terms, plus the contrastive temperature.
template <typename T>
struct LossWeights {
  T lambda1 = T(0.05);  // DAMSM
  T lambda2 = T(0.2);   // fake-to-real
  T lambda3 = T(0.2);   // fake-to-fake
  T lambda4 = T(1.0);   // re-captioning
  T tau = T(0.5);

  void validate() const {
    if (!(tau > T(0))) throw std::invalid_argument("loss weights: tau must be > 0");
    if (lambda1 < T(0) || lambda2 < T(0) || lambda3 < T(0) || lambda4 < T(0))
      throw std::invalid_argument("loss weights: lambdas must be >= 0");
  }
};

// NT-Xent over a pair batch of 2N embeddings where rows (2k, 2k+1) are the
// positive pairs. The denominator excludes only k == i, so the positive term
// is part of its own normalizer.
template <typename T>
typename Tape<T>::Value nt_xent(Tape<T>& tp, typename Tape<T>::Value pairs, T tau) {
  if (!(tau > T(0))) throw std::invalid_argument("nt_xent: tau must be > 0");
  const Tensor<T>& u = tp.val(pairs);
  if (u.rank() != 2 || u.dim(0) % 2 != 0 || u.dim(0) < 2)
    throw std::invalid_argument("nt_xent: expects (2N, D) embeddings");
  std::size_t m = u.dim(0);

  auto un = tp.row_normalize(pairs);
  auto sims = tp.matmul(un, un, false, true);
  auto logits = tp.affine(sims, T(1) / tau, T(0));
  // self-similarity is excluded from every softmax row
  Tensor<T> diag_mask({m, m});
  for (std::size_t i = 0; i < m; ++i) diag_mask[i * m + i] = T(-1e9);
  auto masked = tp.add_const(logits, std::move(diag_mask));
  auto logp = tp.log_softmax_rows(masked);
  std::vector<int> partner(m);
  for (std::size_t i = 0; i < m; ++i) partner[i] = static_cast<int>(i ^ 1);
  auto pos = tp.gather_elems(logp, std::move(partner));
  return tp.affine(tp.mean_all(pos), T(-1), T(0));
}

// Fake/real globals interleaved as positive pairs.
template <typename T>
typename Tape<T>::Value f2r_loss(Tape<T>& tp, typename Tape<T>::Value fake_globals,
                                 typename Tape<T>::Value real_globals, T tau) {
  if (tp.val(fake_globals).shape() != tp.val(real_globals).shape())
    throw std::invalid_argument("f2r_loss: batch length mismatch");
  return nt_xent(tp, tp.interleave_rows(fake_globals, real_globals), tau);
}

// Two fakes generated from different captions of the same scene.
template <typename T>
typename Tape<T>::Value f2f_loss(Tape<T>& tp, typename Tape<T>::Value fake_a,
                                 typename Tape<T>::Value fake_b, T tau) {
  if (tp.val(fake_a).shape() != tp.val(fake_b).shape())
    throw std::invalid_argument("f2f_loss: batch length mismatch");
  return nt_xent(tp, tp.interleave_rows(fake_a, fake_b), tau);
}

// Mean cross-entropy over the real (non-padding) tokens of the caption.
template <typename T>
typename Tape<T>::Value recaption_loss(Tape<T>& tp, typename Tape<T>::Value logits,
                                       const std::vector<int>& tokens) {
  const Tensor<T>& lg = tp.val(logits);
  if (lg.rank() != 2 || lg.dim(0) != tokens.size())
    throw std::invalid_argument("recaption_loss: logits/caption length mismatch");
  std::vector<int> rows, cols;
  for (std::size_t t = 0; t < tokens.size(); ++t)
    if (tokens[t] != 0) {
      rows.push_back(static_cast<int>(t));
      cols.push_back(tokens[t]);
    }
  if (rows.empty()) throw std::invalid_argument("recaption_loss: all-padding caption");
  auto logp = tp.log_softmax_rows(logits);
  std::vector<typename Tape<T>::Value> reals;
  if (rows.size() == tokens.size()) {
    auto pick = tp.gather_elems(logp, cols);
    return tp.affine(tp.mean_all(pick), T(-1), T(0));
  }
  // drop padded steps, then average
  Tensor<T> sel({rows.size(), tokens.size()});
  for (std::size_t i = 0; i < rows.size(); ++i)
    sel[i * tokens.size() + static_cast<std::size_t>(rows[i])] = T(1);
  auto picked_rows = tp.matmul(tp.leaf(std::move(sel)), logp);
  auto pick = tp.gather_elems(picked_rows, cols);
  return tp.affine(tp.mean_all(pick), T(-1), T(0));
}

// Hinge adversarial losses; the discriminator also sees real images with
// mismatched captions as negatives.
template <typename T>
typename Tape<T>::Value adversarial_g_loss(Tape<T>& tp, typename Tape<T>::Value d_scores_fake) {
  return tp.affine(tp.mean_all(d_scores_fake), T(-1), T(0));
}

template <typename T>
typename Tape<T>::Value adversarial_d_loss(Tape<T>& tp, typename Tape<T>::Value d_real,
                                           typename Tape<T>::Value d_fake,
                                           typename Tape<T>::Value d_mismatched) {
  auto real_term = tp.mean_all(tp.relu(tp.affine(d_real, T(-1), T(1))));
  auto fake_term = tp.mean_all(tp.relu(tp.affine(d_fake, T(1), T(1))));
  auto mism_term = tp.mean_all(tp.relu(tp.affine(d_mismatched, T(1), T(1))));
  return tp.add(real_term, tp.add_scaled(tp.affine(fake_term, T(0.5), T(0)), mism_term, T(0.5)));
}

// L = L_G + l1*L_DAMSM + l2*L_CR + l3*L_CF + l4*L_CP
template <typename T>
typename Tape<T>::Value total_loss(Tape<T>& tp, typename Tape<T>::Value l_g,
                                   typename Tape<T>::Value l_damsm,
                                   typename Tape<T>::Value l_cr,
                                   typename Tape<T>::Value l_cf,
                                   typename Tape<T>::Value l_cp,
                                   const LossWeights<T>& w) {
  w.validate();
  auto ensure_finite = [&tp](typename Tape<T>::Value v, const char* name) {
    if (!tp.val(v).all_finite())
      throw std::runtime_error(std::string("total_loss: non-finite component ") + name);
  };
  ensure_finite(l_g, "L_G");
  ensure_finite(l_damsm, "L_DAMSM");
  ensure_finite(l_cr, "L_CR");
  ensure_finite(l_cf, "L_CF");
  ensure_finite(l_cp, "L_CP");
  auto out = tp.add_scaled(l_g, l_damsm, w.lambda1);
  out = tp.add_scaled(out, l_cr, w.lambda2);
  out = tp.add_scaled(out, l_cf, w.lambda3);
  out = tp.add_scaled(out, l_cp, w.lambda4);
  return out;
}

}  // namespace t2ic
