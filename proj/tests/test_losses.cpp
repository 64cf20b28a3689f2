#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "t2ic/losses.hpp"
#include "oracles.hpp"
#include "tape_check.hpp"

using namespace t2ic;
using namespace t2ic::testing;

namespace {

std::vector<std::vector<double>> rows_of(const Tensor<double>& t) {
  std::vector<std::vector<double>> out(t.dim(0), std::vector<double>(t.dim(1)));
  for (std::size_t i = 0; i < t.dim(0); ++i)
    for (std::size_t j = 0; j < t.dim(1); ++j) out[i][j] = t[i * t.dim(1) + j];
  return out;
}

double eval_nt_xent(const Tensor<double>& u, double tau) {
  Tape<double> tp;
  return tp.val(nt_xent(tp, tp.leaf(u), tau))[0];
}

}  // namespace

TEST_CASE("nt_xent: single pair is exactly zero") {
  Rng rng(31);
  for (double tau : {0.1, 0.5, 2.0}) {
    Tensor<double> u({2, 4});
    for (auto& v : u.vec()) v = rng.normal();
    CHECK(eval_nt_xent(u, tau) == 0.0);
  }
}

TEST_CASE("nt_xent: N=2 hand case (frozen from the literal oracle)") {
  Tensor<double> u({4, 2}, {1, 0, 1, 0, 0, 1, 0, 1});
  // each L(i) = -log(e / (e + 2)); value frozen from a 64-bit evaluation
  double expected = std::log((std::exp(1.0) + 2.0) / std::exp(1.0));
  CHECK(expected == doctest::Approx(0.551444713932051).epsilon(1e-12));
  CHECK(eval_nt_xent(u, 1.0) == doctest::Approx(expected).epsilon(1e-9));
  CHECK(nt_xent_literal(rows_of(u), 1.0) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("nt_xent matches the literal oracle on random batches") {
  Rng rng(32);
  for (int trial = 0; trial < 30; ++trial) {
    std::size_t n = 1 + rng.below(4);
    double tau = 0.2 + rng.uniform();
    Tensor<double> u({2 * n, 6});
    for (auto& v : u.vec()) v = rng.normal();
    double got = eval_nt_xent(u, tau);
    double want = nt_xent_literal(rows_of(u), tau);
    CHECK(std::abs(got - want) <= 1e-12);
    CHECK(got >= 0.0);
  }
}

TEST_CASE("nt_xent: pair-preserving permutation invariance") {
  Rng rng(33);
  Tensor<double> u({8, 5});
  for (auto& v : u.vec()) v = rng.normal();
  double base = eval_nt_xent(u, 0.5);
  // move pair 3 to the front
  Tensor<double> perm({8, 5});
  std::vector<int> order = {6, 7, 0, 1, 2, 3, 4, 5};
  for (int i = 0; i < 8; ++i)
    for (int j = 0; j < 5; ++j) perm[i * 5 + j] = u[order[i] * 5 + j];
  CHECK(std::abs(eval_nt_xent(perm, 0.5) - base) < 1e-6);
}

TEST_CASE("nt_xent: rescaling one embedding by alpha > 0 is a no-op") {
  Rng rng(34);
  Tensor<double> u({6, 4});
  for (auto& v : u.vec()) v = rng.normal();
  double base = eval_nt_xent(u, 0.7);
  Tensor<double> scaled = u;
  for (int j = 0; j < 4; ++j) scaled[2 * 4 + j] *= 13.7;
  CHECK(std::abs(eval_nt_xent(scaled, 0.7) - base) < 1e-9);
}

TEST_CASE("nt_xent decreases when a positive similarity increases") {
  // pull u_0 toward its positive u_1 while other similarities stay put by
  // construction (orthogonal complement direction)
  Tensor<double> u({4, 3}, {1, 0, 0, 0.6, 0.8, 0, 0, 0, 1, 0, 0.1, 1});
  double before = eval_nt_xent(u, 0.5);
  Tensor<double> closer = u;
  closer[3] = 0.9;  // u_1 more aligned with u_0
  closer[4] = std::sqrt(1 - 0.81);
  double sim_before = cosine({1, 0, 0}, {0.6, 0.8, 0});
  double sim_after = cosine({1, 0, 0}, {0.9, closer[4], 0});
  REQUIRE(sim_after > sim_before);
  CHECK(eval_nt_xent(closer, 0.5) < before);
}

TEST_CASE("nt_xent error paths") {
  Tensor<double> u({4, 2}, {1, 0, 0, 1, 0, 0, 1, 1});  // third row is zero
  Tape<double> tp;
  CHECK_THROWS(nt_xent(tp, tp.leaf(u), 0.5));
  Tensor<double> ok({2, 2}, {1, 0, 0, 1});
  Tape<double> tp2;
  CHECK_THROWS(nt_xent(tp2, tp2.leaf(ok), 0.0));
  CHECK_THROWS(nt_xent(tp2, tp2.leaf(ok), -1.0));
}

TEST_CASE("f2r / f2f wrappers") {
  Rng rng(35);
  Tensor<double> fake({4, 5}), real({4, 5});
  for (auto& v : fake.vec()) v = rng.normal();
  for (auto& v : real.vec()) v = rng.normal();

  // identical fakes/reals: every positive similarity is 1, which is the
  // batch-geometry minimum over positive-pair placements
  {
    Tape<double> tp;
    double at_equal = tp.val(f2r_loss(tp, tp.leaf(fake), tp.leaf(fake), 0.5))[0];
    Tape<double> tp2;
    double at_random = tp2.val(f2r_loss(tp2, tp2.leaf(fake), tp2.leaf(real), 0.5))[0];
    CHECK(at_equal <= at_random);
  }
  {
    Tape<double> tp;
    Tensor<double> f1({1, 3}, {1, 2, 3}), r1({1, 3}, {0, 1, 0});
    CHECK(tp.val(f2r_loss(tp, tp.leaf(f1), tp.leaf(r1), 0.3))[0] == 0.0);
    Tensor<double> bad({2, 3});
    CHECK_THROWS(f2r_loss(tp, tp.leaf(f1), tp.leaf(bad), 0.3));
  }
  {
    // f2f with the N=2 hand vectors reproduces the oracle value
    Tensor<double> a({2, 2}, {1, 0, 0, 1});
    Tensor<double> b({2, 2}, {1, 0, 0, 1});
    Tape<double> tp;
    double got = tp.val(f2f_loss(tp, tp.leaf(a), tp.leaf(b), 1.0))[0];
    CHECK(got == doctest::Approx(0.551444713932051).epsilon(1e-9));
  }
}

TEST_CASE("contrastive losses pass grad_check") {
  Rng rng(36);
  CHECK(check_loss({{6, 4}}, [](DTape& tp, const std::vector<DValue>& v) {
    return nt_xent(tp, v[0], 0.5);
  }, rng) < 1e-6);
  CHECK(check_loss({{3, 4}, {3, 4}}, [](DTape& tp, const std::vector<DValue>& v) {
    return f2r_loss(tp, v[0], v[1], 0.5);
  }, rng) < 1e-6);
  CHECK(check_loss({{3, 4}, {3, 4}}, [](DTape& tp, const std::vector<DValue>& v) {
    return f2f_loss(tp, v[0], v[1], 0.5);
  }, rng) < 1e-6);
  CHECK(check_loss({{4, 7}}, [](DTape& tp, const std::vector<DValue>& v) {
    return recaption_loss(tp, v[0], {2, 5, 1, 3});
  }, rng) < 1e-6);
  CHECK(check_loss({{4, 7}}, [](DTape& tp, const std::vector<DValue>& v) {
    return recaption_loss(tp, v[0], {2, 0, 1, 0});  // padded steps dropped
  }, rng) < 1e-6);
}

TEST_CASE("recaption_loss values") {
  // uniform logits over V=40
  {
    Tape<double> tp;
    Tensor<double> logits({3, 40});
    double got = tp.val(recaption_loss(tp, tp.leaf(logits), {4, 9, 2}))[0];
    CHECK(got == doctest::Approx(std::log(40.0)).epsilon(1e-9));
  }
  // saturated logits on the correct tokens
  {
    Tape<double> tp;
    Tensor<double> logits({3, 40});
    std::vector<int> caption = {4, 9, 2};
    for (int t = 0; t < 3; ++t) logits[t * 40 + caption[t]] = 100.0;
    CHECK(tp.val(recaption_loss(tp, tp.leaf(logits), caption))[0] < 1e-6);
  }
  // two steps, unit logit on the target each: mean of two identical 40-way
  // cross-entropies, frozen from direct evaluation
  {
    Tape<double> tp;
    Tensor<double> logits({2, 40});
    std::vector<int> caption = {5, 1};
    logits[0 * 40 + 5] = 1.0;
    logits[1 * 40 + 1] = 1.0;
    double one = std::log((std::exp(1.0) + 39.0) / std::exp(1.0));
    CHECK(tp.val(recaption_loss(tp, tp.leaf(logits), caption))[0] ==
          doctest::Approx(one).epsilon(1e-9));
  }
  {
    Tape<double> tp;
    Tensor<double> logits({2, 40});
    CHECK_THROWS(recaption_loss(tp, tp.leaf(logits), {0, 0}));
  }
}

TEST_CASE("adversarial losses: hinge boundary cases") {
  auto dloss = [](double r, double f, double m) {
    Tape<double> tp;
    Tensor<double> tr({2}, {r, r}), tf({2}, {f, f}), tm({2}, {m, m});
    return tp.val(adversarial_d_loss(tp, tp.leaf(tr), tp.leaf(tf), tp.leaf(tm)))[0];
  };
  CHECK(dloss(2, -2, -2) == doctest::Approx(0.0));
  CHECK(dloss(0, 0, 0) == doctest::Approx(2.0));

  Tape<double> tp;
  Tensor<double> zeros({3});
  CHECK(tp.val(adversarial_g_loss(tp, tp.leaf(zeros)))[0] == doctest::Approx(0.0));

  Rng rng(37);
  CHECK(check_loss({{4}, {4}, {4}}, [](DTape& tp, const std::vector<DValue>& v) {
    return adversarial_d_loss(tp, v[0], v[1], v[2]);
  }, rng) < 1e-6);
  CHECK(check_loss({{4}}, [](DTape& tp, const std::vector<DValue>& v) {
    return adversarial_g_loss(tp, v[0]);
  }, rng) < 1e-6);
}

TEST_CASE("total_loss: weighted sum, degeneracy, linearity, error naming") {
  auto total = [](double lg, double comps, LossWeights<double> w) {
    Tape<double> tp;
    auto mk = [&tp](double x) { return tp.leaf(Tensor<double>({1}, {x})); };
    return tp.val(total_loss(tp, mk(lg), mk(comps), mk(comps), mk(comps), mk(comps), w))[0];
  };
  LossWeights<double> zero{0, 0, 0, 0, 0.5};
  CHECK(total(3.25, 99.0, zero) == doctest::Approx(3.25));

  LossWeights<double> typical{0.05, 0.2, 0.2, 1.0, 0.5};
  CHECK(total(1.0, 1.0, typical) == doctest::Approx(2.45));

  LossWeights<double> style{5.0, 0.2, 0.2, 1.0, 0.5};
  CHECK(total(1.0, 1.0, style) == doctest::Approx(7.40));

  // doubling lambda2 doubles the L_CR contribution exactly
  LossWeights<double> doubled = typical;
  doubled.lambda2 = 0.4;
  double base = total(1.0, 1.0, typical);
  CHECK(total(1.0, 1.0, doubled) - base == doctest::Approx(0.2));

  Tape<double> tp;
  auto mk = [&tp](double x) { return tp.leaf(Tensor<double>({1}, {x})); };
  auto nan = mk(std::numeric_limits<double>::quiet_NaN());
  try {
    total_loss(tp, mk(1.0), mk(1.0), nan, mk(1.0), mk(1.0), typical);
    CHECK(false);
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()).find("L_CR") != std::string::npos);
  }

  LossWeights<double> bad_tau{0.1, 0.1, 0.1, 0.1, 0.0};
  CHECK_THROWS(total_loss(tp, mk(1.0), mk(1.0), mk(1.0), mk(1.0), mk(1.0), bad_tau));
}
