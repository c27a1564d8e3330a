#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <map>

#include "maskdiff/diffusion.hpp"
#include "maskdiff/stats.hpp"

using namespace maskdiff;

namespace {
const NoiseSchedule kSchedule;

Vocabulary small_vocab() { return Vocabulary("abcd"); }
}  // namespace

TEST_CASE("forward_corrupt endpoints") {
  const Vocabulary vocab = small_vocab();
  const TokenSeq seq = {0, 1, 2, 3, 0, 1};
  const MaskabilityMask all(seq.size(), true);
  Rng rng(1);
  CHECK(forward_corrupt(seq, all, 0.0, kSchedule, vocab, rng) == seq);
  const TokenSeq fully = forward_corrupt(seq, all, 1.0, kSchedule, vocab, rng);
  for (TokenId tok : fully) CHECK(tok == vocab.mask_id());
}

TEST_CASE("forward_corrupt is deterministic given the seed") {
  const Vocabulary vocab = small_vocab();
  const TokenSeq seq(64, 2);
  const MaskabilityMask all(seq.size(), true);
  Rng r1(123), r2(123);
  CHECK(forward_corrupt(seq, all, 0.4, kSchedule, vocab, r1) ==
        forward_corrupt(seq, all, 0.4, kSchedule, vocab, r2));
}

TEST_CASE("forward_corrupt respects unmaskable positions") {
  const Vocabulary vocab = small_vocab();
  const TokenSeq seq(32, 1);
  MaskabilityMask maskable(seq.size(), true);
  for (std::size_t i = 0; i < seq.size(); i += 3) maskable[i] = false;
  Rng rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    const TokenSeq out = forward_corrupt(seq, maskable, 0.95, kSchedule, vocab, rng);
    for (std::size_t i = 0; i < seq.size(); i += 3) CHECK(out[i] == seq[i]);
  }
}

TEST_CASE("forward_corrupt masked fraction matches 1 - alpha within 3 sigma") {
  const Vocabulary vocab = small_vocab();
  const std::size_t n = 10000;
  const TokenSeq seq(n, 0);
  const MaskabilityMask all(n, true);
  Rng rng(2024);
  const TokenSeq out = forward_corrupt(seq, all, 0.5, kSchedule, vocab, rng);
  std::size_t masked = 0;
  for (TokenId tok : out)
    if (tok == vocab.mask_id()) ++masked;
  const double fraction = static_cast<double>(masked) / static_cast<double>(n);
  CHECK(fraction > 0.485);
  CHECK(fraction < 0.515);
}

TEST_CASE("forward_corrupt rejects mismatched lengths") {
  const Vocabulary vocab = small_vocab();
  Rng rng(1);
  CHECK_THROWS_AS(
      forward_corrupt({0, 1}, MaskabilityMask(3, true), 0.5, kSchedule, vocab, rng),
      std::invalid_argument);
}

TEST_CASE("forward_step_matrix endpoints") {
  const Vocabulary vocab = small_vocab();
  const TransitionMatrix identity = forward_step_matrix(0.0, vocab);
  for (std::size_t i = 0; i < identity.dim(); ++i)
    for (std::size_t j = 0; j < identity.dim(); ++j)
      CHECK(identity.at(i, j) == (i == j ? 1.0 : 0.0));
  const TransitionMatrix absorbed = forward_step_matrix(1.0, vocab);
  for (std::size_t i = 0; i < absorbed.dim(); ++i)
    for (std::size_t j = 0; j < absorbed.dim(); ++j)
      CHECK(absorbed.at(i, j) == (j == vocab.mask_id() ? 1.0 : 0.0));
  CHECK_THROWS_AS(forward_step_matrix(1.5, vocab), std::invalid_argument);
}

TEST_CASE("row stochastic and absorbing for 1000 random betas") {
  const Vocabulary vocab = small_vocab();
  Rng rng(77);
  for (int trial = 0; trial < 1000; ++trial) {
    const double beta = rng.uniform();
    const TransitionMatrix q = forward_step_matrix(beta, vocab);
    for (std::size_t i = 0; i < q.dim(); ++i)
      CHECK(q.row_sum(i) == doctest::Approx(1.0).epsilon(1e-12));
    for (std::size_t j = 0; j < q.dim(); ++j)
      CHECK(q.at(vocab.mask_id(), j) == (j == vocab.mask_id() ? 1.0 : 0.0));
  }
}

TEST_CASE("two-step composition matches the closed-form survival product") {
  // alpha_T = prod(1 - beta_t): two beta=0.3 steps equal one 0.51 step
  const Vocabulary vocab = small_vocab();
  const TransitionMatrix step = forward_step_matrix(0.3, vocab);
  const TransitionMatrix composed = step.compose(step);
  const TransitionMatrix direct = forward_step_matrix(1.0 - 0.7 * 0.7, vocab);
  for (std::size_t i = 0; i < composed.dim(); ++i)
    for (std::size_t j = 0; j < composed.dim(); ++j)
      CHECK(composed.at(i, j) == doctest::Approx(direct.at(i, j)).epsilon(1e-12));
}

TEST_CASE("conditional_forward closed form") {
  CHECK(conditional_forward(kSchedule, 0.5, 0.0) == doctest::Approx(0.5));
  CHECK(conditional_forward(kSchedule, 0.5, 0.5) == 0.0);
  CHECK(conditional_forward(kSchedule, 0.6, 0.2) == doctest::Approx(0.5));
  CHECK_THROWS_AS(conditional_forward(kSchedule, 0.2, 0.6), std::invalid_argument);
}

TEST_CASE("reverse kernel bounds") {
  CHECK(reverse_kernel(kSchedule, 0.7, 0.0).unmask_prob == doctest::Approx(1.0));
  CHECK(reverse_kernel(kSchedule, 0.7, 0.7).unmask_prob == 0.0);
  const double p = reverse_kernel(kSchedule, 0.8, 0.4).unmask_prob;
  CHECK(p == doctest::Approx(0.5));
  CHECK_THROWS_AS(reverse_kernel(kSchedule, 0.4, 0.8), std::invalid_argument);
}

TEST_CASE("reverse_posterior: unmasked token gives a point mass") {
  const Vocabulary vocab = small_vocab();
  std::vector<double> pred(vocab.size(), 0.0);
  pred[0] = pred[1] = pred[2] = pred[3] = 0.25;
  const auto out = reverse_posterior(pred, 2, 0.8, 0.4, kSchedule, vocab);
  for (std::size_t v = 0; v < out.size(); ++v)
    CHECK(out[v] == (v == 2 ? 1.0 : 0.0));
}

TEST_CASE("reverse_posterior: masked at s=0 returns pred_x0 exactly") {
  const Vocabulary vocab = small_vocab();
  std::vector<double> pred(vocab.size(), 0.0);
  pred[0] = 0.4;
  pred[1] = 0.3;
  pred[2] = 0.2;
  pred[3] = 0.1;
  const auto out = reverse_posterior(pred, vocab.mask_id(), 0.6, 0.0, kSchedule, vocab);
  for (std::size_t v = 0; v < out.size(); ++v)
    CHECK(out[v] == doctest::Approx(pred[v]).epsilon(1e-12));
}

TEST_CASE("reverse_posterior hand-evaluated mixture at t=0.8, s=0.4") {
  const Vocabulary vocab = small_vocab();
  std::vector<double> pred(vocab.size(), 0.0);
  for (int v = 0; v < 4; ++v) pred[v] = 0.25;
  const auto out = reverse_posterior(pred, vocab.mask_id(), 0.8, 0.4, kSchedule, vocab);
  CHECK(out[vocab.mask_id()] == doctest::Approx(0.5).epsilon(1e-12));
  for (int v = 0; v < 4; ++v)
    CHECK(out[v] == doctest::Approx(0.125).epsilon(1e-12));
  double sum = 0.0;
  for (double p : out) sum += p;
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("reverse_posterior rejects a non-normalized prediction") {
  const Vocabulary vocab = small_vocab();
  std::vector<double> pred(vocab.size(), 0.0);
  pred[0] = 0.7;
  pred[1] = 0.7;
  CHECK_THROWS_AS(reverse_posterior(pred, vocab.mask_id(), 0.8, 0.4, kSchedule, vocab),
                  std::invalid_argument);
}

TEST_CASE("diffusion_loss: no masked positions means zero loss") {
  const Vocabulary vocab = small_vocab();
  const TokenSeq x0 = {0, 1, 2};
  const std::vector<double> log_probs(x0.size() * vocab.size(), -1.0);
  const LossReport report = diffusion_loss(x0, x0, log_probs, vocab.size(), 0.5, vocab);
  CHECK(report.loss == 0.0);
  CHECK(report.masked_count == 0);
}

TEST_CASE("diffusion_loss closed form: all masked, uniform predictor, t=1") {
  const Vocabulary vocab = small_vocab();
  const std::size_t n = 3;
  const TokenSeq x0 = {0, 1, 2};
  const TokenSeq xt(n, vocab.mask_id());
  const double log_uniform = -std::log(static_cast<double>(vocab.size()));
  const std::vector<double> log_probs(n * vocab.size(), log_uniform);
  const LossReport report = diffusion_loss(x0, xt, log_probs, vocab.size(), 1.0, vocab);
  CHECK(report.loss ==
        doctest::Approx(static_cast<double>(n) * std::log(vocab.size()))
            .epsilon(1e-12));
  CHECK(report.masked_count == n);
}

TEST_CASE("diffusion_loss hand value: one masked position, p=0.8, t=0.5") {
  const Vocabulary vocab = small_vocab();
  const TokenSeq x0 = {2, 3};
  TokenSeq xt = x0;
  xt[0] = vocab.mask_id();
  std::vector<double> log_probs(2 * vocab.size(), -50.0);
  log_probs[2] = std::log(0.8);  // truth at position 0
  const LossReport report = diffusion_loss(x0, xt, log_probs, vocab.size(), 0.5, vocab);
  CHECK(report.loss == doctest::Approx(0.4462871026284194).epsilon(1e-12));
  CHECK(report.per_position[0] == doctest::Approx(report.loss));
  CHECK(report.per_position[1] == 0.0);
}

TEST_CASE("diffusion_loss domain errors") {
  const Vocabulary vocab = small_vocab();
  const TokenSeq x0 = {0};
  const std::vector<double> lp(vocab.size(), -1.0);
  CHECK_THROWS_AS(diffusion_loss(x0, x0, lp, vocab.size(), 0.0, vocab),
                  std::invalid_argument);
  CHECK_THROWS_AS(diffusion_loss(x0, {0, 1}, lp, vocab.size(), 0.5, vocab),
                  std::invalid_argument);
}

TEST_CASE("sample_training_noise: floor, determinism, mean") {
  Rng r1(9), r2(9);
  CHECK(sample_training_noise(r1) == sample_training_noise(r2));
  Rng rng(31);
  double sum = 0.0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const double t = sample_training_noise(rng);
    CHECK(t >= kTimeFloor);
    CHECK(t <= 1.0);
    sum += t;
  }
  const double mean = sum / n;
  CHECK(mean > 0.49);
  CHECK(mean < 0.51);
}

TEST_CASE("chain consistency: two-stage corruption matches direct in distribution") {
  // Corrupt length-8 sequences to s, continue to t via the conditional
  // probability, and compare the mask-pattern distribution against the exact
  // product law (which equals direct corruption to t).
  const Vocabulary vocab = small_vocab();
  const double s = 0.25, t = 0.6;
  const double extra = conditional_forward(kSchedule, t, s);
  const std::size_t len = 8;
  const std::size_t trials = 100000;
  std::vector<std::uint64_t> counts(1u << len, 0);
  Rng rng(4242);
  const TokenSeq seq(len, 1);
  const MaskabilityMask all(len, true);
  for (std::size_t trial = 0; trial < trials; ++trial) {
    TokenSeq xs = forward_corrupt(seq, all, s, kSchedule, vocab, rng);
    unsigned pattern = 0;
    for (std::size_t i = 0; i < len; ++i) {
      bool masked = xs[i] == vocab.mask_id();
      if (!masked && rng.uniform() < extra) masked = true;
      if (masked) pattern |= 1u << i;
    }
    ++counts[pattern];
  }
  std::vector<double> expected(1u << len, 0.0);
  for (unsigned pattern = 0; pattern < (1u << len); ++pattern) {
    double p = 1.0;
    for (std::size_t i = 0; i < len; ++i)
      p *= (pattern >> i) & 1u ? t : 1.0 - t;
    expected[pattern] = p;
  }
  const double stat = stats::chi2_statistic(counts, expected);
  const double p_value = stats::chi2_sf(stat, static_cast<double>((1u << len) - 1));
  CHECK(p_value > 0.001);
}
