#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "maskdiff/denoiser.hpp"
#include "maskdiff/diffusion.hpp"
#include "maskdiff/transformer.hpp"

using namespace maskdiff;

namespace {

ToyDistribution two_seq_dist(const Vocabulary& vocab) {
  // uniform over {AB, BA} with A=0, B=1
  return ToyDistribution({{{0, 1}, 0.5}, {{1, 0}, 0.5}}, vocab);
}

// Max relative error with a small absolute floor; components below the floor
// are effectively checked in absolute terms.
double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-3});
}

}  // namespace

TEST_CASE("denoiser output normalization over random logits") {
  Rng rng(3);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t v = 2 + rng.uniform_below(9);
    const std::size_t n = 1 + rng.uniform_below(4);
    std::vector<double> logits(n * v);
    for (double& x : logits) x = 10.0 * (rng.uniform() - 0.5);
    const DenoiserOutput out(std::move(logits), n, v);
    for (std::size_t i = 0; i < n; ++i) {
      double sum = 0.0;
      for (double p : out.probs_at(i)) {
        CHECK(std::isfinite(p));
        sum += p;
      }
      CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
    }
  }
  CHECK_THROWS_AS(DenoiserOutput({1.0, std::nan("")}, 1, 2),
                  std::invalid_argument);
}

TEST_CASE("toy distribution validation") {
  const Vocabulary vocab("abcd");
  CHECK_THROWS_AS(ToyDistribution({}, vocab), std::invalid_argument);
  CHECK_THROWS_AS(ToyDistribution({{{0, 1}, 0.6}, {{1, 0}, 0.6}}, vocab),
                  std::invalid_argument);
  CHECK_THROWS_AS(ToyDistribution({{{0, 1}, 0.5}, {{1}, 0.5}}, vocab),
                  std::invalid_argument);
  const ToyDistribution ref = ToyDistribution::reference(vocab);
  CHECK(ref.seq_len() == 3);
  CHECK(ref.probability({0, 1, 2}) == doctest::Approx(0.30));
  CHECK(ref.probability({3, 3, 3}) == 0.0);
}

TEST_CASE("tabular denoiser: fully unmasked input returns point masses") {
  const Vocabulary vocab("abcd");
  const TabularDenoiser oracle(ToyDistribution::reference(vocab));
  const TokenSeq x = {0, 1, 2};
  const DenoiserOutput out = oracle.denoise(x);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const auto p = out.probs_at(i);
    CHECK(p[x[i]] == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("tabular denoiser: fully masked input returns marginals") {
  const Vocabulary vocab("abcd");
  const ToyDistribution dist = ToyDistribution::reference(vocab);
  const TabularDenoiser oracle(dist);
  const TokenSeq masked(3, vocab.mask_id());
  const DenoiserOutput out = oracle.denoise(masked);
  for (std::size_t i = 0; i < 3; ++i) {
    std::vector<double> marginal(vocab.size(), 0.0);
    for (const auto& [seq, p] : dist.support()) marginal[seq[i]] += p;
    const auto predicted = out.probs_at(i);
    for (std::size_t v = 0; v < vocab.size(); ++v)
      CHECK(predicted[v] == doctest::Approx(marginal[v]).epsilon(1e-9));
  }
}

TEST_CASE("tabular denoiser: two-sequence hand enumeration") {
  const Vocabulary vocab("ab");
  const TabularDenoiser oracle(two_seq_dist(vocab));
  const TokenSeq x = {0, vocab.mask_id()};  // observed A at position 0
  const DenoiserOutput out = oracle.denoise(x);
  const auto p = out.probs_at(1);
  CHECK(p[1] == doctest::Approx(1.0).epsilon(1e-12));  // must be B
  CHECK(p[0] == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("tabular denoiser rejects foreign tokens") {
  const Vocabulary vocab("abcd");
  const TabularDenoiser oracle(ToyDistribution::reference(vocab));
  CHECK_THROWS_AS(oracle.denoise({0, 1, vocab.pad_id()}), std::invalid_argument);
  CHECK_THROWS_AS(oracle.denoise({0, 1}), std::invalid_argument);
}

TEST_CASE("tabular joint sample agrees with evidence and support") {
  const Vocabulary vocab("abcd");
  const ToyDistribution dist = ToyDistribution::reference(vocab);
  const TabularDenoiser oracle(dist);
  Rng rng(5);
  const TokenSeq x = {vocab.mask_id(), 1, vocab.mask_id()};
  for (int trial = 0; trial < 500; ++trial) {
    const TokenSeq x0 = oracle.sample_x0(x, rng);
    CHECK(x0[1] == 1);
    CHECK(dist.probability(x0) > 0.0);
  }
}

TEST_CASE("transformer: zero-initialized head gives uniform logits") {
  TinyTransformerConfig config;
  config.vocab_size = 9;
  config.n_layers = 1;
  config.n_heads = 2;
  config.d_model = 16;
  config.d_ff = 32;
  config.max_seq = 8;
  const TinyTransformer model(config);
  const DenoiserOutput out = model.denoise({0, 3, 5});
  for (std::size_t i = 0; i < 3; ++i) {
    const auto p = out.probs_at(i);
    for (double pv : p)
      CHECK(pv == doctest::Approx(1.0 / 9.0).epsilon(1e-12));
  }
}

TEST_CASE("transformer forward is deterministic and rejects oversize input") {
  TinyTransformerConfig config;
  config.vocab_size = 9;
  config.max_seq = 8;
  config.d_model = 16;
  config.d_ff = 32;
  config.n_heads = 2;
  config.zero_init_head = false;
  const TinyTransformer a(config);
  const TinyTransformer b(config);
  const TokenSeq x = {1, 2, 3, 4};
  CHECK(a.denoise(x).logits() == b.denoise(x).logits());
  CHECK_THROWS_AS(a.denoise(TokenSeq(9, 0)), std::invalid_argument);
  CHECK_THROWS_AS(a.denoise({42}), std::invalid_argument);
}

TEST_CASE("bidirectionality witness at every layer count") {
  for (std::size_t layers : {std::size_t{1}, std::size_t{2}, std::size_t{3}}) {
    TinyTransformerConfig config;
    config.vocab_size = 9;
    config.n_layers = layers;
    config.n_heads = 2;
    config.d_model = 16;
    config.d_ff = 32;
    config.max_seq = 8;
    config.zero_init_head = false;
    config.param_seed = 7 + layers;
    const TinyTransformer model(config);
    TokenSeq x = {0, 1, 2, 3, 4};
    const auto base = model.denoise(x).log_probs_at(0);
    x.back() = 5;  // perturb the right context
    const auto perturbed = model.denoise(x).log_probs_at(0);
    double delta = 0.0;
    for (std::size_t v = 0; v < base.size(); ++v)
      delta += std::abs(base[v] - perturbed[v]);
    CHECK(delta > 1e-9);
  }
}

TEST_CASE("all-unmasked batch has zero loss and zero gradient") {
  const Vocabulary vocab("abcd");
  TinyTransformerConfig config;
  config.vocab_size = vocab.size();
  config.n_layers = 1;
  config.n_heads = 2;
  config.d_model = 8;
  config.d_ff = 16;
  config.max_seq = 8;
  config.zero_init_head = false;
  const TinyTransformer model(config);
  TrainBatch batch;
  batch.x0 = {{0, 1, 2}};
  batch.xt = {{0, 1, 2}};
  batch.t = {0.5};
  std::vector<double> grad;
  const double loss = model.loss_gradient(batch, vocab, grad);
  CHECK(loss == 0.0);
  for (double g : grad) CHECK(g == 0.0);
}

TEST_CASE("halving t doubles the gradient for a fixed mask pattern") {
  const Vocabulary vocab("abcd");
  TinyTransformerConfig config;
  config.vocab_size = vocab.size();
  config.n_layers = 1;
  config.n_heads = 2;
  config.d_model = 8;
  config.d_ff = 16;
  config.max_seq = 8;
  config.zero_init_head = false;
  const TinyTransformer model(config);
  TrainBatch b1, b2;
  b1.x0 = b2.x0 = {{0, 1, 2, 3}};
  b1.xt = b2.xt = {{0, vocab.mask_id(), 2, vocab.mask_id()}};
  b1.t = {0.8};
  b2.t = {0.4};
  std::vector<double> g1, g2;
  model.loss_gradient(b1, vocab, g1);
  model.loss_gradient(b2, vocab, g2);
  for (std::size_t i = 0; i < g1.size(); ++i)
    CHECK(g2[i] == doctest::Approx(2.0 * g1[i]).epsilon(1e-12));
}

TEST_CASE("analytic gradient matches central finite differences") {
  const Vocabulary vocab("abcd");
  TinyTransformerConfig config;
  config.vocab_size = vocab.size();  // 9
  config.n_layers = 1;
  config.n_heads = 2;
  config.d_model = 8;
  config.d_ff = 12;
  config.max_seq = 6;
  config.zero_init_head = false;
  config.param_seed = 11;
  TinyTransformer model(config);
  REQUIRE(model.param_count() <= 5000);

  Rng rng(17);
  TrainBatch batch;
  for (int item = 0; item < 3; ++item) {
    TokenSeq x0(5), xt(5);
    for (std::size_t i = 0; i < 5; ++i) {
      x0[i] = static_cast<TokenId>(rng.uniform_below(4));
      xt[i] = rng.uniform() < 0.5 ? vocab.mask_id() : x0[i];
    }
    xt[0] = vocab.mask_id();  // at least one masked position
    batch.x0.push_back(x0);
    batch.xt.push_back(xt);
    batch.t.push_back(0.3 + 0.6 * rng.uniform());
  }

  std::vector<double> analytic;
  model.loss_gradient(batch, vocab, analytic);

  const double h = 1e-4;
  double max_err = 0.0;
  std::vector<double>& params = model.params();
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double saved = params[i];
    params[i] = saved + h;
    const double plus = model.batch_loss(batch, vocab);
    params[i] = saved - h;
    const double minus = model.batch_loss(batch, vocab);
    params[i] = saved;
    const double fd = (plus - minus) / (2.0 * h);
    max_err = std::max(max_err, rel_err(analytic[i], fd));
  }
  CHECK(max_err <= 1e-4);
}

TEST_CASE("oracle beats the transformer on expected masked loss") {
  const Vocabulary vocab("abcd");
  const ToyDistribution dist = ToyDistribution::reference(vocab);
  const TabularDenoiser oracle(dist);
  TinyTransformerConfig config;
  config.vocab_size = vocab.size();
  config.n_layers = 1;
  config.n_heads = 2;
  config.d_model = 16;
  config.d_ff = 32;
  config.max_seq = 4;
  config.zero_init_head = true;
  const TinyTransformer net(config);

  const NoiseSchedule schedule;
  Rng rng(23);
  double oracle_loss = 0.0;
  double net_loss = 0.0;
  const int trials = 10000;
  int counted = 0;
  for (int trial = 0; trial < trials; ++trial) {
    const TokenSeq x0 = dist.sample(rng);
    const double t = sample_training_noise(rng);
    const MaskabilityMask all(x0.size(), true);
    const TokenSeq xt = forward_corrupt(x0, all, t, schedule, vocab, rng);
    bool has_mask = false;
    for (TokenId tok : xt) has_mask = has_mask || tok == vocab.mask_id();
    if (!has_mask) continue;
    ++counted;
    const auto lp_oracle = oracle.denoise(xt).log_probs();
    const auto lp_net = net.denoise(xt).log_probs();
    oracle_loss +=
        diffusion_loss(x0, xt, lp_oracle, vocab.size(), t, vocab).loss;
    net_loss += diffusion_loss(x0, xt, lp_net, vocab.size(), t, vocab).loss;
  }
  REQUIRE(counted > 1000);
  CHECK(oracle_loss <= net_loss);
}
