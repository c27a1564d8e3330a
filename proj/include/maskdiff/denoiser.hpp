#pragma once

#include <utility>
#include <vector>

#include "maskdiff/core.hpp"
#include "maskdiff/rng.hpp"

namespace maskdiff {

// Per-position categorical distributions over the vocabulary, stored as
// logits row-major [N, V]. probs()/log_probs() give the normalized views.
class DenoiserOutput {
 public:
  DenoiserOutput(std::vector<double> logits, std::size_t seq_len,
                 std::size_t vocab_size);

  std::size_t seq_len() const { return seq_len_; }
  std::size_t vocab_size() const { return vocab_size_; }
  const std::vector<double>& logits() const { return logits_; }

  std::vector<double> probs_at(std::size_t position) const;
  std::vector<double> log_probs_at(std::size_t position) const;
  std::vector<double> log_probs() const;  // row-major [N, V]

 private:
  std::vector<double> logits_;
  std::size_t seq_len_;
  std::size_t vocab_size_;
};

// Anything that maps a partially masked sequence to per-position clean-token
// distributions.
class Denoiser {
 public:
  virtual ~Denoiser() = default;
  virtual DenoiserOutput denoise(const TokenSeq& x_t) const = 0;

  // Draw one full clean sequence consistent with x_t. The default samples
  // each masked position independently from its marginal, which is exact
  // only when positions are conditionally independent; denoisers with access
  // to the joint posterior override it.
  virtual TokenSeq sample_x0(const TokenSeq& x_t, Rng& rng) const;
};

// Explicit distribution over sequences of fixed length N over the glyph
// alphabet of a small vocabulary. Ground truth for the exact oracle.
class ToyDistribution {
 public:
  ToyDistribution(std::vector<std::pair<TokenSeq, double>> support,
                  const Vocabulary& vocab);

  std::size_t seq_len() const { return seq_len_; }
  const Vocabulary& vocab() const { return vocab_; }
  const std::vector<std::pair<TokenSeq, double>>& support() const {
    return support_;
  }

  // Probability of an exact sequence (0 outside the support).
  double probability(const TokenSeq& seq) const;

  TokenSeq sample(Rng& rng) const;

  // The correlated 8-sequence reference distribution used throughout the
  // test-suite (V = 4 glyphs, N = 3).
  static ToyDistribution reference(const Vocabulary& vocab);

 private:
  std::vector<std::pair<TokenSeq, double>> support_;
  Vocabulary vocab_;
  std::size_t seq_len_;
};

// Bayes-exact denoiser for a ToyDistribution. The forward process masks
// positions independently of token identity, so the posterior over x_0
// conditions only on agreement with the unmasked evidence.
class TabularDenoiser : public Denoiser {
 public:
  explicit TabularDenoiser(ToyDistribution dist);

  DenoiserOutput denoise(const TokenSeq& x_t) const override;

  // Exact joint posterior sample over the support.
  TokenSeq sample_x0(const TokenSeq& x_t, Rng& rng) const override;

  const ToyDistribution& distribution() const { return dist_; }

 private:
  std::vector<double> posterior_weights(const TokenSeq& x_t) const;

  ToyDistribution dist_;
};

}  // namespace maskdiff
