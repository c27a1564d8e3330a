#include "maskdiff/denoiser.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace maskdiff {

namespace {
// Logits for a probability row; zero probabilities map to a large negative
// finite value so DenoiserOutput never stores non-finite entries.
constexpr double kLogFloor = -1e30;

double safe_log(double p) { return p > 0.0 ? std::log(p) : kLogFloor; }
}  // namespace

DenoiserOutput::DenoiserOutput(std::vector<double> logits, std::size_t seq_len,
                               std::size_t vocab_size)
    : logits_(std::move(logits)), seq_len_(seq_len), vocab_size_(vocab_size) {
  if (logits_.size() != seq_len_ * vocab_size_)
    throw std::invalid_argument("denoiser output: logits shape mismatch");
  for (double v : logits_)
    if (!std::isfinite(v))
      throw std::invalid_argument("denoiser output: non-finite logit");
}

std::vector<double> DenoiserOutput::probs_at(std::size_t position) const {
  auto lp = log_probs_at(position);
  for (double& v : lp) v = std::exp(v);
  return lp;
}

std::vector<double> DenoiserOutput::log_probs_at(std::size_t position) const {
  if (position >= seq_len_)
    throw std::out_of_range("denoiser output: position out of range");
  const double* row = logits_.data() + position * vocab_size_;
  const double m = *std::max_element(row, row + vocab_size_);
  double z = 0.0;
  for (std::size_t v = 0; v < vocab_size_; ++v) z += std::exp(row[v] - m);
  const double log_z = m + std::log(z);
  std::vector<double> out(vocab_size_);
  for (std::size_t v = 0; v < vocab_size_; ++v) out[v] = row[v] - log_z;
  return out;
}

std::vector<double> DenoiserOutput::log_probs() const {
  std::vector<double> out;
  out.reserve(logits_.size());
  for (std::size_t i = 0; i < seq_len_; ++i) {
    auto row = log_probs_at(i);
    out.insert(out.end(), row.begin(), row.end());
  }
  return out;
}

TokenSeq Denoiser::sample_x0(const TokenSeq& x_t, Rng& rng) const {
  const DenoiserOutput out = denoise(x_t);
  TokenSeq x0 = x_t;
  for (std::size_t i = 0; i < x_t.size(); ++i) {
    const auto p = out.probs_at(i);
    double u = rng.uniform();
    std::size_t pick = p.size() - 1;
    for (std::size_t v = 0; v < p.size(); ++v) {
      u -= p[v];
      if (u < 0.0) {
        pick = v;
        break;
      }
    }
    x0[i] = static_cast<TokenId>(pick);
  }
  return x0;
}

ToyDistribution::ToyDistribution(
    std::vector<std::pair<TokenSeq, double>> support, const Vocabulary& vocab)
    : support_(std::move(support)), vocab_(vocab) {
  if (support_.empty())
    throw std::invalid_argument("toy distribution: empty support");
  seq_len_ = support_.front().first.size();
  double total = 0.0;
  for (const auto& [seq, p] : support_) {
    if (seq.size() != seq_len_)
      throw std::invalid_argument("toy distribution: ragged support");
    if (seq_len_ > 4)
      throw std::invalid_argument("toy distribution: N must be <= 4");
    for (TokenId tok : seq)
      if (!vocab_.is_glyph(tok))
        throw std::invalid_argument("toy distribution: non-glyph token");
    if (!(p >= 0.0))
      throw std::invalid_argument("toy distribution: negative probability");
    total += p;
  }
  if (vocab_.glyph_count() > 8)
    throw std::invalid_argument("toy distribution: alphabet must be <= 8 glyphs");
  if (std::abs(total - 1.0) > 1e-9)
    throw std::invalid_argument("toy distribution: probabilities must sum to 1");
}

double ToyDistribution::probability(const TokenSeq& seq) const {
  for (const auto& [s, p] : support_)
    if (s == seq) return p;
  return 0.0;
}

TokenSeq ToyDistribution::sample(Rng& rng) const {
  double u = rng.uniform();
  for (const auto& [seq, p] : support_) {
    u -= p;
    if (u < 0.0) return seq;
  }
  return support_.back().first;
}

ToyDistribution ToyDistribution::reference(const Vocabulary& vocab) {
  if (vocab.glyph_count() < 4)
    throw std::invalid_argument("reference distribution needs >= 4 glyphs");
  auto seq = [](TokenId a, TokenId b, TokenId c) { return TokenSeq{a, b, c}; };
  return ToyDistribution({{seq(0, 1, 2), 0.30},
                          {seq(1, 0, 2), 0.20},
                          {seq(2, 1, 0), 0.15},
                          {seq(0, 0, 3), 0.10},
                          {seq(3, 2, 1), 0.10},
                          {seq(1, 3, 3), 0.05},
                          {seq(2, 2, 2), 0.05},
                          {seq(3, 0, 1), 0.05}},
                         vocab);
}

TabularDenoiser::TabularDenoiser(ToyDistribution dist) : dist_(std::move(dist)) {}

std::vector<double> TabularDenoiser::posterior_weights(const TokenSeq& x_t) const {
  const auto& vocab = dist_.vocab();
  if (x_t.size() != dist_.seq_len())
    throw std::invalid_argument("tabular denoiser: sequence length mismatch");
  for (TokenId tok : x_t)
    if (tok != vocab.mask_id() && !vocab.is_glyph(tok))
      throw std::invalid_argument("tabular denoiser: token outside alphabet");

  std::vector<double> weights(dist_.support().size(), 0.0);
  double total = 0.0;
  for (std::size_t s = 0; s < dist_.support().size(); ++s) {
    const auto& [seq, p] = dist_.support()[s];
    bool compatible = true;
    for (std::size_t i = 0; i < x_t.size(); ++i) {
      if (x_t[i] != vocab.mask_id() && x_t[i] != seq[i]) {
        compatible = false;
        break;
      }
    }
    if (compatible) {
      weights[s] = p;
      total += p;
    }
  }
  if (total <= 0.0)
    throw std::invalid_argument(
        "tabular denoiser: evidence incompatible with the distribution support");
  for (double& w : weights) w /= total;
  return weights;
}

DenoiserOutput TabularDenoiser::denoise(const TokenSeq& x_t) const {
  const auto& vocab = dist_.vocab();
  const auto weights = posterior_weights(x_t);
  const std::size_t v_size = vocab.size();
  std::vector<double> logits(x_t.size() * v_size, kLogFloor);
  for (std::size_t i = 0; i < x_t.size(); ++i) {
    double* row = logits.data() + i * v_size;
    if (x_t[i] != vocab.mask_id()) {
      row[x_t[i]] = 0.0;
      continue;
    }
    std::vector<double> marginal(v_size, 0.0);
    for (std::size_t s = 0; s < weights.size(); ++s)
      marginal[dist_.support()[s].first[i]] += weights[s];
    for (std::size_t v = 0; v < v_size; ++v) row[v] = safe_log(marginal[v]);
  }
  return DenoiserOutput(std::move(logits), x_t.size(), v_size);
}

TokenSeq TabularDenoiser::sample_x0(const TokenSeq& x_t, Rng& rng) const {
  const auto weights = posterior_weights(x_t);
  double u = rng.uniform();
  std::size_t pick = weights.size() - 1;
  for (std::size_t s = 0; s < weights.size(); ++s) {
    u -= weights[s];
    if (u < 0.0) {
      pick = s;
      break;
    }
  }
  return dist_.support()[pick].first;
}

}  // namespace maskdiff
