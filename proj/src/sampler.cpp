#include "maskdiff/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace maskdiff {

namespace {

// Sample a committed token from the (optionally temperature-scaled)
// predicted distribution. The mask token is excluded so committed positions
// always leave the masked set.
TokenId commit_token(const std::vector<double>& probs, double temperature,
                     TokenId mask_id, Rng& rng) {
  if (temperature == 0.0) {
    std::size_t best = 0;
    double best_p = -1.0;
    for (std::size_t v = 0; v < probs.size(); ++v) {
      if (v == mask_id) continue;
      if (probs[v] > best_p) {
        best_p = probs[v];
        best = v;
      }
    }
    return static_cast<TokenId>(best);
  }
  std::vector<double> w(probs.size(), 0.0);
  double total = 0.0;
  for (std::size_t v = 0; v < probs.size(); ++v) {
    if (v == mask_id || probs[v] <= 0.0) continue;
    w[v] = std::pow(probs[v], 1.0 / temperature);
    total += w[v];
  }
  if (total <= 0.0)
    throw std::runtime_error("sampler: no probability mass outside mask token");
  double u = rng.uniform() * total;
  std::size_t pick = probs.size() - 1;
  for (std::size_t v = 0; v < w.size(); ++v) {
    if (w[v] <= 0.0) continue;
    u -= w[v];
    if (u < 0.0) {
      pick = v;
      break;
    }
  }
  return static_cast<TokenId>(pick);
}

}  // namespace

std::vector<std::size_t> remaining_masks(const SamplerState& state,
                                         const Vocabulary& vocab) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < state.tokens.size(); ++i)
    if (!state.protected_pos[i] && state.tokens[i] == vocab.mask_id())
      out.push_back(i);
  return out;
}

SamplerState init_generation(const TokenSeq& prompt, std::size_t gen_len,
                             const Vocabulary& vocab, const DecodePolicy& policy,
                             Rng rng) {
  if (gen_len == 0)
    throw std::invalid_argument("init_generation: gen_len must be >= 1");
  SamplerState state;
  state.tokens = prompt;
  state.tokens.insert(state.tokens.end(), gen_len, vocab.mask_id());
  state.protected_pos.assign(prompt.size(), true);
  state.protected_pos.insert(state.protected_pos.end(), gen_len, false);
  state.total_steps = policy.steps;
  state.rng = rng;
  state.confidence.assign(state.tokens.size(), 0.0);
  return state;
}

SamplerState init_infill(const TokenSeq& prefix, const TokenSeq& suffix,
                         std::size_t hole_len, const Vocabulary& vocab,
                         const DecodePolicy& policy, Rng rng) {
  if (hole_len == 0)
    throw std::invalid_argument("init_infill: hole_len must be >= 1");
  SamplerState state;
  state.tokens = prefix;
  state.tokens.insert(state.tokens.end(), hole_len, vocab.mask_id());
  state.tokens.insert(state.tokens.end(), suffix.begin(), suffix.end());
  state.protected_pos.assign(prefix.size(), true);
  state.protected_pos.insert(state.protected_pos.end(), hole_len, false);
  state.protected_pos.insert(state.protected_pos.end(), suffix.size(), true);
  state.total_steps = policy.steps;
  state.rng = rng;
  state.confidence.assign(state.tokens.size(), 0.0);
  return state;
}

double confidence(const DenoiserOutput& scores, std::size_t position,
                  ConfidenceMetric metric) {
  const auto p = scores.probs_at(position);
  if (metric == ConfidenceMetric::MaxProbability)
    return *std::max_element(p.begin(), p.end());
  double neg_entropy = 0.0;
  for (double pv : p)
    if (pv > 0.0) neg_entropy += pv * std::log(pv);
  return neg_entropy;
}

SamplerState step(SamplerState state, const Denoiser& denoiser,
                  const DecodePolicy& policy, const Vocabulary& vocab) {
  const auto masked = remaining_masks(state, vocab);
  if (masked.empty())
    throw std::invalid_argument("step: no masked generation position remains");

  if (policy.mode == DecodeMode::ReverseKernel) {
    if (policy.steps == 0)
      throw std::invalid_argument("step: reverse kernel needs steps >= 1");
    if (state.step_index >= policy.steps)
      throw std::invalid_argument("step: reverse kernel grid exhausted");
    const double grid = static_cast<double>(policy.steps);
    const double t = 1.0 - static_cast<double>(state.step_index) / grid;
    const double s = 1.0 - static_cast<double>(state.step_index + 1) / grid;
    const NoiseSchedule schedule;
    const double unmask_prob = reverse_kernel(schedule, t, s).unmask_prob;
    const TokenSeq x0 = denoiser.sample_x0(state.tokens, state.rng);
    for (std::size_t i : masked)
      if (state.rng.uniform() < unmask_prob) state.tokens[i] = x0[i];
    ++state.step_index;
    return state;
  }

  const DenoiserOutput out = denoiser.denoise(state.tokens);
  if (out.seq_len() != state.tokens.size())
    throw std::invalid_argument("step: denoiser output length mismatch");

  std::vector<std::pair<double, std::size_t>> ranked;
  ranked.reserve(masked.size());
  for (std::size_t i : masked) {
    const double c = confidence(out, i, policy.metric);
    state.confidence[i] = c;
    ranked.emplace_back(c, i);
  }
  // highest confidence first; ties break toward the lowest position index
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });

  std::size_t commit_count = 0;
  if (policy.mode == DecodeMode::PerStepQuota) {
    if (policy.steps == 0)
      throw std::invalid_argument("step: quota mode needs steps >= 1");
    const std::size_t remaining_steps =
        policy.steps > state.step_index ? policy.steps - state.step_index : 1;
    commit_count = (masked.size() + remaining_steps - 1) / remaining_steps;
  } else {
    for (const auto& [c, i] : ranked)
      if (c >= policy.threshold) ++commit_count;
    if (commit_count == 0) commit_count = 1;  // progress guarantee
  }
  commit_count = std::min(commit_count, ranked.size());

  for (std::size_t r = 0; r < commit_count; ++r) {
    const std::size_t pos = ranked[r].second;
    state.tokens[pos] =
        commit_token(out.probs_at(pos), policy.temperature, vocab.mask_id(),
                     state.rng);
  }
  ++state.step_index;
  return state;
}

namespace {

TokenSeq run_to_completion(SamplerState state, const Denoiser& denoiser,
                           const DecodePolicy& policy, const Vocabulary& vocab,
                           std::size_t region_begin, std::size_t region_len) {
  while (!remaining_masks(state, vocab).empty())
    state = step(std::move(state), denoiser, policy, vocab);
  return TokenSeq(state.tokens.begin() + static_cast<std::ptrdiff_t>(region_begin),
                  state.tokens.begin() +
                      static_cast<std::ptrdiff_t>(region_begin + region_len));
}

}  // namespace

TokenSeq generate(const TokenSeq& prompt, std::size_t gen_len,
                  const Denoiser& denoiser, const DecodePolicy& policy,
                  const Vocabulary& vocab, Rng rng) {
  SamplerState state = init_generation(prompt, gen_len, vocab, policy, rng);
  return run_to_completion(std::move(state), denoiser, policy, vocab,
                           prompt.size(), gen_len);
}

TokenSeq infill(const TokenSeq& prefix, const TokenSeq& suffix,
                std::size_t hole_len, const Denoiser& denoiser,
                const DecodePolicy& policy, const Vocabulary& vocab, Rng rng) {
  SamplerState state =
      init_infill(prefix, suffix, hole_len, vocab, policy, rng);
  return run_to_completion(std::move(state), denoiser, policy, vocab,
                           prefix.size(), hole_len);
}

}  // namespace maskdiff
