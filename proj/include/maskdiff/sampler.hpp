#pragma once

#include <cstdint>
#include <vector>

#include "maskdiff/denoiser.hpp"
#include "maskdiff/diffusion.hpp"

namespace maskdiff {

enum class DecodeMode {
  PerStepQuota,          // fixed step budget, highest-confidence positions first
  ConfidenceThreshold,   // parallel decoding: commit everything above tau
  ReverseKernel,         // exact stochastic reverse process on a uniform grid
};

enum class ConfidenceMetric { NegativeEntropy, MaxProbability };

struct DecodePolicy {
  DecodeMode mode = DecodeMode::PerStepQuota;
  ConfidenceMetric metric = ConfidenceMetric::NegativeEntropy;
  std::size_t steps = 0;      // quota/kernel modes: total step budget
  double threshold = 0.0;     // threshold mode
  double temperature = 0.0;   // 0 = argmax; applies to committed samples only
};

struct SamplerState {
  TokenSeq tokens;
  std::vector<bool> protected_pos;  // true = frozen context, never rewritten
  std::size_t step_index = 0;
  std::size_t total_steps = 0;
  std::vector<double> confidence;  // last per-position confidences (masked only)
  Rng rng;
};

// Masked, non-protected positions of a sampler state.
std::vector<std::size_t> remaining_masks(const SamplerState& state,
                                         const Vocabulary& vocab);

// prompt followed by gen_len mask tokens; the prompt span is protected.
SamplerState init_generation(const TokenSeq& prompt, std::size_t gen_len,
                             const Vocabulary& vocab, const DecodePolicy& policy,
                             Rng rng);

// prefix + hole_len masks + suffix; both context spans protected.
SamplerState init_infill(const TokenSeq& prefix, const TokenSeq& suffix,
                         std::size_t hole_len, const Vocabulary& vocab,
                         const DecodePolicy& policy, Rng rng);

// Confidence of one position under the untempered predicted distribution.
// Higher = more confident for both metrics.
double confidence(const DenoiserOutput& scores, std::size_t position,
                  ConfidenceMetric metric);

// One decoding step. Runs the denoiser on the full current sequence and
// commits tokens according to the policy. Committed tokens are permanent.
SamplerState step(SamplerState state, const Denoiser& denoiser,
                  const DecodePolicy& policy, const Vocabulary& vocab);

// Runs step until no masked position remains; returns the generation region.
TokenSeq generate(const TokenSeq& prompt, std::size_t gen_len,
                  const Denoiser& denoiser, const DecodePolicy& policy,
                  const Vocabulary& vocab, Rng rng);

TokenSeq infill(const TokenSeq& prefix, const TokenSeq& suffix,
                std::size_t hole_len, const Denoiser& denoiser,
                const DecodePolicy& policy, const Vocabulary& vocab, Rng rng);

}  // namespace maskdiff
