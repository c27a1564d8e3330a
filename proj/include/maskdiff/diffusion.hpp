#pragma once

#include <vector>

#include "maskdiff/core.hpp"
#include "maskdiff/rng.hpp"

namespace maskdiff {

// Dense row-stochastic single-step transition matrix. Materialized only for
// small vocabularies; it exists to validate the scalar closed forms, the
// production paths never build it.
class TransitionMatrix {
 public:
  TransitionMatrix(double beta, const Vocabulary& vocab);

  std::size_t dim() const { return dim_; }
  double at(std::size_t row, std::size_t col) const {
    return entries_[row * dim_ + col];
  }
  double row_sum(std::size_t row) const;

  // Matrix product this * other (apply this step, then other).
  TransitionMatrix compose(const TransitionMatrix& other) const;

 private:
  TransitionMatrix(std::size_t dim, TokenId mask_id)
      : dim_(dim), mask_id_(mask_id), entries_(dim * dim, 0.0) {}

  std::size_t dim_;
  TokenId mask_id_;
  std::vector<double> entries_;
};

// Per-(t,s) reverse kernel parameters for s < t: the probability that a
// masked position reveals its predicted clean token when stepping t -> s.
struct ReverseKernel {
  double t = 0.0;
  double s = 0.0;
  double unmask_prob = 0.0;
};

ReverseKernel reverse_kernel(const NoiseSchedule& schedule, double t, double s);

struct LossReport {
  double loss = 0.0;
  std::vector<double> per_position;  // zero at unmasked positions
  std::size_t masked_count = 0;
  double t = 0.0;
};

// Independently replaces each maskable position with mask with probability
// 1 - alpha(t). Unmaskable positions pass through untouched. One rng draw is
// consumed per position (maskable or not) so corruption patterns at
// different strategies stay aligned for a given seed.
TokenSeq forward_corrupt(const TokenSeq& seq, const MaskabilityMask& maskable,
                         double t, const NoiseSchedule& schedule,
                         const Vocabulary& vocab, Rng& rng);

TransitionMatrix forward_step_matrix(double beta, const Vocabulary& vocab);

// Extra per-token masking probability when continuing corruption from time s
// to time t: 1 - alpha_t / alpha_s.
double conditional_forward(const NoiseSchedule& schedule, double t, double s);

// Exact reverse posterior for one position. pred_x0 is the predicted clean
// token distribution (length V, normalized); returns a distribution over V.
std::vector<double> reverse_posterior(const std::vector<double>& pred_x0,
                                      TokenId x_t_token, double t, double s,
                                      const NoiseSchedule& schedule,
                                      const Vocabulary& vocab);

// Time-weighted masked cross entropy: (1/t) * sum over masked positions of
// -log p(x_0). log_probs is row-major [N, V] of per-position log
// probabilities over the vocabulary.
LossReport diffusion_loss(const TokenSeq& seq_x0, const TokenSeq& seq_xt,
                          const std::vector<double>& log_probs,
                          std::size_t vocab_size, double t,
                          const Vocabulary& vocab);

// Training-time noise draw: uniform on (epsilon, 1]. The floor keeps the
// 1/t loss weight bounded.
inline constexpr double kTimeFloor = 1e-3;
double sample_training_noise(Rng& rng);

}  // namespace maskdiff
