#include "maskdiff/diffusion.hpp"

#include <cmath>
#include <stdexcept>

namespace maskdiff {

TransitionMatrix::TransitionMatrix(double beta, const Vocabulary& vocab)
    : dim_(vocab.size()), mask_id_(vocab.mask_id()), entries_(dim_ * dim_, 0.0) {
  if (!(beta >= 0.0 && beta <= 1.0))
    throw std::invalid_argument("transition matrix: beta outside [0,1]");
  if (dim_ > 256)
    throw std::invalid_argument(
        "transition matrix: materialization limited to V <= 256");
  for (std::size_t i = 0; i < dim_; ++i) {
    if (i == mask_id_) {
      entries_[i * dim_ + mask_id_] = 1.0;  // absorbing row
    } else {
      entries_[i * dim_ + i] = 1.0 - beta;
      entries_[i * dim_ + mask_id_] += beta;
    }
  }
}

double TransitionMatrix::row_sum(std::size_t row) const {
  double s = 0.0;
  for (std::size_t j = 0; j < dim_; ++j) s += at(row, j);
  return s;
}

TransitionMatrix TransitionMatrix::compose(const TransitionMatrix& other) const {
  if (dim_ != other.dim_)
    throw std::invalid_argument("transition matrix: dimension mismatch");
  TransitionMatrix out(dim_, mask_id_);
  for (std::size_t i = 0; i < dim_; ++i)
    for (std::size_t k = 0; k < dim_; ++k) {
      const double a = at(i, k);
      if (a == 0.0) continue;
      for (std::size_t j = 0; j < dim_; ++j)
        out.entries_[i * dim_ + j] += a * other.at(k, j);
    }
  return out;
}

ReverseKernel reverse_kernel(const NoiseSchedule& schedule, double t, double s) {
  if (!(s >= 0.0 && s <= t && t <= 1.0))
    throw std::invalid_argument("reverse kernel: need 0 <= s <= t <= 1");
  const double alpha_t = alpha(schedule, t);
  const double alpha_s = alpha(schedule, s);
  ReverseKernel k;
  k.t = t;
  k.s = s;
  k.unmask_prob = (t == s) ? 0.0 : (alpha_s - alpha_t) / (1.0 - alpha_t);
  return k;
}

TokenSeq forward_corrupt(const TokenSeq& seq, const MaskabilityMask& maskable,
                         double t, const NoiseSchedule& schedule,
                         const Vocabulary& vocab, Rng& rng) {
  if (seq.size() != maskable.size())
    throw std::invalid_argument("forward_corrupt: sequence/mask length mismatch");
  const double mask_prob = 1.0 - alpha(schedule, t);
  TokenSeq out = seq;
  for (std::size_t i = 0; i < seq.size(); ++i) {
    const double u = rng.uniform();
    if (maskable[i] && u < mask_prob) out[i] = vocab.mask_id();
  }
  return out;
}

TransitionMatrix forward_step_matrix(double beta, const Vocabulary& vocab) {
  return TransitionMatrix(beta, vocab);
}

double conditional_forward(const NoiseSchedule& schedule, double t, double s) {
  if (!(s >= 0.0 && t <= 1.0))
    throw std::invalid_argument("conditional_forward: times outside [0,1]");
  if (s > t) throw std::invalid_argument("conditional_forward: need s <= t");
  const double alpha_s = alpha(schedule, s);
  const double alpha_t = alpha(schedule, t);
  return 1.0 - alpha_t / alpha_s;
}

std::vector<double> reverse_posterior(const std::vector<double>& pred_x0,
                                      TokenId x_t_token, double t, double s,
                                      const NoiseSchedule& schedule,
                                      const Vocabulary& vocab) {
  if (pred_x0.size() != vocab.size())
    throw std::invalid_argument("reverse_posterior: pred_x0 has wrong length");
  if (!(s < t))
    throw std::invalid_argument("reverse_posterior: need s < t");
  double sum = 0.0;
  for (double p : pred_x0) {
    if (!(p >= 0.0) || !std::isfinite(p))
      throw std::invalid_argument("reverse_posterior: pred_x0 not a distribution");
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-9)
    throw std::invalid_argument("reverse_posterior: pred_x0 not normalized");

  std::vector<double> out(vocab.size(), 0.0);
  if (x_t_token != vocab.mask_id()) {
    out[x_t_token] = 1.0;
    return out;
  }
  const ReverseKernel k = reverse_kernel(schedule, t, s);
  for (std::size_t v = 0; v < out.size(); ++v) out[v] = k.unmask_prob * pred_x0[v];
  out[vocab.mask_id()] += 1.0 - k.unmask_prob;

  double total = 0.0;
  for (double p : out) total += p;
  for (double& p : out) p /= total;  // correct <=1e-12 floating drift
  return out;
}

LossReport diffusion_loss(const TokenSeq& seq_x0, const TokenSeq& seq_xt,
                          const std::vector<double>& log_probs,
                          std::size_t vocab_size, double t,
                          const Vocabulary& vocab) {
  if (!(t > 0.0 && t <= 1.0))
    throw std::invalid_argument("diffusion_loss: t outside (0,1]");
  const std::size_t n = seq_x0.size();
  if (seq_xt.size() != n || log_probs.size() != n * vocab_size)
    throw std::invalid_argument("diffusion_loss: length mismatch");

  LossReport report;
  report.t = t;
  report.per_position.assign(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    if (seq_xt[i] != vocab.mask_id()) continue;
    const double contribution = -log_probs[i * vocab_size + seq_x0[i]] / t;
    report.per_position[i] = contribution;
    report.loss += contribution;
    ++report.masked_count;
  }
  return report;
}

double sample_training_noise(Rng& rng) {
  // t uniform on (kTimeFloor, 1]
  return kTimeFloor + (1.0 - kTimeFloor) * (1.0 - rng.uniform());
}

}  // namespace maskdiff
