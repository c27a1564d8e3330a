#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "maskdiff/denoiser.hpp"

namespace maskdiff {

// Bidirectional (no causal mask) pre-LN transformer sized for desk-scale
// experiments. The timestep is not an input: the mask pattern itself carries
// the noise level.
struct TinyTransformerConfig {
  std::size_t vocab_size = 0;
  std::size_t n_layers = 2;
  std::size_t n_heads = 4;
  std::size_t d_model = 48;
  std::size_t d_ff = 128;
  std::size_t max_seq = 96;
  std::uint64_t param_seed = 1;
  double init_std = 0.08;
  bool zero_init_head = true;  // uniform logits at a fresh model

  void validate() const;
};

struct TensorInfo {
  std::string name;
  std::vector<std::size_t> shape;
  std::size_t offset = 0;
  std::size_t size = 0;
};

// One training micro-batch: clean sequences, their corruptions, and the
// noise levels drawn per item.
struct TrainBatch {
  std::vector<TokenSeq> x0;
  std::vector<TokenSeq> xt;
  std::vector<double> t;
};

class TinyTransformer : public Denoiser {
 public:
  explicit TinyTransformer(const TinyTransformerConfig& config);

  DenoiserOutput denoise(const TokenSeq& x_t) const override;

  // Mean over batch items of the time-weighted masked cross entropy.
  double batch_loss(const TrainBatch& batch, const Vocabulary& vocab) const;

  // Analytic gradient of batch_loss w.r.t. all parameters. Returns the loss.
  double loss_gradient(const TrainBatch& batch, const Vocabulary& vocab,
                       std::vector<double>& grad) const;

  const TinyTransformerConfig& config() const { return config_; }
  std::vector<double>& params() { return params_; }
  const std::vector<double>& params() const { return params_; }
  const std::vector<TensorInfo>& manifest() const { return manifest_; }
  std::size_t param_count() const { return params_.size(); }

 private:
  struct LayerCache;
  struct ForwardCache;

  void run_forward(const TokenSeq& toks, ForwardCache& cache) const;
  void run_backward(const TokenSeq& toks, const ForwardCache& cache,
                    const std::vector<double>& dlogits,
                    std::vector<double>& grad) const;

  const double* tensor(const std::string& name) const;
  double* tensor_mut(std::vector<double>& storage, const std::string& name) const;

  TinyTransformerConfig config_;
  std::vector<double> params_;
  std::vector<TensorInfo> manifest_;
  std::size_t head_dim_;
  double attn_scale_;
};

// Versioned binary checkpoint container: JSON header (config + tensor
// manifest + rng state) followed by raw little-endian doubles. Round trips
// are bit-exact.
void save_checkpoint(const std::string& path, const TinyTransformer& model,
                     const Rng& rng);

struct LoadedCheckpoint {
  TinyTransformer model;
  Rng rng;
};
LoadedCheckpoint load_checkpoint(const std::string& path);

// Same container, used for optimizer moments and any named tensor bundle.
void save_tensor_bundle(const std::string& path,
                        const std::vector<TensorInfo>& manifest,
                        const std::vector<double>& data,
                        const std::string& meta_json);
struct LoadedBundle {
  std::vector<TensorInfo> manifest;
  std::vector<double> data;
  std::string meta_json;
};
LoadedBundle load_tensor_bundle(const std::string& path);

std::string checkpoint_header_json(const std::string& path);

}  // namespace maskdiff
