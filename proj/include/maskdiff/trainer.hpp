#pragma once

#include <optional>
#include <string>
#include <vector>

#include "maskdiff/data.hpp"
#include "maskdiff/masking.hpp"
#include "maskdiff/sampler.hpp"
#include "maskdiff/transformer.hpp"

namespace maskdiff {

enum class StageKind { Pretrain, Midtrain, Sft };
enum class LrScheduleKind { LinearDecay, Cosine };

StageKind stage_from_name(const std::string& name);
std::string stage_name(StageKind stage);

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

class AdamW {
 public:
  AdamW(std::size_t size, const AdamWConfig& config);

  void update(std::vector<double>& params, const std::vector<double>& grad,
              double lr);

  std::uint64_t step_count() const { return step_count_; }
  void save(const std::string& path) const;
  static AdamW load(const std::string& path, const AdamWConfig& config);

 private:
  AdamWConfig config_;
  std::vector<double> m_;
  std::vector<double> v_;
  std::uint64_t step_count_ = 0;
};

struct StageConfig {
  StageKind stage = StageKind::Pretrain;
  std::size_t steps = 0;   // pretrain: explicit budget; epoch stages: derived
  std::size_t epochs = 0;  // midtrain / sft
  std::size_t batch_size = 32;
  std::size_t seq_len = 64;    // packed stages
  std::size_t sft_width = 80;  // sft row width
  double peak_lr = 3e-4;
  LrScheduleKind lr_schedule = LrScheduleKind::LinearDecay;
  double warmup_fraction = 0.0;
  AdamWConfig adamw;
  StrategyConfig strategy;  // pretrain: fixed rates; ignored when curriculum set
  std::optional<CurriculumTable> curriculum;  // midtrain schedule
  std::uint64_t seed = 1;
  std::size_t checkpoint_interval = 0;  // 0 = final checkpoint only
  bool early_stopping = false;          // sft: exact-match early stop
  std::size_t early_stop_patience = 2;
  std::size_t early_stop_eval_n = 64;
  std::size_t early_stop_eval_steps = 8;  // decode budget for the epoch metric

  std::string to_json() const;
  static StageConfig from_json(const std::string& json_text);
};

// Linear warmup to peak over floor(warmup_fraction * total) steps, then
// linear or cosine decay to zero at step = total.
double lr_at(const StageConfig& config, std::size_t step, std::size_t total_steps);

struct StepRecord {
  std::size_t step = 0;
  double loss = 0.0;
  double lr = 0.0;
  std::uint32_t n_plain = 0;  // plain + s1 + s2 == batch items
  std::uint32_t n_s1 = 0;
  std::uint32_t n_s2 = 0;
  std::uint32_t n_s3 = 0;  // composes with the above, counted separately
  std::size_t tokens = 0;
  double wall_ms = 0.0;
};

struct TrainLog {
  std::vector<StepRecord> records;

  // include_timing=false gives the deterministic view used by the
  // reproducibility checks; wall clock is never deterministic.
  std::string to_jsonl(bool include_timing = true) const;
  static TrainLog from_jsonl(const std::string& text);
  void save(const std::string& path) const;
  static TrainLog load(const std::string& path);
};

struct Corpus {
  const PackedShard* shard = nullptr;                 // pretrain / midtrain
  const std::vector<SftExample>* sft_examples = nullptr;  // sft
  const std::vector<SftExample>* sft_eval = nullptr;      // early stopping
};

struct TrainResult {
  TrainLog log;
  std::size_t final_step = 0;
  std::string checkpoint_dir;
  bool early_stopped = false;
  std::size_t best_epoch = 0;       // sft with early stopping
  double best_exact_match = -1.0;   // sft with early stopping
};

// Runs one stage. Checkpoints land under out_dir/{stage}/{step}/ as
// model.ckpt + optim.ckpt + trainlog.jsonl. resume_step > 0 restarts from
// that checkpoint and continues bit-identically.
TrainResult train_stage(const StageConfig& config, TinyTransformer& model,
                        const Corpus& corpus, const Vocabulary& vocab,
                        const std::string& out_dir, std::size_t resume_step = 0);

// Exact-match rate of greedy decoding over SFT examples; used by SFT early
// stopping and exposed for tests. The generation region per example is
// sft_width - prompt - 2 (bos and sep).
double sft_exact_match(const TinyTransformer& model, const Vocabulary& vocab,
                       const std::vector<SftExample>& examples,
                       std::size_t sft_width, std::size_t decode_steps,
                       std::uint64_t seed);

// Detokenized answer view: truncate at the first eos, drop pads, render any
// other special as a marker so it can never match a glyph answer.
std::string render_answer(const TokenSeq& generated, const Vocabulary& vocab);

}  // namespace maskdiff
