#pragma once

#include <set>
#include <string>
#include <vector>

#include "maskdiff/core.hpp"
#include "maskdiff/rng.hpp"

namespace maskdiff {

// Per-item structured masking configuration. S1 (unmaskable prefix) and S2
// (pad-truncated suffix) are mutually exclusive; S3 (block masking) composes
// independently with either.
struct StrategyConfig {
  double p_s1 = 0.0;
  double p_s2 = 0.0;
  double p_s3 = 0.0;
  std::vector<std::size_t> block_sizes = {2, 4, 8};

  void validate() const;
};

struct CurriculumRow {
  int epoch = 0;
  double p_s1 = 0.0;
  double p_s2 = 0.0;
  double p_s3 = 0.0;
};

class CurriculumTable {
 public:
  explicit CurriculumTable(std::vector<CurriculumRow> rows);

  // Mid-training schedule: epochs 1..5 with (1,1,5) ... (20,20,25) percent.
  static CurriculumTable default_midtrain();

  static CurriculumTable from_json(const std::string& json_text);
  std::string to_json() const;

  const std::vector<CurriculumRow>& rows() const { return rows_; }

 private:
  std::vector<CurriculumRow> rows_;
};

// Prompt-conditioning state for one SFT example.
struct ConditioningPlan {
  std::size_t prompt_begin = 0;  // index of first prompt token
  std::size_t prompt_len = 0;
  double ramp_fraction = 0.0;  // fraction of the prompt currently protected
  std::size_t protected_count = 0;
};

struct StrategySelection {
  bool s1 = false;
  bool s2 = false;
  bool s3 = false;
  std::size_t s3_block = 0;  // drawn from config.block_sizes when s3 is set
};

// S1: protect a uniformly drawn prefix of length L in {0, ..., seq_len-1}.
MaskabilityMask apply_s1(std::size_t seq_len, Rng& rng);

// S2: overwrite a uniformly drawn suffix of length M in {0, ..., N-1} with
// unmaskable pad tokens.
struct S2Result {
  TokenSeq tokens;
  MaskabilityMask maskable;
};
S2Result apply_s2(const TokenSeq& seq, const Vocabulary& vocab, Rng& rng);

// S3: aligned block masking. The sequence is partitioned into ceil(N/k)
// blocks; each block masks in full with probability 1 - alpha(t), so the
// per-position masking probability stays at 1 - alpha(t). Returns the
// per-position masking decision; callers intersect it with maskability.
std::vector<bool> apply_s3(std::size_t seq_len, double t, std::size_t k,
                           const NoiseSchedule& schedule, Rng& rng);

StrategySelection select_strategies(const StrategyConfig& config, Rng& rng);

StrategyConfig curriculum_lookup(const CurriculumTable& table, int epoch);

// Prompt-conditioned SFT masking. The first floor(ramp * prompt_len) prompt
// tokens are protected, where ramp = min(1, training_progress /
// first_epoch_fraction) and training_progress is the fraction of the whole
// SFT run completed. Response tokens are always maskable.
struct SftMaskResult {
  MaskabilityMask maskable;
  ConditioningPlan plan;
};
SftMaskResult sft_conditioning(std::size_t total_len, std::size_t prompt_begin,
                               std::size_t prompt_len, double training_progress,
                               double first_epoch_fraction);

}  // namespace maskdiff
