#pragma once

#include <string>
#include <vector>

#include "maskdiff/data.hpp"
#include "maskdiff/sampler.hpp"

namespace maskdiff {

struct EvalRow {
  std::size_t steps = 0;
  double accuracy = 0.0;
  double mean_ms = 0.0;
  double std_ms = 0.0;
};

struct EvalReport {
  std::string task;
  std::size_t sample_count = 0;
  double exact_match = 0.0;
  std::vector<EvalRow> rows;  // sweep results, sorted by steps
  std::string config_fingerprint;
  std::uint64_t seed = 0;

  // include_timing=false zeroes the wall-clock columns; used by the
  // reproducibility checks, which compare deterministic content only.
  std::string to_json(bool include_timing = true) const;
  void save(const std::string& path) const;
  std::string to_csv() const;  // steps,accuracy,mean_ms,std_ms
  void save_csv(const std::string& path) const;
};

// Greedy exact-match evaluation on a toy task. Prompts are sampled with the
// given seed; accuracy is the fraction of generations whose stripped
// rendering equals the oracle answer.
EvalReport evaluate(const Denoiser& model, const Vocabulary& vocab,
                    const ToyTaskConfig& task, const DecodePolicy& policy,
                    std::size_t n_samples, std::size_t gen_len,
                    std::uint64_t seed);

// Accuracy and latency per step budget. Every sample is timed over
// `trials` repeat generations (the paper protocol uses two) and the
// accuracy column comes from the first trial.
EvalReport sweep_steps(const Denoiser& model, const Vocabulary& vocab,
                       const ToyTaskConfig& task,
                       const std::vector<std::size_t>& steps_list,
                       std::size_t trials, std::size_t n_samples,
                       std::size_t gen_len, const DecodePolicy& base_policy,
                       std::uint64_t seed);

// Stable fingerprint of a config blob (fnv1a-64 hex).
std::string config_fingerprint(const std::string& config_text);

}  // namespace maskdiff
