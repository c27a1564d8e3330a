#include "maskdiff/masking.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "json.hpp"

namespace maskdiff {

void StrategyConfig::validate() const {
  for (double p : {p_s1, p_s2, p_s3})
    if (!(p >= 0.0 && p <= 1.0))
      throw std::invalid_argument("strategy config: probability outside [0,1]");
  if (p_s1 + p_s2 > 1.0)
    throw std::invalid_argument("strategy config: p_s1 + p_s2 > 1");
  if (block_sizes.empty())
    throw std::invalid_argument("strategy config: no block sizes");
  for (std::size_t k : block_sizes)
    if (k == 0) throw std::invalid_argument("strategy config: block size 0");
}

CurriculumTable::CurriculumTable(std::vector<CurriculumRow> rows)
    : rows_(std::move(rows)) {
  if (rows_.empty()) throw std::invalid_argument("curriculum: empty table");
  for (std::size_t i = 1; i < rows_.size(); ++i) {
    const auto& prev = rows_[i - 1];
    const auto& cur = rows_[i];
    if (cur.epoch <= prev.epoch)
      throw std::invalid_argument("curriculum: epochs not increasing");
    if (cur.p_s1 < prev.p_s1 || cur.p_s2 < prev.p_s2 || cur.p_s3 < prev.p_s3)
      throw std::invalid_argument("curriculum: probabilities must be nondecreasing");
  }
}

CurriculumTable CurriculumTable::default_midtrain() {
  return CurriculumTable({{1, 0.01, 0.01, 0.05},
                          {2, 0.05, 0.05, 0.10},
                          {3, 0.10, 0.10, 0.15},
                          {4, 0.15, 0.15, 0.20},
                          {5, 0.20, 0.20, 0.25}});
}

CurriculumTable CurriculumTable::from_json(const std::string& json_text) {
  const auto j = nlohmann::json::parse(json_text);
  std::vector<CurriculumRow> rows;
  for (const auto& r : j) {
    rows.push_back({r.at("epoch").get<int>(), r.at("s1").get<double>(),
                    r.at("s2").get<double>(), r.at("s3").get<double>()});
  }
  return CurriculumTable(std::move(rows));
}

std::string CurriculumTable::to_json() const {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& r : rows_)
    j.push_back({{"epoch", r.epoch}, {"s1", r.p_s1}, {"s2", r.p_s2}, {"s3", r.p_s3}});
  return j.dump(2);
}

MaskabilityMask apply_s1(std::size_t seq_len, Rng& rng) {
  if (seq_len == 0) throw std::invalid_argument("apply_s1: empty sequence");
  const std::size_t prefix_len = rng.uniform_below(seq_len);  // {0..N-1}
  MaskabilityMask maskable(seq_len, true);
  for (std::size_t i = 0; i < prefix_len; ++i) maskable[i] = false;
  return maskable;
}

S2Result apply_s2(const TokenSeq& seq, const Vocabulary& vocab, Rng& rng) {
  if (seq.empty()) throw std::invalid_argument("apply_s2: empty sequence");
  const std::size_t n = seq.size();
  const std::size_t suffix_len = rng.uniform_below(n);  // {0..N-1}
  S2Result out{seq, MaskabilityMask(n, true)};
  for (std::size_t i = n - suffix_len; i < n; ++i) {
    out.tokens[i] = vocab.pad_id();
    out.maskable[i] = false;
  }
  return out;
}

std::vector<bool> apply_s3(std::size_t seq_len, double t, std::size_t k,
                           const NoiseSchedule& schedule, Rng& rng) {
  if (k == 0) throw std::invalid_argument("apply_s3: block size 0");
  if (k > seq_len) throw std::invalid_argument("apply_s3: block larger than sequence");
  const double block_prob = 1.0 - alpha(schedule, t);
  std::vector<bool> mask(seq_len, false);
  for (std::size_t start = 0; start < seq_len; start += k) {
    if (rng.uniform() < block_prob) {
      const std::size_t end = std::min(start + k, seq_len);
      for (std::size_t i = start; i < end; ++i) mask[i] = true;
    }
  }
  return mask;
}

StrategySelection select_strategies(const StrategyConfig& config, Rng& rng) {
  config.validate();
  StrategySelection sel;
  const double u = rng.uniform();
  if (u < config.p_s1) {
    sel.s1 = true;
  } else if (u < config.p_s1 + config.p_s2) {
    sel.s2 = true;
  }
  if (rng.uniform() < config.p_s3) {
    sel.s3 = true;
    sel.s3_block =
        config.block_sizes[rng.uniform_below(config.block_sizes.size())];
  }
  return sel;
}

StrategyConfig curriculum_lookup(const CurriculumTable& table, int epoch) {
  for (const auto& row : table.rows()) {
    if (row.epoch == epoch) {
      StrategyConfig c;
      c.p_s1 = row.p_s1;
      c.p_s2 = row.p_s2;
      c.p_s3 = row.p_s3;
      return c;
    }
  }
  throw std::out_of_range("curriculum_lookup: epoch not in table");
}

SftMaskResult sft_conditioning(std::size_t total_len, std::size_t prompt_begin,
                               std::size_t prompt_len, double training_progress,
                               double first_epoch_fraction) {
  if (prompt_begin + prompt_len > total_len)
    throw std::invalid_argument("sft_conditioning: prompt span out of range");
  if (!(first_epoch_fraction > 0.0 && first_epoch_fraction <= 1.0))
    throw std::invalid_argument("sft_conditioning: bad first epoch fraction");
  const double ramp =
      std::min(1.0, std::max(0.0, training_progress) / first_epoch_fraction);
  const auto protected_count =
      static_cast<std::size_t>(std::floor(ramp * static_cast<double>(prompt_len)));

  SftMaskResult out;
  out.maskable.assign(total_len, true);
  for (std::size_t i = 0; i < protected_count; ++i)
    out.maskable[prompt_begin + i] = false;
  out.plan = {prompt_begin, prompt_len, ramp, protected_count};
  return out;
}

}  // namespace maskdiff
