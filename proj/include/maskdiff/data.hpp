#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "maskdiff/core.hpp"
#include "maskdiff/rng.hpp"

namespace maskdiff {

enum class ToyTask { Copy, Reverse, KeyValueRecall, ModularSum };

ToyTask toy_task_from_name(const std::string& name);
std::string toy_task_name(ToyTask task);

struct ToyTaskConfig {
  ToyTask task = ToyTask::Copy;
  std::size_t min_len = 10;   // prompt glyph count (copy/reverse)
  std::size_t max_len = 10;
  std::size_t n_pairs = 3;    // key-value-recall pairs per prompt
  unsigned modulus = 5;       // modular-sum base, 2..10
};

struct ToyExample {
  std::string prompt;
  std::string answer;
};

// Glyph inventory a vocabulary must contain for this task (includes the
// '=' document separator and any task markers).
std::string toy_task_alphabet(const ToyTaskConfig& config);

ToyExample sample_toy_example(const ToyTaskConfig& config, Rng& rng);

// Ground-truth answer for a prompt; the exact-match oracle.
std::string toy_oracle_answer(const ToyTaskConfig& config,
                              const std::string& prompt);

// Documents of the form "<prompt>=<answer>".
std::vector<std::string> generate_toy_corpus(const ToyTaskConfig& config,
                                             std::size_t size, Rng& rng);

// ---------------------------------------------------------------------------
// Packing

enum class PackMode {
  Concat,    // documents flow across row boundaries, eos-separated
  Boundary,  // each document starts a fresh row
};

struct PackConfig {
  PackMode mode = PackMode::Concat;
  bool split_oversize = true;  // Boundary mode: split long docs vs reject
};

struct DocSpan {
  std::uint32_t doc_id = 0;
  std::size_t begin = 0;  // flat token offsets into the shard buffer
  std::size_t end = 0;
};

struct PackedShard {
  std::size_t seq_len = 0;
  std::size_t n_seq = 0;
  std::vector<TokenId> tokens;  // n_seq * seq_len
  std::vector<DocSpan> doc_spans;

  const TokenId* row(std::size_t index) const {
    return tokens.data() + index * seq_len;
  }
  TokenSeq row_tokens(std::size_t index) const;
  std::size_t non_pad_tokens(const Vocabulary& vocab) const;
};

PackedShard pack(const std::vector<std::string>& documents,
                 const Vocabulary& vocab, std::size_t seq_len,
                 const PackConfig& config = {});

// Pad positions are the only unmaskable ones in a packed row.
MaskabilityMask row_maskability(const PackedShard& shard, std::size_t row,
                                const Vocabulary& vocab);

// Little-endian u16 token file plus a JSON sidecar with lengths and an
// fnv1a-64 checksum. path_prefix produces <prefix>.bin and <prefix>.json.
void shard_save(const PackedShard& shard, const std::string& path_prefix);
PackedShard shard_load(const std::string& path_prefix);

std::uint64_t fnv1a64(const void* data, std::size_t size);

// ---------------------------------------------------------------------------
// Batching

// Deterministic per-epoch visit order: a seeded shuffle of 0..n-1.
std::vector<std::uint32_t> epoch_order(std::size_t n, std::uint64_t seed,
                                       std::uint64_t epoch);

class BatchIterator {
 public:
  BatchIterator(std::size_t n_sequences, std::size_t batch_size,
                std::uint64_t seed);

  std::size_t batches_per_epoch() const;
  // Row indices of batch `batch_in_epoch` of epoch `epoch`.
  std::vector<std::uint32_t> batch(std::uint64_t epoch,
                                   std::size_t batch_in_epoch) const;

 private:
  std::size_t n_;
  std::size_t batch_size_;
  std::uint64_t seed_;
};

// ---------------------------------------------------------------------------
// SFT examples

struct SftExample {
  TokenSeq prompt;
  TokenSeq response;
};

// Row layout: [bos] prompt [sep] response [eos ... eos]. The trailing eos
// fill teaches the model to close and pad its own generation region, which
// inference relies on when gen_len exceeds the answer length. Responses that
// do not fit are truncated.
struct SftRow {
  TokenSeq tokens;
  std::size_t prompt_begin = 0;  // first prompt token (after bos)
  std::size_t prompt_len = 0;
  std::size_t response_begin = 0;  // first position after sep
};

SftRow build_sft_row(const SftExample& example, const Vocabulary& vocab,
                     std::size_t width);

// JSONL with one {"prompt": ..., "response": ...} object per line.
std::vector<SftExample> load_sft_jsonl(const std::string& path,
                                       const Vocabulary& vocab);
void save_sft_jsonl(const std::vector<SftExample>& examples,
                    const Vocabulary& vocab, const std::string& path);

std::vector<SftExample> toy_sft_examples(const ToyTaskConfig& config,
                                         std::size_t count,
                                         const Vocabulary& vocab, Rng& rng);

}  // namespace maskdiff
