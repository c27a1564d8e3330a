#include "maskdiff/data.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace maskdiff {

namespace {

const std::string kLetters = "abcdefgh";
const std::string kValues = "rstuvwxy";
const std::string kDigits = "0123456789";

std::string random_glyphs(const std::string& alphabet, std::size_t len,
                          Rng& rng) {
  std::string out(len, ' ');
  for (auto& c : out) c = alphabet[rng.uniform_below(alphabet.size())];
  return out;
}

}  // namespace

ToyTask toy_task_from_name(const std::string& name) {
  if (name == "copy") return ToyTask::Copy;
  if (name == "reverse") return ToyTask::Reverse;
  if (name == "key-value-recall") return ToyTask::KeyValueRecall;
  if (name == "modular-sum") return ToyTask::ModularSum;
  throw std::invalid_argument("unknown toy task: " + name);
}

std::string toy_task_name(ToyTask task) {
  switch (task) {
    case ToyTask::Copy: return "copy";
    case ToyTask::Reverse: return "reverse";
    case ToyTask::KeyValueRecall: return "key-value-recall";
    case ToyTask::ModularSum: return "modular-sum";
  }
  throw std::logic_error("unknown toy task");
}

std::string toy_task_alphabet(const ToyTaskConfig& config) {
  switch (config.task) {
    case ToyTask::Copy:
    case ToyTask::Reverse:
      return kLetters + "=";
    case ToyTask::KeyValueRecall:
      return kLetters + kValues + "?=";
    case ToyTask::ModularSum:
      if (config.modulus < 2 || config.modulus > 10)
        throw std::invalid_argument("modular-sum: modulus must be in [2,10]");
      return kDigits.substr(0, config.modulus) + "=";
  }
  throw std::logic_error("unknown toy task");
}

ToyExample sample_toy_example(const ToyTaskConfig& config, Rng& rng) {
  switch (config.task) {
    case ToyTask::Copy:
    case ToyTask::Reverse: {
      if (config.min_len == 0 || config.min_len > config.max_len)
        throw std::invalid_argument("toy task: bad prompt length range");
      const std::size_t len =
          config.min_len + rng.uniform_below(config.max_len - config.min_len + 1);
      ToyExample ex;
      ex.prompt = random_glyphs(kLetters, len, rng);
      ex.answer = toy_oracle_answer(config, ex.prompt);
      return ex;
    }
    case ToyTask::KeyValueRecall: {
      if (config.n_pairs == 0 || config.n_pairs > kLetters.size())
        throw std::invalid_argument("toy task: bad pair count");
      std::string keys = kLetters;
      for (std::size_t i = keys.size(); i > 1; --i)
        std::swap(keys[i - 1], keys[rng.uniform_below(i)]);
      keys.resize(config.n_pairs);
      ToyExample ex;
      for (char k : keys) {
        ex.prompt.push_back(k);
        ex.prompt.push_back(kValues[rng.uniform_below(kValues.size())]);
      }
      const char query = keys[rng.uniform_below(keys.size())];
      ex.prompt.push_back('?');
      ex.prompt.push_back(query);
      ex.answer = toy_oracle_answer(config, ex.prompt);
      return ex;
    }
    case ToyTask::ModularSum: {
      const unsigned m = config.modulus;
      ToyExample ex;
      ex.prompt.push_back(kDigits[rng.uniform_below(m)]);
      ex.prompt.push_back(kDigits[rng.uniform_below(m)]);
      ex.answer = toy_oracle_answer(config, ex.prompt);
      return ex;
    }
  }
  throw std::logic_error("unknown toy task");
}

std::string toy_oracle_answer(const ToyTaskConfig& config,
                              const std::string& prompt) {
  switch (config.task) {
    case ToyTask::Copy:
      return prompt;
    case ToyTask::Reverse:
      return std::string(prompt.rbegin(), prompt.rend());
    case ToyTask::KeyValueRecall: {
      const auto qmark = prompt.find('?');
      if (qmark == std::string::npos || qmark + 2 != prompt.size() ||
          qmark % 2 != 0)
        throw std::invalid_argument("key-value-recall: malformed prompt");
      const char query = prompt[qmark + 1];
      for (std::size_t i = 0; i + 1 < qmark; i += 2)
        if (prompt[i] == query) return std::string(1, prompt[i + 1]);
      throw std::invalid_argument("key-value-recall: query key not present");
    }
    case ToyTask::ModularSum: {
      if (prompt.size() != 2)
        throw std::invalid_argument("modular-sum: prompt must be two digits");
      const unsigned a = static_cast<unsigned>(prompt[0] - '0');
      const unsigned b = static_cast<unsigned>(prompt[1] - '0');
      if (a >= config.modulus || b >= config.modulus)
        throw std::invalid_argument("modular-sum: digit outside modulus");
      return std::string(1, kDigits[(a + b) % config.modulus]);
    }
  }
  throw std::logic_error("unknown toy task");
}

std::vector<std::string> generate_toy_corpus(const ToyTaskConfig& config,
                                             std::size_t size, Rng& rng) {
  if (size == 0) throw std::invalid_argument("generate_toy_corpus: size >= 1");
  std::vector<std::string> docs;
  docs.reserve(size);
  for (std::size_t i = 0; i < size; ++i) {
    const ToyExample ex = sample_toy_example(config, rng);
    docs.push_back(ex.prompt + "=" + ex.answer);
  }
  return docs;
}

TokenSeq PackedShard::row_tokens(std::size_t index) const {
  if (index >= n_seq) throw std::out_of_range("shard: row out of range");
  return TokenSeq(tokens.begin() + static_cast<std::ptrdiff_t>(index * seq_len),
                  tokens.begin() +
                      static_cast<std::ptrdiff_t>((index + 1) * seq_len));
}

std::size_t PackedShard::non_pad_tokens(const Vocabulary& vocab) const {
  std::size_t n = 0;
  for (TokenId t : tokens)
    if (t != vocab.pad_id()) ++n;
  return n;
}

PackedShard pack(const std::vector<std::string>& documents,
                 const Vocabulary& vocab, std::size_t seq_len,
                 const PackConfig& config) {
  if (seq_len < 2) throw std::invalid_argument("pack: seq_len must be >= 2");
  PackedShard shard;
  shard.seq_len = seq_len;
  if (documents.empty()) return shard;

  std::vector<TokenId> stream;
  for (std::size_t d = 0; d < documents.size(); ++d) {
    TokenSeq toks = vocab.tokenize(documents[d]);
    toks.push_back(vocab.eos_id());
    if (config.mode == PackMode::Boundary) {
      if (toks.size() > seq_len && !config.split_oversize)
        throw std::invalid_argument("pack: document longer than seq_len");
      // start each document on a fresh row
      const std::size_t rem = stream.size() % seq_len;
      if (rem != 0) stream.insert(stream.end(), seq_len - rem, vocab.pad_id());
    }
    shard.doc_spans.push_back({static_cast<std::uint32_t>(d), stream.size(),
                               stream.size() + toks.size()});
    stream.insert(stream.end(), toks.begin(), toks.end());
  }
  const std::size_t rem = stream.size() % seq_len;
  if (rem != 0) stream.insert(stream.end(), seq_len - rem, vocab.pad_id());
  shard.tokens = std::move(stream);
  shard.n_seq = shard.tokens.size() / seq_len;
  return shard;
}

MaskabilityMask row_maskability(const PackedShard& shard, std::size_t row,
                                const Vocabulary& vocab) {
  if (row >= shard.n_seq) throw std::out_of_range("shard: row out of range");
  MaskabilityMask m(shard.seq_len, true);
  const TokenId* r = shard.row(row);
  for (std::size_t i = 0; i < shard.seq_len; ++i)
    if (r[i] == vocab.pad_id()) m[i] = false;
  return m;
}

std::uint64_t fnv1a64(const void* data, std::size_t size) {
  const auto* bytes = static_cast<const unsigned char*>(data);
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  for (std::size_t i = 0; i < size; ++i) {
    hash ^= bytes[i];
    hash *= 0x100000001b3ULL;
  }
  return hash;
}

void shard_save(const PackedShard& shard, const std::string& path_prefix) {
  std::ofstream bin(path_prefix + ".bin", std::ios::binary);
  if (!bin) throw std::runtime_error("shard: cannot open " + path_prefix + ".bin");
  bin.write(reinterpret_cast<const char*>(shard.tokens.data()),
            static_cast<std::streamsize>(shard.tokens.size() * sizeof(TokenId)));
  if (!bin) throw std::runtime_error("shard: write failed");
  bin.close();

  nlohmann::json spans = nlohmann::json::array();
  for (const auto& s : shard.doc_spans)
    spans.push_back({{"doc", s.doc_id}, {"begin", s.begin}, {"end", s.end}});
  nlohmann::json sidecar = {
      {"version", 1},
      {"seq_len", shard.seq_len},
      {"n_seq", shard.n_seq},
      {"checksum", fnv1a64(shard.tokens.data(),
                           shard.tokens.size() * sizeof(TokenId))},
      {"doc_spans", spans}};
  std::ofstream meta(path_prefix + ".json");
  if (!meta) throw std::runtime_error("shard: cannot open " + path_prefix + ".json");
  meta << sidecar.dump(2) << "\n";
}

PackedShard shard_load(const std::string& path_prefix) {
  std::ifstream meta(path_prefix + ".json");
  if (!meta) throw std::runtime_error("shard: cannot open " + path_prefix + ".json");
  nlohmann::json sidecar;
  meta >> sidecar;
  if (sidecar.at("version").get<int>() != 1)
    throw std::runtime_error("shard: unsupported version");

  PackedShard shard;
  shard.seq_len = sidecar.at("seq_len").get<std::size_t>();
  shard.n_seq = sidecar.at("n_seq").get<std::size_t>();
  shard.tokens.resize(shard.seq_len * shard.n_seq);
  std::ifstream bin(path_prefix + ".bin", std::ios::binary);
  if (!bin) throw std::runtime_error("shard: cannot open " + path_prefix + ".bin");
  bin.read(reinterpret_cast<char*>(shard.tokens.data()),
           static_cast<std::streamsize>(shard.tokens.size() * sizeof(TokenId)));
  if (!bin) throw std::runtime_error("shard: truncated token file");
  const auto checksum =
      fnv1a64(shard.tokens.data(), shard.tokens.size() * sizeof(TokenId));
  if (checksum != sidecar.at("checksum").get<std::uint64_t>())
    throw std::runtime_error("shard: checksum mismatch");
  for (const auto& s : sidecar.at("doc_spans"))
    shard.doc_spans.push_back({s.at("doc").get<std::uint32_t>(),
                               s.at("begin").get<std::size_t>(),
                               s.at("end").get<std::size_t>()});
  return shard;
}

std::vector<std::uint32_t> epoch_order(std::size_t n, std::uint64_t seed,
                                       std::uint64_t epoch) {
  std::vector<std::uint32_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = static_cast<std::uint32_t>(i);
  Rng rng(seed ^ (0x9e3779b97f4a7c15ULL * (epoch + 1)));
  for (std::size_t i = n; i > 1; --i)
    std::swap(order[i - 1], order[rng.uniform_below(i)]);
  return order;
}

BatchIterator::BatchIterator(std::size_t n_sequences, std::size_t batch_size,
                             std::uint64_t seed)
    : n_(n_sequences), batch_size_(batch_size), seed_(seed) {
  if (batch_size_ == 0) throw std::invalid_argument("batch size must be >= 1");
  if (n_ == 0) throw std::invalid_argument("batch iterator: empty corpus");
}

std::size_t BatchIterator::batches_per_epoch() const {
  return (n_ + batch_size_ - 1) / batch_size_;
}

std::vector<std::uint32_t> BatchIterator::batch(std::uint64_t epoch,
                                                std::size_t batch_in_epoch) const {
  if (batch_in_epoch >= batches_per_epoch())
    throw std::out_of_range("batch iterator: batch index out of range");
  const auto order = epoch_order(n_, seed_, epoch);
  const std::size_t begin = batch_in_epoch * batch_size_;
  const std::size_t end = std::min(begin + batch_size_, n_);
  return std::vector<std::uint32_t>(order.begin() + static_cast<std::ptrdiff_t>(begin),
                                    order.begin() + static_cast<std::ptrdiff_t>(end));
}

SftRow build_sft_row(const SftExample& example, const Vocabulary& vocab,
                     std::size_t width) {
  if (example.response.empty())
    throw std::invalid_argument("sft: response must be non-empty");
  if (width < example.prompt.size() + 4)
    throw std::invalid_argument("sft: width too small for prompt");
  SftRow row;
  row.tokens.reserve(width);
  row.tokens.push_back(vocab.bos_id());
  row.prompt_begin = 1;
  row.prompt_len = example.prompt.size();
  row.tokens.insert(row.tokens.end(), example.prompt.begin(),
                    example.prompt.end());
  row.tokens.push_back(vocab.sep_id());
  row.response_begin = row.tokens.size();
  const std::size_t response_room = width - row.tokens.size() - 1;
  const std::size_t take = std::min(example.response.size(), response_room);
  row.tokens.insert(row.tokens.end(), example.response.begin(),
                    example.response.begin() + static_cast<std::ptrdiff_t>(take));
  while (row.tokens.size() < width) row.tokens.push_back(vocab.eos_id());
  return row;
}

std::vector<SftExample> load_sft_jsonl(const std::string& path,
                                       const Vocabulary& vocab) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("sft: cannot open " + path);
  std::vector<SftExample> out;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line);
    out.push_back({vocab.tokenize(j.at("prompt").get<std::string>()),
                   vocab.tokenize(j.at("response").get<std::string>())});
  }
  return out;
}

void save_sft_jsonl(const std::vector<SftExample>& examples,
                    const Vocabulary& vocab, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("sft: cannot open " + path);
  for (const auto& ex : examples) {
    nlohmann::json j = {{"prompt", vocab.detokenize(ex.prompt)},
                        {"response", vocab.detokenize(ex.response)}};
    f << j.dump() << "\n";
  }
}

std::vector<SftExample> toy_sft_examples(const ToyTaskConfig& config,
                                         std::size_t count,
                                         const Vocabulary& vocab, Rng& rng) {
  std::vector<SftExample> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const ToyExample ex = sample_toy_example(config, rng);
    out.push_back({vocab.tokenize(ex.prompt), vocab.tokenize(ex.answer)});
  }
  return out;
}

}  // namespace maskdiff
