#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace maskdiff {

using TokenId = std::uint16_t;
using TokenSeq = std::vector<TokenId>;

// Position-aligned corruption permission flags. true = the forward process
// may replace this position with the mask token.
using MaskabilityMask = std::vector<bool>;

// Character-level vocabulary: glyph ids first (0..glyphs-1), then the five
// reserved specials. mask/pad are never produced from raw text.
class Vocabulary {
 public:
  // alphabet: the ordered glyph inventory, at most 64 distinct characters.
  explicit Vocabulary(const std::string& alphabet);

  std::size_t size() const { return glyphs_.size() + 5; }
  std::size_t glyph_count() const { return glyphs_.size(); }

  TokenId mask_id() const { return static_cast<TokenId>(glyphs_.size() + 0); }
  TokenId pad_id() const { return static_cast<TokenId>(glyphs_.size() + 1); }
  TokenId bos_id() const { return static_cast<TokenId>(glyphs_.size() + 2); }
  TokenId eos_id() const { return static_cast<TokenId>(glyphs_.size() + 3); }
  TokenId sep_id() const { return static_cast<TokenId>(glyphs_.size() + 4); }

  bool is_special(TokenId id) const { return id >= glyphs_.size(); }
  bool is_glyph(TokenId id) const { return id < glyphs_.size(); }

  char glyph(TokenId id) const;
  const std::string& glyphs() const { return glyphs_; }

  TokenSeq tokenize(const std::string& text) const;
  std::string detokenize(const TokenSeq& tokens) const;

  std::string to_json() const;
  static Vocabulary from_json(const std::string& json_text);

  void save(const std::string& path) const;
  static Vocabulary load(const std::string& path);

  bool operator==(const Vocabulary& other) const {
    return glyphs_ == other.glyphs_;
  }

 private:
  std::string glyphs_;
  std::vector<int> char_to_id_;  // 256 entries, -1 = unknown
};

// Noise schedule alpha(t): survival probability of a token up to time t.
enum class ScheduleKind { Linear };

struct NoiseSchedule {
  ScheduleKind kind = ScheduleKind::Linear;
};

// alpha(t) for t in [0,1]; endpoints are accepted as closed limits.
double alpha(const NoiseSchedule& schedule, double t);

std::string render_tokens(const TokenSeq& seq, const Vocabulary& vocab,
                          const MaskabilityMask* protected_flags = nullptr);

}  // namespace maskdiff
