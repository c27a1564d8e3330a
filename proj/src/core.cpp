#include "maskdiff/core.hpp"

#include <fstream>
#include <sstream>

#include "json.hpp"

namespace maskdiff {

Vocabulary::Vocabulary(const std::string& alphabet)
    : glyphs_(alphabet), char_to_id_(256, -1) {
  if (alphabet.empty()) throw std::invalid_argument("vocabulary: empty alphabet");
  if (alphabet.size() > 64)
    throw std::invalid_argument("vocabulary: alphabet larger than 64 glyphs");
  for (std::size_t i = 0; i < alphabet.size(); ++i) {
    const auto c = static_cast<unsigned char>(alphabet[i]);
    if (char_to_id_[c] >= 0)
      throw std::invalid_argument(std::string("vocabulary: duplicate glyph '") +
                                  alphabet[i] + "'");
    char_to_id_[c] = static_cast<int>(i);
  }
}

char Vocabulary::glyph(TokenId id) const {
  if (!is_glyph(id)) throw std::invalid_argument("glyph: id is a special token");
  return glyphs_[id];
}

TokenSeq Vocabulary::tokenize(const std::string& text) const {
  TokenSeq out;
  out.reserve(text.size());
  for (char c : text) {
    const int id = char_to_id_[static_cast<unsigned char>(c)];
    if (id < 0)
      throw std::invalid_argument(std::string("tokenize: unknown glyph '") + c +
                                  "'");
    out.push_back(static_cast<TokenId>(id));
  }
  return out;
}

std::string Vocabulary::detokenize(const TokenSeq& tokens) const {
  std::string out;
  out.reserve(tokens.size());
  for (TokenId id : tokens) {
    if (!is_glyph(id))
      throw std::invalid_argument("detokenize: sequence contains special token");
    out.push_back(glyphs_[id]);
  }
  return out;
}

std::string Vocabulary::to_json() const {
  nlohmann::json j;
  j["version"] = 1;
  j["glyphs"] = glyphs_;
  j["specials"] = {{"mask", mask_id()},
                   {"pad", pad_id()},
                   {"bos", bos_id()},
                   {"eos", eos_id()},
                   {"sep", sep_id()}};
  return j.dump(2);
}

Vocabulary Vocabulary::from_json(const std::string& json_text) {
  const auto j = nlohmann::json::parse(json_text);
  if (!j.contains("version") || j["version"].get<int>() != 1)
    throw std::runtime_error("vocabulary: unsupported file version");
  Vocabulary v(j.at("glyphs").get<std::string>());
  const auto& sp = j.at("specials");
  if (sp.at("mask").get<TokenId>() != v.mask_id() ||
      sp.at("pad").get<TokenId>() != v.pad_id() ||
      sp.at("bos").get<TokenId>() != v.bos_id() ||
      sp.at("eos").get<TokenId>() != v.eos_id() ||
      sp.at("sep").get<TokenId>() != v.sep_id())
    throw std::runtime_error("vocabulary: special ids do not match layout");
  return v;
}

void Vocabulary::save(const std::string& path) const {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("vocabulary: cannot open " + path);
  f << to_json() << "\n";
}

Vocabulary Vocabulary::load(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("vocabulary: cannot open " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return from_json(ss.str());
}

double alpha(const NoiseSchedule& schedule, double t) {
  if (!(t >= 0.0 && t <= 1.0))
    throw std::invalid_argument("alpha: t outside [0,1]");
  switch (schedule.kind) {
    case ScheduleKind::Linear:
      return 1.0 - t;
  }
  throw std::logic_error("alpha: unknown schedule kind");
}

std::string render_tokens(const TokenSeq& seq, const Vocabulary& vocab,
                          const MaskabilityMask* protected_flags) {
  std::string out;
  for (std::size_t i = 0; i < seq.size(); ++i) {
    char c;
    const TokenId id = seq[i];
    if (id == vocab.mask_id())
      c = '#';
    else if (id == vocab.pad_id())
      c = '.';
    else if (id == vocab.bos_id())
      c = '^';
    else if (id == vocab.eos_id())
      c = '$';
    else if (id == vocab.sep_id())
      c = '|';
    else
      c = vocab.glyph(id);
    const bool prot =
        protected_flags != nullptr && i < protected_flags->size() && !(*protected_flags)[i];
    if (prot) {
      out.push_back('[');
      out.push_back(c);
      out.push_back(']');
    } else {
      out.push_back(c);
    }
  }
  return out;
}

}  // namespace maskdiff
