#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdio>
#include <filesystem>

#include "maskdiff/core.hpp"
#include "maskdiff/rng.hpp"

using namespace maskdiff;

TEST_CASE("alpha endpoints and linear interior") {
  NoiseSchedule schedule;
  CHECK(alpha(schedule, 0.0) == 1.0);
  CHECK(alpha(schedule, 1.0) == 0.0);
  CHECK(alpha(schedule, 0.25) == doctest::Approx(0.75).epsilon(1e-15));
  CHECK_THROWS_AS(alpha(schedule, -0.1), std::invalid_argument);
  CHECK_THROWS_AS(alpha(schedule, 1.1), std::invalid_argument);
}

TEST_CASE("alpha is monotone nonincreasing on a 1000-point grid") {
  NoiseSchedule schedule;
  double prev = alpha(schedule, 0.0);
  for (int i = 1; i <= 1000; ++i) {
    const double t = static_cast<double>(i) / 1000.0;
    const double a = alpha(schedule, t);
    CHECK(a <= prev);
    CHECK(a >= 0.0);
    CHECK(a <= 1.0);
    prev = a;
  }
}

TEST_CASE("vocabulary layout: glyphs first, specials distinct and in range") {
  Vocabulary vocab("abcd");
  CHECK(vocab.size() == 9);
  CHECK(vocab.glyph_count() == 4);
  const TokenId specials[] = {vocab.mask_id(), vocab.pad_id(), vocab.bos_id(),
                              vocab.eos_id(), vocab.sep_id()};
  for (std::size_t i = 0; i < 5; ++i) {
    CHECK(specials[i] < vocab.size());
    CHECK(vocab.is_special(specials[i]));
    for (std::size_t j = i + 1; j < 5; ++j) CHECK(specials[i] != specials[j]);
  }
}

TEST_CASE("tokenize basics") {
  Vocabulary vocab("ab");
  CHECK(vocab.tokenize("").empty());
  const TokenSeq seq = vocab.tokenize("ab");
  REQUIRE(seq.size() == 2);
  CHECK(seq[0] == 0);
  CHECK(seq[1] == 1);
  CHECK_THROWS_WITH_AS(vocab.tokenize("az"), doctest::Contains("'z'"),
                       std::invalid_argument);
}

TEST_CASE("tokenizer never emits mask or pad from raw text") {
  Vocabulary vocab("abcdefgh");
  Rng rng(7);
  for (int trial = 0; trial < 200; ++trial) {
    std::string text;
    for (int i = 0; i < 32; ++i)
      text.push_back("abcdefgh"[rng.uniform_below(8)]);
    for (TokenId tok : vocab.tokenize(text)) {
      CHECK(tok != vocab.mask_id());
      CHECK(tok != vocab.pad_id());
      CHECK(vocab.is_glyph(tok));
    }
  }
}

TEST_CASE("detokenize(tokenize(s)) is the identity on random strings") {
  Vocabulary vocab("abcdefghijklmnop0123=?");
  const std::string alphabet = vocab.glyphs();
  Rng rng(99);
  for (int trial = 0; trial < 1000; ++trial) {
    std::string text;
    const std::size_t len = rng.uniform_below(40);
    for (std::size_t i = 0; i < len; ++i)
      text.push_back(alphabet[rng.uniform_below(alphabet.size())]);
    CHECK(vocab.detokenize(vocab.tokenize(text)) == text);
  }
}

TEST_CASE("vocabulary json round trip keeps special ids stable") {
  Vocabulary vocab("abcdefgh=?");
  const std::string path = "vocab_roundtrip_test.json";
  vocab.save(path);
  const Vocabulary loaded = Vocabulary::load(path);
  CHECK(loaded == vocab);
  CHECK(loaded.mask_id() == vocab.mask_id());
  CHECK(loaded.pad_id() == vocab.pad_id());
  CHECK(loaded.bos_id() == vocab.bos_id());
  CHECK(loaded.eos_id() == vocab.eos_id());
  CHECK(loaded.sep_id() == vocab.sep_id());
  std::filesystem::remove(path);
}

TEST_CASE("vocabulary rejects bad alphabets") {
  CHECK_THROWS_AS(Vocabulary(""), std::invalid_argument);
  CHECK_THROWS_AS(Vocabulary("aa"), std::invalid_argument);
  CHECK_THROWS_AS(
      Vocabulary("abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ"
                 "0123456789=?!."),
      std::invalid_argument);  // 66 glyphs
}

TEST_CASE("rng determinism and fork independence") {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
  Rng parent(7);
  Rng c1 = parent.fork(1);
  Rng c2 = parent.fork(2);
  CHECK(c1.next_u64() != c2.next_u64());
  // state round trip
  Rng d(5);
  d.next_u64();
  const auto state = d.state();
  const auto expected = d.next_u64();
  Rng e;
  e.set_state(state);
  CHECK(e.next_u64() == expected);
}

TEST_CASE("render_tokens markers") {
  Vocabulary vocab("ab");
  TokenSeq seq = {0, 1, vocab.mask_id(), vocab.pad_id()};
  CHECK(render_tokens(seq, vocab) == "ab#.");
  MaskabilityMask maskable = {false, true, true, false};
  CHECK(render_tokens(seq, vocab, &maskable) == "[a]b#[.]");
}
