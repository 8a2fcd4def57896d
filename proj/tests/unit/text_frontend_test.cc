// Copyright 2026 The Prompted-TTS Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#include <algorithm>
#include <functional>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "prompted_tts/error.h"
#include "prompted_tts/text_frontend.h"

namespace prompted_tts {
namespace {

const FeatureTable& Table() {
  static const FeatureTable table = FeatureTable::LoadDefault();
  return table;
}

ErrorKind KindOf(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an Error");
  return ErrorKind::kConfigError;
}

TEST_SUITE("text_frontend") {

TEST_CASE("normalization lowercases and collapses whitespace") {
  CHECK(NormalizeText("  Hello\t\tWORLD \n") == "hello world");
  CHECK(NormalizeText("a\x01" "b") == "ab");
  CHECK(NormalizeText("") == "");
}

TEST_CASE("empty text is rejected") {
  FallbackPhonemizer fallback;
  CHECK(KindOf([&] { TextToPhonemes("", fallback, Table()); }) == ErrorKind::kEmptyInput);
  CHECK(KindOf([&] { TextToPhonemes(" \t ", fallback, Table()); }) == ErrorKind::kEmptyInput);
  // Only characters the fallback drops.
  CHECK(KindOf([&] { TextToPhonemes("@@", fallback, Table()); }) == ErrorKind::kEmptyInput);
}

TEST_CASE("fallback maps graphemes one by one") {
  FallbackPhonemizer fallback;
  const auto seq = TextToPhonemes("aa", fallback, Table());
  const auto& a = fallback.Lookup('a');
  REQUIRE(a.size() == 1);
  CHECK(seq.symbols == std::vector<std::string>{a[0], a[0]});
  CHECK(seq.language_tag == "en-fallback");
}

TEST_CASE("fallback is deterministic") {
  FallbackPhonemizer fallback;
  const auto first = TextToPhonemes("hello", fallback, Table());
  CHECK(first.symbols.size() == 5);
  for (const auto& s : first.symbols) CHECK(Table().Contains(s));
  for (int i = 0; i < 100; ++i) {
    CHECK(TextToPhonemes("hello", fallback, Table()).symbols == first.symbols);
  }
}

TEST_CASE("every fallback output is in the shipped inventory") {
  FallbackPhonemizer fallback;
  for (int c = 0; c < 128; ++c) {
    for (const auto& p : fallback.Lookup(static_cast<char>(c))) {
      INFO("grapheme " << c << " -> " << p);
      CHECK(Table().Contains(p));
    }
  }
}

TEST_CASE("unknown backend symbols are reported") {
  struct Bogus : PhonemizerBackend {
    std::vector<std::string> Phonemize(const std::string&) const override {
      return {"a", "QQ"};
    }
    std::string language_tag() const override { return "xx"; }
  } bogus;
  try {
    TextToPhonemes("hi", bogus, Table());
    FAIL("expected UnknownSymbol");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kUnknownSymbol);
    CHECK(std::string(e.what()).find("QQ") != std::string::npos);
  }
}

TEST_CASE("feature lookup rows match the table") {
  const auto& inv = Table().inventory();
  PhonemeSequence one{{inv[3]}, "x"};
  const auto m = PhonemesToFeatures(one, Table());
  REQUIRE(m.values.sizes() == torch::IntArrayRef{1, Table().num_features()});
  for (int f = 0; f < Table().num_features(); ++f) {
    CHECK(m.values[0][f].item<float>() == Table().Row(inv[3])[f]);
  }

  PhonemeSequence twice{{"p", "p"}, "x"};
  const auto t = PhonemesToFeatures(twice, Table());
  CHECK(torch::equal(t.values[0], t.values[1]));
}

TEST_CASE("inventory rows are pairwise distinct and in range") {
  const auto& inv = Table().inventory();
  const auto m = PhonemesToFeatures({inv, "x"}, Table());
  for (size_t i = 0; i < inv.size(); ++i) {
    for (size_t j = i + 1; j < inv.size(); ++j) {
      INFO(inv[i] << " vs " << inv[j]);
      CHECK_FALSE(torch::equal(m.values[i], m.values[j]));
    }
  }
  CHECK(m.values.min().item<float>() >= 0.0f);
  CHECK(m.values.max().item<float>() <= 1.0f);
}

TEST_CASE("unknown phoneme names symbol and position") {
  PhonemeSequence seq{{"p", "zz", "p"}, "x"};
  try {
    PhonemesToFeatures(seq, Table());
    FAIL("expected UnknownSymbol");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kUnknownSymbol);
    const std::string what = e.what();
    CHECK(what.find("zz") != std::string::npos);
    CHECK(what.find('1') != std::string::npos);
  }
}

TEST_CASE("random strings keep row count equal to phoneme count") {
  FallbackPhonemizer fallback;
  std::mt19937_64 rng(11);
  const std::string alphabet = "abcdefghijklmnopqrstuvwxyzABC 0123456789.,!?-'@";
  std::uniform_int_distribution<size_t> pick(0, alphabet.size() - 1);
  std::uniform_int_distribution<int> length(1, 30);
  int checked = 0;
  for (int i = 0; i < 1000; ++i) {
    std::string s;
    const int n = length(rng);
    for (int k = 0; k < n; ++k) s.push_back(alphabet[pick(rng)]);
    PhonemeSequence seq;
    try {
      seq = TextToPhonemes(s, fallback, Table());
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::kEmptyInput);
      continue;
    }
    const auto m = PhonemesToFeatures(seq, Table());
    CHECK(m.num_phonemes() == static_cast<int64_t>(seq.symbols.size()));
    ++checked;
  }
  CHECK(checked > 900);
}

TEST_CASE("permuting phonemes permutes rows") {
  FallbackPhonemizer fallback;
  auto seq = TextToPhonemes("permutation test", fallback, Table());
  const auto base = PhonemesToFeatures(seq, Table());
  std::vector<int64_t> perm(seq.symbols.size());
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), std::mt19937_64(3));
  PhonemeSequence shuffled = seq;
  for (size_t i = 0; i < perm.size(); ++i) shuffled.symbols[i] = seq.symbols[perm[i]];
  const auto m = PhonemesToFeatures(shuffled, Table());
  CHECK(torch::equal(m.values, base.values.index_select(0, torch::tensor(perm))));
}

TEST_CASE("feature table parsing rejects malformed input") {
  std::istringstream ok("phoneme\ta\tb\nx\t0\t1\ny\t0.5\t0\n");
  const auto t = FeatureTable::Parse(ok);
  CHECK(t.num_features() == 2);
  CHECK(t.inventory() == std::vector<std::string>{"x", "y"});

  std::istringstream short_row("phoneme\ta\tb\nx\t0\n");
  CHECK(KindOf([&] { FeatureTable::Parse(short_row); }) == ErrorKind::kParseError);
  std::istringstream bad_number("phoneme\ta\nx\tzero\n");
  CHECK(KindOf([&] { FeatureTable::Parse(bad_number); }) == ErrorKind::kParseError);
  std::istringstream dup("phoneme\ta\nx\t0\nx\t1\n");
  CHECK(KindOf([&] { FeatureTable::Parse(dup); }) == ErrorKind::kParseError);
}

TEST_CASE("espeak output splits by longest inventory match") {
  EspeakPhonemizer espeak(Table().inventory());
  // Affricate beats its first half; stress marks vanish.
  const auto out = espeak.SplitIpa("ˈdʒɛt");
  CHECK(out == std::vector<std::string>{"dʒ", "ɛ", "t"});
}

}  // TEST_SUITE

}  // namespace
}  // namespace prompted_tts
