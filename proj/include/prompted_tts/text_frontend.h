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

#ifndef PROMPTED_TTS_TEXT_FRONTEND_H_
#define PROMPTED_TTS_TEXT_FRONTEND_H_

#include <istream>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include <torch/torch.h>

namespace prompted_tts {

struct PhonemeSequence {
  std::vector<std::string> symbols;
  std::string language_tag;
};

// Phoneme -> articulatory feature vector, loaded from a tab-separated file
// with header `phoneme<TAB>f1<TAB>...<TAB>fF`. Rows keep file order, which
// also defines the phoneme inventory.
class FeatureTable {
 public:
  static FeatureTable Load(const std::string& path);
  static FeatureTable Parse(std::istream& in);
  // Shipped table under the data directory.
  static FeatureTable LoadDefault();

  int num_features() const { return static_cast<int>(feature_names_.size()); }
  const std::vector<std::string>& feature_names() const { return feature_names_; }
  const std::vector<std::string>& inventory() const { return inventory_; }
  bool Contains(const std::string& phoneme) const;
  const std::vector<float>& Row(const std::string& phoneme) const;

 private:
  std::vector<std::string> feature_names_;
  std::vector<std::string> inventory_;
  std::unordered_map<std::string, std::vector<float>> rows_;
};

struct ArticulatoryFeatureMatrix {
  torch::Tensor values;  // [num_phonemes, F], float32
  std::vector<std::string> feature_names;

  int64_t num_phonemes() const { return values.size(0); }
};

// Lowercases, strips control characters and collapses runs of whitespace.
std::string NormalizeText(const std::string& text);

class PhonemizerBackend {
 public:
  virtual ~PhonemizerBackend() = default;
  // `normalized` is the output of NormalizeText.
  virtual std::vector<std::string> Phonemize(
      const std::string& normalized) const = 0;
  virtual std::string language_tag() const = 0;
};

// Deterministic grapheme -> pseudo-phoneme lookup for ASCII letters, digits
// and basic punctuation. Other characters are dropped.
class FallbackPhonemizer : public PhonemizerBackend {
 public:
  FallbackPhonemizer();
  std::vector<std::string> Phonemize(const std::string& normalized) const override;
  std::string language_tag() const override { return "en-fallback"; }

  // Phonemes emitted for a single grapheme; empty if the grapheme is dropped.
  const std::vector<std::string>& Lookup(char grapheme) const;

 private:
  std::map<char, std::vector<std::string>> table_;
};

// Runs `espeak-ng --ipa` and splits its output into inventory symbols by
// greedy longest match. Symbols outside the inventory are passed through so
// TextToPhonemes can report them.
class EspeakPhonemizer : public PhonemizerBackend {
 public:
  EspeakPhonemizer(std::vector<std::string> inventory, std::string voice = "en-us",
                   std::string executable = "espeak-ng");
  std::vector<std::string> Phonemize(const std::string& normalized) const override;
  std::string language_tag() const override { return voice_; }

  static bool IsAvailable(const std::string& executable = "espeak-ng");
  // Exposed for testing without the executable.
  std::vector<std::string> SplitIpa(const std::string& ipa) const;

 private:
  std::vector<std::string> inventory_;
  std::string voice_;
  std::string executable_;
};

// Throws EmptyInput if the text normalizes to nothing (or yields no phonemes)
// and UnknownSymbol if the backend emits a phoneme not in `inventory`.
PhonemeSequence TextToPhonemes(const std::string& text,
                               const PhonemizerBackend& backend,
                               const FeatureTable& inventory);

// Throws UnknownSymbol naming the symbol and its position.
ArticulatoryFeatureMatrix PhonemesToFeatures(const PhonemeSequence& seq,
                                             const FeatureTable& table);

std::string DefaultDataDir();

}  // namespace prompted_tts

#endif  // PROMPTED_TTS_TEXT_FRONTEND_H_
