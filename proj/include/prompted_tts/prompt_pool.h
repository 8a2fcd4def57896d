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

#ifndef PROMPTED_TTS_PROMPT_POOL_H_
#define PROMPTED_TTS_PROMPT_POOL_H_

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "prompted_tts/conditioning.h"
#include "prompted_tts/corpus.h"
#include "prompted_tts/random.h"

namespace prompted_tts {

// Per-label prompt embeddings. Labels keep insertion order.
struct PromptPool {
  int64_t dim = 0;
  std::vector<std::pair<std::string, std::vector<PromptEmbedding>>> entries;

  bool HasLabel(const std::string& label) const;
  // Throws UnknownEmotion.
  const std::vector<PromptEmbedding>& ForLabel(const std::string& label) const;
  std::vector<std::string> labels() const;
  size_t total() const;
};

struct LabeledText {
  std::string label;
  std::string text;
};

struct PoolBuildReport {
  std::map<std::string, int> kept;
  std::map<std::string, int> rejected;   // classifier disagreed or low confidence
  std::map<std::string, int> shortfall;  // target minus kept, if positive
};

// Keeps a text for its label when the classifier's top label matches and its
// confidence reaches `confidence_min`, up to `per_label_target` per label, in
// input order. Throws EmptyPoolForLabel if a label ends up with nothing.
PromptPool BuildPromptPool(const std::vector<LabeledText>& texts, const PromptEncoder& encoder,
                           const TextEmotionClassifier& classifier,
                           const EmotionLabelSet& labels, int per_label_target,
                           double confidence_min, PoolBuildReport* report = nullptr);

// Uniform draw from the label's entries. Throws UnknownEmotion for a label
// absent from the pool and EmptyPoolForLabel for an empty one.
const PromptEmbedding& SamplePrompt(const PromptPool& pool, const std::string& label, Rng& rng);

// Binary layout, little-endian: "PPL1", u16 version (1), u32 dim, u32 label
// count, then per label: u8 name length, UTF-8 name, u32 count, count * dim
// float32 values.
std::vector<uint8_t> EncodePromptPool(const PromptPool& pool);
// Throws FormatError on bad magic/version/fields and TruncatedFile on short
// input.
PromptPool DecodePromptPool(const std::vector<uint8_t>& bytes);
void WritePromptPool(const std::string& path, const PromptPool& pool);
PromptPool ReadPromptPool(const std::string& path);

enum class PromptStyle {
  kReview,    // product and service review phrasing; used to build pools
  kDialogue,  // conversational phrasing; used for evaluation prompts
};

// `per_label` texts per label, each built from a style template and lexicon
// keywords. A fraction `distractor_rate` also mentions a keyword of another
// label, which the classifier filter may reject.
std::vector<LabeledText> GeneratePromptTexts(const EmotionLexicon& lexicon,
                                             const EmotionLabelSet& labels, int per_label,
                                             PromptStyle style, double distractor_rate,
                                             uint64_t seed);

}  // namespace prompted_tts

#endif  // PROMPTED_TTS_PROMPT_POOL_H_
