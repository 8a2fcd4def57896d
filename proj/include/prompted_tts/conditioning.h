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

#ifndef PROMPTED_TTS_CONDITIONING_H_
#define PROMPTED_TTS_CONDITIONING_H_

#include <istream>
#include <map>
#include <string>
#include <vector>

#include <torch/torch.h>

namespace prompted_tts {

struct PromptEmbedding {
  std::vector<float> values;
  std::string source_text_hash;
};

struct SpeakerEmbedding {
  torch::Tensor values;  // [D_s]
  int64_t speaker_id = 0;
};

// Emotion label -> keyword list, parsed from lines `label: kw1, kw2, ...`.
class EmotionLexicon {
 public:
  static EmotionLexicon Load(const std::string& path);
  static EmotionLexicon Parse(std::istream& in);
  static EmotionLexicon LoadDefault();

  const std::vector<std::string>& labels() const { return labels_; }
  const std::vector<std::string>& keywords(const std::string& label) const;
  bool HasLabel(const std::string& label) const { return keywords_.count(label) > 0; }

  // Keyword hit counts per label (label order), matching whole words of the
  // normalized text.
  std::vector<int> CountHits(const std::string& text) const;

 private:
  std::vector<std::string> labels_;
  std::map<std::string, std::vector<std::string>> keywords_;
};

// Sentence-embedding extractor contract. Embed must be deterministic for
// fixed weights and text.
class PromptEncoder {
 public:
  virtual ~PromptEncoder() = default;
  virtual int64_t dim() const = 0;
  virtual std::vector<float> Embed(const std::string& text) const = 0;
};

// Test double for a fine-tuned emotion sentence encoder: each label owns an
// orthonormal centroid; a text embeds to the centroid of its best-matching
// label plus text-seeded noise of norm at most noise_scale. Texts without a
// keyword hit fall back to `fallback_label`.
class StubPromptEncoder : public PromptEncoder {
 public:
  StubPromptEncoder(EmotionLexicon lexicon, int64_t dim, double noise_scale,
                    uint64_t seed, std::string fallback_label = "neutral");

  int64_t dim() const override { return dim_; }
  std::vector<float> Embed(const std::string& text) const override;

  std::string MatchLabel(const std::string& text) const;
  const std::vector<double>& centroid(const std::string& label) const;
  double noise_scale() const { return noise_scale_; }
  const EmotionLexicon& lexicon() const { return lexicon_; }

 private:
  EmotionLexicon lexicon_;
  int64_t dim_;
  double noise_scale_;
  uint64_t seed_;
  std::string fallback_label_;
  std::map<std::string, std::vector<double>> centroids_;
};

struct TextEmotionPrediction {
  std::string label;
  double confidence = 0.0;
};

class TextEmotionClassifier {
 public:
  virtual ~TextEmotionClassifier() = default;
  virtual TextEmotionPrediction Classify(const std::string& text) const = 0;
};

// Keyword-vote classifier; confidence is the winning label's share of all
// hits. Texts without hits are `fallback_label` with confidence 1.
class LexiconTextClassifier : public TextEmotionClassifier {
 public:
  explicit LexiconTextClassifier(EmotionLexicon lexicon,
                                 std::string fallback_label = "neutral");
  TextEmotionPrediction Classify(const std::string& text) const override;

 private:
  EmotionLexicon lexicon_;
  std::string fallback_label_;
};

// Throws EmptyInput for blank text and DimensionMismatch if the encoder
// output length differs from its declared dimension.
PromptEmbedding ExtractPromptEmbedding(const std::string& text,
                                       const PromptEncoder& encoder);

torch::Tensor ToTensor(const PromptEmbedding& embedding);

// out = W e + b, W: [D_a, D_p], b: [D_a]; e may carry leading batch dims.
torch::Tensor AdaptPrompt(const torch::Tensor& embedding, const torch::Tensor& weight,
                          const torch::Tensor& bias);

// Throws UnknownSpeaker when speaker_id is outside [0, table.size(0)).
SpeakerEmbedding LookupSpeaker(int64_t speaker_id, const torch::Tensor& table);

struct SqueezeExcitationParams {
  torch::Tensor squeeze;       // W1: [ceil(C/r), C]
  torch::Tensor excite;        // W2: [C, ceil(C/r)]
  torch::Tensor project;       // W_o: [H, C]
  torch::Tensor project_bias;  // b_o: [H]
};

// z = [prompt, speaker]; s = sigmoid(W2 relu(W1 z)); out = W_o (z * s) + b_o.
torch::Tensor FuseCondition(const torch::Tensor& prompt_adapted,
                            const torch::Tensor& speaker,
                            const SqueezeExcitationParams& params);

// The gate s alone, for inspection.
torch::Tensor ExcitationGate(const torch::Tensor& z, const SqueezeExcitationParams& params);

struct ConditionalLayerNormParams {
  torch::Tensor scale_weight;  // W_gamma: [H, H_c]
  torch::Tensor scale_bias;    // b_gamma: [H]
  torch::Tensor shift_weight;  // W_beta: [H, H_c]
  torch::Tensor shift_bias;    // b_beta: [H]
};

constexpr double kLayerNormEps = 1e-5;

// y = (W_g c + b_g) * (x - mean(x)) / sqrt(var(x) + eps) + (W_b c + b_b), with
// statistics over the last dimension. x: [..., H]; c is either [H_c] or has
// x's leading batch dim ([B, H_c] against x [B, T, H]).
torch::Tensor ApplyConditionalLayerNorm(const torch::Tensor& x, const torch::Tensor& c,
                                        const ConditionalLayerNormParams& params,
                                   double eps = kLayerNormEps);

class PromptAdapterImpl : public torch::nn::Module {
 public:
  PromptAdapterImpl(int64_t prompt_dim, int64_t adapted_dim);
  torch::Tensor forward(const torch::Tensor& embedding);

  torch::Tensor weight, bias;
};
TORCH_MODULE(PromptAdapter);

class SpeakerTableImpl : public torch::nn::Module {
 public:
  SpeakerTableImpl(int64_t num_speakers, int64_t dim);
  // ids: int64 [B] -> [B, D_s].
  torch::Tensor forward(const torch::Tensor& ids);
  int64_t num_speakers() const { return table.size(0); }

  torch::Tensor table;
};
TORCH_MODULE(SpeakerTable);

class SqueezeExcitationFusionImpl : public torch::nn::Module {
 public:
  SqueezeExcitationFusionImpl(int64_t prompt_dim, int64_t speaker_dim,
                              int64_t hidden, int64_t reduction);
  torch::Tensor forward(const torch::Tensor& prompt_adapted, const torch::Tensor& speaker);
  SqueezeExcitationParams params() const;

  torch::Tensor squeeze, excite, project, project_bias;
};
TORCH_MODULE(SqueezeExcitationFusion);

// Initialized so that the output equals plain layer normalization for any
// condition (W = 0, b_gamma = 1, b_beta = 0).
class ConditionalLayerNormImpl : public torch::nn::Module {
 public:
  ConditionalLayerNormImpl(int64_t hidden, int64_t cond_dim);
  torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& c);
  ConditionalLayerNormParams params() const;

  torch::Tensor scale_weight, scale_bias, shift_weight, shift_bias;
};
TORCH_MODULE(ConditionalLayerNorm);

// Prompt adaptation + speaker table + SE fusion. With prompt conditioning
// disabled the adapted prompt is replaced by zeros, which yields the
// unconditioned baseline of identical architecture.
class ConditioningNetworkImpl : public torch::nn::Module {
 public:
  ConditioningNetworkImpl(int64_t prompt_dim, int64_t speaker_dim, int64_t num_speakers,
                          int64_t hidden, int64_t reduction, bool use_prompt);
  // prompts: [B, D_p], speaker_ids: int64 [B] -> [B, H].
  torch::Tensor forward(const torch::Tensor& prompts, const torch::Tensor& speaker_ids);

  bool use_prompt() const { return use_prompt_; }

  PromptAdapter adapter{nullptr};
  SpeakerTable speakers{nullptr};
  SqueezeExcitationFusion fusion{nullptr};

 private:
  bool use_prompt_;
};
TORCH_MODULE(ConditioningNetwork);

}  // namespace prompted_tts

#endif  // PROMPTED_TTS_CONDITIONING_H_
