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

#ifndef PROMPTED_TTS_ACOUSTIC_MODEL_H_
#define PROMPTED_TTS_ACOUSTIC_MODEL_H_

#include <string>
#include <vector>

#include <torch/torch.h>

#include "json.hpp"
#include "prompted_tts/audio.h"
#include "prompted_tts/conditioning.h"
#include "prompted_tts/layers.h"
#include "prompted_tts/text_frontend.h"

namespace prompted_tts {

struct AcousticModelConfig {
  int64_t feature_dim = 20;
  int64_t hidden = 64;
  int64_t encoder_blocks = 2;
  int64_t decoder_blocks = 2;
  int64_t heads = 2;
  int64_t ff_inner = 128;
  int64_t conv_kernel = 7;
  int64_t predictor_kernel = 3;
  int64_t predictor_channels = 64;
  int64_t flow_layers = 4;
  int64_t flow_hidden = 64;
  int64_t n_mels = 80;
  int64_t prompt_dim = 768;
  int64_t speaker_dim = 64;
  int64_t num_speakers = 2;
  int64_t se_reduction = 4;
  bool prompt_conditioning = true;
  std::vector<int64_t> discriminator_channels = {16, 32, 32};
  int64_t max_duration = 75;
  // Untrained duration head predicts about this many frames per phoneme.
  double initial_duration = 4.0;

  // Throws ConfigError on violated invariants.
  void Validate() const;
};

void to_json(nlohmann::json& j, const AcousticModelConfig& c);
// Rejects unknown keys with ConfigError.
void from_json(const nlohmann::json& j, AcousticModelConfig& c);

struct ProsodyPrediction {
  torch::Tensor log_duration;  // [B, N], log(d + 1) domain
  torch::Tensor pitch;         // [B, N]
  torch::Tensor energy;        // [B, N]
};

struct ProsodyTargets {
  std::vector<int64_t> durations;
  std::vector<float> pitch;
  std::vector<float> energy;
};

// Encoder, prosody predictors and decoder conditioned on the fused
// speaker+prompt vector, followed by the flow post-net.
class AcousticModelImpl : public torch::nn::Module {
 public:
  explicit AcousticModelImpl(const AcousticModelConfig& config);

  const AcousticModelConfig& config() const { return config_; }

  // prompts: [B, D_p]; speaker_ids: int64 [B] -> [B, H].
  torch::Tensor Condition(const torch::Tensor& prompts, const torch::Tensor& speaker_ids);

  // features: [B, N, F], cond: [B, H], mask: [B, N] bool -> [B, N, H].
  torch::Tensor Encode(const torch::Tensor& features, const torch::Tensor& cond,
                       const torch::Tensor& mask);

  ProsodyPrediction PredictProsody(const torch::Tensor& hidden, const torch::Tensor& cond,
                                   const torch::Tensor& mask);

  // frames: [B, T, H] (length-regulated); pitch/energy: [B, N] per phoneme;
  // durations: int64 [B, N]; frame_mask: [B, T] -> coarse mel [B, T, M].
  torch::Tensor Decode(const torch::Tensor& frames, const torch::Tensor& pitch,
                       const torch::Tensor& energy, const torch::Tensor& durations,
                       const torch::Tensor& cond, const torch::Tensor& frame_mask);

  ConditioningNetwork conditioning{nullptr};
  torch::nn::Linear encoder_input{nullptr};
  ConformerStack encoder{nullptr};
  VariancePredictor duration_predictor{nullptr}, pitch_predictor{nullptr},
      energy_predictor{nullptr};
  torch::nn::Linear pitch_embedding{nullptr}, energy_embedding{nullptr};
  ConformerStack decoder{nullptr};
  torch::nn::Linear mel_projection{nullptr};
  FlowPostNet postnet{nullptr};

 private:
  AcousticModelConfig config_;
};
TORCH_MODULE(AcousticModel);

PatchDiscriminator MakeDiscriminator(const AcousticModelConfig& config);

// Mean of the frames assigned to each phoneme; zero-duration phonemes get 0.
// Throws DurationMismatch when sum(durations) != frame count.
std::vector<float> AverageFramesPerPhoneme(const std::vector<float>& frame_values,
                                           const std::vector<int64_t>& durations);
// Only frames with include[t] contribute; phonemes without any get 0.
std::vector<float> AverageFramesPerPhoneme(const std::vector<float>& frame_values,
                                           const std::vector<int64_t>& durations,
                                           const std::vector<bool>& include);

// hidden: [N, H], durations: int64 [N] -> [sum(durations), H]. Throws
// EmptyOutput when every duration is zero.
torch::Tensor LengthRegulate(const torch::Tensor& hidden, const torch::Tensor& durations);

struct RegulatedFrames {
  torch::Tensor frames;  // [B, T_max, H]
  torch::Tensor mask;    // [B, T_max] bool
};
// Batched form; durations of padded phonemes must be 0.
RegulatedFrames LengthRegulateBatch(const torch::Tensor& hidden, const torch::Tensor& durations);

// clamp(round(exp(log_duration) - 1), 0, max_duration), int64.
torch::Tensor DurationsFromLog(const torch::Tensor& log_duration, int64_t max_duration);

// Mean per-frame NLL of `target` under the flow conditioned on `coarse`,
// over frames where frame_mask is set. Shapes [B, T, M] / [B, T].
torch::Tensor FlowNll(FlowPostNet& flow, const torch::Tensor& coarse, const torch::Tensor& target,
                      const torch::Tensor& frame_mask);
// Samples z ~ N(0, temperature^2) from a seeded generator and inverts the flow.
torch::Tensor FlowSample(FlowPostNet& flow, const torch::Tensor& coarse, double temperature,
                         uint64_t seed);

// Throws InputTooShort if mel has fewer frames than the receptive field.
torch::Tensor Discriminate(PatchDiscriminator& discriminator, const torch::Tensor& mel);

struct SynthesisResult {
  MelSpectrogram mel;
  ProsodyTargets prosody;
  PhonemeSequence phonemes;
};

// Everything synthesis needs besides the text inputs.
struct SynthesisContext {
  AcousticModel model{nullptr};
  const FeatureTable* table = nullptr;
  const PhonemizerBackend* phonemizer = nullptr;
  const PromptEncoder* prompt_encoder = nullptr;
  AudioConfig audio;
};

// frontend -> encode -> predict -> length-regulate -> decode -> flow sample.
SynthesisResult Synthesize(const SynthesisContext& context, const std::string& text,
                           int64_t speaker_id, const std::string& prompt_text,
                           double temperature = 0.8, uint64_t seed = 0);
// Same, with a precomputed prompt embedding.
SynthesisResult Synthesize(const SynthesisContext& context, const std::string& text,
                           int64_t speaker_id, const PromptEmbedding& prompt,
                           double temperature = 0.8, uint64_t seed = 0);

}  // namespace prompted_tts

#endif  // PROMPTED_TTS_ACOUSTIC_MODEL_H_
