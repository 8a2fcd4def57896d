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

#include "prompted_tts/acoustic_model.h"

#include <cmath>
#include <set>

#include <ATen/CPUGeneratorImpl.h>

#include "prompted_tts/error.h"

namespace prompted_tts {

namespace {

void Require(bool ok, const std::string& what) {
  if (!ok) throw Error(ErrorKind::kConfigError, what);
}

template <typename T>
void Read(const nlohmann::json& j, const char* key, T& field) {
  if (j.contains(key)) j.at(key).get_to(field);
}

}  // namespace

void AcousticModelConfig::Validate() const {
  Require(feature_dim > 0 && hidden > 0 && n_mels >= 2, "dimensions must be positive");
  Require(heads > 0 && hidden % heads == 0, "hidden must be divisible by heads");
  Require(flow_layers >= 1, "flow_layers must be >= 1");
  Require(encoder_blocks >= 1 && decoder_blocks >= 1, "need at least one block");
  Require(conv_kernel % 2 == 1 && predictor_kernel % 2 == 1, "kernels must be odd");
  Require(num_speakers >= 1 && speaker_dim >= 1 && prompt_dim >= 1, "bad embedding sizes");
  Require(se_reduction >= 1, "se_reduction must be >= 1");
  Require(!discriminator_channels.empty(), "discriminator needs channels");
  Require(max_duration >= 1 && initial_duration >= 0, "bad duration limits");
}

void to_json(nlohmann::json& j, const AcousticModelConfig& c) {
  j = nlohmann::json{{"feature_dim", c.feature_dim},
                     {"hidden", c.hidden},
                     {"encoder_blocks", c.encoder_blocks},
                     {"decoder_blocks", c.decoder_blocks},
                     {"heads", c.heads},
                     {"ff_inner", c.ff_inner},
                     {"conv_kernel", c.conv_kernel},
                     {"predictor_kernel", c.predictor_kernel},
                     {"predictor_channels", c.predictor_channels},
                     {"flow_layers", c.flow_layers},
                     {"flow_hidden", c.flow_hidden},
                     {"n_mels", c.n_mels},
                     {"prompt_dim", c.prompt_dim},
                     {"speaker_dim", c.speaker_dim},
                     {"num_speakers", c.num_speakers},
                     {"se_reduction", c.se_reduction},
                     {"prompt_conditioning", c.prompt_conditioning},
                     {"discriminator_channels", c.discriminator_channels},
                     {"max_duration", c.max_duration},
                     {"initial_duration", c.initial_duration}};
}

void from_json(const nlohmann::json& j, AcousticModelConfig& c) {
  static const std::set<std::string> kKeys = {
      "feature_dim",   "hidden",        "encoder_blocks",      "decoder_blocks",
      "heads",         "ff_inner",      "conv_kernel",         "predictor_kernel",
      "predictor_channels", "flow_layers", "flow_hidden",      "n_mels",
      "prompt_dim",    "speaker_dim",   "num_speakers",        "se_reduction",
      "prompt_conditioning", "discriminator_channels", "max_duration", "initial_duration"};
  for (const auto& item : j.items()) {
    if (!kKeys.count(item.key())) {
      throw Error(ErrorKind::kConfigError, "unknown model key '" + item.key() + "'");
    }
  }
  Read(j, "feature_dim", c.feature_dim);
  Read(j, "hidden", c.hidden);
  Read(j, "encoder_blocks", c.encoder_blocks);
  Read(j, "decoder_blocks", c.decoder_blocks);
  Read(j, "heads", c.heads);
  Read(j, "ff_inner", c.ff_inner);
  Read(j, "conv_kernel", c.conv_kernel);
  Read(j, "predictor_kernel", c.predictor_kernel);
  Read(j, "predictor_channels", c.predictor_channels);
  Read(j, "flow_layers", c.flow_layers);
  Read(j, "flow_hidden", c.flow_hidden);
  Read(j, "n_mels", c.n_mels);
  Read(j, "prompt_dim", c.prompt_dim);
  Read(j, "speaker_dim", c.speaker_dim);
  Read(j, "num_speakers", c.num_speakers);
  Read(j, "se_reduction", c.se_reduction);
  Read(j, "prompt_conditioning", c.prompt_conditioning);
  Read(j, "discriminator_channels", c.discriminator_channels);
  Read(j, "max_duration", c.max_duration);
  Read(j, "initial_duration", c.initial_duration);
}

AcousticModelImpl::AcousticModelImpl(const AcousticModelConfig& config) : config_(config) {
  config_.Validate();
  const int64_t h = config_.hidden;
  conditioning = register_module(
      "conditioning",
      ConditioningNetwork(config_.prompt_dim, config_.speaker_dim, config_.num_speakers, h,
                          config_.se_reduction, config_.prompt_conditioning));
  encoder_input = register_module("encoder_input", torch::nn::Linear(config_.feature_dim, h));
  encoder = register_module("encoder",
                            ConformerStack(config_.encoder_blocks, h, config_.heads,
                                           config_.ff_inner, config_.conv_kernel, h));
  auto predictor = [&] {
    return VariancePredictor(h, config_.predictor_channels, config_.predictor_kernel, h);
  };
  duration_predictor = register_module("duration_predictor", predictor());
  pitch_predictor = register_module("pitch_predictor", predictor());
  energy_predictor = register_module("energy_predictor", predictor());
  pitch_embedding = register_module("pitch_embedding", torch::nn::Linear(1, h));
  energy_embedding = register_module("energy_embedding", torch::nn::Linear(1, h));
  decoder = register_module("decoder",
                            ConformerStack(config_.decoder_blocks, h, config_.heads,
                                           config_.ff_inner, config_.conv_kernel, h));
  mel_projection = register_module("mel_projection", torch::nn::Linear(h, config_.n_mels));
  postnet = register_module("postnet",
                            FlowPostNet(config_.n_mels, config_.flow_layers, config_.flow_hidden));
  torch::NoGradGuard no_grad;
  duration_predictor->head->bias.fill_(std::log1p(config_.initial_duration));
}

torch::Tensor AcousticModelImpl::Condition(const torch::Tensor& prompts,
                                           const torch::Tensor& speaker_ids) {
  if (prompts.dim() != 2 || prompts.size(1) != config_.prompt_dim) {
    throw Error(ErrorKind::kDimensionMismatch,
                "prompt embeddings must be [B, " + std::to_string(config_.prompt_dim) + "]");
  }
  return conditioning->forward(prompts, speaker_ids);
}

torch::Tensor AcousticModelImpl::Encode(const torch::Tensor& features, const torch::Tensor& cond,
                                        const torch::Tensor& mask) {
  if (features.dim() != 3 || features.size(2) != config_.feature_dim ||
      mask.sizes() != features.sizes().slice(0, 2) || cond.size(-1) != config_.hidden) {
    throw Error(ErrorKind::kDimensionMismatch, "encode: features [B, N, F], mask [B, N]");
  }
  auto x = encoder_input(features) +
           SinusoidalPositions(features.size(1), config_.hidden, features.options());
  return encoder(x, cond, mask);
}

ProsodyPrediction AcousticModelImpl::PredictProsody(const torch::Tensor& hidden,
                                                    const torch::Tensor& cond,
                                                    const torch::Tensor& mask) {
  return {duration_predictor(hidden, cond, mask), pitch_predictor(hidden, cond, mask),
          energy_predictor(hidden, cond, mask)};
}

torch::Tensor AcousticModelImpl::Decode(const torch::Tensor& frames, const torch::Tensor& pitch,
                                        const torch::Tensor& energy,
                                        const torch::Tensor& durations,
                                        const torch::Tensor& cond,
                                        const torch::Tensor& frame_mask) {
  if (frames.dim() != 3 || frames.size(2) != config_.hidden ||
      pitch.sizes() != durations.sizes() || energy.sizes() != durations.sizes() ||
      frame_mask.sizes() != frames.sizes().slice(0, 2)) {
    throw Error(ErrorKind::kDimensionMismatch, "decode: inconsistent shapes");
  }
  auto pitch_frames = LengthRegulateBatch(pitch.unsqueeze(-1), durations).frames;
  auto energy_frames = LengthRegulateBatch(energy.unsqueeze(-1), durations).frames;
  if (pitch_frames.size(1) != frames.size(1)) {
    throw Error(ErrorKind::kDimensionMismatch, "decode: durations do not match frame count");
  }
  auto keep = MaskLike(frame_mask, frames);
  auto x = frames + pitch_embedding(pitch_frames) + energy_embedding(energy_frames) +
           SinusoidalPositions(frames.size(1), config_.hidden, frames.options());
  x = decoder(x * keep, cond, frame_mask);
  return mel_projection(x) * keep;
}

PatchDiscriminator MakeDiscriminator(const AcousticModelConfig& config) {
  return PatchDiscriminator(config.discriminator_channels);
}

std::vector<float> AverageFramesPerPhoneme(const std::vector<float>& frame_values,
                                           const std::vector<int64_t>& durations) {
  return AverageFramesPerPhoneme(frame_values, durations,
                                 std::vector<bool>(frame_values.size(), true));
}

std::vector<float> AverageFramesPerPhoneme(const std::vector<float>& frame_values,
                                           const std::vector<int64_t>& durations,
                                           const std::vector<bool>& include) {
  int64_t total = 0;
  for (int64_t d : durations) {
    if (d < 0) throw Error(ErrorKind::kDurationMismatch, "negative duration");
    total += d;
  }
  if (total != static_cast<int64_t>(frame_values.size()) ||
      include.size() != frame_values.size()) {
    throw Error(ErrorKind::kDurationMismatch, "durations sum to " + std::to_string(total) +
                                                  " but there are " +
                                                  std::to_string(frame_values.size()) + " frames");
  }
  std::vector<float> out(durations.size(), 0.0f);
  int64_t start = 0;
  for (size_t i = 0; i < durations.size(); ++i) {
    double sum = 0.0;
    int64_t count = 0;
    for (int64_t t = start; t < start + durations[i]; ++t) {
      if (include[t]) {
        sum += frame_values[t];
        ++count;
      }
    }
    out[i] = count > 0 ? static_cast<float>(sum / count) : 0.0f;
    start += durations[i];
  }
  return out;
}

torch::Tensor LengthRegulate(const torch::Tensor& hidden, const torch::Tensor& durations) {
  if (hidden.dim() != 2 || durations.dim() != 1 || durations.size(0) != hidden.size(0)) {
    throw Error(ErrorKind::kDimensionMismatch, "length_regulate: [N, H] with N durations");
  }
  if ((durations < 0).any().item<bool>()) {
    throw Error(ErrorKind::kDurationMismatch, "negative duration");
  }
  if (durations.sum().item<int64_t>() == 0) {
    throw Error(ErrorKind::kEmptyOutput, "all durations are zero");
  }
  return hidden.repeat_interleave(durations.to(torch::kLong), 0);
}

RegulatedFrames LengthRegulateBatch(const torch::Tensor& hidden, const torch::Tensor& durations) {
  if (hidden.dim() != 3 || durations.sizes() != hidden.sizes().slice(0, 2)) {
    throw Error(ErrorKind::kDimensionMismatch, "length_regulate: [B, N, H] with [B, N]");
  }
  const int64_t batch = hidden.size(0);
  std::vector<torch::Tensor> items;
  int64_t longest = 0;
  for (int64_t b = 0; b < batch; ++b) {
    items.push_back(LengthRegulate(hidden[b], durations[b]));
    longest = std::max(longest, items.back().size(0));
  }
  RegulatedFrames out;
  out.mask = torch::zeros({batch, longest}, torch::kBool);
  std::vector<torch::Tensor> padded;
  for (int64_t b = 0; b < batch; ++b) {
    const int64_t len = items[b].size(0);
    out.mask[b].slice(0, 0, len).fill_(true);
    padded.push_back(torch::constant_pad_nd(items[b], {0, 0, 0, longest - len}));
  }
  out.frames = torch::stack(padded);
  return out;
}

torch::Tensor DurationsFromLog(const torch::Tensor& log_duration, int64_t max_duration) {
  return torch::round(torch::exp(log_duration.detach()) - 1.0)
      .clamp(0, static_cast<double>(max_duration))
      .to(torch::kLong);
}

torch::Tensor FlowNll(FlowPostNet& flow, const torch::Tensor& coarse, const torch::Tensor& target,
                      const torch::Tensor& frame_mask) {
  if (coarse.sizes() != target.sizes() || target.size(-1) != flow->bins ||
      frame_mask.sizes() != target.sizes().slice(0, target.dim() - 1)) {
    throw Error(ErrorKind::kShapeMismatch, "flow: target and coarse mel differ in shape");
  }
  auto keep = frame_mask.to(target.dtype());
  auto nll = flow->FrameNll(target, coarse);
  return (nll * keep).sum() / keep.sum().clamp_min(1.0);
}

torch::Tensor FlowSample(FlowPostNet& flow, const torch::Tensor& coarse, double temperature,
                         uint64_t seed) {
  if (coarse.size(-1) != flow->bins) {
    throw Error(ErrorKind::kShapeMismatch, "flow: coarse mel has wrong bin count");
  }
  auto generator = at::detail::createCPUGenerator(seed);
  auto z = torch::randn(coarse.sizes(), generator, coarse.options()) * temperature;
  return flow->inverse(z, coarse);
}

torch::Tensor Discriminate(PatchDiscriminator& discriminator, const torch::Tensor& mel) {
  if (mel.dim() != 3) throw Error(ErrorKind::kShapeMismatch, "discriminator expects [B, T, M]");
  if (mel.size(1) < discriminator->receptive_field()) {
    throw Error(ErrorKind::kInputTooShort,
                std::to_string(mel.size(1)) + " frames, receptive field is " +
                    std::to_string(discriminator->receptive_field()));
  }
  return discriminator(mel);
}

SynthesisResult Synthesize(const SynthesisContext& context, const std::string& text,
                           int64_t speaker_id, const std::string& prompt_text,
                           double temperature, uint64_t seed) {
  return Synthesize(context, text, speaker_id,
                    ExtractPromptEmbedding(prompt_text, *context.prompt_encoder), temperature,
                    seed);
}

SynthesisResult Synthesize(const SynthesisContext& context, const std::string& text,
                           int64_t speaker_id, const PromptEmbedding& prompt,
                           double temperature, uint64_t seed) {
  AcousticModel model = context.model;
  SynthesisResult result;
  result.phonemes = TextToPhonemes(text, *context.phonemizer, *context.table);
  auto features = PhonemesToFeatures(result.phonemes, *context.table);
  if (speaker_id < 0 || speaker_id >= model->config().num_speakers) {
    throw Error(ErrorKind::kUnknownSpeaker, "speaker " + std::to_string(speaker_id));
  }
  torch::NoGradGuard no_grad;
  const auto dtype = model->encoder_input->weight.dtype();
  const int64_t n = features.num_phonemes();
  auto feats = features.values.to(dtype).unsqueeze(0);
  auto mask = torch::ones({1, n}, torch::kBool);
  auto cond = model->Condition(ToTensor(prompt).to(dtype).unsqueeze(0),
                               torch::tensor({speaker_id}, torch::kLong));
  auto hidden = model->Encode(feats, cond, mask);
  auto prosody = model->PredictProsody(hidden, cond, mask);
  auto durations = DurationsFromLog(prosody.log_duration, model->config().max_duration);
  if (durations.sum().item<int64_t>() == 0) {
    throw Error(ErrorKind::kEmptyOutput, "every predicted duration is zero");
  }
  auto regulated = LengthRegulateBatch(hidden, durations);
  auto coarse = model->Decode(regulated.frames, prosody.pitch, prosody.energy, durations, cond,
                              regulated.mask);
  auto mel = FlowSample(model->postnet, coarse, temperature, seed);

  result.mel.values = mel[0].to(torch::kFloat32).contiguous();
  result.mel.sample_rate = context.audio.sample_rate;
  result.mel.hop_length = context.audio.hop;
  auto d = durations[0].contiguous();
  auto p = prosody.pitch[0].to(torch::kFloat32).contiguous();
  auto e = prosody.energy[0].to(torch::kFloat32).contiguous();
  result.prosody.durations.assign(d.data_ptr<int64_t>(), d.data_ptr<int64_t>() + n);
  result.prosody.pitch.assign(p.data_ptr<float>(), p.data_ptr<float>() + n);
  result.prosody.energy.assign(e.data_ptr<float>(), e.data_ptr<float>() + n);
  return result;
}

}  // namespace prompted_tts
