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

#include "prompted_tts/conditioning.h"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "prompted_tts/error.h"
#include "prompted_tts/random.h"
#include "prompted_tts/text_frontend.h"

namespace prompted_tts {

namespace {

std::string Trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> Words(const std::string& text) {
  std::vector<std::string> words;
  std::string current;
  for (char c : NormalizeText(text)) {
    if ((c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '\'') {
      current.push_back(c);
    } else if (!current.empty()) {
      words.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) words.push_back(std::move(current));
  return words;
}

void CheckShape(bool ok, const std::string& what) {
  if (!ok) throw Error(ErrorKind::kDimensionMismatch, what);
}

torch::Tensor UniformInit(std::vector<int64_t> shape, int64_t fan_in) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  return torch::empty(shape).uniform_(-bound, bound);
}

}  // namespace

EmotionLexicon EmotionLexicon::Load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kIoError, "cannot open lexicon " + path);
  return Parse(in);
}

EmotionLexicon EmotionLexicon::LoadDefault() {
  return Load(DefaultDataDir() + "/emotion_lexicon.txt");
}

EmotionLexicon EmotionLexicon::Parse(std::istream& in) {
  EmotionLexicon lexicon;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = Trim(line);
    if (line.empty() || line[0] == '#') continue;
    const size_t colon = line.find(':');
    if (colon == std::string::npos) {
      throw Error(ErrorKind::kParseError,
                  "lexicon line " + std::to_string(line_no) + ": missing ':'");
    }
    std::string label = Trim(line.substr(0, colon));
    if (label.empty() || lexicon.keywords_.count(label)) {
      throw Error(ErrorKind::kParseError, "lexicon line " + std::to_string(line_no) +
                                              ": empty or duplicate label");
    }
    std::vector<std::string> keywords;
    std::istringstream rest(line.substr(colon + 1));
    std::string kw;
    while (std::getline(rest, kw, ',')) {
      kw = NormalizeText(Trim(kw));
      if (!kw.empty()) keywords.push_back(kw);
    }
    lexicon.labels_.push_back(label);
    lexicon.keywords_.emplace(label, std::move(keywords));
  }
  if (lexicon.labels_.empty()) {
    throw Error(ErrorKind::kParseError, "lexicon has no labels");
  }
  return lexicon;
}

const std::vector<std::string>& EmotionLexicon::keywords(const std::string& label) const {
  auto it = keywords_.find(label);
  if (it == keywords_.end()) throw Error(ErrorKind::kUnknownEmotion, label);
  return it->second;
}

std::vector<int> EmotionLexicon::CountHits(const std::string& text) const {
  const auto words = Words(text);
  std::vector<int> hits(labels_.size(), 0);
  for (size_t i = 0; i < labels_.size(); ++i) {
    for (const auto& kw : keywords_.at(labels_[i])) {
      for (const auto& w : words) hits[i] += (w == kw);
    }
  }
  return hits;
}

StubPromptEncoder::StubPromptEncoder(EmotionLexicon lexicon, int64_t dim,
                                     double noise_scale, uint64_t seed,
                                     std::string fallback_label)
    : lexicon_(std::move(lexicon)),
      dim_(dim),
      noise_scale_(noise_scale),
      seed_(seed),
      fallback_label_(std::move(fallback_label)) {
  const auto& labels = lexicon_.labels();
  if (static_cast<int64_t>(labels.size()) > dim_) {
    throw Error(ErrorKind::kDimensionMismatch, "more labels than embedding dimensions");
  }
  if (!lexicon_.HasLabel(fallback_label_)) {
    throw Error(ErrorKind::kUnknownEmotion, "fallback label " + fallback_label_);
  }
  // Gram-Schmidt over seeded Gaussian vectors.
  Rng rng(MixSeed(seed_, 0xce47));
  std::vector<std::vector<double>> basis;
  for (const auto& label : labels) {
    std::vector<double> v(dim_);
    for (auto& x : v) x = StandardNormal(rng);
    for (const auto& b : basis) {
      double dot = 0;
      for (int64_t i = 0; i < dim_; ++i) dot += v[i] * b[i];
      for (int64_t i = 0; i < dim_; ++i) v[i] -= dot * b[i];
    }
    double norm = 0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    for (auto& x : v) x /= norm;
    basis.push_back(v);
    centroids_.emplace(label, std::move(v));
  }
}

std::string StubPromptEncoder::MatchLabel(const std::string& text) const {
  const auto hits = lexicon_.CountHits(text);
  int best = -1;
  for (size_t i = 0; i < hits.size(); ++i) {
    if (hits[i] > 0 && (best < 0 || hits[i] > hits[best])) best = static_cast<int>(i);
  }
  return best < 0 ? fallback_label_ : lexicon_.labels()[best];
}

const std::vector<double>& StubPromptEncoder::centroid(const std::string& label) const {
  auto it = centroids_.find(label);
  if (it == centroids_.end()) throw Error(ErrorKind::kUnknownEmotion, label);
  return it->second;
}

std::vector<float> StubPromptEncoder::Embed(const std::string& text) const {
  const auto& center = centroid(MatchLabel(text));
  Rng rng(MixSeed(seed_, Fnv1a64(NormalizeText(text))));
  std::vector<double> direction(dim_);
  double norm = 0;
  for (auto& x : direction) {
    x = StandardNormal(rng);
    norm += x * x;
  }
  norm = std::sqrt(norm);
  // Scaled slightly below noise_scale so float rounding cannot exceed it.
  const double magnitude = noise_scale_ * Uniform01(rng) * (1.0 - 1e-6);
  std::vector<float> out(dim_);
  for (int64_t i = 0; i < dim_; ++i) {
    out[i] = static_cast<float>(center[i] + magnitude * direction[i] / norm);
  }
  return out;
}

LexiconTextClassifier::LexiconTextClassifier(EmotionLexicon lexicon,
                                             std::string fallback_label)
    : lexicon_(std::move(lexicon)), fallback_label_(std::move(fallback_label)) {}

TextEmotionPrediction LexiconTextClassifier::Classify(const std::string& text) const {
  const auto hits = lexicon_.CountHits(text);
  int total = 0;
  int best = -1;
  for (size_t i = 0; i < hits.size(); ++i) {
    total += hits[i];
    if (hits[i] > 0 && (best < 0 || hits[i] > hits[best])) best = static_cast<int>(i);
  }
  if (best < 0) return {fallback_label_, 1.0};
  return {lexicon_.labels()[best], static_cast<double>(hits[best]) / total};
}

PromptEmbedding ExtractPromptEmbedding(const std::string& text,
                                       const PromptEncoder& encoder) {
  if (NormalizeText(text).empty()) {
    throw Error(ErrorKind::kEmptyInput, "prompt text is empty");
  }
  PromptEmbedding out;
  out.values = encoder.Embed(text);
  if (static_cast<int64_t>(out.values.size()) != encoder.dim()) {
    throw Error(ErrorKind::kDimensionMismatch,
                "encoder produced " + std::to_string(out.values.size()) +
                    " values, declared " + std::to_string(encoder.dim()));
  }
  for (float v : out.values) {
    if (!std::isfinite(v)) throw Error(ErrorKind::kDimensionMismatch, "non-finite embedding");
  }
  char hash[17];
  std::snprintf(hash, sizeof(hash), "%016llx",
                static_cast<unsigned long long>(Fnv1a64(text)));
  out.source_text_hash = hash;
  return out;
}

torch::Tensor ToTensor(const PromptEmbedding& embedding) {
  return torch::tensor(embedding.values, torch::kFloat32);
}

torch::Tensor AdaptPrompt(const torch::Tensor& embedding, const torch::Tensor& weight,
                          const torch::Tensor& bias) {
  CheckShape(weight.dim() == 2 && bias.dim() == 1 && bias.size(0) == weight.size(0),
             "adapter weight/bias shapes");
  CheckShape(embedding.size(-1) == weight.size(1),
             "prompt dimension " + std::to_string(embedding.size(-1)) +
                 " vs adapter input " + std::to_string(weight.size(1)));
  return torch::nn::functional::linear(embedding, weight, bias);
}

SpeakerEmbedding LookupSpeaker(int64_t speaker_id, const torch::Tensor& table) {
  if (speaker_id < 0 || speaker_id >= table.size(0)) {
    throw Error(ErrorKind::kUnknownSpeaker, "speaker " + std::to_string(speaker_id) +
                                                " outside [0, " +
                                                std::to_string(table.size(0)) + ")");
  }
  return {table[speaker_id], speaker_id};
}

torch::Tensor ExcitationGate(const torch::Tensor& z, const SqueezeExcitationParams& p) {
  CheckShape(p.squeeze.size(1) == z.size(-1) && p.excite.size(0) == z.size(-1) &&
                 p.excite.size(1) == p.squeeze.size(0),
             "squeeze-excitation parameter shapes");
  namespace F = torch::nn::functional;
  return torch::sigmoid(F::linear(torch::relu(F::linear(z, p.squeeze)), p.excite));
}

torch::Tensor FuseCondition(const torch::Tensor& prompt_adapted,
                            const torch::Tensor& speaker,
                            const SqueezeExcitationParams& params) {
  CheckShape(prompt_adapted.dim() == speaker.dim(), "prompt/speaker rank");
  auto z = torch::cat({prompt_adapted, speaker}, -1);
  CheckShape(params.project.size(1) == z.size(-1),
             "fusion expects " + std::to_string(params.project.size(1)) + " channels, got " +
                 std::to_string(z.size(-1)));
  auto gated = z * ExcitationGate(z, params);
  return torch::nn::functional::linear(gated, params.project, params.project_bias);
}

torch::Tensor ApplyConditionalLayerNorm(const torch::Tensor& x, const torch::Tensor& c,
                                   const ConditionalLayerNormParams& p, double eps) {
  const int64_t h = x.size(-1);
  CheckShape(p.scale_weight.size(0) == h && p.shift_weight.size(0) == h &&
                 p.scale_bias.size(0) == h && p.shift_bias.size(0) == h,
             "conditional layernorm output size");
  CheckShape(c.size(-1) == p.scale_weight.size(1) && c.size(-1) == p.shift_weight.size(1),
             "condition size " + std::to_string(c.size(-1)));
  namespace F = torch::nn::functional;
  auto scale = F::linear(c, p.scale_weight, p.scale_bias);
  auto shift = F::linear(c, p.shift_weight, p.shift_bias);
  if (c.dim() > 1) {
    CheckShape(c.dim() == 2 && x.dim() >= 2 && c.size(0) == x.size(0),
               "condition batch size");
    while (scale.dim() < x.dim()) {
      scale = scale.unsqueeze(1);
      shift = shift.unsqueeze(1);
    }
  }
  auto mean = x.mean(-1, true);
  auto centered = x - mean;
  auto var = centered.pow(2).mean(-1, true);
  return scale * centered / torch::sqrt(var + eps) + shift;
}

PromptAdapterImpl::PromptAdapterImpl(int64_t prompt_dim, int64_t adapted_dim) {
  weight = register_parameter("weight", UniformInit({adapted_dim, prompt_dim}, prompt_dim));
  bias = register_parameter("bias", UniformInit({adapted_dim}, prompt_dim));
}

torch::Tensor PromptAdapterImpl::forward(const torch::Tensor& embedding) {
  return AdaptPrompt(embedding, weight, bias);
}

SpeakerTableImpl::SpeakerTableImpl(int64_t num_speakers, int64_t dim) {
  table = register_parameter("table", torch::randn({num_speakers, dim}) * 0.01);
}

torch::Tensor SpeakerTableImpl::forward(const torch::Tensor& ids) {
  auto flat = ids.to(torch::kCPU);
  auto acc = flat.accessor<int64_t, 1>();
  for (int64_t i = 0; i < flat.size(0); ++i) LookupSpeaker(acc[i], table);
  return table.index_select(0, ids);
}

SqueezeExcitationFusionImpl::SqueezeExcitationFusionImpl(int64_t prompt_dim,
                                                         int64_t speaker_dim,
                                                         int64_t hidden,
                                                         int64_t reduction) {
  const int64_t channels = prompt_dim + speaker_dim;
  const int64_t reduced = (channels + reduction - 1) / reduction;
  squeeze = register_parameter("squeeze", UniformInit({reduced, channels}, channels));
  excite = register_parameter("excite", UniformInit({channels, reduced}, reduced));
  project = register_parameter("project", UniformInit({hidden, channels}, channels));
  project_bias = register_parameter("project_bias", UniformInit({hidden}, channels));
}

SqueezeExcitationParams SqueezeExcitationFusionImpl::params() const {
  return {squeeze, excite, project, project_bias};
}

torch::Tensor SqueezeExcitationFusionImpl::forward(const torch::Tensor& prompt_adapted,
                                                   const torch::Tensor& speaker) {
  return FuseCondition(prompt_adapted, speaker, params());
}

ConditionalLayerNormImpl::ConditionalLayerNormImpl(int64_t hidden, int64_t cond_dim) {
  scale_weight = register_parameter("scale_weight", torch::zeros({hidden, cond_dim}));
  scale_bias = register_parameter("scale_bias", torch::ones({hidden}));
  shift_weight = register_parameter("shift_weight", torch::zeros({hidden, cond_dim}));
  shift_bias = register_parameter("shift_bias", torch::zeros({hidden}));
}

ConditionalLayerNormParams ConditionalLayerNormImpl::params() const {
  return {scale_weight, scale_bias, shift_weight, shift_bias};
}

torch::Tensor ConditionalLayerNormImpl::forward(const torch::Tensor& x,
                                                const torch::Tensor& c) {
  return ApplyConditionalLayerNorm(x, c, params());
}

ConditioningNetworkImpl::ConditioningNetworkImpl(int64_t prompt_dim, int64_t speaker_dim,
                                                 int64_t num_speakers, int64_t hidden,
                                                 int64_t reduction, bool use_prompt)
    : use_prompt_(use_prompt) {
  adapter = register_module("adapter", PromptAdapter(prompt_dim, speaker_dim));
  speakers = register_module("speakers", SpeakerTable(num_speakers, speaker_dim));
  fusion = register_module(
      "fusion", SqueezeExcitationFusion(speaker_dim, speaker_dim, hidden, reduction));
}

torch::Tensor ConditioningNetworkImpl::forward(const torch::Tensor& prompts,
                                               const torch::Tensor& speaker_ids) {
  auto speaker = speakers->forward(speaker_ids);
  torch::Tensor adapted;
  if (use_prompt_) {
    adapted = adapter->forward(prompts.to(speaker.dtype()));
  } else {
    adapted = torch::zeros({speaker.size(0), adapter->weight.size(0)}, speaker.options());
  }
  return fusion->forward(adapted, speaker);
}

}  // namespace prompted_tts
