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

#include "prompted_tts/run_config.h"

#include <fstream>
#include <set>

#include "prompted_tts/error.h"

namespace prompted_tts {
namespace {

void RejectUnknown(const nlohmann::json& j, const std::set<std::string>& keys,
                   const std::string& section) {
  if (!j.is_object()) throw Error(ErrorKind::kConfigError, section + " must be an object");
  for (const auto& item : j.items()) {
    if (!keys.count(item.key())) {
      throw Error(ErrorKind::kConfigError, "unknown " + section + " key '" + item.key() + "'");
    }
  }
}

template <typename T>
void Read(const nlohmann::json& j, const char* key, T& field) {
  if (j.contains(key)) j.at(key).get_to(field);
}

}  // namespace

void to_json(nlohmann::json& j, const AudioConfig& c) {
  j = nlohmann::json{{"sample_rate", c.sample_rate},
                     {"window", c.window},
                     {"hop", c.hop},
                     {"n_mels", c.n_mels},
                     {"f_min", c.f_min},
                     {"f_max", c.f_max},
                     {"mel_floor", c.mel_floor},
                     {"f0_min", c.f0_min},
                     {"f0_max", c.f0_max},
                     {"voicing_threshold", c.voicing_threshold},
                     {"silence_rms", c.silence_rms}};
}

void from_json(const nlohmann::json& j, AudioConfig& c) {
  RejectUnknown(j,
                {"sample_rate", "window", "hop", "n_mels", "f_min", "f_max", "mel_floor",
                 "f0_min", "f0_max", "voicing_threshold", "silence_rms"},
                "audio");
  Read(j, "sample_rate", c.sample_rate);
  Read(j, "window", c.window);
  Read(j, "hop", c.hop);
  Read(j, "n_mels", c.n_mels);
  Read(j, "f_min", c.f_min);
  Read(j, "f_max", c.f_max);
  Read(j, "mel_floor", c.mel_floor);
  Read(j, "f0_min", c.f0_min);
  Read(j, "f0_max", c.f0_max);
  Read(j, "voicing_threshold", c.voicing_threshold);
  Read(j, "silence_rms", c.silence_rms);
}

nlohmann::json RunConfig::ToJson() const {
  nlohmann::json j;
  j["seed"] = seed;
  j["audio"] = audio;
  j["model"] = model;
  j["training"] = training;
  j["corpus"] = {{"num_speakers", corpus.num_speakers},
                 {"utterances_per_emotion", corpus.utterances_per_emotion},
                 {"unlabeled_utterances", corpus.unlabeled_utterances},
                 {"heldout_per_emotion", corpus.heldout_per_emotion}};
  j["prompts"] = {{"encoder_noise", prompts.encoder_noise},
                  {"encoder_seed", prompts.encoder_seed},
                  {"pool_per_label_target", prompts.pool_per_label_target},
                  {"pool_candidates_per_label", prompts.pool_candidates_per_label},
                  {"distractor_rate", prompts.distractor_rate},
                  {"confidence_min", prompts.confidence_min},
                  {"lexicon", prompts.lexicon}};
  j["evaluation"] = {{"temperature", evaluation.temperature},
                     {"pairs_per_label", evaluation.pairs_per_label},
                     {"griffin_lim_iterations", evaluation.griffin_lim_iterations}};
  j["frontend"] = {{"feature_table", frontend.feature_table},
                   {"phonemizer", frontend.phonemizer},
                   {"espeak_voice", frontend.espeak_voice}};
  return j;
}

RunConfig RunConfig::FromJson(const nlohmann::json& j) {
  RejectUnknown(j,
                {"seed", "audio", "model", "training", "corpus", "prompts", "evaluation",
                 "frontend"},
                "top-level");
  RunConfig c;
  try {
    Read(j, "seed", c.seed);
    if (j.contains("audio")) from_json(j.at("audio"), c.audio);
    if (j.contains("model")) from_json(j.at("model"), c.model);
    if (j.contains("training")) from_json(j.at("training"), c.training);
    if (j.contains("corpus")) {
      const auto& s = j.at("corpus");
      RejectUnknown(s,
                    {"num_speakers", "utterances_per_emotion", "unlabeled_utterances",
                     "heldout_per_emotion"},
                    "corpus");
      Read(s, "num_speakers", c.corpus.num_speakers);
      Read(s, "utterances_per_emotion", c.corpus.utterances_per_emotion);
      Read(s, "unlabeled_utterances", c.corpus.unlabeled_utterances);
      Read(s, "heldout_per_emotion", c.corpus.heldout_per_emotion);
    }
    if (j.contains("prompts")) {
      const auto& s = j.at("prompts");
      RejectUnknown(s,
                    {"encoder_noise", "encoder_seed", "pool_per_label_target",
                     "pool_candidates_per_label", "distractor_rate", "confidence_min", "lexicon"},
                    "prompts");
      Read(s, "encoder_noise", c.prompts.encoder_noise);
      Read(s, "encoder_seed", c.prompts.encoder_seed);
      Read(s, "pool_per_label_target", c.prompts.pool_per_label_target);
      Read(s, "pool_candidates_per_label", c.prompts.pool_candidates_per_label);
      Read(s, "distractor_rate", c.prompts.distractor_rate);
      Read(s, "confidence_min", c.prompts.confidence_min);
      Read(s, "lexicon", c.prompts.lexicon);
    }
    if (j.contains("evaluation")) {
      const auto& s = j.at("evaluation");
      RejectUnknown(s, {"temperature", "pairs_per_label", "griffin_lim_iterations"},
                    "evaluation");
      Read(s, "temperature", c.evaluation.temperature);
      Read(s, "pairs_per_label", c.evaluation.pairs_per_label);
      Read(s, "griffin_lim_iterations", c.evaluation.griffin_lim_iterations);
    }
    if (j.contains("frontend")) {
      const auto& s = j.at("frontend");
      RejectUnknown(s, {"feature_table", "phonemizer", "espeak_voice"}, "frontend");
      Read(s, "feature_table", c.frontend.feature_table);
      Read(s, "phonemizer", c.frontend.phonemizer);
      Read(s, "espeak_voice", c.frontend.espeak_voice);
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kConfigError, e.what());
  }
  c.Validate();
  return c;
}

RunConfig RunConfig::Load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kIoError, "cannot open config " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kConfigError, path + ": " + e.what());
  }
  return FromJson(j);
}

void RunConfig::ApplyOverride(const std::string& assignment) {
  const size_t eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw Error(ErrorKind::kConfigError, "override '" + assignment + "' is not key=value");
  }
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  nlohmann::json value = nlohmann::json::parse(text, nullptr, /*allow_exceptions=*/false);
  if (value.is_discarded()) value = text;

  nlohmann::json j = ToJson();
  nlohmann::json* node = &j;
  size_t start = 0;
  while (true) {
    const size_t dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos
                                                                        : dot - start);
    if (!node->is_object() || !node->contains(part)) {
      throw Error(ErrorKind::kConfigError, "unknown config key '" + key + "'");
    }
    node = &(*node)[part];
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  *node = value;
  *this = FromJson(j);
}

void RunConfig::Validate() const {
  model.Validate();
  training.Validate();
  if (audio.sample_rate <= 0 || audio.hop <= 0 || audio.window < audio.hop ||
      audio.n_mels != model.n_mels) {
    throw Error(ErrorKind::kConfigError, "audio geometry invalid or n_mels differs from model");
  }
  if (corpus.num_speakers != model.num_speakers) {
    throw Error(ErrorKind::kConfigError, "corpus.num_speakers must equal model.num_speakers");
  }
  if (prompts.pool_per_label_target < 1 || prompts.pool_candidates_per_label < 1 ||
      prompts.confidence_min < 0 || prompts.confidence_min > 1 || prompts.distractor_rate < 0 ||
      prompts.distractor_rate > 1 || prompts.encoder_noise < 0) {
    throw Error(ErrorKind::kConfigError, "invalid prompt settings");
  }
  if (evaluation.temperature < 0 || evaluation.pairs_per_label < 1 ||
      evaluation.griffin_lim_iterations < 1) {
    throw Error(ErrorKind::kConfigError, "invalid evaluation settings");
  }
  if (frontend.phonemizer != "fallback" && frontend.phonemizer != "espeak") {
    throw Error(ErrorKind::kConfigError, "phonemizer must be fallback or espeak");
  }
}

SyntheticCorpusSpec RunConfig::CorpusSpec() const {
  SyntheticCorpusSpec spec = SyntheticCorpusSpec::Default(corpus.num_speakers);
  spec.utterances_per_emotion = corpus.utterances_per_emotion;
  spec.unlabeled_utterances = corpus.unlabeled_utterances;
  spec.heldout_per_emotion = corpus.heldout_per_emotion;
  spec.seed = seed;
  return spec;
}

}  // namespace prompted_tts
