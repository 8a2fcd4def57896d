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

#ifndef PROMPTED_TTS_RUN_CONFIG_H_
#define PROMPTED_TTS_RUN_CONFIG_H_

#include <cstdint>
#include <string>

#include "json.hpp"
#include "prompted_tts/acoustic_model.h"
#include "prompted_tts/audio.h"
#include "prompted_tts/corpus.h"
#include "prompted_tts/training.h"

namespace prompted_tts {

struct CorpusConfig {
  int num_speakers = 2;
  int utterances_per_emotion = 40;
  int unlabeled_utterances = 100;
  int heldout_per_emotion = 4;
};

struct PromptConfig {
  double encoder_noise = 0.1;     // stub encoder noise norm
  uint64_t encoder_seed = 7;      // stands in for the encoder's weights
  int pool_per_label_target = 100;
  int pool_candidates_per_label = 130;
  double distractor_rate = 0.2;
  double confidence_min = 0.8;
  std::string lexicon = "";       // empty: shipped lexicon
};

struct EvaluationConfig {
  double temperature = 0.8;
  int pairs_per_label = 50;
  int griffin_lim_iterations = 32;
};

struct FrontendConfig {
  std::string feature_table = "";  // empty: shipped table
  std::string phonemizer = "fallback";  // fallback | espeak
  std::string espeak_voice = "en-us";
};

// Every module default in one place. `seed` drives all run randomness; the
// encoder seed is treated as part of the (fixed) encoder weights.
struct RunConfig {
  uint64_t seed = 0;
  AudioConfig audio;
  AcousticModelConfig model;
  TrainingConfig training;
  CorpusConfig corpus;
  PromptConfig prompts;
  EvaluationConfig evaluation;
  FrontendConfig frontend;

  // Throws ConfigError on unknown keys or bad values, IoError if unreadable.
  static RunConfig Load(const std::string& path);
  static RunConfig FromJson(const nlohmann::json& j);
  nlohmann::json ToJson() const;
  // `section.key=value` (or `key=value` for top-level keys); the value is
  // parsed as JSON, falling back to a plain string.
  void ApplyOverride(const std::string& assignment);
  void Validate() const;

  SyntheticCorpusSpec CorpusSpec() const;
};

void to_json(nlohmann::json& j, const AudioConfig& c);
void from_json(const nlohmann::json& j, AudioConfig& c);

}  // namespace prompted_tts

#endif  // PROMPTED_TTS_RUN_CONFIG_H_
