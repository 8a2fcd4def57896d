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

#ifndef PROMPTED_TTS_EVALUATION_H_
#define PROMPTED_TTS_EVALUATION_H_

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "prompted_tts/acoustic_model.h"
#include "prompted_tts/audio.h"
#include "prompted_tts/corpus.h"
#include "prompted_tts/prompt_pool.h"

namespace prompted_tts {

// Throws LengthMismatch for different lengths and ZeroVector if either
// vector has zero norm.
double CosineSimilarity(const std::vector<float>& a, const std::vector<float>& b);

using CountMatrix = std::vector<std::vector<int64_t>>;

struct ChiSquareResult {
  double statistic = 0.0;
  int64_t dof = 0;
  double p_value = 1.0;
};

// Pearson test of independence on an r x c table. Throws DegenerateMarginal
// if any row or column sums to zero (or the table is empty).
ChiSquareResult ChiSquareIndependence(const CountMatrix& counts);
// sqrt(chi2 / (n * (min(r, c) - 1))), without bias correction. Same
// preconditions; a table with a single row or column yields 0.
double CramersV(const CountMatrix& counts);

// Drops all-zero rows and columns; `rows` / `cols` receive the kept indices.
CountMatrix DropEmptyMarginals(const CountMatrix& counts, std::vector<size_t>* rows = nullptr,
                               std::vector<size_t>* cols = nullptr);

// Rows are intended labels, columns recognized labels, both in label-set
// order. Throws LengthMismatch and UnknownLabel.
CountMatrix EmotionConfusion(const std::vector<std::string>& intended,
                             const std::vector<std::string>& recognized,
                             const EmotionLabelSet& labels);
// Each row divided by its sum; all-zero rows stay zero.
std::vector<std::vector<double>> RowNormalize(const CountMatrix& counts);

// Utterance-level prosody read off a log-mel spectrogram.
struct ProsodyProxy {
  double mean_f0 = 0.0;   // Hz, over voiced frames
  double f0_slope = 0.0;  // Hz per second
  double mean_energy = 0.0;
};

// Per frame, the F0 estimate is the first prominent spectral peak between
// f0_min and f0_max, refined by parabolic interpolation on the mel axis.
// Frames whose band energy is far below the utterance maximum are skipped.
ProsodyProxy ExtractProsodyProxy(const MelSpectrogram& mel, const AudioConfig& audio);

class SpeechEmotionRecognizer {
 public:
  virtual ~SpeechEmotionRecognizer() = default;
  virtual std::string Recognize(const MelSpectrogram& mel) const = 0;
};

// Nearest centroid over standardized prosody proxies, one centroid per
// (label, speaker) cluster of the fitting data.
class ProsodyEmotionRecognizer : public SpeechEmotionRecognizer {
 public:
  explicit ProsodyEmotionRecognizer(AudioConfig audio) : audio_(audio) {}

  struct Example {
    const MelSpectrogram* mel;
    int64_t speaker_id;
    std::string label;
  };
  void Fit(const std::vector<Example>& examples);
  std::string Recognize(const MelSpectrogram& mel) const override;
  std::string Classify(const ProsodyProxy& proxy) const;

 private:
  struct Centroid {
    std::string label;
    std::vector<double> mean;
  };
  static std::vector<double> Vectorize(const ProsodyProxy& p);

  AudioConfig audio_;
  std::vector<Centroid> centroids_;
  std::vector<double> scale_;
};

class SpeakerEmbedder {
 public:
  virtual ~SpeakerEmbedder() = default;
  virtual std::vector<float> Embed(const MelSpectrogram& mel) const = 0;
};

// Per-bin mean and standard deviation of the log-mel over active frames; the
// mean half is centered on its own average so overall loudness cancels.
class MelStatsSpeakerEmbedder : public SpeakerEmbedder {
 public:
  std::vector<float> Embed(const MelSpectrogram& mel) const override;
};

enum class EvalMode { kSame, kOther, kBaseline };
const char* EvalModeName(EvalMode mode);
// Throws ConfigError.
EvalMode ParseEvalMode(const std::string& name);

struct EvalPair {
  std::string reference_id;
  std::string text;
  int64_t speaker_id = 0;
  std::string reference_label;
  std::string prompt_label;
  std::string prompt_text;
};

// `per_label` pairs per prompt label. kSame and kBaseline pair each prompt
// with held-out references of the same emotion; kOther with references whose
// emotion follows a seeded derangement of the labels, so the two always
// differ.
std::vector<EvalPair> BuildEvalPairs(const std::vector<UtteranceRecord>& heldout,
                                     const std::vector<LabeledText>& prompts,
                                     const EmotionLabelSet& labels, EvalMode mode,
                                     int per_label, uint64_t seed);

struct EvalReport {
  std::string condition;
  std::vector<std::string> labels;
  CountMatrix confusion_counts;
  std::vector<std::vector<double>> confusion_rownorm;
  double chi_square = 0.0;
  int64_t dof = 0;
  double p_value = 1.0;
  double cramers_v = 0.0;
  // Set when empty rows or columns were dropped before the test.
  bool reduced_table = false;
  double accuracy = 0.0;
  double speaker_similarity_mean = 0.0;
  double speaker_similarity_std = 0.0;
  double cross_speaker_similarity_mean = 0.0;
  std::map<int64_t, double> speaker_similarity_by_speaker;
  int64_t num_pairs = 0;
};

nlohmann::json ToJson(const EvalReport& report);

// Fills the confusion-derived fields; tables with empty marginals are tested
// on their non-empty part (one remaining row or column gives V = 0, p = 1).
void ScoreConfusion(const CountMatrix& counts, EvalReport* report);

struct EvaluationInputs {
  SynthesisContext synthesis;
  const SpeechEmotionRecognizer* recognizer = nullptr;
  const SpeakerEmbedder* speaker_embedder = nullptr;
  // Ground-truth mel per held-out id.
  const std::map<std::string, MelSpectrogram>* references = nullptr;
  EmotionLabelSet labels;
  double temperature = 0.8;
  uint64_t seed = 0;
  int workers = 1;
};

// Synthesizes every pair, recognizes its emotion (scored against the prompt
// label) and compares its speaker embedding with the reference utterance.
EvalReport EvaluateControllability(const EvaluationInputs& inputs,
                                   const std::vector<EvalPair>& pairs,
                                   const std::string& condition);

}  // namespace prompted_tts

#endif  // PROMPTED_TTS_EVALUATION_H_
