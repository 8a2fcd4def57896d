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

#ifndef PROMPTED_TTS_CORPUS_H_
#define PROMPTED_TTS_CORPUS_H_

#include <istream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "prompted_tts/audio.h"
#include "prompted_tts/random.h"
#include "prompted_tts/text_frontend.h"

namespace prompted_tts {

struct EmotionLabelSet {
  std::vector<std::string> labels;

  // anger, joy, neutral, sadness, surprise.
  static EmotionLabelSet Canonical();
  bool Contains(const std::string& label) const;
  // Throws UnknownLabel.
  int IndexOf(const std::string& label) const;
  int size() const { return static_cast<int>(labels.size()); }
  // Throws ConfigError if empty or not unique.
  void Validate() const;
};

struct UtteranceRecord {
  std::string id;
  std::string audio_path;
  std::string transcript;
  int64_t speaker_id = 0;
  std::optional<std::string> emotion;
  std::optional<std::string> durations_path;

  bool operator==(const UtteranceRecord&) const = default;
};

// Tab-separated, header
// `id<TAB>audio_path<TAB>transcript<TAB>speaker_id<TAB>emotion<TAB>durations_path`;
// empty emotion / durations_path mean absent. Errors name the line number.
std::vector<UtteranceRecord> ParseManifest(std::istream& in, const EmotionLabelSet& labels,
                                           const std::string& source = "manifest");
std::vector<UtteranceRecord> LoadManifest(const std::string& path,
                                          const EmotionLabelSet& labels);
void SaveManifest(const std::string& path, const std::vector<UtteranceRecord>& records);
std::string FormatManifest(const std::vector<UtteranceRecord>& records);

// `relative` resolved against the directory holding `manifest_path`, unless
// already absolute.
std::string ResolveRelative(const std::string& manifest_path, const std::string& relative);

// One integer per line, one line per phoneme.
std::vector<int64_t> ReadDurations(const std::string& path);
void WriteDurations(const std::string& path, const std::vector<int64_t>& durations);

struct EmotionSignature {
  std::string label;
  double f0_scale = 1.0;       // multiplies the speaker's base F0
  double f0_slope_hz_per_s = 0.0;
  double energy_gain_db = 0.0;
};

struct SpeakerVoice {
  double base_f0_hz = 120.0;
  double tilt_db_per_octave = -6.0;
  double formant_scale = 1.0;
};

struct SyntheticCorpusSpec {
  int num_speakers = 2;
  int utterances_per_emotion = 40;  // per speaker
  int unlabeled_utterances = 100;   // spread over speakers
  int heldout_per_emotion = 4;      // per speaker
  EmotionLabelSet labels = EmotionLabelSet::Canonical();
  std::vector<EmotionSignature> signatures;  // one per label, label order
  std::vector<SpeakerVoice> voices;          // one per speaker
  uint64_t seed = 1234;

  // Signatures and voices for the canonical labels and `speakers` voices.
  static SyntheticCorpusSpec Default(int speakers = 2);
  const EmotionSignature& Signature(const std::string& label) const;
  // Mean F0 of (speaker, label) utterances.
  double MeanF0(int speaker, const std::string& label) const;
  // ConfigError unless every speaker's per-emotion mean F0s are >= 20 Hz
  // apart and sizes are consistent.
  void Validate() const;
};

struct DatasetManifest {
  std::string labeled_path, unlabeled_path, heldout_path;
  std::vector<UtteranceRecord> labeled, unlabeled, heldout;
};

// Training transcripts and held-out transcripts; disjoint.
const std::vector<std::string>& TrainingSentences();
const std::vector<std::string>& HeldoutSentences();

// Phoneme-level frame counts used by the generator.
std::vector<int64_t> SampleDurations(const PhonemeSequence& phonemes, const FeatureTable& table,
                                     Rng& rng);

// Harmonic-plus-noise rendering of a phoneme sequence with the given frame
// durations; returns NumSamplesForFrames(sum(durations)) samples.
Waveform RenderUtterance(const PhonemeSequence& phonemes, const std::vector<int64_t>& durations,
                         const FeatureTable& table, const SpeakerVoice& voice,
                         const EmotionSignature& signature, const AudioConfig& audio, Rng& rng);

// Writes wavs/, durations/ and labeled.tsv, unlabeled.tsv, heldout.tsv under
// out_dir. Output bytes depend only on the spec.
DatasetManifest GenerateSyntheticCorpus(const SyntheticCorpusSpec& spec, const std::string& out_dir,
                                        const FeatureTable& table, const AudioConfig& audio);
// Reads the three manifests written by GenerateSyntheticCorpus.
DatasetManifest LoadCorpus(const std::string& corpus_dir, const EmotionLabelSet& labels);

// Model-ready view of one utterance.
struct PreparedUtterance {
  std::string id;
  std::string transcript;
  int64_t speaker_id = 0;
  std::optional<std::string> emotion;
  torch::Tensor features;            // [N, F]
  std::vector<int64_t> durations;    // N
  std::vector<float> pitch;          // N, z-scored log-F0 (0 = unvoiced)
  std::vector<float> energy;         // N, z-scored log energy
  MelSpectrogram mel;                // [T, M]
};

struct FeatureStats {
  std::map<int64_t, std::pair<double, double>> log_f0;  // speaker -> (mean, std)
  double energy_mean = 0.0;
  double energy_std = 1.0;
};

struct RawUtterance {
  UtteranceRecord record;
  PhonemeSequence phonemes;
  std::vector<int64_t> durations;
  AcousticFeatures acoustic;
};

// Loads audio and durations, extracts features. Throws DurationMismatch if
// the durations file disagrees with the phoneme or frame count. Runs up to
// `workers` threads; output order follows `records`.
std::vector<RawUtterance> ExtractUtterances(const std::vector<UtteranceRecord>& records,
                                            const std::string& manifest_path,
                                            const FeatureTable& table,
                                            const PhonemizerBackend& phonemizer,
                                            const AudioConfig& audio, int workers);

FeatureStats ComputeFeatureStats(const std::vector<RawUtterance>& utterances);

PreparedUtterance PrepareUtterance(const RawUtterance& raw, const FeatureStats& stats,
                                   const FeatureTable& table);

// Model-ready corpus; feature statistics come from the training sets
// (labeled and unlabeled).
struct PreparedCorpus {
  FeatureStats stats;
  std::vector<PreparedUtterance> labeled, unlabeled, heldout;
};

PreparedCorpus PrepareCorpus(const DatasetManifest& manifest, const FeatureTable& table,
                             const PhonemizerBackend& phonemizer, const AudioConfig& audio,
                             int workers);
// Stored in the checkpoint container format.
void WritePreparedCorpus(const std::string& path, const PreparedCorpus& corpus);
PreparedCorpus ReadPreparedCorpus(const std::string& path);

// PROMPTED_TTS_NUM_WORKERS if set and positive, else hardware concurrency.
int NumWorkers();

}  // namespace prompted_tts

#endif  // PROMPTED_TTS_CORPUS_H_
