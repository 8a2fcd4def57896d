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

#include "prompted_tts/corpus.h"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>
#include <thread>

#include "prompted_tts/checkpoint.h"
#include "prompted_tts/error.h"
#include "prompted_tts/parallel.h"

namespace prompted_tts {
namespace {

namespace fs = std::filesystem;

const char kManifestHeader[] = "id\taudio_path\ttranscript\tspeaker_id\temotion\tdurations_path";

std::vector<std::string> SplitTabs(const std::string& line) {
  std::vector<std::string> fields;
  size_t start = 0;
  while (true) {
    const size_t tab = line.find('\t', start);
    if (tab == std::string::npos) {
      fields.push_back(line.substr(start));
      return fields;
    }
    fields.push_back(line.substr(start, tab - start));
    start = tab + 1;
  }
}

std::string LinePrefix(const std::string& source, int line) {
  return source + " line " + std::to_string(line) + ": ";
}

void EnsureDir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorKind::kIoError, "cannot create " + dir.string() + ": " + ec.message());
}

// Feature lookup by column name.
class FeatureView {
 public:
  FeatureView(const FeatureTable& table, const std::string& phoneme) : row_(table.Row(phoneme)) {
    const auto& names = table.feature_names();
    for (size_t i = 0; i < names.size(); ++i) index_[names[i]] = i;
  }
  double operator[](const std::string& name) const {
    auto it = index_.find(name);
    return it == index_.end() ? 0.0 : row_[it->second];
  }

 private:
  const std::vector<float>& row_;
  std::map<std::string, size_t> index_;
};

enum class SoundClass {
  kSilence,
  kVowel,
  kSonorant,
  kFricative,
  kStop,
  kAffricate,
  kAspirate,
};

struct PhonemeAcoustics {
  SoundClass kind = SoundClass::kSilence;
  bool voiced = false;
  bool strident = false;
  double f1 = 500.0, f2 = 1500.0, f3 = 2500.0;
};

PhonemeAcoustics Classify(const FeatureTable& table, const std::string& phoneme) {
  const FeatureView f(table, phoneme);
  PhonemeAcoustics a;
  a.voiced = f["voiced"] > 0.5;
  a.strident = f["strident"] > 0.5;
  if (f["silence"] > 0.5 || f["word_boundary"] > 0.5 || f["phrase_final"] > 0.5) {
    a.kind = SoundClass::kSilence;
  } else if (f["syllabic"] > 0.5) {
    a.kind = SoundClass::kVowel;
    a.f1 = 250.0 + 500.0 * (1.0 - f["height"]);
    a.f2 = 800.0 + 1500.0 * (1.0 - f["backness"]) - 250.0 * f["rounded"];
    a.f3 = 2600.0;
  } else if (f["sonorant"] > 0.5) {
    a.kind = SoundClass::kSonorant;
    if (f["nasal"] > 0.5) {
      a.f1 = 250.0, a.f2 = 1100.0, a.f3 = 2500.0;
    } else if (f["lateral"] > 0.5) {
      a.f1 = 350.0, a.f2 = 1100.0, a.f3 = 2700.0;
    } else {
      a.f1 = 320.0;
      a.f2 = 800.0 + 1400.0 * (1.0 - f["backness"]) - 200.0 * f["labial"];
      a.f3 = f["coronal"] > 0.5 ? 1700.0 : 2500.0;
    }
  } else if (f["glottal"] > 0.5) {
    a.kind = SoundClass::kAspirate;
  } else if (f["delayed_release"] > 0.5) {
    a.kind = SoundClass::kAffricate;
  } else if (f["continuant"] > 0.5) {
    a.kind = SoundClass::kFricative;
  } else {
    a.kind = SoundClass::kStop;
  }
  return a;
}

// Source parameters of one analysis frame.
struct FrameParams {
  double f0 = 0.0;
  double voice_gain = 0.0;
  double noise_gain = 0.0;
  double f1 = 500.0, f2 = 1500.0, f3 = 2500.0;
};

FrameParams Lerp(const FrameParams& a, const FrameParams& b, double t) {
  auto mix = [t](double x, double y) { return x + (y - x) * t; };
  FrameParams p;
  p.f0 = mix(a.f0, b.f0);
  p.voice_gain = mix(a.voice_gain, b.voice_gain);
  p.noise_gain = mix(a.noise_gain, b.noise_gain);
  p.f1 = mix(a.f1, b.f1);
  p.f2 = mix(a.f2, b.f2);
  p.f3 = mix(a.f3, b.f3);
  return p;
}

double Envelope(double f, const FrameParams& p, double tilt_db_per_octave) {
  auto peak = [f](double center, double bandwidth) {
    const double d = (f - center) / bandwidth;
    return 1.0 / (1.0 + d * d);
  };
  const double env =
      0.03 + peak(p.f1, 90.0) + 0.7 * peak(p.f2, 120.0) + 0.35 * peak(p.f3, 180.0);
  const double tilt = std::pow(10.0, tilt_db_per_octave * std::log2(std::max(f, 50.0) / 100.0) / 20.0);
  return env * tilt;
}

const std::vector<std::string>& Sentences(bool heldout) {
  static const std::vector<std::string> kTrain = {
      "the cat sat on a mat",
      "we went home late",
      "bring me the red cup",
      "she sells fresh fish",
      "open the big door",
      "they play in the park",
      "my dog likes long walks",
      "the sun is warm today",
      "he read a short book",
      "put the box on the shelf",
      "a bird sang at dawn",
      "we made soup for lunch",
      "the train left on time",
      "look at the tall tree",
      "his coat is very old",
      "you can sit by me",
      "the milk is in the fridge",
      "rain fell all night",
      "turn off the lamp",
      "she found a blue pen",
      "the kids ran to school",
      "we need more time",
      "call me after work",
      "this road is quiet",
      "the fox jumped high",
      "give him a small gift",
      "the shop opens at nine",
      "i lost my keys again",
      "wash the dishes now",
      "the river runs fast",
      "they sold the old car",
      "her voice was soft",
      "keep the window shut",
      "the game ends soon",
      "we saw a white ship",
      "take a seat please",
      "the bread is fresh",
      "he fixed the bike",
      "snow covered the hill",
      "let us meet at noon",
  };
  static const std::vector<std::string> kHeldout = {
      "the moon rose slowly",
      "pass the salt to me",
      "a cold wind blew",
      "we sang a happy song",
      "the lake froze over",
      "find the missing shoe",
      "his desk was clean",
      "the bus came early",
  };
  return heldout ? kHeldout : kTrain;
}

std::string Pad(int value, int width) {
  std::ostringstream s;
  s << std::setw(width) << std::setfill('0') << value;
  return s.str();
}

struct GenerationJob {
  UtteranceRecord record;
  int speaker = 0;
  const EmotionSignature* signature = nullptr;
};

}  // namespace

EmotionLabelSet EmotionLabelSet::Canonical() {
  return EmotionLabelSet{{"anger", "joy", "neutral", "sadness", "surprise"}};
}

bool EmotionLabelSet::Contains(const std::string& label) const {
  return std::find(labels.begin(), labels.end(), label) != labels.end();
}

int EmotionLabelSet::IndexOf(const std::string& label) const {
  auto it = std::find(labels.begin(), labels.end(), label);
  if (it == labels.end()) throw Error(ErrorKind::kUnknownLabel, "label '" + label + "'");
  return static_cast<int>(it - labels.begin());
}

void EmotionLabelSet::Validate() const {
  if (labels.empty()) throw Error(ErrorKind::kConfigError, "empty emotion label set");
  std::set<std::string> seen;
  for (const auto& l : labels) {
    if (l.empty()) throw Error(ErrorKind::kConfigError, "empty emotion label");
    if (!seen.insert(l).second) {
      throw Error(ErrorKind::kConfigError, "duplicate emotion label '" + l + "'");
    }
  }
}

std::vector<UtteranceRecord> ParseManifest(std::istream& in, const EmotionLabelSet& labels,
                                           const std::string& source) {
  std::string line;
  int line_no = 0;
  if (!std::getline(in, line)) throw Error(ErrorKind::kParseError, source + ": missing header");
  ++line_no;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kManifestHeader) {
    throw Error(ErrorKind::kParseError, LinePrefix(source, line_no) + "unexpected header");
  }
  std::vector<UtteranceRecord> records;
  std::set<std::string> ids;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = SplitTabs(line);
    if (fields.size() != 6) {
      throw Error(ErrorKind::kParseError, LinePrefix(source, line_no) + "expected 6 fields, got " +
                                              std::to_string(fields.size()));
    }
    UtteranceRecord r;
    r.id = fields[0];
    r.audio_path = fields[1];
    r.transcript = fields[2];
    if (r.id.empty()) throw Error(ErrorKind::kParseError, LinePrefix(source, line_no) + "empty id");
    if (r.audio_path.empty()) {
      throw Error(ErrorKind::kParseError, LinePrefix(source, line_no) + "empty audio_path");
    }
    if (r.transcript.empty()) {
      throw Error(ErrorKind::kParseError, LinePrefix(source, line_no) + "empty transcript");
    }
    const std::string& spk = fields[3];
    if (spk.empty() || spk.size() > 9 ||
        !std::all_of(spk.begin(), spk.end(), [](char c) { return c >= '0' && c <= '9'; })) {
      throw Error(ErrorKind::kParseError,
                  LinePrefix(source, line_no) + "invalid speaker_id '" + spk + "'");
    }
    r.speaker_id = std::stoll(spk);
    if (!fields[4].empty()) {
      if (!labels.Contains(fields[4])) {
        throw Error(ErrorKind::kUnknownEmotion,
                    LinePrefix(source, line_no) + "unknown emotion '" + fields[4] + "'");
      }
      r.emotion = fields[4];
    }
    if (!fields[5].empty()) r.durations_path = fields[5];
    if (!ids.insert(r.id).second) {
      throw Error(ErrorKind::kDuplicateId,
                  LinePrefix(source, line_no) + "duplicate id '" + r.id + "'");
    }
    records.push_back(std::move(r));
  }
  return records;
}

std::vector<UtteranceRecord> LoadManifest(const std::string& path,
                                          const EmotionLabelSet& labels) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kIoError, "cannot open manifest " + path);
  return ParseManifest(in, labels, path);
}

std::string FormatManifest(const std::vector<UtteranceRecord>& records) {
  std::string out = std::string(kManifestHeader) + "\n";
  for (const auto& r : records) {
    out += r.id + "\t" + r.audio_path + "\t" + r.transcript + "\t" +
           std::to_string(r.speaker_id) + "\t" + r.emotion.value_or("") + "\t" +
           r.durations_path.value_or("") + "\n";
  }
  return out;
}

void SaveManifest(const std::string& path, const std::vector<UtteranceRecord>& records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::kIoError, "cannot write manifest " + path);
  out << FormatManifest(records);
  if (!out) throw Error(ErrorKind::kIoError, "write failed for " + path);
}

std::string ResolveRelative(const std::string& manifest_path, const std::string& relative) {
  const fs::path p(relative);
  if (p.is_absolute()) return relative;
  return (fs::path(manifest_path).parent_path() / p).string();
}

std::vector<int64_t> ReadDurations(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kIoError, "cannot open durations " + path);
  std::vector<int64_t> durations;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    char* end = nullptr;
    const long long v = std::strtoll(line.c_str(), &end, 10);
    if (end == line.c_str() || *end != '\0' || v < 0) {
      throw Error(ErrorKind::kParseError, LinePrefix(path, line_no) + "invalid duration '" + line + "'");
    }
    durations.push_back(v);
  }
  return durations;
}

void WriteDurations(const std::string& path, const std::vector<int64_t>& durations) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::kIoError, "cannot write durations " + path);
  for (int64_t d : durations) out << d << "\n";
}

SyntheticCorpusSpec SyntheticCorpusSpec::Default(int speakers) {
  SyntheticCorpusSpec spec;
  spec.num_speakers = speakers;
  spec.signatures = {
      {"anger", 1.25, -15.0, 6.0},
      {"joy", 1.5, 25.0, 3.0},
      {"neutral", 1.0, 0.0, 0.0},
      {"sadness", 0.8, -20.0, -6.0},
      {"surprise", 1.8, 60.0, 2.0},
  };
  for (int s = 0; s < speakers; ++s) {
    // Alternate low and high voices; later pairs shift slightly.
    SpeakerVoice v;
    v.base_f0_hz = (s % 2 == 0 ? 110.0 : 200.0) + 8.0 * (s / 2);
    v.tilt_db_per_octave = s % 2 == 0 ? -6.0 : -3.0;
    v.formant_scale = (s % 2 == 0 ? 1.0 : 1.15) + 0.04 * (s / 2);
    spec.voices.push_back(v);
  }
  return spec;
}

const EmotionSignature& SyntheticCorpusSpec::Signature(const std::string& label) const {
  for (const auto& s : signatures) {
    if (s.label == label) return s;
  }
  throw Error(ErrorKind::kUnknownEmotion, "no signature for '" + label + "'");
}

double SyntheticCorpusSpec::MeanF0(int speaker, const std::string& label) const {
  return voices.at(static_cast<size_t>(speaker)).base_f0_hz * Signature(label).f0_scale;
}

void SyntheticCorpusSpec::Validate() const {
  labels.Validate();
  if (num_speakers < 1 || static_cast<int>(voices.size()) != num_speakers) {
    throw Error(ErrorKind::kConfigError, "need one voice per speaker");
  }
  if (utterances_per_emotion < 1 || unlabeled_utterances < 0 || heldout_per_emotion < 0) {
    throw Error(ErrorKind::kConfigError, "invalid corpus sizes");
  }
  for (const auto& l : labels.labels) Signature(l);
  for (int s = 0; s < num_speakers; ++s) {
    std::vector<double> f0;
    for (const auto& l : labels.labels) f0.push_back(MeanF0(s, l));
    std::sort(f0.begin(), f0.end());
    for (size_t i = 1; i < f0.size(); ++i) {
      if (f0[i] - f0[i - 1] < 20.0) {
        throw Error(ErrorKind::kConfigError,
                    "speaker " + std::to_string(s) + ": emotion mean F0s closer than 20 Hz");
      }
    }
  }
}

const std::vector<std::string>& TrainingSentences() { return Sentences(false); }
const std::vector<std::string>& HeldoutSentences() { return Sentences(true); }

std::vector<int64_t> SampleDurations(const PhonemeSequence& phonemes, const FeatureTable& table,
                                     Rng& rng) {
  std::vector<int64_t> durations;
  durations.reserve(phonemes.symbols.size());
  for (const auto& p : phonemes.symbols) {
    const FeatureView f(table, p);
    int64_t d;
    if (f["phrase_final"] > 0.5) {
      d = 8;
    } else if (f["word_boundary"] > 0.5) {
      d = 1;
    } else if (f["silence"] > 0.5) {
      d = 5;
    } else if (f["syllabic"] > 0.5) {
      d = 5 + static_cast<int64_t>(UniformIndex(rng, 4));
    } else {
      d = 3 + static_cast<int64_t>(UniformIndex(rng, 3));
    }
    durations.push_back(d);
  }
  return durations;
}

Waveform RenderUtterance(const PhonemeSequence& phonemes, const std::vector<int64_t>& durations,
                         const FeatureTable& table, const SpeakerVoice& voice,
                         const EmotionSignature& signature, const AudioConfig& audio, Rng& rng) {
  if (durations.size() != phonemes.symbols.size()) {
    throw Error(ErrorKind::kDurationMismatch, "durations do not match phoneme count");
  }
  int64_t total = 0;
  for (int64_t d : durations) total += d;
  if (total <= 0) throw Error(ErrorKind::kEmptyOutput, "utterance has no frames");

  const double sr = audio.sample_rate;
  const double seconds = static_cast<double>(total) * audio.hop / sr;
  const double mean_f0 = voice.base_f0_hz * signature.f0_scale;

  std::vector<FrameParams> frames;
  frames.reserve(static_cast<size_t>(total));
  for (size_t i = 0; i < durations.size(); ++i) {
    const PhonemeAcoustics a = Classify(table, phonemes.symbols[i]);
    for (int64_t j = 0; j < durations[i]; ++j) {
      const double frac = (j + 0.5) / static_cast<double>(durations[i]);
      FrameParams p;
      p.f1 = a.f1 * voice.formant_scale;
      p.f2 = a.f2 * voice.formant_scale;
      p.f3 = a.f3 * voice.formant_scale;
      switch (a.kind) {
        case SoundClass::kSilence:
          break;
        case SoundClass::kVowel:
          p.voice_gain = 1.0;
          break;
        case SoundClass::kSonorant:
          p.voice_gain = 0.45;
          break;
        case SoundClass::kFricative:
          p.voice_gain = a.voiced ? 0.25 : 0.0;
          p.noise_gain = a.strident ? 0.4 : 0.2;
          break;
        case SoundClass::kAspirate:
          p.noise_gain = 0.12;
          break;
        case SoundClass::kStop:
          if (frac < 0.6) {
            p.voice_gain = a.voiced ? 0.1 : 0.0;
          } else {
            p.voice_gain = a.voiced ? 0.25 : 0.0;
            p.noise_gain = 0.3;
          }
          break;
        case SoundClass::kAffricate:
          if (frac < 0.4) {
            p.voice_gain = a.voiced ? 0.1 : 0.0;
          } else {
            p.voice_gain = a.voiced ? 0.25 : 0.0;
            p.noise_gain = 0.4;
          }
          break;
      }
      frames.push_back(p);
    }
  }
  for (size_t f = 0; f < frames.size(); ++f) {
    const double t = (static_cast<double>(f) * audio.hop + audio.window / 2.0) / sr;
    frames[f].f0 = std::clamp(mean_f0 + signature.f0_slope_hz_per_s * (t - seconds / 2.0),
                              audio.f0_min + 5.0, audio.f0_max - 20.0);
  }

  const int64_t n = NumSamplesForFrames(total, audio);
  const double level = 0.04 * std::pow(10.0, signature.energy_gain_db / 20.0);
  const double nyquist_margin = std::min(sr / 2.0 - 400.0, 5000.0);
  constexpr int kUpdate = 32;

  Waveform wav;
  wav.sample_rate = audio.sample_rate;
  wav.samples.resize(static_cast<size_t>(n));
  std::vector<double> amps;
  FrameParams p;
  double phase = 0.0;
  double prev_noise = 0.0;
  for (int64_t s = 0; s < n; ++s) {
    if (s % kUpdate == 0) {
      const double pos = std::clamp((static_cast<double>(s) - audio.window / 2.0) / audio.hop, 0.0,
                                    static_cast<double>(total - 1));
      const auto lo = static_cast<size_t>(pos);
      const size_t hi = std::min(lo + 1, frames.size() - 1);
      p = Lerp(frames[lo], frames[hi], pos - static_cast<double>(lo));
      amps.clear();
      if (p.voice_gain > 0.0) {
        const int harmonics = static_cast<int>(nyquist_margin / p.f0);
        for (int h = 1; h <= harmonics; ++h) {
          amps.push_back(p.voice_gain * Envelope(h * p.f0, p, voice.tilt_db_per_octave));
        }
      }
    }
    double x = 0.0;
    if (!amps.empty()) {
      phase += 2.0 * M_PI * p.f0 / sr;
      if (phase > 2.0 * M_PI) phase -= 2.0 * M_PI;
      // sin(h * phase) by the Chebyshev recurrence.
      const double c2 = 2.0 * std::cos(phase);
      double s_prev = 0.0, s_cur = std::sin(phase);
      for (double a : amps) {
        x += a * s_cur;
        const double s_next = c2 * s_cur - s_prev;
        s_prev = s_cur;
        s_cur = s_next;
      }
    }
    const double white = StandardNormal(rng);
    if (p.noise_gain > 0.0) {
      // First difference tilts the noise towards high frequencies.
      x += p.noise_gain * 3.0 * (white - 0.9 * prev_noise);
    }
    prev_noise = white;
    wav.samples[static_cast<size_t>(s)] =
        static_cast<float>(std::clamp(level * x, -0.99, 0.99));
  }
  return wav;
}

DatasetManifest GenerateSyntheticCorpus(const SyntheticCorpusSpec& spec, const std::string& out_dir,
                                        const FeatureTable& table, const AudioConfig& audio) {
  spec.Validate();
  const fs::path root(out_dir);
  EnsureDir(root / "wavs");
  EnsureDir(root / "durations");

  const auto& train = TrainingSentences();
  const auto& held = HeldoutSentences();
  std::vector<GenerationJob> jobs;
  auto add = [&](std::vector<UtteranceRecord>* list, const std::string& id,
                 const std::string& text, int speaker, const std::string& label, bool labeled) {
    UtteranceRecord r;
    r.id = id;
    r.audio_path = "wavs/" + id + ".wav";
    r.transcript = text;
    r.speaker_id = speaker;
    if (labeled) r.emotion = label;
    r.durations_path = "durations/" + id + ".txt";
    list->push_back(r);
    jobs.push_back({r, speaker, &spec.Signature(label)});
  };

  DatasetManifest m;
  for (int s = 0; s < spec.num_speakers; ++s) {
    for (int l = 0; l < spec.labels.size(); ++l) {
      const std::string& label = spec.labels.labels[static_cast<size_t>(l)];
      for (int k = 0; k < spec.utterances_per_emotion; ++k) {
        const size_t idx = static_cast<size_t>(k + 7 * l + 3 * s) % train.size();
        add(&m.labeled, "spk" + std::to_string(s) + "_" + label + "_" + Pad(k, 3),
            train[idx], s, label, true);
      }
    }
  }
  for (int k = 0; k < spec.unlabeled_utterances; ++k) {
    const int s = k % spec.num_speakers;
    add(&m.unlabeled, "spk" + std::to_string(s) + "_unl_" + Pad(k, 3),
        train[static_cast<size_t>(k) % train.size()], s, "neutral", false);
  }
  for (int s = 0; s < spec.num_speakers; ++s) {
    for (int l = 0; l < spec.labels.size(); ++l) {
      const std::string& label = spec.labels.labels[static_cast<size_t>(l)];
      for (int k = 0; k < spec.heldout_per_emotion; ++k) {
        const size_t idx = static_cast<size_t>(k + l + s) % held.size();
        add(&m.heldout, "spk" + std::to_string(s) + "_" + label + "_ho" + Pad(k, 2),
            held[idx], s, label, true);
      }
    }
  }

  const FallbackPhonemizer phonemizer;
  ParallelFor(static_cast<int64_t>(jobs.size()), NumWorkers(), [&](int64_t i) {
    const GenerationJob& job = jobs[static_cast<size_t>(i)];
    Rng rng(MixSeed(spec.seed, Fnv1a64(job.record.id)));
    const PhonemeSequence phonemes = TextToPhonemes(job.record.transcript, phonemizer, table);
    const std::vector<int64_t> durations = SampleDurations(phonemes, table, rng);
    const Waveform wav = RenderUtterance(phonemes, durations, table,
                                         spec.voices[static_cast<size_t>(job.speaker)],
                                         *job.signature, audio, rng);
    WriteWav((root / job.record.audio_path).string(), wav);
    WriteDurations((root / *job.record.durations_path).string(), durations);
  });

  m.labeled_path = (root / "labeled.tsv").string();
  m.unlabeled_path = (root / "unlabeled.tsv").string();
  m.heldout_path = (root / "heldout.tsv").string();
  SaveManifest(m.labeled_path, m.labeled);
  SaveManifest(m.unlabeled_path, m.unlabeled);
  SaveManifest(m.heldout_path, m.heldout);
  return m;
}

DatasetManifest LoadCorpus(const std::string& corpus_dir, const EmotionLabelSet& labels) {
  const fs::path root(corpus_dir);
  DatasetManifest m;
  m.labeled_path = (root / "labeled.tsv").string();
  m.unlabeled_path = (root / "unlabeled.tsv").string();
  m.heldout_path = (root / "heldout.tsv").string();
  m.labeled = LoadManifest(m.labeled_path, labels);
  m.unlabeled = LoadManifest(m.unlabeled_path, labels);
  m.heldout = LoadManifest(m.heldout_path, labels);
  return m;
}

std::vector<RawUtterance> ExtractUtterances(const std::vector<UtteranceRecord>& records,
                                            const std::string& manifest_path,
                                            const FeatureTable& table,
                                            const PhonemizerBackend& phonemizer,
                                            const AudioConfig& audio, int workers) {
  std::vector<RawUtterance> out(records.size());
  ParallelFor(static_cast<int64_t>(records.size()), workers, [&](int64_t i) {
    const UtteranceRecord& r = records[static_cast<size_t>(i)];
    RawUtterance& u = out[static_cast<size_t>(i)];
    u.record = r;
    u.phonemes = TextToPhonemes(r.transcript, phonemizer, table);
    if (!r.durations_path) {
      throw Error(ErrorKind::kDurationMismatch, r.id + ": no durations file");
    }
    u.durations = ReadDurations(ResolveRelative(manifest_path, *r.durations_path));
    if (u.durations.size() != u.phonemes.symbols.size()) {
      throw Error(ErrorKind::kDurationMismatch,
                  r.id + ": " + std::to_string(u.durations.size()) + " durations for " +
                      std::to_string(u.phonemes.symbols.size()) + " phonemes");
    }
    u.acoustic = ExtractAcousticFeatures(ReadWav(ResolveRelative(manifest_path, r.audio_path)),
                                         audio);
    int64_t frames = 0;
    for (int64_t d : u.durations) frames += d;
    if (frames != u.acoustic.mel.num_frames()) {
      throw Error(ErrorKind::kDurationMismatch,
                  r.id + ": durations sum to " + std::to_string(frames) + " but audio has " +
                      std::to_string(u.acoustic.mel.num_frames()) + " frames");
    }
  });
  return out;
}

FeatureStats ComputeFeatureStats(const std::vector<RawUtterance>& utterances) {
  std::map<int64_t, std::pair<double, double>> sums;  // sum, sum of squares
  std::map<int64_t, int64_t> counts;
  double e_sum = 0.0, e_sq = 0.0;
  int64_t e_count = 0;
  for (const auto& u : utterances) {
    const int64_t spk = u.record.speaker_id;
    for (float f : u.acoustic.f0) {
      if (f <= 0.0f) continue;
      const double l = std::log(static_cast<double>(f));
      sums[spk].first += l;
      sums[spk].second += l * l;
      ++counts[spk];
    }
    for (float e : u.acoustic.energy) {
      e_sum += e;
      e_sq += static_cast<double>(e) * e;
      ++e_count;
    }
  }
  FeatureStats stats;
  for (const auto& [spk, s] : sums) {
    const double n = static_cast<double>(counts[spk]);
    const double mean = s.first / n;
    const double var = std::max(s.second / n - mean * mean, 0.0);
    stats.log_f0[spk] = {mean, std::max(std::sqrt(var), 1e-3)};
  }
  if (e_count > 0) {
    stats.energy_mean = e_sum / static_cast<double>(e_count);
    const double var = std::max(e_sq / static_cast<double>(e_count) -
                                    stats.energy_mean * stats.energy_mean, 0.0);
    stats.energy_std = std::max(std::sqrt(var), 1e-3);
  }
  return stats;
}

PreparedUtterance PrepareUtterance(const RawUtterance& raw, const FeatureStats& stats,
                                   const FeatureTable& table) {
  PreparedUtterance p;
  p.id = raw.record.id;
  p.transcript = raw.record.transcript;
  p.speaker_id = raw.record.speaker_id;
  p.emotion = raw.record.emotion;
  p.features = PhonemesToFeatures(raw.phonemes, table).values;
  p.durations = raw.durations;
  p.mel = raw.acoustic.mel;
  auto f0_it = stats.log_f0.find(raw.record.speaker_id);
  const std::pair<double, double> f0_stats =
      f0_it == stats.log_f0.end() ? std::make_pair(0.0, 1.0) : f0_it->second;
  size_t frame = 0;
  for (int64_t d : raw.durations) {
    double f0_sum = 0.0, e_sum = 0.0;
    int64_t voiced = 0;
    for (int64_t j = 0; j < d; ++j, ++frame) {
      const float f0 = raw.acoustic.f0[frame];
      if (f0 > 0.0f) {
        f0_sum += (std::log(static_cast<double>(f0)) - f0_stats.first) / f0_stats.second;
        ++voiced;
      }
      e_sum += (raw.acoustic.energy[frame] - stats.energy_mean) / stats.energy_std;
    }
    p.pitch.push_back(voiced > 0 ? static_cast<float>(f0_sum / static_cast<double>(voiced)) : 0.0f);
    p.energy.push_back(d > 0 ? static_cast<float>(e_sum / static_cast<double>(d)) : 0.0f);
  }
  return p;
}

PreparedCorpus PrepareCorpus(const DatasetManifest& manifest, const FeatureTable& table,
                             const PhonemizerBackend& phonemizer, const AudioConfig& audio,
                             int workers) {
  auto labeled = ExtractUtterances(manifest.labeled, manifest.labeled_path, table, phonemizer,
                                   audio, workers);
  auto unlabeled = ExtractUtterances(manifest.unlabeled, manifest.unlabeled_path, table,
                                     phonemizer, audio, workers);
  auto heldout = ExtractUtterances(manifest.heldout, manifest.heldout_path, table, phonemizer,
                                   audio, workers);
  std::vector<RawUtterance> training = labeled;
  training.insert(training.end(), unlabeled.begin(), unlabeled.end());
  PreparedCorpus out;
  out.stats = ComputeFeatureStats(training);
  for (const auto& r : labeled) out.labeled.push_back(PrepareUtterance(r, out.stats, table));
  for (const auto& r : unlabeled) out.unlabeled.push_back(PrepareUtterance(r, out.stats, table));
  for (const auto& r : heldout) out.heldout.push_back(PrepareUtterance(r, out.stats, table));
  return out;
}

namespace {

nlohmann::json DescribeSet(const std::vector<PreparedUtterance>& set, const std::string& name,
                           CheckpointFile& file) {
  nlohmann::json list = nlohmann::json::array();
  for (const auto& u : set) {
    nlohmann::json j{{"id", u.id},
                     {"transcript", u.transcript},
                     {"speaker_id", u.speaker_id},
                     {"durations", u.durations},
                     {"sample_rate", u.mel.sample_rate},
                     {"hop_length", u.mel.hop_length}};
    j["emotion"] = u.emotion ? nlohmann::json(*u.emotion) : nlohmann::json(nullptr);
    list.push_back(j);
    const std::string prefix = name + "/" + u.id + "/";
    file.tensors.emplace_back(prefix + "features", u.features);
    file.tensors.emplace_back(prefix + "mel", u.mel.values);
    file.tensors.emplace_back(prefix + "pitch", torch::tensor(u.pitch));
    file.tensors.emplace_back(prefix + "energy", torch::tensor(u.energy));
  }
  return list;
}

std::vector<PreparedUtterance> LoadSet(const CheckpointFile& file, const std::string& name) {
  std::vector<PreparedUtterance> out;
  for (const auto& j : file.header.at("sets").at(name)) {
    PreparedUtterance u;
    u.id = j.at("id").get<std::string>();
    u.transcript = j.at("transcript").get<std::string>();
    u.speaker_id = j.at("speaker_id").get<int64_t>();
    if (!j.at("emotion").is_null()) u.emotion = j.at("emotion").get<std::string>();
    u.durations = j.at("durations").get<std::vector<int64_t>>();
    const std::string prefix = name + "/" + u.id + "/";
    u.features = file.Get(prefix + "features");
    u.mel.values = file.Get(prefix + "mel");
    u.mel.sample_rate = j.at("sample_rate").get<int>();
    u.mel.hop_length = j.at("hop_length").get<int>();
    auto pitch = file.Get(prefix + "pitch").contiguous();
    auto energy = file.Get(prefix + "energy").contiguous();
    u.pitch.assign(pitch.data_ptr<float>(), pitch.data_ptr<float>() + pitch.numel());
    u.energy.assign(energy.data_ptr<float>(), energy.data_ptr<float>() + energy.numel());
    if (u.pitch.size() != u.durations.size() || u.energy.size() != u.durations.size() ||
        u.features.size(0) != static_cast<int64_t>(u.durations.size())) {
      throw Error(ErrorKind::kFormatError, u.id + ": inconsistent prepared utterance");
    }
    out.push_back(std::move(u));
  }
  return out;
}

}  // namespace

void WritePreparedCorpus(const std::string& path, const PreparedCorpus& corpus) {
  CheckpointFile file;
  file.header["kind"] = "prepared_corpus";
  nlohmann::json f0 = nlohmann::json::array();
  for (const auto& [spk, s] : corpus.stats.log_f0) f0.push_back({spk, s.first, s.second});
  file.header["stats"] = {{"log_f0", f0},
                          {"energy_mean", corpus.stats.energy_mean},
                          {"energy_std", corpus.stats.energy_std}};
  file.header["sets"]["labeled"] = DescribeSet(corpus.labeled, "labeled", file);
  file.header["sets"]["unlabeled"] = DescribeSet(corpus.unlabeled, "unlabeled", file);
  file.header["sets"]["heldout"] = DescribeSet(corpus.heldout, "heldout", file);
  WriteCheckpoint(path, file);
}

PreparedCorpus ReadPreparedCorpus(const std::string& path) {
  const CheckpointFile file = ReadCheckpoint(path);
  if (file.header.value("kind", "") != "prepared_corpus") {
    throw Error(ErrorKind::kFormatError, path + " is not a prepared corpus");
  }
  PreparedCorpus out;
  for (const auto& row : file.header.at("stats").at("log_f0")) {
    out.stats.log_f0[row.at(0).get<int64_t>()] = {row.at(1).get<double>(), row.at(2).get<double>()};
  }
  out.stats.energy_mean = file.header.at("stats").at("energy_mean").get<double>();
  out.stats.energy_std = file.header.at("stats").at("energy_std").get<double>();
  out.labeled = LoadSet(file, "labeled");
  out.unlabeled = LoadSet(file, "unlabeled");
  out.heldout = LoadSet(file, "heldout");
  return out;
}

int NumWorkers() {
  if (const char* env = std::getenv("PROMPTED_TTS_NUM_WORKERS")) {
    const int v = std::atoi(env);
    if (v > 0) return v;
  }
  return static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
}

}  // namespace prompted_tts
