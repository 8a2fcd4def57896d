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

#ifndef PROMPTED_TTS_AUDIO_H_
#define PROMPTED_TTS_AUDIO_H_

#include <cstdint>
#include <string>
#include <vector>

#include <torch/torch.h>

namespace prompted_tts {

struct AudioConfig {
  int sample_rate = 16000;
  int window = 1024;  // also the FFT size
  int hop = 256;
  int n_mels = 80;
  double f_min = 0.0;
  double f_max = 8000.0;
  double mel_floor = 1e-5;
  double f0_min = 60.0;
  double f0_max = 500.0;
  double voicing_threshold = 0.5;
  double silence_rms = 1e-3;
};

struct Waveform {
  std::vector<float> samples;  // mono, [-1, 1]
  int sample_rate = 16000;
};

// Log-amplitude mel energies, [T, M] float32.
struct MelSpectrogram {
  torch::Tensor values;
  int sample_rate = 16000;
  int hop_length = 256;

  int64_t num_frames() const { return values.size(0); }
  int64_t num_bins() const { return values.size(1); }
};

// 16-bit PCM mono WAV.
Waveform ReadWav(const std::string& path);
void WriteWav(const std::string& path, const Waveform& wav);
std::vector<uint8_t> EncodeWav(const Waveform& wav);

// floor((len - window) / hop) + 1, or 0 for inputs shorter than one window.
int64_t NumFrames(int64_t num_samples, const AudioConfig& config);
// Sample count whose analysis yields exactly `frames` frames.
int64_t NumSamplesForFrames(int64_t frames, const AudioConfig& config);

// Center frequency in Hz of each mel filter.
std::vector<double> MelBinCenters(const AudioConfig& config);

// Triangular HTK-mel filters, [n_mels, window / 2 + 1], float64.
torch::Tensor MelFilterbank(const AudioConfig& config);

// |STFT| with a periodic Hann window and no centering, [T, window / 2 + 1].
torch::Tensor MagnitudeSpectrogram(const std::vector<float>& samples,
                                   const AudioConfig& config);

MelSpectrogram LogMelSpectrogram(const std::vector<float>& samples,
                                 const AudioConfig& config);

// Autocorrelation pitch tracker; 0 marks unvoiced frames.
std::vector<float> TrackF0(const std::vector<float>& samples, const AudioConfig& config);

// log(max(frame RMS, mel_floor)) per analysis frame.
std::vector<float> FrameLogEnergy(const std::vector<float>& samples,
                                  const AudioConfig& config);

struct AcousticFeatures {
  MelSpectrogram mel;
  std::vector<float> f0;
  std::vector<float> energy;
};

// Throws SampleRateMismatch when the audio rate differs from the config.
AcousticFeatures ExtractAcousticFeatures(const Waveform& audio, const AudioConfig& config);

// Pseudo-inverse mel filterbank followed by Griffin-Lim phase reconstruction.
// Returns exactly T * hop samples.
Waveform MelToWaveform(const MelSpectrogram& mel, const AudioConfig& config,
                       int iterations = 32, uint64_t seed = 0);

}  // namespace prompted_tts

#endif  // PROMPTED_TTS_AUDIO_H_
