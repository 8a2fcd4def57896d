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

#include "prompted_tts/audio.h"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include "prompted_tts/error.h"
#include "prompted_tts/random.h"

namespace prompted_tts {

namespace {

void PutU32(std::vector<uint8_t>& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<uint8_t>(v >> (8 * i)));
}

void PutU16(std::vector<uint8_t>& out, uint16_t v) {
  out.push_back(static_cast<uint8_t>(v));
  out.push_back(static_cast<uint8_t>(v >> 8));
}

uint32_t GetU32(const std::vector<uint8_t>& b, size_t pos) {
  return b[pos] | (b[pos + 1] << 8) | (b[pos + 2] << 16) |
         (static_cast<uint32_t>(b[pos + 3]) << 24);
}

uint16_t GetU16(const std::vector<uint8_t>& b, size_t pos) {
  return static_cast<uint16_t>(b[pos] | (b[pos + 1] << 8));
}

double HzToMel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double MelToHz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

torch::Tensor HannWindow(int n) {
  return torch::hann_window(n, /*periodic=*/true, torch::kFloat64);
}

// [T, window] frames of the signal, no centering.
torch::Tensor Frames(const torch::Tensor& signal, const AudioConfig& config) {
  return signal.unfold(0, config.window, config.hop);
}

torch::Tensor ToTensor(const std::vector<float>& samples) {
  return torch::from_blob(const_cast<float*>(samples.data()),
                          {static_cast<int64_t>(samples.size())}, torch::kFloat32)
      .to(torch::kFloat64);
}

torch::Tensor Stft(const torch::Tensor& signal, const AudioConfig& config) {
  return torch::fft::rfft(Frames(signal, config) * HannWindow(config.window), c10::nullopt,
                          1);
}

// Weighted overlap-add inverse of Stft for a signal of `length` samples.
torch::Tensor Istft(const torch::Tensor& spec, const AudioConfig& config, int64_t length) {
  auto window = HannWindow(config.window);
  auto frames = torch::fft::irfft(spec, config.window, 1) * window;
  auto out = torch::zeros({length}, torch::kFloat64);
  auto norm = torch::zeros({length}, torch::kFloat64);
  auto window_sq = window * window;
  for (int64_t t = 0; t < frames.size(0); ++t) {
    const int64_t start = t * config.hop;
    out.slice(0, start, start + config.window) += frames[t];
    norm.slice(0, start, start + config.window) += window_sq;
  }
  return out / norm.clamp_min(1e-8);
}

}  // namespace

std::vector<uint8_t> EncodeWav(const Waveform& wav) {
  const uint32_t data_bytes = static_cast<uint32_t>(wav.samples.size() * 2);
  std::vector<uint8_t> out;
  out.reserve(44 + data_bytes);
  for (char c : std::string("RIFF")) out.push_back(c);
  PutU32(out, 36 + data_bytes);
  for (char c : std::string("WAVEfmt ")) out.push_back(c);
  PutU32(out, 16);
  PutU16(out, 1);  // PCM
  PutU16(out, 1);  // mono
  PutU32(out, static_cast<uint32_t>(wav.sample_rate));
  PutU32(out, static_cast<uint32_t>(wav.sample_rate * 2));
  PutU16(out, 2);
  PutU16(out, 16);
  for (char c : std::string("data")) out.push_back(c);
  PutU32(out, data_bytes);
  for (float s : wav.samples) {
    const float clipped = std::clamp(s, -1.0f, 1.0f);
    const auto v = static_cast<int16_t>(std::lround(clipped * 32767.0f));
    PutU16(out, static_cast<uint16_t>(v));
  }
  return out;
}

void WriteWav(const std::string& path, const Waveform& wav) {
  const auto bytes = EncodeWav(wav);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::kIoError, "cannot write " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorKind::kIoError, "short write to " + path);
}

Waveform ReadWav(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIoError, "cannot open " + path);
  std::vector<uint8_t> b((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (b.size() < 12 || std::memcmp(b.data(), "RIFF", 4) != 0 ||
      std::memcmp(b.data() + 8, "WAVE", 4) != 0) {
    throw Error(ErrorKind::kFormatError, path + ": not a RIFF/WAVE file");
  }
  Waveform wav;
  bool have_fmt = false;
  size_t pos = 12;
  while (pos + 8 <= b.size()) {
    const uint32_t size = GetU32(b, pos + 4);
    const size_t body = pos + 8;
    if (body + size > b.size()) throw Error(ErrorKind::kTruncatedFile, path);
    if (std::memcmp(b.data() + pos, "fmt ", 4) == 0) {
      if (size < 16 || GetU16(b, body) != 1 || GetU16(b, body + 2) != 1 ||
          GetU16(b, body + 14) != 16) {
        throw Error(ErrorKind::kFormatError, path + ": expected 16-bit mono PCM");
      }
      wav.sample_rate = static_cast<int>(GetU32(b, body + 4));
      have_fmt = true;
    } else if (std::memcmp(b.data() + pos, "data", 4) == 0) {
      if (!have_fmt) throw Error(ErrorKind::kFormatError, path + ": data before fmt");
      wav.samples.resize(size / 2);
      for (size_t i = 0; i < wav.samples.size(); ++i) {
        wav.samples[i] = static_cast<int16_t>(GetU16(b, body + 2 * i)) / 32767.0f;
      }
      return wav;
    }
    pos = body + size + (size & 1);
  }
  throw Error(ErrorKind::kFormatError, path + ": no data chunk");
}

int64_t NumFrames(int64_t num_samples, const AudioConfig& config) {
  if (num_samples < config.window) return 0;
  return (num_samples - config.window) / config.hop + 1;
}

int64_t NumSamplesForFrames(int64_t frames, const AudioConfig& config) {
  return (frames - 1) * config.hop + config.window;
}

std::vector<double> MelBinCenters(const AudioConfig& config) {
  const double mel_lo = HzToMel(config.f_min);
  const double mel_hi = HzToMel(config.f_max);
  std::vector<double> centers(config.n_mels);
  for (int m = 0; m < config.n_mels; ++m) {
    centers[m] = MelToHz(mel_lo + (mel_hi - mel_lo) * (m + 1) / (config.n_mels + 1));
  }
  return centers;
}

torch::Tensor MelFilterbank(const AudioConfig& config) {
  const int64_t bins = config.window / 2 + 1;
  auto fb = torch::zeros({config.n_mels, bins}, torch::kFloat64);
  auto acc = fb.accessor<double, 2>();
  const double mel_lo = HzToMel(config.f_min);
  const double mel_hi = HzToMel(config.f_max);
  std::vector<double> edges(config.n_mels + 2);
  for (int i = 0; i < config.n_mels + 2; ++i) {
    edges[i] = MelToHz(mel_lo + (mel_hi - mel_lo) * i / (config.n_mels + 1));
  }
  for (int m = 0; m < config.n_mels; ++m) {
    const double lo = edges[m], center = edges[m + 1], hi = edges[m + 2];
    for (int64_t k = 0; k < bins; ++k) {
      const double f = static_cast<double>(k) * config.sample_rate / config.window;
      double w = 0.0;
      if (f > lo && f <= center) w = (f - lo) / (center - lo);
      else if (f > center && f < hi) w = (hi - f) / (hi - center);
      acc[m][k] = w;
    }
  }
  return fb;
}

torch::Tensor MagnitudeSpectrogram(const std::vector<float>& samples,
                                   const AudioConfig& config) {
  if (NumFrames(static_cast<int64_t>(samples.size()), config) == 0) {
    return torch::zeros({0, config.window / 2 + 1}, torch::kFloat64);
  }
  return Stft(ToTensor(samples), config).abs();
}

MelSpectrogram LogMelSpectrogram(const std::vector<float>& samples,
                                 const AudioConfig& config) {
  auto mag = MagnitudeSpectrogram(samples, config);
  auto mel = torch::matmul(mag, MelFilterbank(config).t());
  MelSpectrogram out;
  out.values = torch::log(mel.clamp_min(config.mel_floor)).to(torch::kFloat32);
  out.sample_rate = config.sample_rate;
  out.hop_length = config.hop;
  return out;
}

std::vector<float> TrackF0(const std::vector<float>& samples, const AudioConfig& config) {
  const int64_t frames = NumFrames(static_cast<int64_t>(samples.size()), config);
  std::vector<float> f0(frames, 0.0f);
  if (frames == 0) return f0;
  const int n = config.window;
  auto window = HannWindow(n);
  auto x = Frames(ToTensor(samples), config);
  auto rms = x.pow(2).mean(1).sqrt();
  x = (x - x.mean(1, true)) * window;
  // Autocorrelation via zero-padded FFT, corrected for the window's own.
  auto power = torch::fft::rfft(x, 2 * n, 1).abs().pow(2);
  auto r = torch::fft::irfft(power, 2 * n, 1).slice(1, 0, n);
  auto rw = torch::fft::irfft(torch::fft::rfft(window, 2 * n).abs().pow(2), 2 * n)
                .slice(0, 0, n);
  r = r / r.select(1, 0).clamp_min(1e-12).unsqueeze(1);
  r = r / (rw / rw[0]).clamp_min(1e-3);
  auto acc = r.accessor<double, 2>();
  auto rms_acc = rms.accessor<double, 1>();

  const int min_lag = std::max(2, static_cast<int>(std::floor(config.sample_rate / config.f0_max)));
  const int max_lag =
      std::min(n / 2, static_cast<int>(std::ceil(config.sample_rate / config.f0_min)));
  for (int64_t t = 0; t < frames; ++t) {
    if (rms_acc[t] < config.silence_rms) continue;
    double best = -1.0;
    for (int lag = min_lag; lag <= max_lag; ++lag) best = std::max(best, acc[t][lag]);
    if (best < config.voicing_threshold) continue;
    // Smallest-lag local peak close to the global maximum avoids octave drops.
    int chosen = -1;
    for (int lag = min_lag; lag <= max_lag; ++lag) {
      const double v = acc[t][lag];
      if (v >= 0.9 * best && v >= acc[t][lag - 1] && v >= acc[t][lag + 1]) {
        chosen = lag;
        break;
      }
    }
    if (chosen < 0) continue;
    const double a = acc[t][chosen - 1], b = acc[t][chosen], c = acc[t][chosen + 1];
    const double denom = a - 2 * b + c;
    const double offset = std::abs(denom) > 1e-12 ? 0.5 * (a - c) / denom : 0.0;
    f0[t] = static_cast<float>(config.sample_rate / (chosen + std::clamp(offset, -0.5, 0.5)));
  }
  return f0;
}

std::vector<float> FrameLogEnergy(const std::vector<float>& samples,
                                  const AudioConfig& config) {
  const int64_t frames = NumFrames(static_cast<int64_t>(samples.size()), config);
  std::vector<float> energy(frames);
  if (frames == 0) return energy;
  auto rms = Frames(ToTensor(samples), config).pow(2).mean(1).sqrt();
  auto acc = rms.accessor<double, 1>();
  for (int64_t t = 0; t < frames; ++t) {
    energy[t] = static_cast<float>(std::log(std::max(acc[t], config.mel_floor)));
  }
  return energy;
}

AcousticFeatures ExtractAcousticFeatures(const Waveform& audio, const AudioConfig& config) {
  if (audio.sample_rate != config.sample_rate) {
    throw Error(ErrorKind::kSampleRateMismatch,
                "audio at " + std::to_string(audio.sample_rate) + " Hz, expected " +
                    std::to_string(config.sample_rate));
  }
  if (NumFrames(static_cast<int64_t>(audio.samples.size()), config) == 0) {
    throw Error(ErrorKind::kInputTooShort, "audio shorter than one analysis window");
  }
  return {LogMelSpectrogram(audio.samples, config), TrackF0(audio.samples, config),
          FrameLogEnergy(audio.samples, config)};
}

Waveform MelToWaveform(const MelSpectrogram& mel, const AudioConfig& config,
                       int iterations, uint64_t seed) {
  if (mel.values.dim() != 2 || mel.values.size(1) != config.n_mels ||
      mel.values.size(0) < 1) {
    throw Error(ErrorKind::kShapeMismatch, "mel must be [T >= 1, n_mels]");
  }
  const int64_t frames = mel.values.size(0);
  const int64_t length = NumSamplesForFrames(frames, config);
  auto fb_pinv = torch::linalg_pinv(MelFilterbank(config));
  auto magnitude =
      torch::matmul(torch::exp(mel.values.to(torch::kFloat64)), fb_pinv.t()).clamp_min(0.0);

  Rng rng(MixSeed(seed, 0x61f));
  auto phase = torch::empty(magnitude.sizes(), torch::kFloat64);
  auto phase_acc = phase.accessor<double, 2>();
  for (int64_t t = 0; t < phase.size(0); ++t) {
    for (int64_t k = 0; k < phase.size(1); ++k) phase_acc[t][k] = 2.0 * M_PI * Uniform01(rng);
  }
  auto spec = torch::polar(magnitude, phase);
  auto signal = Istft(spec, config, length);
  for (int i = 0; i < iterations; ++i) {
    auto rebuilt = Stft(signal, config);
    spec = magnitude * torch::exp(torch::complex(torch::zeros_like(magnitude),
                                                 torch::angle(rebuilt)));
    signal = Istft(spec, config, length);
  }
  // Frame t is taken to span the hop centred in its analysis window.
  const int64_t offset = (config.window - config.hop) / 2;
  auto cropped = signal.slice(0, offset, offset + frames * config.hop).to(torch::kFloat32);
  Waveform out;
  out.sample_rate = config.sample_rate;
  out.samples.assign(cropped.data_ptr<float>(), cropped.data_ptr<float>() + cropped.numel());
  return out;
}

}  // namespace prompted_tts
