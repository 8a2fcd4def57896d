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


#include <cmath>
#include <vector>

#include "doctest.h"
#include "prompted_tts/audio.h"
#include "prompted_tts/error.h"
#include "test_util.h"

namespace prompted_tts {
namespace {

std::vector<float> Sine(double hz, double seconds, double amplitude, int rate = 16000) {
  std::vector<float> out(static_cast<size_t>(seconds * rate));
  for (size_t i = 0; i < out.size(); ++i) {
    out[i] = static_cast<float>(amplitude * std::sin(2.0 * M_PI * hz * i / rate));
  }
  return out;
}

double Rms(const std::vector<float>& x) {
  double s = 0.0;
  for (float v : x) s += static_cast<double>(v) * v;
  return std::sqrt(s / std::max<size_t>(x.size(), 1));
}

// Bin of the largest time-averaged STFT magnitude.
int64_t DominantBin(const std::vector<float>& samples, const AudioConfig& audio) {
  return MagnitudeSpectrogram(samples, audio).mean(0).argmax().item<int64_t>();
}

TEST_SUITE("audio") {

TEST_CASE("frame geometry") {
  AudioConfig audio;
  CHECK(NumFrames(1023, audio) == 0);
  CHECK(NumFrames(1024, audio) == 1);
  CHECK(NumFrames(1024 + 255, audio) == 1);
  CHECK(NumFrames(1024 + 256, audio) == 2);
  for (int64_t t : {1, 7, 100}) CHECK(NumFrames(NumSamplesForFrames(t, audio), audio) == t);
}

TEST_CASE("wav round trip quantizes to 16 bits") {
  testing::TempDir dir("wav");
  Waveform wav;
  wav.samples = Sine(300, 0.1, 0.5);
  WriteWav(dir.File("a.wav"), wav);
  const Waveform back = ReadWav(dir.File("a.wav"));
  REQUIRE(back.samples.size() == wav.samples.size());
  CHECK(back.sample_rate == 16000);
  for (size_t i = 0; i < wav.samples.size(); ++i) {
    CHECK(std::abs(back.samples[i] - wav.samples[i]) <= 1.0f / 32767.0f);
  }
  CHECK(EncodeWav(wav).size() == 44 + 2 * wav.samples.size());
  CHECK_THROWS_AS(ReadWav(dir.File("missing.wav")), Error);
}

TEST_CASE("mel filterbank covers every bin") {
  AudioConfig audio;
  const auto fb = MelFilterbank(audio);
  CHECK(fb.sizes() == torch::IntArrayRef{80, 513});
  CHECK(fb.min().item<double>() >= 0.0);
  CHECK(fb.sum(1).min().item<double>() > 0.0);
  const auto centers = MelBinCenters(audio);
  for (size_t i = 1; i < centers.size(); ++i) CHECK(centers[i] > centers[i - 1]);
}

TEST_CASE("log mel of silence sits at the floor") {
  AudioConfig audio;
  const auto mel = LogMelSpectrogram(std::vector<float>(4096, 0.0f), audio);
  CHECK(mel.num_frames() == NumFrames(4096, audio));
  CHECK(mel.values.max().item<float>() == doctest::Approx(std::log(audio.mel_floor)));
}

TEST_CASE("pitch tracker finds a sine's frequency") {
  AudioConfig audio;
  for (double hz : {110.0, 200.0, 330.0}) {
    const auto f0 = TrackF0(Sine(hz, 0.5, 0.3), audio);
    int voiced = 0;
    for (float f : f0) {
      if (f > 0) {
        ++voiced;
        CHECK(std::abs(f - hz) < 0.02 * hz);
      }
    }
    CHECK(voiced == static_cast<int>(f0.size()));
  }
  for (float f : TrackF0(std::vector<float>(8000, 0.0f), audio)) CHECK(f == 0.0f);
}

TEST_CASE("extraction rejects a foreign sample rate") {
  AudioConfig audio;
  Waveform wav;
  wav.samples = Sine(200, 0.2, 0.3, 22050);
  wav.sample_rate = 22050;
  try {
    ExtractAcousticFeatures(wav, audio);
    FAIL("expected SampleRateMismatch");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kSampleRateMismatch);
  }
}

TEST_CASE("griffin-lim of a floor mel is near silence") {
  AudioConfig audio;
  MelSpectrogram mel;
  mel.values = torch::full({40, 80}, static_cast<float>(std::log(audio.mel_floor)));
  const auto wav = MelToWaveform(mel, audio, 16);
  CHECK(wav.samples.size() == 40 * 256);
  CHECK(Rms(wav.samples) < 1e-3);
}

TEST_CASE("griffin-lim keeps a 440 Hz sine at 440 Hz") {
  AudioConfig audio;
  const auto mel = LogMelSpectrogram(Sine(440, 1.0, 0.5), audio);
  const auto wav = MelToWaveform(mel, audio, 32);
  CHECK(std::abs(static_cast<int64_t>(wav.samples.size()) - mel.num_frames() * audio.hop) <=
        audio.hop);
  const double bin_hz = static_cast<double>(audio.sample_rate) / audio.window;
  const double peak_hz = DominantBin(wav.samples, audio) * bin_hz;
  INFO("peak at " << peak_hz << " Hz");
  CHECK(std::abs(peak_hz - 440.0) <= bin_hz);
}

TEST_CASE("griffin-lim is deterministic for a fixed seed") {
  AudioConfig audio;
  const auto mel = LogMelSpectrogram(Sine(250, 0.3, 0.4), audio);
  CHECK(MelToWaveform(mel, audio, 8, 3).samples == MelToWaveform(mel, audio, 8, 3).samples);
}

}  // TEST_SUITE

}  // namespace
}  // namespace prompted_tts
