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


#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <vector>

#include <ATen/CPUGeneratorImpl.h>

#include "doctest.h"
#include "prompted_tts/acoustic_model.h"
#include "prompted_tts/error.h"
#include "prompted_tts/layers.h"
#include "test_util.h"

namespace prompted_tts {
namespace {

using testing::MaxModuleGradientError;
using testing::PerturbParameters;
using testing::TinyModelConfig;

ErrorKind KindOf(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an Error");
  return ErrorKind::kConfigError;
}

struct TinyInputs {
  torch::Tensor features, mask, cond;
};

TinyInputs MakeInputs(AcousticModel& model, int64_t n, uint64_t seed) {
  auto gen = at::detail::createCPUGenerator(seed);
  const auto& c = model->config();
  TinyInputs in;
  in.features = torch::rand({1, n, c.feature_dim}, gen);
  in.mask = torch::ones({1, n}, torch::kBool);
  in.cond = model->Condition(torch::randn({1, c.prompt_dim}, gen), torch::tensor({int64_t{0}}));
  return in;
}

TEST_SUITE("acoustic_model") {

TEST_CASE("config validation") {
  AcousticModelConfig c;
  c.Validate();
  c.heads = 3;
  CHECK(KindOf([&] { c.Validate(); }) == ErrorKind::kConfigError);
  c = AcousticModelConfig();
  c.flow_layers = 0;
  CHECK(KindOf([&] { c.Validate(); }) == ErrorKind::kConfigError);

  nlohmann::json j = AcousticModelConfig();
  CHECK(j.get<AcousticModelConfig>().hidden == 64);
  j["hiden"] = 3;
  CHECK(KindOf([&] { j.get<AcousticModelConfig>(); }) == ErrorKind::kConfigError);
}

TEST_CASE("frame averaging per phoneme") {
  CHECK(AverageFramesPerPhoneme({1, 3, 5, 7}, {2, 2}) == std::vector<float>{2.0f, 6.0f});
  CHECK(AverageFramesPerPhoneme({1, 3, 5, 7}, {4}) == std::vector<float>{4.0f});
  CHECK(AverageFramesPerPhoneme({1, 3}, {0, 2, 0}) == std::vector<float>{0.0f, 2.0f, 0.0f});
  CHECK(KindOf([] { AverageFramesPerPhoneme({1, 3, 5}, {2, 2}); }) ==
        ErrorKind::kDurationMismatch);
  CHECK(AverageFramesPerPhoneme({1, 100, 3}, {3}, {true, false, true}) ==
        std::vector<float>{2.0f});

  std::mt19937_64 rng(37);
  std::vector<float> frames(37);
  for (auto& f : frames) f = std::uniform_real_distribution<float>(-2, 2)(rng);
  // Nine random non-negative durations summing to 37.
  std::vector<int64_t> cuts = {0, 37};
  for (int i = 0; i < 8; ++i) cuts.push_back(std::uniform_int_distribution<int64_t>(0, 37)(rng));
  std::sort(cuts.begin(), cuts.end());
  std::vector<int64_t> durations;
  for (size_t i = 1; i < cuts.size(); ++i) durations.push_back(cuts[i] - cuts[i - 1]);
  const auto out = AverageFramesPerPhoneme(frames, durations);
  for (size_t i = 0; i < durations.size(); ++i) {
    double sum = 0.0;
    for (int64_t t = cuts[i]; t < cuts[i + 1]; ++t) sum += frames[t];
    const double expected = durations[i] ? sum / durations[i] : 0.0;
    CHECK(out[i] == doctest::Approx(expected).epsilon(1e-6));
  }
}

TEST_CASE("length regulation") {
  const auto hidden = torch::arange(6, torch::kFloat32).reshape({3, 2});
  CHECK(LengthRegulate(hidden, torch::tensor({2, 1, 3}, torch::kLong)).size(0) == 6);
  CHECK(torch::equal(LengthRegulate(hidden, torch::ones({3}, torch::kLong)), hidden));
  const auto skip = LengthRegulate(hidden.slice(0, 0, 2), torch::tensor({0, 2}, torch::kLong));
  CHECK(torch::equal(skip, torch::stack({hidden[1], hidden[1]})));
  CHECK(KindOf([&] { LengthRegulate(hidden, torch::zeros({3}, torch::kLong)); }) ==
        ErrorKind::kEmptyOutput);

  // Row multiset: row i appears exactly durations[i] times.
  const auto rows = torch::randn({5, 4});
  const std::vector<int64_t> d = {3, 0, 1, 4, 2};
  const auto out = LengthRegulate(rows, torch::tensor(d, torch::kLong));
  for (int64_t i = 0; i < 5; ++i) {
    int64_t count = 0;
    for (int64_t t = 0; t < out.size(0); ++t) count += torch::equal(out[t], rows[i]);
    CHECK(count == d[i]);
  }

  // Averaging regulated constants gives the constants back.
  const auto constants = torch::randn({5, 1});
  const auto regulated = LengthRegulate(constants, torch::tensor(d, torch::kLong)).reshape({-1});
  const std::vector<float> frames(regulated.data_ptr<float>(),
                                  regulated.data_ptr<float>() + regulated.numel());
  const auto back = AverageFramesPerPhoneme(frames, d);
  for (size_t i = 0; i < d.size(); ++i) {
    if (d[i] > 0) CHECK(back[i] == constants[i][0].item<float>());
  }
}

TEST_CASE("duration rounding and clamping") {
  const auto log_d = torch::log1p(torch::tensor({0.0, 0.4, 2.6, 500.0}));
  const auto d = DurationsFromLog(log_d, 75);
  CHECK(d.dtype() == torch::kLong);
  CHECK(torch::equal(d, torch::tensor({0, 0, 3, 75}, torch::kLong)));
  CHECK(DurationsFromLog(torch::tensor({-3.0}), 75).item<int64_t>() == 0);
}

TEST_CASE("encoder shapes, liveness and padding") {
  torch::manual_seed(1);
  AcousticModel model(TinyModelConfig());
  PerturbParameters(*model, 0.1, 2);
  auto in = MakeInputs(model, 1, 3);
  const auto one = model->Encode(in.features, in.cond, in.mask);
  CHECK(one.sizes() == torch::IntArrayRef{1, 1, 16});
  CHECK(torch::isfinite(one).all().item<bool>());

  in = MakeInputs(model, 7, 4);
  const auto a = model->Encode(in.features, in.cond, in.mask);
  const auto b = model->Encode(in.features, torch::randn_like(in.cond), in.mask);
  CHECK_FALSE(torch::equal(a, b));

  // Same item padded to length 11 next to a different item.
  auto other = MakeInputs(model, 11, 5);
  auto features = torch::cat({torch::constant_pad_nd(in.features, {0, 0, 0, 4}), other.features});
  auto mask = torch::cat({torch::constant_pad_nd(in.mask, {0, 4}), other.mask});
  auto cond = torch::cat({in.cond, other.cond});
  const auto batched = model->Encode(features, cond, mask);
  CHECK((batched[0].slice(0, 0, 7) - a[0]).abs().max().item<double>() < 1e-5);
  CHECK(batched[0].slice(0, 7).abs().max().item<double>() == 0.0);
  CHECK((batched[1] - model->Encode(other.features, other.cond, other.mask)[0])
            .abs().max().item<double>() < 1e-5);
  CHECK(KindOf([&] { model->Encode(in.features, in.cond, torch::ones({1, 6}, torch::kBool)); }) ==
        ErrorKind::kDimensionMismatch);
}

TEST_CASE("prosody predictors follow the prompt") {
  torch::manual_seed(1);
  AcousticModel model(TinyModelConfig());
  PerturbParameters(*model, 0.1, 6);
  auto in = MakeInputs(model, 9, 7);
  const auto hidden = model->Encode(in.features, in.cond, in.mask);
  const auto p = model->PredictProsody(hidden, in.cond, in.mask);
  for (const auto& t : {p.log_duration, p.pitch, p.energy}) {
    CHECK(t.sizes() == torch::IntArrayRef{1, 9});
  }

  const auto speaker = torch::tensor({int64_t{1}});
  const auto c1 = model->Condition(torch::randn({1, 12}), speaker);
  const auto c2 = model->Condition(torch::randn({1, 12}), speaker);
  CHECK_FALSE(torch::equal(model->PredictProsody(hidden, c1, in.mask).pitch,
                           model->PredictProsody(hidden, c2, in.mask).pitch));

  auto cond = in.cond.detach().clone().requires_grad_();
  const auto q = model->PredictProsody(hidden.detach(), cond, in.mask);
  for (const auto& head : {q.log_duration, q.pitch, q.energy}) {
    const auto g = torch::autograd::grad({head.sum()}, {cond}, {}, true)[0];
    CHECK(g.abs().max().item<double>() > 0.0);
  }
}

TEST_CASE("untrained duration head predicts the initial duration") {
  AcousticModel model(TinyModelConfig());
  auto in = MakeInputs(model, 5, 8);
  const auto hidden = model->Encode(in.features, in.cond, in.mask);
  const auto d = DurationsFromLog(model->PredictProsody(hidden, in.cond, in.mask).log_duration, 75);
  CHECK(d.min().item<int64_t>() >= 1);
}

TEST_CASE("decoder shapes, liveness and padding") {
  torch::manual_seed(1);
  AcousticModel model(TinyModelConfig());
  PerturbParameters(*model, 0.1, 9);
  auto gen = at::detail::createCPUGenerator(10);
  const auto durations = torch::tensor({{2, 0, 3, 1}}, torch::kLong);
  const auto frames = torch::randn({1, 6, 16}, gen);
  const auto pitch = torch::randn({1, 4}, gen);
  const auto energy = torch::randn({1, 4}, gen);
  const auto cond = torch::randn({1, 16}, gen);
  const auto fmask = torch::ones({1, 6}, torch::kBool);
  const auto mel = model->Decode(frames, pitch, energy, durations, cond, fmask);
  CHECK(mel.sizes() == torch::IntArrayRef{1, 6, 8});
  CHECK_FALSE(torch::equal(mel, model->Decode(frames, torch::zeros_like(pitch),
                                              torch::zeros_like(energy), durations, cond, fmask)));
  CHECK_FALSE(torch::equal(mel, model->Decode(frames, pitch, energy, durations,
                                              torch::randn_like(cond), fmask)));

  // Pad to 6 phonemes / 9 frames beside a second item.
  const auto d2 = torch::tensor({{1, 2, 1, 3, 1, 1}}, torch::kLong);
  const auto f2 = torch::randn({1, 9, 16}, gen);
  const auto batched = model->Decode(
      torch::cat({torch::constant_pad_nd(frames, {0, 0, 0, 3}), f2}),
      torch::cat({torch::constant_pad_nd(pitch, {0, 2}), torch::randn({1, 6}, gen)}),
      torch::cat({torch::constant_pad_nd(energy, {0, 2}), torch::randn({1, 6}, gen)}),
      torch::cat({torch::constant_pad_nd(durations, {0, 2}), d2}),
      torch::cat({cond, torch::randn({1, 16}, gen)}),
      torch::cat({torch::constant_pad_nd(fmask, {0, 3}), torch::ones({1, 9}, torch::kBool)}));
  CHECK((batched[0].slice(0, 0, 6) - mel[0]).abs().max().item<double>() < 1e-5);
  CHECK(batched[0].slice(0, 6).abs().max().item<double>() == 0.0);
  CHECK(KindOf([&] {
          model->Decode(frames, pitch, energy, torch::tensor({{2, 0, 3, 2}}, torch::kLong), cond,
                        fmask);
        }) == ErrorKind::kDimensionMismatch);
}

TEST_CASE("flow starts as the identity") {
  FlowPostNet flow(6, 3, 8);
  const auto coarse = torch::randn({1, 4, 6});
  const auto zeros = torch::zeros({1, 4, 6});
  const auto nll = flow->FrameNll(zeros, coarse);
  CHECK(nll.sizes() == torch::IntArrayRef{1, 4});
  for (int t = 0; t < 4; ++t) {
    CHECK(nll[0][t].item<double>() == doctest::Approx(3.0 * std::log(2.0 * M_PI)));
  }
  CHECK(FlowSample(flow, coarse, 0.0, 1).abs().max().item<double>() == 0.0);
  CHECK(KindOf([&] {
          FlowNll(flow, coarse, torch::zeros({1, 5, 6}), torch::ones({1, 4}, torch::kBool));
        }) == ErrorKind::kShapeMismatch);
}

TEST_CASE("flow inverts exactly with random weights") {
  torch::manual_seed(3);
  FlowPostNet flow(8, 4, 16);
  PerturbParameters(*flow, 0.2, 11);
  const auto coarse = torch::randn({2, 10, 8});
  const auto z = torch::randn({2, 10, 8});
  const auto x = flow->inverse(z, coarse);
  CHECK((flow->forward(x, coarse).first - z).abs().max().item<double>() < 1e-4);
}

TEST_CASE("flow likelihood fits a fixed target") {
  torch::manual_seed(4);
  FlowPostNet flow(8, 4, 16);
  const auto coarse = torch::randn({1, 16, 8});
  const auto target = coarse * 0.5 + 1.0;
  const auto mask = torch::ones({1, 16}, torch::kBool);
  torch::optim::Adam adam(flow->parameters(), 1e-2);
  const double first = FlowNll(flow, coarse, target, mask).item<double>();
  double last = first;
  for (int i = 0; i < 200; ++i) {
    adam.zero_grad();
    auto loss = FlowNll(flow, coarse, target, mask);
    loss.backward();
    adam.step();
    last = loss.item<double>();
  }
  CHECK(last < first - 1.0);
}

TEST_CASE("discriminator contract") {
  torch::manual_seed(5);
  auto disc = MakeDiscriminator(TinyModelConfig());
  const int64_t field = disc->receptive_field();
  CHECK(KindOf([&] { Discriminate(disc, torch::randn({1, field - 1, 8})); }) ==
        ErrorKind::kInputTooShort);
  const auto mel = torch::randn({2, 24, 8}).requires_grad_();
  const auto a = Discriminate(disc, mel);
  CHECK(a.sizes() == Discriminate(disc, torch::randn({2, 24, 8})).sizes());
  CHECK(torch::isfinite(a).all().item<bool>());
  a.sum().backward();
  CHECK(mel.grad().abs().max().item<double>() > 0.0);
}

TEST_CASE("discriminator learns to separate toy distributions") {
  torch::manual_seed(6);
  auto disc = MakeDiscriminator(TinyModelConfig());
  torch::optim::Adam adam(disc->parameters(), 1e-3);
  auto gen = at::detail::createCPUGenerator(12);
  auto real = [&] { return torch::randn({4, 16, 8}, gen) * 0.5 + 1.0; };
  auto fake = [&] { return torch::randn({4, 16, 8}, gen) * 0.5 - 1.0; };
  for (int i = 0; i < 500; ++i) {
    adam.zero_grad();
    auto loss = (Discriminate(disc, real()) - 1.0).pow(2).mean() +
                Discriminate(disc, fake()).pow(2).mean();
    loss.backward();
    adam.step();
  }
  torch::NoGradGuard no_grad;
  const double gap = Discriminate(disc, real()).mean().item<double>() -
                     Discriminate(disc, fake()).mean().item<double>();
  CHECK(gap > 0.5);
}

TEST_CASE("building-block gradients match finite differences") {
  torch::manual_seed(7);
  const auto f64 = torch::kFloat64;
  SUBCASE("feed forward") {
    FeedForward ff(6, 8);
    ff->to(f64);
    auto x = torch::randn({2, 3, 6}, f64).requires_grad_();
    const auto w = torch::randn({2, 3, 6}, f64);
    CHECK(MaxModuleGradientError(*ff, [&] { return (ff->forward(x) * w).sum(); }, {x}) < 1e-3);
  }
  SUBCASE("masked self-attention") {
    MultiHeadSelfAttention mhsa(6, 2);
    mhsa->to(f64);
    auto x = torch::randn({2, 4, 6}, f64).requires_grad_();
    const auto mask = torch::tensor({{true, true, true, false}, {true, true, true, true}});
    const auto w = torch::randn({2, 4, 6}, f64);
    auto loss = [&] { return (mhsa->forward(x, mask) * w).sum(); };
    CHECK(MaxModuleGradientError(*mhsa, loss, {x}) < 1e-3);
  }
  SUBCASE("convolution module") {
    ConvolutionModule conv(6, 3, 4);
    conv->to(f64);
    PerturbParameters(*conv, 0.1, 3);
    auto x = torch::randn({2, 5, 6}, f64).requires_grad_();
    auto c = torch::randn({2, 4}, f64).requires_grad_();
    const auto mask = torch::tensor({{true, true, true, true, false},
                                     {true, true, true, true, true}});
    const auto w = torch::randn({2, 5, 6}, f64);
    auto loss = [&] { return (conv->forward(x, c, mask) * w).sum(); };
    CHECK(MaxModuleGradientError(*conv, loss, {x, c}) < 1e-3);
  }
  SUBCASE("patch discriminator") {
    PatchDiscriminator disc(std::vector<int64_t>{3, 3});
    disc->to(f64);
    auto mel = torch::randn({1, 8, 6}, f64).requires_grad_();
    auto loss = [&] { return disc->forward(mel).pow(2).sum(); };
    CHECK(MaxModuleGradientError(*disc, loss, {mel}) < 1e-3);
  }
}

TEST_CASE("synthesis contract") {
  torch::manual_seed(8);
  static const FeatureTable table = FeatureTable::LoadDefault();
  static const FallbackPhonemizer phonemizer;
  static const StubPromptEncoder encoder(EmotionLexicon::LoadDefault(), 12, 0.1, 7);
  AcousticModelConfig config = TinyModelConfig();
  SynthesisContext context{AcousticModel(config), &table, &phonemizer, &encoder, AudioConfig()};
  context.audio.n_mels = 8;

  const auto r = Synthesize(context, "They will arrive tomorrow.", 1, "Oh, really?", 0.8, 4);
  int64_t total = 0;
  for (int64_t d : r.prosody.durations) total += d;
  CHECK(r.mel.num_frames() == total);
  CHECK(r.mel.num_bins() == 8);
  CHECK(torch::isfinite(r.mel.values).all().item<bool>());
  CHECK(r.prosody.pitch.size() == r.phonemes.symbols.size());

  const auto again = Synthesize(context, "They will arrive tomorrow.", 1, "Oh, really?", 0.8, 4);
  CHECK(torch::equal(r.mel.values, again.mel.values));
  CHECK(KindOf([&] { Synthesize(context, "hi", 2, "fine", 0.8, 0); }) ==
        ErrorKind::kUnknownSpeaker);
  CHECK(KindOf([&] { Synthesize(context, "", 0, "fine", 0.8, 0); }) == ErrorKind::kEmptyInput);
}

}  // TEST_SUITE

}  // namespace
}  // namespace prompted_tts
