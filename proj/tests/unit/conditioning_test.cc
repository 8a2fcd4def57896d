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
#include <sstream>
#include <vector>

#include <ATen/CPUGeneratorImpl.h>

#include "doctest.h"
#include "prompted_tts/conditioning.h"
#include "prompted_tts/error.h"
#include "test_util.h"

namespace prompted_tts {
namespace {

using testing::MaxModuleGradientError;
using testing::RandomProjection;

const EmotionLexicon& Lexicon() {
  static const EmotionLexicon lexicon = EmotionLexicon::LoadDefault();
  return lexicon;
}

double Distance(const std::vector<float>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

torch::Tensor PlainLayerNorm(const torch::Tensor& x) {
  const auto mean = x.mean(-1, true);
  const auto var = (x - mean).pow(2).mean(-1, true);
  return (x - mean) / torch::sqrt(var + kLayerNormEps);
}

TEST_SUITE("conditioning") {

TEST_CASE("stub encoder lands near its label centroid") {
  const double noise = 0.1;
  StubPromptEncoder encoder(Lexicon(), 32, noise, 5);
  const auto e = encoder.Embed("I am absolutely furious");
  CHECK(encoder.MatchLabel("I am absolutely furious") == "anger");
  CHECK(Distance(e, encoder.centroid("anger")) <= noise + 1e-6);
  for (const auto& label : Lexicon().labels()) {
    if (label != "anger") CHECK(Distance(e, encoder.centroid(label)) > 1.0);
  }
  CHECK(encoder.Embed("I am absolutely furious") == e);

  const auto plain = encoder.Embed("the train leaves from platform nine");
  CHECK(Distance(plain, encoder.centroid("neutral")) <= noise + 1e-6);
}

TEST_CASE("prompt embedding extraction validates input") {
  StubPromptEncoder encoder(Lexicon(), 16, 0.1, 5);
  const auto p = ExtractPromptEmbedding("so happy today", encoder);
  CHECK(p.values.size() == 16);
  CHECK_FALSE(p.source_text_hash.empty());
  CHECK_THROWS_AS(ExtractPromptEmbedding("   ", encoder), Error);

  struct Wrong : PromptEncoder {
    int64_t dim() const override { return 4; }
    std::vector<float> Embed(const std::string&) const override { return {1, 2}; }
  } wrong;
  try {
    ExtractPromptEmbedding("x", wrong);
    FAIL("expected DimensionMismatch");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kDimensionMismatch);
  }
}

TEST_CASE("lexicon classifier votes by keyword share") {
  LexiconTextClassifier classifier(Lexicon());
  const auto p = classifier.Classify("furious and angry but happy");
  CHECK(p.label == "anger");
  CHECK(p.confidence == doctest::Approx(2.0 / 3.0));
  const auto none = classifier.Classify("the bus is here");
  CHECK(none.label == "neutral");
  CHECK(none.confidence == 1.0);
  std::istringstream bad("anger furious\n");
  CHECK_THROWS_AS(EmotionLexicon::Parse(bad), Error);
}

TEST_CASE("prompt adaptation matches a hand product") {
  auto gen = at::detail::createCPUGenerator(1);
  const auto opts = torch::TensorOptions().dtype(torch::kFloat64);
  const auto w = torch::randn({3, 4}, gen, opts);
  const auto b = torch::randn({3}, gen, opts);
  const auto e = torch::randn({4}, gen, opts);
  const auto out = AdaptPrompt(e, w, b);
  for (int i = 0; i < 3; ++i) {
    double s = b[i].item<double>();
    for (int j = 0; j < 4; ++j) s += w[i][j].item<double>() * e[j].item<double>();
    CHECK(out[i].item<double>() == doctest::Approx(s).epsilon(1e-12));
  }
  CHECK(torch::allclose(AdaptPrompt(e, torch::eye(4, opts), torch::zeros({4}, opts)), e));
  CHECK(torch::equal(AdaptPrompt(torch::zeros({4}, opts), w, b), b));
  CHECK_THROWS_AS(AdaptPrompt(torch::zeros({5}, opts), w, b), Error);
}

TEST_CASE("speaker lookup bounds and isolation") {
  SpeakerTable table(2, 4);
  const auto row = LookupSpeaker(0, table->table);
  CHECK(torch::equal(row.values, table->table[0]));
  try {
    LookupSpeaker(2, table->table);
    FAIL("expected UnknownSpeaker");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kUnknownSpeaker);
  }
  CHECK_THROWS_AS(LookupSpeaker(-1, table->table), Error);

  const auto before = table->table.detach().clone();
  torch::optim::SGD sgd(table->parameters(), 0.5);
  const auto out = table->forward(torch::tensor({int64_t{1}}));
  out.pow(2).sum().backward();
  sgd.step();
  CHECK(torch::equal(table->table[0], before[0]));
  CHECK_FALSE(torch::equal(table->table[1], before[1]));
}

TEST_CASE("SE fusion follows its formula") {
  auto gen = at::detail::createCPUGenerator(2);
  const auto opts = torch::TensorOptions().dtype(torch::kFloat64);
  // C = 4 (2 prompt + 2 speaker), r = 2, H = 3.
  SqueezeExcitationParams p{torch::randn({2, 4}, gen, opts), torch::randn({4, 2}, gen, opts),
                            torch::randn({3, 4}, gen, opts), torch::randn({3}, gen, opts)};
  const auto prompt = torch::randn({2}, gen, opts);
  const auto speaker = torch::randn({2}, gen, opts);
  const auto out = FuseCondition(prompt, speaker, p);

  // Step by step with scalar loops.
  std::vector<double> z = {prompt[0].item<double>(), prompt[1].item<double>(),
                           speaker[0].item<double>(), speaker[1].item<double>()};
  std::vector<double> hidden(2), gate(4), gated(4);
  for (int i = 0; i < 2; ++i) {
    double s = 0;
    for (int j = 0; j < 4; ++j) s += p.squeeze[i][j].item<double>() * z[j];
    hidden[i] = std::max(0.0, s);
  }
  for (int i = 0; i < 4; ++i) {
    double s = 0;
    for (int j = 0; j < 2; ++j) s += p.excite[i][j].item<double>() * hidden[j];
    gate[i] = 1.0 / (1.0 + std::exp(-s));
    gated[i] = z[i] * gate[i];
    CHECK(gate[i] > 0.0);
    CHECK(gate[i] < 1.0);
    CHECK(std::abs(gated[i]) <= std::abs(z[i]));
  }
  for (int i = 0; i < 3; ++i) {
    double s = p.project_bias[i].item<double>();
    for (int j = 0; j < 4; ++j) s += p.project[i][j].item<double>() * gated[j];
    CHECK(out[i].item<double>() == doctest::Approx(s).epsilon(1e-12));
  }

  SqueezeExcitationParams zero = p;
  zero.squeeze = torch::zeros_like(p.squeeze);
  zero.excite = torch::zeros_like(p.excite);
  const auto z_vec = torch::cat({prompt, speaker});
  CHECK(torch::allclose(ExcitationGate(z_vec, zero), torch::full({4}, 0.5, opts)));
  CHECK(torch::allclose(FuseCondition(prompt, speaker, zero),
                        torch::matmul(p.project, 0.5 * z_vec) + p.project_bias));
  CHECK(torch::allclose(FuseCondition(torch::zeros({2}, opts), torch::zeros({2}, opts), p),
                        p.project_bias));
  CHECK_THROWS_AS(FuseCondition(torch::zeros({3}, opts), speaker, p), Error);
}

TEST_CASE("fusion output has hidden size for any input sizes") {
  for (int64_t dp : {3, 8, 17}) {
    for (int64_t ds : {1, 4, 9}) {
      SqueezeExcitationFusion fusion(dp, ds, 12, 4);
      const auto out = fusion->forward(torch::randn({2, dp}), torch::randn({2, ds}));
      CHECK(out.sizes() == torch::IntArrayRef{2, 12});
    }
  }
}

TEST_CASE("CLN at initialization is plain layernorm") {
  ConditionalLayerNorm cln(16, 8);
  auto gen = at::detail::createCPUGenerator(4);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const auto x = torch::randn({16}, gen) * 3.0 + 1.0;
    const auto c = torch::randn({8}, gen) * 5.0;
    worst = std::max(worst, (cln->forward(x, c) - PlainLayerNorm(x)).abs().max().item<double>());
  }
  CHECK(worst < 1e-6);
}

TEST_CASE("CLN of a constant vector is the shift") {
  auto gen = at::detail::createCPUGenerator(5);
  const auto opts = torch::TensorOptions().dtype(torch::kFloat64);
  ConditionalLayerNormParams p{torch::randn({4, 3}, gen, opts), torch::randn({4}, gen, opts),
                               torch::randn({4, 3}, gen, opts), torch::randn({4}, gen, opts)};
  const auto c = torch::randn({3}, gen, opts);
  const auto y = ApplyConditionalLayerNorm(torch::full({4}, 2.5, opts), c, p);
  CHECK(torch::allclose(y, torch::matmul(p.shift_weight, c) + p.shift_bias, 0, 1e-12));
}

TEST_CASE("CLN responds to the condition once weights are nonzero") {
  ConditionalLayerNorm cln(8, 4);
  {
    torch::NoGradGuard g;
    cln->scale_weight.normal_(0, 0.3);
    cln->shift_weight.normal_(0, 0.3);
  }
  const auto x = torch::randn({8});
  int differing = 0;
  for (int i = 0; i < 20; ++i) {
    if (!torch::equal(cln->forward(x, torch::randn({4})), cln->forward(x, torch::randn({4})))) {
      ++differing;
    }
  }
  CHECK(differing > 0);
  CHECK_THROWS_AS(cln->forward(torch::randn({7}), torch::randn({4})), Error);
}

TEST_CASE("conditioning gradients match finite differences") {
  torch::manual_seed(9);
  const auto f64 = torch::kFloat64;

  SUBCASE("conditional layernorm") {
    ConditionalLayerNorm cln(8, 8);
    cln->to(f64);
    {
      torch::NoGradGuard g;
      for (auto& p : cln->parameters()) p.add_(torch::randn_like(p) * 0.2);
    }
    auto x = torch::randn({3, 8}, f64).requires_grad_();
    auto c = torch::randn({3, 8}, f64).requires_grad_();
    const auto w = RandomProjection(x, 1);
    auto loss = [&] { return (cln->forward(x, c) * w).sum(); };
    CHECK(MaxModuleGradientError(*cln, loss, {x, c}) < 1e-3);
  }
  SUBCASE("prompt adapter") {
    PromptAdapter adapter(6, 4);
    adapter->to(f64);
    auto e = torch::randn({2, 6}, f64).requires_grad_();
    const auto w = torch::randn({2, 4}, f64);
    auto loss = [&] { return (adapter->forward(e) * w).sum(); };
    CHECK(MaxModuleGradientError(*adapter, loss, {e}) < 1e-3);
  }
  SUBCASE("SE fusion") {
    SqueezeExcitationFusion fusion(6, 4, 8, 4);
    fusion->to(f64);
    auto a = torch::randn({2, 6}, f64).requires_grad_();
    auto s = torch::randn({2, 4}, f64).requires_grad_();
    const auto w = torch::randn({2, 8}, f64);
    auto loss = [&] { return (fusion->forward(a, s) * w).sum(); };
    CHECK(MaxModuleGradientError(*fusion, loss, {a, s}) < 1e-3);
  }
  SUBCASE("conditioning network") {
    ConditioningNetwork net(6, 4, 3, 8, 2, true);
    net->to(f64);
    auto prompts = torch::randn({2, 6}, f64);
    const auto ids = torch::tensor({int64_t{0}, int64_t{2}});
    const auto w = torch::randn({2, 8}, f64);
    auto loss = [&] { return (net->forward(prompts, ids) * w).sum(); };
    CHECK(MaxModuleGradientError(*net, loss) < 1e-3);
  }
}

TEST_CASE("baseline conditioning ignores the prompt") {
  ConditioningNetwork net(6, 4, 2, 8, 2, false);
  const auto ids = torch::tensor({int64_t{0}, int64_t{1}});
  CHECK(torch::equal(net->forward(torch::randn({2, 6}), ids),
                     net->forward(torch::randn({2, 6}), ids)));
  ConditioningNetwork cond(6, 4, 2, 8, 2, true);
  CHECK_FALSE(torch::equal(cond->forward(torch::randn({2, 6}), ids),
                           cond->forward(torch::randn({2, 6}), ids)));
}

}  // TEST_SUITE

}  // namespace
}  // namespace prompted_tts
