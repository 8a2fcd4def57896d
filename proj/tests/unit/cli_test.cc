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


#include <sys/wait.h>

#include <algorithm>
#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "prompted_tts/audio.h"
#include "prompted_tts/error.h"
#include "prompted_tts/run_config.h"
#include "prompted_tts/training.h"
#include "test_util.h"

namespace prompted_tts {
namespace {

namespace fs = std::filesystem;

struct Result {
  int code = -1;
  std::string output;  // stdout and stderr
};

Result RunCli(const std::string& args) {
  const std::string cmd = std::string("'") + PROMPTED_TTS_CLI + "' " + args + " 2>&1";
  Result r;
  FILE* pipe = ::popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  std::array<char, 4096> buf;
  size_t n;
  while ((n = std::fread(buf.data(), 1, buf.size(), pipe)) > 0) r.output.append(buf.data(), n);
  const int status = ::pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string ReadBytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

// Tiny end-to-end settings shared by the pipeline cases.
const char* kTiny =
    " --set model.hidden=16 --set model.ff_inner=32 --set model.predictor_channels=16"
    " --set model.flow_hidden=16 --set model.prompt_dim=32 --set model.encoder_blocks=1"
    " --set model.decoder_blocks=1 --set corpus.utterances_per_emotion=2"
    " --set corpus.unlabeled_utterances=2 --set corpus.heldout_per_emotion=1"
    " --set prompts.pool_candidates_per_label=20 --set prompts.pool_per_label_target=10"
    " --set evaluation.pairs_per_label=2 --set evaluation.griffin_lim_iterations=4"
    " --set training.batch_size=2 --set training.checkpoint_interval=3";

TEST_SUITE("cli") {

TEST_CASE("run config defaults, overrides and unknown keys") {
  RunConfig c;
  c.Validate();
  CHECK(c.model.hidden == 64);
  CHECK(c.audio.n_mels == 80);
  CHECK(c.evaluation.temperature == 0.8);
  c.ApplyOverride("model.hidden=32");
  c.ApplyOverride("frontend.phonemizer=espeak");
  c.ApplyOverride("seed=9");
  CHECK(c.model.hidden == 32);
  CHECK(c.frontend.phonemizer == "espeak");
  CHECK(c.seed == 9);
  CHECK(RunConfig::FromJson(c.ToJson()).ToJson() == c.ToJson());
  CHECK_THROWS_AS(c.ApplyOverride("model.hiden=3"), Error);
  CHECK_THROWS_AS(c.ApplyOverride("nosuchsection.x=3"), Error);
  CHECK_THROWS_AS(c.ApplyOverride("model.hidden"), Error);
  auto j = RunConfig().ToJson();
  j["training"]["extra"] = 1;
  CHECK_THROWS_AS(RunConfig::FromJson(j), Error);
  RunConfig bad;
  bad.audio.n_mels = 40;
  CHECK_THROWS_AS(bad.Validate(), Error);
  CHECK(RunConfig().CorpusSpec().seed == 0);
}

TEST_CASE("usage errors exit 1") {
  auto r = RunCli("frobnicate");
  CHECK(r.code == 1);
  CHECK(r.output.find("gen-corpus") != std::string::npos);
  CHECK(RunCli("").code == 1);
  CHECK(RunCli("evaluate --mode sideways --ckpt a --features b --out c").code == 1);
  CHECK(RunCli("train --features f").code == 1);
}

TEST_CASE("help lists every flag with its default") {
  const std::vector<std::pair<std::string, std::vector<std::string>>> expected = {
      {"gen-corpus", {"--config", "--seed", "--set", "--out"}},
      {"preprocess", {"--corpus", "--out"}},
      {"build-pool", {"--out"}},
      {"train", {"--features", "--pool", "--out", "--steps-stage1", "--steps-stage2", "--resume",
                 "--baseline"}},
      {"synthesize", {"--ckpt", "--text", "--prompt", "--speaker", "--temperature", "--out"}},
      {"evaluate", {"--ckpt", "--features", "--mode", "--temperature", "--out"}},
  };
  for (const auto& [cmd, flags] : expected) {
    const auto r = RunCli(cmd + " --help");
    CHECK(r.code == 0);
    for (const auto& flag : flags) {
      INFO(cmd << " " << flag);
      const size_t at = r.output.find(flag);
      REQUIRE(at != std::string::npos);
      const std::string line = r.output.substr(at, r.output.find('\n', at) - at);
      const bool required = line.find("REQUIRED") != std::string::npos;
      const bool flag_only = flag == "--resume" || flag == "--baseline";
      CHECK((required || flag_only || line.find("default") != std::string::npos ||
             line.find('[') != std::string::npos));
    }
  }
  CHECK(RunCli("synthesize --help").output.find("0.8") != std::string::npos);
  CHECK(RunCli("evaluate --help").output.find("same") != std::string::npos);
}

TEST_CASE("validation failures exit 2, runtime failures exit 3") {
  testing::TempDir dir("cli_err");
  auto r = RunCli("gen-corpus --out '" + dir.File("c") + "' --set model.hidden=63");
  CHECK(r.code == 2);
  CHECK(r.output.find("ConfigError") != std::string::npos);
  std::ofstream(dir.File("bad.json")) << "{\"modle\": {}}";
  CHECK(RunCli("build-pool --out x --config '" + dir.File("bad.json") + "'").code == 2);
  r = RunCli("evaluate --ckpt '" + dir.File("none.ckpt") + "' --features f --out o");
  CHECK(r.code == 3);
  CHECK(r.output.find("IoError") != std::string::npos);
}

TEST_CASE("tiny pipeline end to end") {
  testing::TempDir dir("cli_pipeline");
  const std::string d = dir.path().string();
  const std::string tiny = kTiny;
  REQUIRE(RunCli("gen-corpus --out '" + d + "/corpus'" + tiny).code == 0);
  REQUIRE(RunCli("preprocess --corpus '" + d + "/corpus' --out '" + d + "/f.bin'" + tiny).code == 0);
  REQUIRE(RunCli("build-pool --out '" + d + "/a.ppl'" + tiny).code == 0);
  REQUIRE(RunCli("build-pool --out '" + d + "/b.ppl'" + tiny).code == 0);
  CHECK(ReadBytes(d + "/a.ppl") == ReadBytes(d + "/b.ppl"));

  const std::string train = "train --features '" + d + "/f.bin' --pool '" + d + "/a.ppl'" + tiny +
                            " --steps-stage1 4 --steps-stage2 3 --out ";
  auto r = RunCli(train + "'" + d + "/run'");
  REQUIRE(r.code == 0);
  const auto log = ReadBytes(d + "/run/train_log.csv");
  CHECK(std::count(log.begin(), log.end(), '\n') == 8);
  // Same seed, same artifacts.
  REQUIRE(RunCli(train + "'" + d + "/run2'").code == 0);
  CHECK(ReadBytes(d + "/run2/model.ckpt") == ReadBytes(d + "/run/model.ckpt"));

  const std::string ckpt = d + "/run/model.ckpt";
  r = RunCli("synthesize --ckpt '" + ckpt + "' --text 'They will arrive tomorrow.'"
             " --prompt 'Oh, really?' --speaker 0 --out '" + d + "/o.wav'" + tiny);
  CHECK(r.code == 0);
  const auto wav = ReadWav(d + "/o.wav");
  CHECK(wav.samples.size() > 0);
  CHECK(wav.samples.size() % 256 == 0);
  CHECK(RunCli("synthesize --ckpt '" + ckpt + "' --text hi --prompt ok --speaker 5 --out '" + d +
               "/x.wav'" + tiny).code == 2);

  for (const char* mode : {"same", "other", "baseline"}) {
    INFO(mode);
    const std::string eval = "evaluate --ckpt '" + ckpt + "' --features '" + d + "/f.bin' --mode " +
                             mode + tiny + " --out ";
    r = RunCli(eval + "'" + d + "/r1.json'");
    REQUIRE(r.code == 0);
    REQUIRE(RunCli(eval + "'" + d + "/r2.json'").code == 0);
    CHECK(ReadBytes(d + "/r1.json") == ReadBytes(d + "/r2.json"));
    const auto j = nlohmann::json::parse(ReadBytes(d + "/r1.json"));
    for (const char* key : {"condition", "cramers_v", "chi_square", "dof", "p_value",
                            "confusion_counts", "confusion_rownorm", "speaker_similarity_mean",
                            "speaker_similarity_std"}) {
      CHECK(j.contains(key));
    }
    CHECK(j["condition"] == mode);
    CHECK(j["num_pairs"] == 10);
  }
}

}  // TEST_SUITE

}  // namespace
}  // namespace prompted_tts
