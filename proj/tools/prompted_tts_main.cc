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

// Command-line driver: corpus generation, preprocessing, prompt pools,
// training, synthesis and evaluation.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "CLI11.hpp"
#include "prompted_tts/acoustic_model.h"
#include "prompted_tts/audio.h"
#include "prompted_tts/checkpoint.h"
#include "prompted_tts/conditioning.h"
#include "prompted_tts/corpus.h"
#include "prompted_tts/error.h"
#include "prompted_tts/evaluation.h"
#include "prompted_tts/prompt_pool.h"
#include "prompted_tts/run_config.h"
#include "prompted_tts/text_frontend.h"
#include "prompted_tts/training.h"

namespace prompted_tts {
namespace {

namespace fs = std::filesystem;

struct CommonOptions {
  std::string config;
  std::optional<uint64_t> seed;
  std::vector<std::string> overrides;
};

void AddCommon(CLI::App* cmd, CommonOptions* common) {
  cmd->add_option("--config", common->config, "JSON run configuration (default: built-in defaults)");
  cmd->add_option("--seed", common->seed, "Seed for all run randomness (default: config seed, 0)");
  cmd->add_option("--set", common->overrides,
                  "Config override section.key=value; repeatable, applied after --config (default: none)");
}

RunConfig ResolveConfig(const CommonOptions& common) {
  RunConfig config = common.config.empty() ? RunConfig() : RunConfig::Load(common.config);
  for (const auto& o : common.overrides) config.ApplyOverride(o);
  if (common.seed) config.ApplyOverride("seed=" + std::to_string(*common.seed));
  config.training.seed = config.seed;
  config.Validate();
  return config;
}

FeatureTable LoadTable(const RunConfig& config) {
  return config.frontend.feature_table.empty() ? FeatureTable::LoadDefault()
                                               : FeatureTable::Load(config.frontend.feature_table);
}

std::unique_ptr<PhonemizerBackend> MakePhonemizer(const RunConfig& config,
                                                  const FeatureTable& table) {
  if (config.frontend.phonemizer == "espeak") {
    if (!EspeakPhonemizer::IsAvailable()) {
      throw Error(ErrorKind::kConfigError, "espeak-ng is not installed");
    }
    return std::make_unique<EspeakPhonemizer>(table.inventory(), config.frontend.espeak_voice);
  }
  return std::make_unique<FallbackPhonemizer>();
}

EmotionLexicon LoadLexicon(const RunConfig& config) {
  return config.prompts.lexicon.empty() ? EmotionLexicon::LoadDefault()
                                        : EmotionLexicon::Load(config.prompts.lexicon);
}

StubPromptEncoder MakeEncoder(const RunConfig& config, int64_t dim) {
  return StubPromptEncoder(LoadLexicon(config), dim, config.prompts.encoder_noise,
                           config.prompts.encoder_seed);
}

void EnsureParent(const std::string& path) {
  const fs::path parent = fs::path(path).parent_path();
  if (!parent.empty()) fs::create_directories(parent);
}

void WriteText(const std::string& path, const std::string& text) {
  EnsureParent(path);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::kIoError, "cannot write " + path);
  out << text;
}

int GenCorpus(const RunConfig& config, const std::string& out) {
  const FeatureTable table = LoadTable(config);
  const DatasetManifest m = GenerateSyntheticCorpus(config.CorpusSpec(), out, table, config.audio);
  std::cerr << "wrote " << m.labeled.size() << " labeled, " << m.unlabeled.size()
            << " unlabeled, " << m.heldout.size() << " held-out utterances to " << out << "\n";
  return 0;
}

int Preprocess(const RunConfig& config, const std::string& corpus_dir, const std::string& out) {
  const FeatureTable table = LoadTable(config);
  const auto phonemizer = MakePhonemizer(config, table);
  const DatasetManifest m = LoadCorpus(corpus_dir, EmotionLabelSet::Canonical());
  const PreparedCorpus prepared = PrepareCorpus(m, table, *phonemizer, config.audio, NumWorkers());
  EnsureParent(out);
  WritePreparedCorpus(out, prepared);
  std::cerr << "prepared " << prepared.labeled.size() + prepared.unlabeled.size() +
                                  prepared.heldout.size()
            << " utterances into " << out << "\n";
  return 0;
}

int BuildPool(const RunConfig& config, const std::string& out) {
  const EmotionLexicon lexicon = LoadLexicon(config);
  const StubPromptEncoder encoder = MakeEncoder(config, config.model.prompt_dim);
  const LexiconTextClassifier classifier(lexicon);
  const EmotionLabelSet labels = EmotionLabelSet::Canonical();
  const auto texts = GeneratePromptTexts(lexicon, labels, config.prompts.pool_candidates_per_label,
                                         PromptStyle::kReview, config.prompts.distractor_rate,
                                         config.seed);
  PoolBuildReport report;
  const PromptPool pool = BuildPromptPool(texts, encoder, classifier, labels,
                                          config.prompts.pool_per_label_target,
                                          config.prompts.confidence_min, &report);
  EnsureParent(out);
  WritePromptPool(out, pool);
  for (const auto& label : labels.labels) {
    std::cerr << label << ": kept " << report.kept[label] << ", rejected "
              << report.rejected[label];
    if (report.shortfall.count(label)) std::cerr << ", short by " << report.shortfall[label];
    std::cerr << "\n";
  }
  return 0;
}

int Train(RunConfig config, const std::string& features, const std::string& pool_path,
          const std::string& out, bool resume, bool baseline) {
  if (baseline) config.model.prompt_conditioning = false;
  const PreparedCorpus corpus = ReadPreparedCorpus(features);
  const PromptPool pool = ReadPromptPool(pool_path);
  if (pool.dim != config.model.prompt_dim) {
    throw Error(ErrorKind::kDimensionMismatch, "pool dim differs from model.prompt_dim");
  }
  const StubPromptEncoder encoder = MakeEncoder(config, config.model.prompt_dim);
  fs::create_directories(out);
  WriteText((fs::path(out) / "config.json").string(), config.ToJson().dump(2) + "\n");

  Trainer trainer(config.model, config.training);
  CurriculumData data;
  data.labeled = corpus.labeled;
  data.unlabeled = corpus.unlabeled;
  data.pool = &pool;
  data.encoder = &encoder;
  CurriculumOptions options;
  options.out_dir = out;
  options.resume = resume;
  RunCurriculum(trainer, data, options);
  std::cerr << "trained " << trainer.step() << " steps; model in "
            << (fs::path(out) / "model.ckpt").string() << "\n";
  return 0;
}

int SynthesizeCommand(const RunConfig& config, const std::string& ckpt, const std::string& text,
                      const std::string& prompt, int64_t speaker, double temperature,
                      const std::string& out) {
  AcousticModel model = LoadModel(ReadCheckpoint(ckpt));
  const FeatureTable table = LoadTable(config);
  const auto phonemizer = MakePhonemizer(config, table);
  const StubPromptEncoder encoder = MakeEncoder(config, model->config().prompt_dim);
  SynthesisContext context{model, &table, phonemizer.get(), &encoder, config.audio};
  const SynthesisResult result = Synthesize(context, text, speaker, prompt, temperature, config.seed);
  const Waveform wav =
      MelToWaveform(result.mel, config.audio, config.evaluation.griffin_lim_iterations, config.seed);
  EnsureParent(out);
  WriteWav(out, wav);
  std::cerr << "wrote " << wav.samples.size() << " samples (" << result.mel.num_frames()
            << " frames) to " << out << "\n";
  return 0;
}

int Evaluate(const RunConfig& config, const std::string& ckpt, const std::string& features,
             const std::string& mode_name, std::optional<double> temperature,
             const std::string& out) {
  const EvalMode mode = ParseEvalMode(mode_name);
  AcousticModel model = LoadModel(ReadCheckpoint(ckpt));
  const PreparedCorpus corpus = ReadPreparedCorpus(features);
  const FeatureTable table = LoadTable(config);
  const auto phonemizer = MakePhonemizer(config, table);
  const StubPromptEncoder encoder = MakeEncoder(config, model->config().prompt_dim);
  const EmotionLabelSet labels = EmotionLabelSet::Canonical();

  ProsodyEmotionRecognizer recognizer(config.audio);
  std::vector<ProsodyEmotionRecognizer::Example> examples;
  for (const auto& u : corpus.labeled) examples.push_back({&u.mel, u.speaker_id, *u.emotion});
  recognizer.Fit(examples);
  const MelStatsSpeakerEmbedder embedder;

  std::map<std::string, MelSpectrogram> references;
  std::vector<UtteranceRecord> heldout;
  for (const auto& u : corpus.heldout) {
    references[u.id] = u.mel;
    UtteranceRecord r;
    r.id = u.id;
    r.transcript = u.transcript;
    r.speaker_id = u.speaker_id;
    r.emotion = u.emotion;
    heldout.push_back(r);
  }
  const auto prompts = GeneratePromptTexts(LoadLexicon(config), labels,
                                           config.evaluation.pairs_per_label,
                                           PromptStyle::kDialogue, 0.0, config.seed);
  const auto pairs = BuildEvalPairs(heldout, prompts, labels, mode,
                                    config.evaluation.pairs_per_label, config.seed);

  EvaluationInputs inputs;
  inputs.synthesis = SynthesisContext{model, &table, phonemizer.get(), &encoder, config.audio};
  inputs.recognizer = &recognizer;
  inputs.speaker_embedder = &embedder;
  inputs.references = &references;
  inputs.labels = labels;
  inputs.temperature = temperature.value_or(config.evaluation.temperature);
  inputs.seed = config.seed;
  inputs.workers = 1;
  const EvalReport report = EvaluateControllability(inputs, pairs, mode_name);
  WriteText(out, ToJson(report).dump(2) + "\n");
  std::cerr << mode_name << ": V=" << report.cramers_v << " chi2=" << report.chi_square
            << " p=" << report.p_value << " accuracy=" << report.accuracy
            << " speaker_sim=" << report.speaker_similarity_mean << "\n";
  return 0;
}

int Run(int argc, char** argv) {
  CLI::App app{"Emotion-prompted speech synthesis toolkit"};
  app.option_defaults()->always_capture_default();
  app.require_subcommand(1);

  CommonOptions common;
  std::string out, corpus_dir, features, pool, ckpt, text, prompt, mode = "same";
  int64_t speaker = 0;
  std::optional<int64_t> steps1, steps2;
  std::optional<double> temperature;
  bool resume = false, baseline = false;

  auto* gen = app.add_subcommand("gen-corpus", "Generate the synthetic emotional corpus");
  AddCommon(gen, &common);
  gen->add_option("--out", out, "Output directory")->required();

  auto* pre = app.add_subcommand("preprocess", "Extract model-ready features from a corpus");
  AddCommon(pre, &common);
  pre->add_option("--corpus", corpus_dir, "Corpus directory with labeled/unlabeled/heldout.tsv")
      ->required();
  pre->add_option("--out", out, "Output feature file")->required();

  auto* bp = app.add_subcommand("build-pool", "Build the per-emotion prompt embedding pool");
  AddCommon(bp, &common);
  bp->add_option("--out", out, "Output pool file")->required();

  auto* tr = app.add_subcommand("train", "Run the two-stage training curriculum");
  AddCommon(tr, &common);
  tr->add_option("--features", features, "Feature file from preprocess")->required();
  tr->add_option("--pool", pool, "Prompt pool file from build-pool")->required();
  tr->add_option("--out", out, "Output directory for checkpoints and the loss log")->required();
  tr->add_option("--steps-stage1", steps1, "Stage-1 steps (default: training.stage1_steps, 3000)");
  tr->add_option("--steps-stage2", steps2, "Stage-2 steps (default: training.stage2_steps, 2000)");
  tr->add_flag("--resume", resume, "Continue from <out>/latest.ckpt if present");
  tr->add_flag("--baseline", baseline, "Train the unconditioned baseline (prompt ignored)");

  auto* syn = app.add_subcommand("synthesize", "Synthesize one utterance to WAV");
  AddCommon(syn, &common);
  syn->add_option("--ckpt", ckpt, "Model checkpoint (model.ckpt)")->required();
  syn->add_option("--text", text, "Text to speak")->required();
  syn->add_option("--prompt", prompt, "Emotion prompt text")->required();
  syn->add_option("--speaker", speaker, "Speaker id");
  syn->add_option("--temperature", temperature,
                  "Flow sampling temperature (default: evaluation.temperature, 0.8)");
  syn->add_option("--out", out, "Output WAV path")->required();

  auto* ev = app.add_subcommand("evaluate", "Run the prompt controllability evaluation");
  AddCommon(ev, &common);
  ev->add_option("--ckpt", ckpt, "Model checkpoint (model.ckpt)")->required();
  ev->add_option("--features", features, "Feature file from preprocess")->required();
  ev->add_option("--mode", mode, "Pairing protocol")
      ->check(CLI::IsMember({"same", "other", "baseline"}));
  ev->add_option("--temperature", temperature,
                 "Flow sampling temperature (default: evaluation.temperature, 0.8)");
  ev->add_option("--out", out, "Output report JSON")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return 1;
  }

  try {
    RunConfig config = ResolveConfig(common);
    if (steps1) config.ApplyOverride("training.stage1_steps=" + std::to_string(*steps1));
    if (steps2) config.ApplyOverride("training.stage2_steps=" + std::to_string(*steps2));
    config.training.seed = config.seed;
    if (gen->parsed()) return GenCorpus(config, out);
    if (pre->parsed()) return Preprocess(config, corpus_dir, out);
    if (bp->parsed()) return BuildPool(config, out);
    if (tr->parsed()) return Train(config, features, pool, out, resume, baseline);
    if (syn->parsed()) {
      return SynthesizeCommand(config, ckpt, text, prompt, speaker,
                               temperature.value_or(config.evaluation.temperature), out);
    }
    if (ev->parsed()) return Evaluate(config, ckpt, features, mode, temperature, out);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return IsDataError(e.kind()) ? 2 : 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 1;
}

}  // namespace
}  // namespace prompted_tts

int main(int argc, char** argv) {
  // One intra-op thread keeps floating-point results independent of the
  // machine's core count.
  at::set_num_threads(1);
  return prompted_tts::Run(argc, argv);
}
