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

#ifndef PROMPTED_TTS_TRAINING_H_
#define PROMPTED_TTS_TRAINING_H_

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "json.hpp"
#include "prompted_tts/acoustic_model.h"
#include "prompted_tts/checkpoint.h"
#include "prompted_tts/corpus.h"
#include "prompted_tts/prompt_pool.h"

namespace prompted_tts {

struct LossWeights {
  double mel = 1.0;
  double duration = 0.1;
  double pitch = 0.1;
  double energy = 0.1;
  double flow = 1.0;
  double adversarial = 0.05;
};

void to_json(nlohmann::json& j, const LossWeights& w);
void from_json(const nlohmann::json& j, LossWeights& w);

struct TrainingConfig {
  int64_t batch_size = 8;
  double learning_rate = 1e-3;
  double discriminator_learning_rate = 1e-3;
  int64_t warmup_steps = 200;
  int64_t stage1_steps = 3000;
  int64_t stage2_steps = 2000;
  // Stage-1 labeled utterances use a self-prompt instead of a pool prompt.
  bool stage1_self_prompt_labeled = false;
  // Generator steps before the adversarial term switches on.
  int64_t adversarial_start = 0;
  int64_t checkpoint_interval = 500;
  uint64_t seed = 0;
  LossWeights weights;

  void Validate() const;
};

void to_json(nlohmann::json& j, const TrainingConfig& c);
void from_json(const nlohmann::json& j, TrainingConfig& c);

// Zero-padded batch. Padded phonemes have duration 0 and padded frames are
// masked out of every loss.
struct Batch {
  torch::Tensor features;     // [B, N, F]
  torch::Tensor phone_mask;   // [B, N] bool
  torch::Tensor durations;    // [B, N] int64
  torch::Tensor pitch;        // [B, N]
  torch::Tensor energy;       // [B, N]
  torch::Tensor mel;          // [B, T, M]
  torch::Tensor frame_mask;   // [B, T] bool
  torch::Tensor speaker_ids;  // [B] int64
  torch::Tensor prompts;      // [B, D_p]
  std::vector<int64_t> phone_lengths;
  std::vector<int64_t> frame_lengths;
};

Batch Collate(const std::vector<const PreparedUtterance*>& items,
              const std::vector<PromptEmbedding>& prompts);

// Stage 1: unlabeled utterances get a self-prompt, the embedding of their own
// transcript; labeled ones draw from the pool for their label unless
// `self_prompt_labeled`. Stage 2 only accepts labeled utterances and always
// draws from the pool.
PromptEmbedding SelectPromptForSample(const PreparedUtterance& utterance, int stage,
                                      const PromptPool& pool, const PromptEncoder& encoder,
                                      bool self_prompt_labeled, Rng& rng);

struct LossReport {
  double mel_l1 = 0.0;
  double duration_mse = 0.0;
  double pitch_mse = 0.0;
  double energy_mse = 0.0;
  double flow_nll = 0.0;
  double adv_g = 0.0;
  double adv_d = 0.0;
  double total = 0.0;  // weighted generator objective
};

// Model, discriminator and both optimizers.
class Trainer {
 public:
  Trainer(const AcousticModelConfig& model_config, const TrainingConfig& config);

  // One generator update followed by one discriminator update.
  // Throws NonFiniteLoss before touching the weights if any loss is NaN/inf.
  LossReport TrainStep(const Batch& batch);
  // Losses without updates.
  LossReport Evaluate(const Batch& batch);

  CheckpointFile SaveState();
  // Throws ResumeMismatch if the stored configuration differs.
  void LoadState(const CheckpointFile& file);

  AcousticModel& model() { return model_; }
  PatchDiscriminator& discriminator() { return discriminator_; }
  const TrainingConfig& config() const { return config_; }
  const AcousticModelConfig& model_config() const { return model_config_; }
  int64_t step() const { return step_; }

 private:
  struct Outputs;
  Outputs Forward(const Batch& batch);

  AcousticModelConfig model_config_;
  TrainingConfig config_;
  AcousticModel model_{nullptr};
  PatchDiscriminator discriminator_{nullptr};
  std::unique_ptr<torch::optim::Adam> g_optimizer_, d_optimizer_;
  int64_t step_ = 0;
};

struct CurriculumData {
  std::vector<PreparedUtterance> labeled;
  std::vector<PreparedUtterance> unlabeled;
  const PromptPool* pool = nullptr;
  const PromptEncoder* encoder = nullptr;
};

struct CurriculumOptions {
  std::string out_dir;     // latest.ckpt, model.ckpt and train_log.csv go here
  bool resume = false;     // continue from out_dir/latest.ckpt if present
  int64_t stop_after = -1; // stop once this many global steps are done
};

// Indices of the utterances in global step `step`'s batch. Each epoch is a
// fresh permutation seeded by (seed, stage, epoch), so the schedule depends
// on nothing but the step.
std::vector<size_t> BatchIndices(size_t dataset_size, int64_t batch_size, uint64_t seed,
                                 int stage, int64_t stage_step);

// Stage 1 on labeled + unlabeled data, then stage 2 on labeled data only.
// Appends one CSV row per step to train_log.csv and checkpoints every
// checkpoint_interval steps and at the end.
void RunCurriculum(Trainer& trainer, const CurriculumData& data,
                   const CurriculumOptions& options);

const char* LossLogHeader();
// `step` counts completed steps (1-based); `unlabeled` is the number of
// batch items without an emotion label.
std::string FormatLossRow(int64_t step, int stage, int unlabeled, const LossReport& r);

// Model weights and config only, as written to model.ckpt.
CheckpointFile SaveModel(AcousticModel& model);
AcousticModel LoadModel(const CheckpointFile& file);

}  // namespace prompted_tts

#endif  // PROMPTED_TTS_TRAINING_H_
