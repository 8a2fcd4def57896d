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

#include "prompted_tts/training.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "prompted_tts/error.h"

namespace prompted_tts {
namespace {

namespace fs = std::filesystem;

template <typename T>
void Read(const nlohmann::json& j, const char* key, T& field) {
  if (j.contains(key)) j.at(key).get_to(field);
}

void RejectUnknown(const nlohmann::json& j, const std::set<std::string>& keys,
                   const std::string& section) {
  if (!j.is_object()) throw Error(ErrorKind::kConfigError, section + " must be an object");
  for (const auto& item : j.items()) {
    if (!keys.count(item.key())) {
      throw Error(ErrorKind::kConfigError, "unknown " + section + " key '" + item.key() + "'");
    }
  }
}

torch::Tensor MaskedMean(const torch::Tensor& values, const torch::Tensor& mask) {
  auto keep = mask.to(values.dtype());
  while (keep.dim() < values.dim()) keep = keep.unsqueeze(-1);
  keep = keep.expand_as(values);
  return (values * keep).sum() / keep.sum().clamp_min(1.0);
}

double Scalar(const torch::Tensor& t) { return t.defined() ? t.item<double>() : 0.0; }

void SetLearningRate(torch::optim::Adam& optimizer, double lr) {
  for (auto& group : optimizer.param_groups()) {
    static_cast<torch::optim::AdamOptions&>(group.options()).lr(lr);
  }
}

void AppendAdamState(torch::optim::Adam& optimizer, const std::string& prefix,
                     CheckpointFile& file) {
  nlohmann::json steps = nlohmann::json::array();
  const auto& params = optimizer.param_groups().at(0).params();
  for (size_t i = 0; i < params.size(); ++i) {
    auto it = optimizer.state().find(params[i].unsafeGetTensorImpl());
    if (it == optimizer.state().end()) {
      steps.push_back(-1);
      continue;
    }
    auto& state = static_cast<torch::optim::AdamParamState&>(*it->second);
    steps.push_back(state.step());
    file.tensors.emplace_back(prefix + std::to_string(i) + ".exp_avg", state.exp_avg());
    file.tensors.emplace_back(prefix + std::to_string(i) + ".exp_avg_sq", state.exp_avg_sq());
  }
  file.header[prefix + "steps"] = steps;
}

void LoadAdamState(torch::optim::Adam& optimizer, const std::string& prefix,
                   const CheckpointFile& file) {
  const auto& params = optimizer.param_groups().at(0).params();
  const auto& steps = file.header.at(prefix + "steps");
  if (steps.size() != params.size()) {
    throw Error(ErrorKind::kResumeMismatch, "optimizer state has a different parameter count");
  }
  optimizer.state().clear();
  for (size_t i = 0; i < params.size(); ++i) {
    const int64_t step = steps[i].get<int64_t>();
    if (step < 0) continue;
    auto state = std::make_unique<torch::optim::AdamParamState>();
    state->step(step);
    state->exp_avg(file.Get(prefix + std::to_string(i) + ".exp_avg").clone());
    state->exp_avg_sq(file.Get(prefix + std::to_string(i) + ".exp_avg_sq").clone());
    if (state->exp_avg().sizes() != params[i].sizes()) {
      throw Error(ErrorKind::kResumeMismatch, "optimizer state shape mismatch");
    }
    optimizer.state()[params[i].unsafeGetTensorImpl()] = std::move(state);
  }
}

void WriteAtomically(const std::string& path, const CheckpointFile& file) {
  const std::string tmp = path + ".tmp";
  WriteCheckpoint(tmp, file);
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw Error(ErrorKind::kIoError, "cannot rename " + tmp + ": " + ec.message());
}

}  // namespace

void to_json(nlohmann::json& j, const LossWeights& w) {
  j = nlohmann::json{{"mel", w.mel},       {"duration", w.duration},
                     {"pitch", w.pitch},   {"energy", w.energy},
                     {"flow", w.flow},     {"adversarial", w.adversarial}};
}

void from_json(const nlohmann::json& j, LossWeights& w) {
  RejectUnknown(j, {"mel", "duration", "pitch", "energy", "flow", "adversarial"}, "loss weight");
  Read(j, "mel", w.mel);
  Read(j, "duration", w.duration);
  Read(j, "pitch", w.pitch);
  Read(j, "energy", w.energy);
  Read(j, "flow", w.flow);
  Read(j, "adversarial", w.adversarial);
}

void TrainingConfig::Validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw Error(ErrorKind::kConfigError, what);
  };
  require(batch_size >= 1, "batch_size must be >= 1");
  require(learning_rate > 0 && discriminator_learning_rate > 0, "learning rates must be > 0");
  require(warmup_steps >= 0 && adversarial_start >= 0, "negative step counts");
  require(stage1_steps >= 0 && stage2_steps >= 0, "negative stage lengths");
  require(checkpoint_interval >= 1, "checkpoint_interval must be >= 1");
  require(weights.mel >= 0 && weights.duration >= 0 && weights.pitch >= 0 &&
              weights.energy >= 0 && weights.flow >= 0 && weights.adversarial >= 0,
          "loss weights must be non-negative");
}

void to_json(nlohmann::json& j, const TrainingConfig& c) {
  j = nlohmann::json{{"batch_size", c.batch_size},
                     {"learning_rate", c.learning_rate},
                     {"discriminator_learning_rate", c.discriminator_learning_rate},
                     {"warmup_steps", c.warmup_steps},
                     {"stage1_steps", c.stage1_steps},
                     {"stage2_steps", c.stage2_steps},
                     {"stage1_self_prompt_labeled", c.stage1_self_prompt_labeled},
                     {"adversarial_start", c.adversarial_start},
                     {"checkpoint_interval", c.checkpoint_interval},
                     {"seed", c.seed},
                     {"loss_weights", c.weights}};
}

void from_json(const nlohmann::json& j, TrainingConfig& c) {
  RejectUnknown(j,
                {"batch_size", "learning_rate", "discriminator_learning_rate", "warmup_steps",
                 "stage1_steps", "stage2_steps", "stage1_self_prompt_labeled",
                 "adversarial_start", "checkpoint_interval", "seed", "loss_weights"},
                "training");
  Read(j, "batch_size", c.batch_size);
  Read(j, "learning_rate", c.learning_rate);
  Read(j, "discriminator_learning_rate", c.discriminator_learning_rate);
  Read(j, "warmup_steps", c.warmup_steps);
  Read(j, "stage1_steps", c.stage1_steps);
  Read(j, "stage2_steps", c.stage2_steps);
  Read(j, "stage1_self_prompt_labeled", c.stage1_self_prompt_labeled);
  Read(j, "adversarial_start", c.adversarial_start);
  Read(j, "checkpoint_interval", c.checkpoint_interval);
  Read(j, "seed", c.seed);
  if (j.contains("loss_weights")) from_json(j.at("loss_weights"), c.weights);
}

Batch Collate(const std::vector<const PreparedUtterance*>& items,
              const std::vector<PromptEmbedding>& prompts) {
  if (items.empty()) throw Error(ErrorKind::kEmptyInput, "empty batch");
  if (prompts.size() != items.size()) {
    throw Error(ErrorKind::kLengthMismatch, "one prompt per batch item required");
  }
  const int64_t b = static_cast<int64_t>(items.size());
  const int64_t f = items[0]->features.size(1);
  const int64_t m = items[0]->mel.num_bins();
  const int64_t dp = static_cast<int64_t>(prompts[0].values.size());
  int64_t n_max = 0, t_max = 0;
  Batch batch;
  for (const auto* u : items) {
    const int64_t n = u->features.size(0);
    const int64_t t = u->mel.num_frames();
    if (u->features.size(1) != f || u->mel.num_bins() != m ||
        static_cast<int64_t>(u->durations.size()) != n ||
        static_cast<int64_t>(u->pitch.size()) != n || static_cast<int64_t>(u->energy.size()) != n) {
      throw Error(ErrorKind::kShapeMismatch, u->id + ": inconsistent utterance shapes");
    }
    batch.phone_lengths.push_back(n);
    batch.frame_lengths.push_back(t);
    n_max = std::max(n_max, n);
    t_max = std::max(t_max, t);
  }
  batch.features = torch::zeros({b, n_max, f});
  batch.phone_mask = torch::zeros({b, n_max}, torch::kBool);
  batch.durations = torch::zeros({b, n_max}, torch::kLong);
  batch.pitch = torch::zeros({b, n_max});
  batch.energy = torch::zeros({b, n_max});
  batch.mel = torch::zeros({b, t_max, m});
  batch.frame_mask = torch::zeros({b, t_max}, torch::kBool);
  batch.speaker_ids = torch::zeros({b}, torch::kLong);
  batch.prompts = torch::zeros({b, dp});
  for (int64_t i = 0; i < b; ++i) {
    const PreparedUtterance& u = *items[static_cast<size_t>(i)];
    const int64_t n = batch.phone_lengths[static_cast<size_t>(i)];
    const int64_t t = batch.frame_lengths[static_cast<size_t>(i)];
    batch.features[i].slice(0, 0, n).copy_(u.features);
    batch.phone_mask[i].slice(0, 0, n).fill_(true);
    batch.durations[i].slice(0, 0, n).copy_(torch::tensor(u.durations, torch::kLong));
    batch.pitch[i].slice(0, 0, n).copy_(torch::tensor(u.pitch));
    batch.energy[i].slice(0, 0, n).copy_(torch::tensor(u.energy));
    batch.mel[i].slice(0, 0, t).copy_(u.mel.values);
    batch.frame_mask[i].slice(0, 0, t).fill_(true);
    batch.speaker_ids[i] = u.speaker_id;
    const auto& p = prompts[static_cast<size_t>(i)].values;
    if (static_cast<int64_t>(p.size()) != dp) {
      throw Error(ErrorKind::kDimensionMismatch, "prompt dimensions differ within batch");
    }
    batch.prompts[i].copy_(torch::tensor(p));
    int64_t frames = 0;
    for (int64_t d : u.durations) frames += d;
    if (frames != t) throw Error(ErrorKind::kDurationMismatch, u.id + ": durations vs frames");
  }
  return batch;
}

PromptEmbedding SelectPromptForSample(const PreparedUtterance& utterance, int stage,
                                      const PromptPool& pool, const PromptEncoder& encoder,
                                      bool self_prompt_labeled, Rng& rng) {
  if (stage != 1 && stage != 2) throw Error(ErrorKind::kConfigError, "stage must be 1 or 2");
  if (!utterance.emotion) {
    if (stage == 2) {
      throw Error(ErrorKind::kConfigError, utterance.id + ": unlabeled utterance in stage 2");
    }
    return ExtractPromptEmbedding(utterance.transcript, encoder);
  }
  if (stage == 1 && self_prompt_labeled) {
    return ExtractPromptEmbedding(utterance.transcript, encoder);
  }
  return SamplePrompt(pool, *utterance.emotion, rng);
}

struct Trainer::Outputs {
  torch::Tensor coarse;
  torch::Tensor mel_l1, duration_mse, pitch_mse, energy_mse, flow_nll;
};

Trainer::Trainer(const AcousticModelConfig& model_config, const TrainingConfig& config)
    : model_config_(model_config), config_(config) {
  model_config_.Validate();
  config_.Validate();
  torch::manual_seed(config_.seed);
  model_ = AcousticModel(model_config_);
  discriminator_ = MakeDiscriminator(model_config_);
  g_optimizer_ = std::make_unique<torch::optim::Adam>(
      model_->parameters(), torch::optim::AdamOptions(config_.learning_rate));
  d_optimizer_ = std::make_unique<torch::optim::Adam>(
      discriminator_->parameters(), torch::optim::AdamOptions(config_.discriminator_learning_rate));
}

Trainer::Outputs Trainer::Forward(const Batch& batch) {
  Outputs out;
  auto cond = model_->Condition(batch.prompts, batch.speaker_ids);
  auto hidden = model_->Encode(batch.features, cond, batch.phone_mask);
  auto prosody = model_->PredictProsody(hidden, cond, batch.phone_mask);
  auto regulated = LengthRegulateBatch(hidden, batch.durations);
  out.coarse = model_->Decode(regulated.frames, batch.pitch, batch.energy, batch.durations, cond,
                              batch.frame_mask);
  out.mel_l1 = MaskedMean((out.coarse - batch.mel).abs(), batch.frame_mask);
  auto log_target = torch::log1p(batch.durations.to(prosody.log_duration.dtype()));
  out.duration_mse = MaskedMean((prosody.log_duration - log_target).square(), batch.phone_mask);
  out.pitch_mse = MaskedMean((prosody.pitch - batch.pitch).square(), batch.phone_mask);
  out.energy_mse = MaskedMean((prosody.energy - batch.energy).square(), batch.phone_mask);
  out.flow_nll = FlowNll(model_->postnet, out.coarse.detach(), batch.mel, batch.frame_mask);
  return out;
}

LossReport Trainer::TrainStep(const Batch& batch) {
  model_->train();
  discriminator_->train();
  SetLearningRate(*g_optimizer_,
                  config_.learning_rate *
                      std::min(1.0, static_cast<double>(step_ + 1) /
                                        static_cast<double>(std::max<int64_t>(1, config_.warmup_steps))));
  Outputs out = Forward(batch);
  const LossWeights& w = config_.weights;
  auto total = w.mel * out.mel_l1 + w.duration * out.duration_mse + w.pitch * out.pitch_mse +
               w.energy * out.energy_mse + w.flow * out.flow_nll;

  const bool adversarial = w.adversarial > 0 && step_ >= config_.adversarial_start;
  torch::Tensor adv_g, adv_d;
  std::vector<torch::Tensor> fakes, reals;
  if (adversarial) {
    // Score each item on its own valid frames so padding never reaches D.
    std::vector<torch::Tensor> g_terms;
    for (size_t i = 0; i < batch.frame_lengths.size(); ++i) {
      const int64_t t = batch.frame_lengths[i];
      if (t < discriminator_->receptive_field()) continue;
      auto fake = out.coarse[static_cast<int64_t>(i)].slice(0, 0, t).unsqueeze(0);
      fakes.push_back(fake);
      reals.push_back(batch.mel[static_cast<int64_t>(i)].slice(0, 0, t).unsqueeze(0));
      g_terms.push_back((Discriminate(discriminator_, fake) - 1.0).square().mean());
    }
    if (!g_terms.empty()) {
      adv_g = torch::stack(g_terms).mean();
      total = total + w.adversarial * adv_g;
    }
  }
  if (!std::isfinite(total.item<double>())) {
    throw Error(ErrorKind::kNonFiniteLoss, "generator loss at step " + std::to_string(step_));
  }
  g_optimizer_->zero_grad();
  total.backward();
  g_optimizer_->step();

  if (!fakes.empty()) {
    std::vector<torch::Tensor> d_terms;
    for (size_t i = 0; i < fakes.size(); ++i) {
      d_terms.push_back((Discriminate(discriminator_, reals[i]) - 1.0).square().mean() +
                        Discriminate(discriminator_, fakes[i].detach()).square().mean());
    }
    adv_d = torch::stack(d_terms).mean();
    if (!std::isfinite(adv_d.item<double>())) {
      throw Error(ErrorKind::kNonFiniteLoss, "discriminator loss at step " + std::to_string(step_));
    }
    d_optimizer_->zero_grad();
    adv_d.backward();
    d_optimizer_->step();
  }
  ++step_;

  LossReport r;
  r.mel_l1 = Scalar(out.mel_l1);
  r.duration_mse = Scalar(out.duration_mse);
  r.pitch_mse = Scalar(out.pitch_mse);
  r.energy_mse = Scalar(out.energy_mse);
  r.flow_nll = Scalar(out.flow_nll);
  r.adv_g = Scalar(adv_g);
  r.adv_d = Scalar(adv_d);
  r.total = Scalar(total);
  return r;
}

LossReport Trainer::Evaluate(const Batch& batch) {
  torch::NoGradGuard no_grad;
  model_->eval();
  Outputs out = Forward(batch);
  const LossWeights& w = config_.weights;
  LossReport r;
  r.mel_l1 = Scalar(out.mel_l1);
  r.duration_mse = Scalar(out.duration_mse);
  r.pitch_mse = Scalar(out.pitch_mse);
  r.energy_mse = Scalar(out.energy_mse);
  r.flow_nll = Scalar(out.flow_nll);
  r.total = w.mel * r.mel_l1 + w.duration * r.duration_mse + w.pitch * r.pitch_mse +
            w.energy * r.energy_mse + w.flow * r.flow_nll;
  return r;
}

CheckpointFile Trainer::SaveState() {
  CheckpointFile file;
  file.header["kind"] = "trainer";
  file.header["model_config"] = model_config_;
  file.header["training_config"] = config_;
  file.header["step"] = step_;
  AppendModuleTensors(*model_, "model.", file);
  AppendModuleTensors(*discriminator_, "disc.", file);
  AppendAdamState(*g_optimizer_, "adam_g.", file);
  AppendAdamState(*d_optimizer_, "adam_d.", file);
  return file;
}

void Trainer::LoadState(const CheckpointFile& file) {
  if (file.header.value("kind", "") != "trainer") {
    throw Error(ErrorKind::kFormatError, "not a trainer checkpoint");
  }
  if (file.header.at("model_config") != nlohmann::json(model_config_)) {
    throw Error(ErrorKind::kResumeMismatch, "model configuration differs from checkpoint");
  }
  if (file.header.at("training_config") != nlohmann::json(config_)) {
    throw Error(ErrorKind::kResumeMismatch, "training configuration differs from checkpoint");
  }
  LoadModuleTensors(*model_, "model.", file);
  LoadModuleTensors(*discriminator_, "disc.", file);
  LoadAdamState(*g_optimizer_, "adam_g.", file);
  LoadAdamState(*d_optimizer_, "adam_d.", file);
  step_ = file.header.at("step").get<int64_t>();
}

std::vector<size_t> BatchIndices(size_t dataset_size, int64_t batch_size, uint64_t seed,
                                 int stage, int64_t stage_step) {
  if (dataset_size == 0) throw Error(ErrorKind::kEmptyInput, "empty training set");
  const size_t bs = static_cast<size_t>(batch_size);
  const size_t per_epoch = (dataset_size + bs - 1) / bs;
  const size_t epoch = static_cast<size_t>(stage_step) / per_epoch;
  const size_t pos = static_cast<size_t>(stage_step) % per_epoch;
  std::vector<size_t> perm(dataset_size);
  for (size_t i = 0; i < dataset_size; ++i) perm[i] = i;
  Rng rng(MixSeed(MixSeed(seed, static_cast<uint64_t>(stage)), epoch));
  for (size_t i = dataset_size - 1; i > 0; --i) {
    std::swap(perm[i], perm[UniformIndex(rng, i + 1)]);
  }
  const size_t begin = pos * bs;
  const size_t end = std::min(dataset_size, begin + bs);
  return std::vector<size_t>(perm.begin() + static_cast<std::ptrdiff_t>(begin),
                             perm.begin() + static_cast<std::ptrdiff_t>(end));
}

const char* LossLogHeader() {
  return "step,stage,unlabeled,mel_l1,duration_mse,pitch_mse,energy_mse,flow_nll,adv_g,adv_d,"
         "total";
}

std::string FormatLossRow(int64_t step, int stage, int unlabeled, const LossReport& r) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), "%lld,%d,%d,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g",
                static_cast<long long>(step), stage, unlabeled, r.mel_l1, r.duration_mse, r.pitch_mse,
                r.energy_mse, r.flow_nll, r.adv_g, r.adv_d, r.total);
  return buf;
}

void RunCurriculum(Trainer& trainer, const CurriculumData& data,
                   const CurriculumOptions& options) {
  if (!data.pool || !data.encoder) throw Error(ErrorKind::kConfigError, "pool and encoder required");
  const TrainingConfig& cfg = trainer.config();
  const fs::path dir(options.out_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorKind::kIoError, "cannot create " + dir.string());
  const std::string latest = (dir / "latest.ckpt").string();
  const std::string log_path = (dir / "train_log.csv").string();

  std::vector<std::string> kept_rows;
  if (options.resume && fs::exists(latest)) {
    trainer.LoadState(ReadCheckpoint(latest));
    std::ifstream in(log_path);
    std::string line;
    std::getline(in, line);  // header
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      if (std::stoll(line.substr(0, line.find(','))) <= trainer.step()) kept_rows.push_back(line);
    }
  }
  {
    std::ofstream log(log_path, std::ios::binary | std::ios::trunc);
    if (!log) throw Error(ErrorKind::kIoError, "cannot write " + log_path);
    log << LossLogHeader() << "\n";
    for (const auto& row : kept_rows) log << row << "\n";
  }
  std::ofstream log(log_path, std::ios::binary | std::ios::app);

  std::vector<const PreparedUtterance*> stage1, stage2;
  for (const auto& u : data.labeled) {
    if (!u.emotion) throw Error(ErrorKind::kConfigError, u.id + ": labeled set entry without emotion");
    stage1.push_back(&u);
    stage2.push_back(&u);
  }
  for (const auto& u : data.unlabeled) stage1.push_back(&u);

  const int64_t total_steps = cfg.stage1_steps + cfg.stage2_steps;
  const int64_t end = options.stop_after >= 0 ? std::min(total_steps, options.stop_after)
                                              : total_steps;
  for (int64_t g = trainer.step(); g < end; ++g) {
    const int stage = g < cfg.stage1_steps ? 1 : 2;
    const int64_t stage_step = stage == 1 ? g : g - cfg.stage1_steps;
    const auto& set = stage == 1 ? stage1 : stage2;
    const auto indices = BatchIndices(set.size(), cfg.batch_size, cfg.seed, stage, stage_step);
    Rng rng(MixSeed(MixSeed(cfg.seed, 0x70726f6d7074ull), static_cast<uint64_t>(g)));
    std::vector<const PreparedUtterance*> items;
    std::vector<PromptEmbedding> prompts;
    int unlabeled = 0;
    for (size_t i : indices) {
      items.push_back(set[i]);
      unlabeled += !set[i]->emotion.has_value();
      prompts.push_back(SelectPromptForSample(*set[i], stage, *data.pool, *data.encoder,
                                              cfg.stage1_self_prompt_labeled, rng));
    }
    const LossReport report = trainer.TrainStep(Collate(items, prompts));
    log << FormatLossRow(g + 1, stage, unlabeled, report) << "\n";
    log.flush();
    if ((g + 1) % cfg.checkpoint_interval == 0 || g + 1 == end) {
      WriteAtomically(latest, trainer.SaveState());
    }
  }
  if (trainer.step() == total_steps) {
    WriteAtomically((dir / "model.ckpt").string(), SaveModel(trainer.model()));
  }
}

CheckpointFile SaveModel(AcousticModel& model) {
  CheckpointFile file;
  file.header["kind"] = "model";
  file.header["model_config"] = model->config();
  AppendModuleTensors(*model, "model.", file);
  return file;
}

AcousticModel LoadModel(const CheckpointFile& file) {
  if (!file.header.contains("model_config")) {
    throw Error(ErrorKind::kFormatError, "checkpoint has no model_config");
  }
  AcousticModelConfig config = file.header.at("model_config").get<AcousticModelConfig>();
  AcousticModel model(config);
  LoadModuleTensors(*model, "model.", file);
  model->eval();
  return model;
}

}  // namespace prompted_tts
