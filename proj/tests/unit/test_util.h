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


#ifndef PROMPTED_TTS_TESTS_UNIT_TEST_UTIL_H_
#define PROMPTED_TTS_TESTS_UNIT_TEST_UTIL_H_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>

#include <torch/torch.h>

#include "prompted_tts/acoustic_model.h"

namespace prompted_tts::testing {

// Fresh empty directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag);
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::string File(const std::string& name) const { return (path_ / name).string(); }

 private:
  std::filesystem::path path_;
};

// ||analytic - numeric|| / max(||analytic||, ||numeric||, 1e-6 max(1, |loss|))
// for the gradient of the scalar `loss()` with respect to `target`, a float64
// leaf tensor that requires grad. Numeric gradients use central differences with step eps.
double RelativeGradientError(const std::function<torch::Tensor()>& loss,
                             const torch::Tensor& target, double eps = 1e-6);

// Maximum relative gradient error over all parameters of `module` (and any
// extra leaves), each checked separately.
double MaxModuleGradientError(torch::nn::Module& module,
                              const std::function<torch::Tensor()>& loss,
                              const std::vector<torch::Tensor>& extra = {});

// Random contraction weights so that every output element matters.
torch::Tensor RandomProjection(const torch::Tensor& like, uint64_t seed);

// Adds N(0, scale^2) noise to every parameter. The declared initialization
// leaves conditional layernorms blind to the condition, so liveness checks
// start from perturbed weights.
void PerturbParameters(torch::nn::Module& module, double scale, uint64_t seed);

// Small model over the shipped feature table, for fast tests.
AcousticModelConfig TinyModelConfig();

}  // namespace prompted_tts::testing

#endif  // PROMPTED_TTS_TESTS_UNIT_TEST_UTIL_H_
