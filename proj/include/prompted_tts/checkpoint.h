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

#ifndef PROMPTED_TTS_CHECKPOINT_H_
#define PROMPTED_TTS_CHECKPOINT_H_

#include <string>
#include <utility>
#include <vector>

#include <torch/torch.h>

#include "json.hpp"

namespace prompted_tts {

// On-disk layout (all integers little-endian):
//   8 bytes   magic "PTTSCKPT"
//   u32       format version (1)
//   u64       header length in bytes
//   header    UTF-8 JSON object; key "tensors" lists {name, shape, offset}
//             where offset counts float32 elements into the data section
//   data      every tensor as contiguous float32, in header order
struct CheckpointFile {
  nlohmann::json header = nlohmann::json::object();
  std::vector<std::pair<std::string, torch::Tensor>> tensors;

  // Throws FormatError if absent.
  const torch::Tensor& Get(const std::string& name) const;
  bool Has(const std::string& name) const;
};

constexpr uint32_t kCheckpointVersion = 1;

std::vector<uint8_t> EncodeCheckpoint(const CheckpointFile& file);
CheckpointFile DecodeCheckpoint(const std::vector<uint8_t>& bytes);

void WriteCheckpoint(const std::string& path, const CheckpointFile& file);
// FormatError on bad magic or version, TruncatedFile on short data.
CheckpointFile ReadCheckpoint(const std::string& path);

// Parameters and buffers of a module under `prefix`.
void AppendModuleTensors(torch::nn::Module& module, const std::string& prefix,
                         CheckpointFile& file);
// Copies stored tensors into the module; FormatError on missing names or
// shape mismatches.
void LoadModuleTensors(torch::nn::Module& module, const std::string& prefix,
                       const CheckpointFile& file);

}  // namespace prompted_tts

#endif  // PROMPTED_TTS_CHECKPOINT_H_
