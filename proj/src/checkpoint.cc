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

#include "prompted_tts/checkpoint.h"

#include <cstring>
#include <fstream>
#include <iterator>

#include "prompted_tts/error.h"

namespace prompted_tts {

namespace {

constexpr char kMagic[8] = {'P', 'T', 'T', 'S', 'C', 'K', 'P', 'T'};

template <typename T>
void PutLe(std::vector<uint8_t>& out, T value) {
  for (size_t i = 0; i < sizeof(T); ++i) {
    out.push_back(static_cast<uint8_t>(static_cast<uint64_t>(value) >> (8 * i)));
  }
}

template <typename T>
T GetLe(const std::vector<uint8_t>& in, size_t pos) {
  uint64_t v = 0;
  for (size_t i = 0; i < sizeof(T); ++i) v |= static_cast<uint64_t>(in[pos + i]) << (8 * i);
  return static_cast<T>(v);
}

}  // namespace

const torch::Tensor& CheckpointFile::Get(const std::string& name) const {
  for (const auto& [n, t] : tensors) {
    if (n == name) return t;
  }
  throw Error(ErrorKind::kFormatError, "checkpoint has no tensor '" + name + "'");
}

bool CheckpointFile::Has(const std::string& name) const {
  for (const auto& entry : tensors) {
    if (entry.first == name) return true;
  }
  return false;
}

std::vector<uint8_t> EncodeCheckpoint(const CheckpointFile& file) {
  nlohmann::json header = file.header;
  nlohmann::json index = nlohmann::json::array();
  int64_t offset = 0;
  std::vector<torch::Tensor> data;
  for (const auto& [name, tensor] : file.tensors) {
    auto t = tensor.detach().to(torch::kCPU, torch::kFloat32).contiguous();
    index.push_back({{"name", name}, {"shape", t.sizes().vec()}, {"offset", offset}});
    offset += t.numel();
    data.push_back(t);
  }
  header["tensors"] = index;
  const std::string text = header.dump();

  std::vector<uint8_t> out(kMagic, kMagic + 8);
  PutLe<uint32_t>(out, kCheckpointVersion);
  PutLe<uint64_t>(out, text.size());
  out.insert(out.end(), text.begin(), text.end());
  out.reserve(out.size() + 4 * offset);
  for (const auto& t : data) {
    const float* p = t.data_ptr<float>();
    for (int64_t i = 0; i < t.numel(); ++i) {
      uint32_t bits;
      std::memcpy(&bits, p + i, 4);
      PutLe<uint32_t>(out, bits);
    }
  }
  return out;
}

CheckpointFile DecodeCheckpoint(const std::vector<uint8_t>& bytes) {
  if (bytes.size() < 20) throw Error(ErrorKind::kTruncatedFile, "checkpoint preamble");
  if (std::memcmp(bytes.data(), kMagic, 8) != 0) {
    throw Error(ErrorKind::kFormatError, "bad checkpoint magic");
  }
  if (GetLe<uint32_t>(bytes, 8) != kCheckpointVersion) {
    throw Error(ErrorKind::kFormatError, "unsupported checkpoint version");
  }
  const uint64_t header_len = GetLe<uint64_t>(bytes, 12);
  if (bytes.size() < 20 + header_len) throw Error(ErrorKind::kTruncatedFile, "checkpoint header");
  CheckpointFile file;
  try {
    file.header = nlohmann::json::parse(bytes.begin() + 20, bytes.begin() + 20 + header_len);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kFormatError, std::string("checkpoint header: ") + e.what());
  }
  const size_t data_start = 20 + header_len;
  for (const auto& entry : file.header.at("tensors")) {
    const auto shape = entry.at("shape").get<std::vector<int64_t>>();
    const int64_t offset = entry.at("offset").get<int64_t>();
    int64_t numel = 1;
    for (int64_t s : shape) numel *= s;
    if (data_start + 4 * (offset + numel) > bytes.size()) {
      throw Error(ErrorKind::kTruncatedFile, "tensor " + entry.at("name").get<std::string>());
    }
    auto t = torch::empty(shape, torch::kFloat32);
    float* p = t.data_ptr<float>();
    for (int64_t i = 0; i < numel; ++i) {
      const uint32_t bits = GetLe<uint32_t>(bytes, data_start + 4 * (offset + i));
      std::memcpy(p + i, &bits, 4);
    }
    file.tensors.emplace_back(entry.at("name").get<std::string>(), t);
  }
  file.header.erase("tensors");
  return file;
}

void WriteCheckpoint(const std::string& path, const CheckpointFile& file) {
  const auto bytes = EncodeCheckpoint(file);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::kIoError, "cannot write " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorKind::kIoError, "short write to " + path);
}

CheckpointFile ReadCheckpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIoError, "cannot open " + path);
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return DecodeCheckpoint(bytes);
}

void AppendModuleTensors(torch::nn::Module& module, const std::string& prefix,
                         CheckpointFile& file) {
  for (const auto& item : module.named_parameters(true)) {
    file.tensors.emplace_back(prefix + item.key(), item.value());
  }
  for (const auto& item : module.named_buffers(true)) {
    file.tensors.emplace_back(prefix + item.key(), item.value());
  }
}

void LoadModuleTensors(torch::nn::Module& module, const std::string& prefix,
                       const CheckpointFile& file) {
  torch::NoGradGuard no_grad;
  auto load = [&](const std::string& key, torch::Tensor& target) {
    const auto& stored = file.Get(prefix + key);
    if (stored.sizes() != target.sizes()) {
      throw Error(ErrorKind::kFormatError, "shape mismatch for " + prefix + key);
    }
    target.copy_(stored);
  };
  for (auto& item : module.named_parameters(true)) load(item.key(), item.value());
  for (auto& item : module.named_buffers(true)) load(item.key(), item.value());
}

}  // namespace prompted_tts
