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


#include <cstring>
#include <fstream>
#include <vector>

#include "doctest.h"
#include "prompted_tts/checkpoint.h"
#include "prompted_tts/error.h"
#include "test_util.h"

namespace prompted_tts {
namespace {

ErrorKind DecodeError(const std::vector<uint8_t>& bytes) {
  try {
    DecodeCheckpoint(bytes);
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an Error");
  return ErrorKind::kConfigError;
}

CheckpointFile Sample() {
  CheckpointFile f;
  f.header["kind"] = "test";
  f.header["step"] = 42;
  f.tensors.emplace_back("a", torch::arange(6, torch::kFloat32).reshape({2, 3}));
  f.tensors.emplace_back("b/c", torch::tensor({-1.5f}));
  f.tensors.emplace_back("empty", torch::zeros({0, 4}));
  return f;
}

TEST_SUITE("checkpoint") {

TEST_CASE("encode/decode round trip") {
  const auto bytes = EncodeCheckpoint(Sample());
  const auto back = DecodeCheckpoint(bytes);
  CHECK(back.header["kind"] == "test");
  CHECK(back.header["step"] == 42);
  REQUIRE(back.tensors.size() == 3);
  CHECK(torch::equal(back.Get("a"), Sample().Get("a")));
  CHECK(back.Get("b/c").item<float>() == -1.5f);
  CHECK(back.Get("empty").sizes() == torch::IntArrayRef{0, 4});
  CHECK(EncodeCheckpoint(back) == bytes);
  CHECK_FALSE(back.Has("nope"));
  CHECK_THROWS_AS(back.Get("nope"), Error);
}

TEST_CASE("layout is readable without the library") {
  const auto bytes = EncodeCheckpoint(Sample());
  REQUIRE(bytes.size() > 20);
  CHECK(std::memcmp(bytes.data(), "PTTSCKPT", 8) == 0);
  uint32_t version = 0;
  uint64_t header_len = 0;
  for (int i = 0; i < 4; ++i) version |= static_cast<uint32_t>(bytes[8 + i]) << (8 * i);
  for (int i = 0; i < 8; ++i) header_len |= static_cast<uint64_t>(bytes[12 + i]) << (8 * i);
  CHECK(version == kCheckpointVersion);
  const std::string header(bytes.begin() + 20, bytes.begin() + 20 + header_len);
  const auto j = nlohmann::json::parse(header);
  CHECK(j["tensors"].size() == 3);
  CHECK(bytes.size() == 20 + header_len + 7 * sizeof(float));
  // Tensor "b/c" sits at element offset 6 of the data section.
  CHECK(j["tensors"][1]["offset"] == 6);
  float v;
  std::memcpy(&v, bytes.data() + 20 + header_len + 6 * sizeof(float), sizeof v);
  CHECK(v == -1.5f);
}

TEST_CASE("corrupt files are rejected") {
  auto bytes = EncodeCheckpoint(Sample());
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  CHECK(DecodeError(bad_magic) == ErrorKind::kFormatError);
  auto bad_version = bytes;
  bad_version[8] = 9;
  CHECK(DecodeError(bad_version) == ErrorKind::kFormatError);
  CHECK(DecodeError(std::vector<uint8_t>(bytes.begin(), bytes.end() - 1)) ==
        ErrorKind::kTruncatedFile);
  CHECK(DecodeError(std::vector<uint8_t>(bytes.begin(), bytes.begin() + 10)) ==
        ErrorKind::kTruncatedFile);
}

TEST_CASE("module tensors survive a file round trip") {
  testing::TempDir dir("ckpt");
  torch::nn::Linear a(3, 2), b(3, 2);
  CheckpointFile f;
  AppendModuleTensors(*a, "lin.", f);
  WriteCheckpoint(dir.File("m.ckpt"), f);
  LoadModuleTensors(*b, "lin.", ReadCheckpoint(dir.File("m.ckpt")));
  CHECK(torch::equal(a->weight, b->weight));
  CHECK(torch::equal(a->bias, b->bias));

  torch::nn::Linear wrong(4, 2);
  CHECK_THROWS_AS(LoadModuleTensors(*wrong, "lin.", f), Error);
  CHECK_THROWS_AS(LoadModuleTensors(*b, "other.", f), Error);
  CHECK_THROWS_AS(ReadCheckpoint(dir.File("missing.ckpt")), Error);
}

}  // TEST_SUITE

}  // namespace
}  // namespace prompted_tts
