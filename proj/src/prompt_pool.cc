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

#include "prompted_tts/prompt_pool.h"

#include <cstring>
#include <fstream>
#include <iterator>

#include "prompted_tts/error.h"

namespace prompted_tts {
namespace {

constexpr char kMagic[4] = {'P', 'P', 'L', '1'};
constexpr uint16_t kVersion = 1;

class ByteWriter {
 public:
  void Bytes(const void* data, size_t n) {
    const auto* p = static_cast<const uint8_t*>(data);
    out_.insert(out_.end(), p, p + n);
  }
  void U8(uint8_t v) { out_.push_back(v); }
  void U16(uint16_t v) {
    for (int i = 0; i < 2; ++i) out_.push_back(static_cast<uint8_t>(v >> (8 * i)));
  }
  void U32(uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<uint8_t>(v >> (8 * i)));
  }
  void F32(float v) {
    uint32_t bits;
    std::memcpy(&bits, &v, sizeof(bits));
    U32(bits);
  }
  std::vector<uint8_t> Take() { return std::move(out_); }

 private:
  std::vector<uint8_t> out_;
};

class ByteReader {
 public:
  explicit ByteReader(const std::vector<uint8_t>& in) : in_(in) {}
  void Need(size_t n, const char* what) const {
    if (in_.size() - pos_ < n) {
      throw Error(ErrorKind::kTruncatedFile, std::string("prompt pool truncated in ") + what);
    }
  }
  uint8_t U8(const char* what) {
    Need(1, what);
    return in_[pos_++];
  }
  uint16_t U16(const char* what) {
    Need(2, what);
    uint16_t v = static_cast<uint16_t>(in_[pos_] | (in_[pos_ + 1] << 8));
    pos_ += 2;
    return v;
  }
  uint32_t U32(const char* what) {
    Need(4, what);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(in_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  float F32(const char* what) {
    const uint32_t bits = U32(what);
    float v;
    std::memcpy(&v, &bits, sizeof(v));
    return v;
  }
  std::string String(size_t n, const char* what) {
    Need(n, what);
    std::string s(in_.begin() + static_cast<std::ptrdiff_t>(pos_),
                  in_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
    pos_ += n;
    return s;
  }
  bool AtEnd() const { return pos_ == in_.size(); }

 private:
  const std::vector<uint8_t>& in_;
  size_t pos_ = 0;
};

struct Template {
  const char* before;  // text before the emotion keyword
  const char* after;   // text after it
};

const std::vector<Template>& Templates(PromptStyle style) {
  static const std::vector<Template> kReview = {
      {"the hotel room was ", " overall"},
      {"i felt ", " about the delivery"},
      {"honestly the service left me ", ""},
      {"the staff made me feel ", " today"},
      {"this product is ", " in every way"},
      {"after the repair i was ", ""},
      {"the meal was ", " and i told the waiter"},
      {"my experience here was ", " from start to finish"},
  };
  static const std::vector<Template> kDialogue = {
      {"i am ", " right now"},
      {"you make me feel so ", ""},
      {"listen, this is ", ""},
      {"i just heard the news and i am ", ""},
      {"tell them i am ", " about it"},
      {"well that was ", ", was it not"},
      {"oh, ", ", look at this"},
      {"today i feel ", " again"},
  };
  return style == PromptStyle::kReview ? kReview : kDialogue;
}

}  // namespace

bool PromptPool::HasLabel(const std::string& label) const {
  for (const auto& e : entries) {
    if (e.first == label) return true;
  }
  return false;
}

const std::vector<PromptEmbedding>& PromptPool::ForLabel(const std::string& label) const {
  for (const auto& e : entries) {
    if (e.first == label) return e.second;
  }
  throw Error(ErrorKind::kUnknownEmotion, "prompt pool has no label '" + label + "'");
}

std::vector<std::string> PromptPool::labels() const {
  std::vector<std::string> out;
  for (const auto& e : entries) out.push_back(e.first);
  return out;
}

size_t PromptPool::total() const {
  size_t n = 0;
  for (const auto& e : entries) n += e.second.size();
  return n;
}

PromptPool BuildPromptPool(const std::vector<LabeledText>& texts, const PromptEncoder& encoder,
                           const TextEmotionClassifier& classifier,
                           const EmotionLabelSet& labels, int per_label_target,
                           double confidence_min, PoolBuildReport* report) {
  labels.Validate();
  PromptPool pool;
  pool.dim = encoder.dim();
  for (const auto& l : labels.labels) pool.entries.emplace_back(l, std::vector<PromptEmbedding>());
  PoolBuildReport local;
  for (const auto& l : labels.labels) {
    local.kept[l] = 0;
    local.rejected[l] = 0;
  }
  for (const auto& t : texts) {
    if (!labels.Contains(t.label)) {
      throw Error(ErrorKind::kUnknownEmotion, "prompt text label '" + t.label + "'");
    }
    auto& bucket = pool.entries[static_cast<size_t>(labels.IndexOf(t.label))].second;
    if (static_cast<int>(bucket.size()) >= per_label_target) continue;
    const TextEmotionPrediction pred = classifier.Classify(t.text);
    if (pred.label != t.label || pred.confidence < confidence_min) {
      ++local.rejected[t.label];
      continue;
    }
    bucket.push_back(ExtractPromptEmbedding(t.text, encoder));
    ++local.kept[t.label];
  }
  for (const auto& l : labels.labels) {
    const int missing = per_label_target - local.kept[l];
    if (missing > 0) local.shortfall[l] = missing;
  }
  if (report) *report = local;
  for (const auto& e : pool.entries) {
    if (e.second.empty()) {
      throw Error(ErrorKind::kEmptyPoolForLabel, "no prompts survived for '" + e.first + "'");
    }
  }
  return pool;
}

const PromptEmbedding& SamplePrompt(const PromptPool& pool, const std::string& label, Rng& rng) {
  const auto& entries = pool.ForLabel(label);
  if (entries.empty()) {
    throw Error(ErrorKind::kEmptyPoolForLabel, "prompt pool label '" + label + "' is empty");
  }
  return entries[UniformIndex(rng, entries.size())];
}

std::vector<uint8_t> EncodePromptPool(const PromptPool& pool) {
  ByteWriter w;
  w.Bytes(kMagic, sizeof(kMagic));
  w.U16(kVersion);
  w.U32(static_cast<uint32_t>(pool.dim));
  w.U32(static_cast<uint32_t>(pool.entries.size()));
  for (const auto& [label, embeddings] : pool.entries) {
    if (label.empty() || label.size() > 255) {
      throw Error(ErrorKind::kFormatError, "label length must be 1..255 bytes");
    }
    w.U8(static_cast<uint8_t>(label.size()));
    w.Bytes(label.data(), label.size());
    w.U32(static_cast<uint32_t>(embeddings.size()));
    for (const auto& e : embeddings) {
      if (static_cast<int64_t>(e.values.size()) != pool.dim) {
        throw Error(ErrorKind::kDimensionMismatch, "pool entry has wrong dimension");
      }
      for (float v : e.values) w.F32(v);
    }
  }
  return w.Take();
}

PromptPool DecodePromptPool(const std::vector<uint8_t>& bytes) {
  ByteReader r(bytes);
  const std::string magic = r.String(4, "magic");
  if (std::memcmp(magic.data(), kMagic, 4) != 0) {
    throw Error(ErrorKind::kFormatError, "bad prompt pool magic");
  }
  const uint16_t version = r.U16("version");
  if (version != kVersion) {
    throw Error(ErrorKind::kFormatError, "unsupported prompt pool version " + std::to_string(version));
  }
  PromptPool pool;
  pool.dim = r.U32("dim");
  if (pool.dim == 0) throw Error(ErrorKind::kFormatError, "prompt pool dim is 0");
  const uint32_t n_labels = r.U32("label count");
  for (uint32_t i = 0; i < n_labels; ++i) {
    const uint8_t len = r.U8("label length");
    if (len == 0) throw Error(ErrorKind::kFormatError, "empty label name");
    std::string label = r.String(len, "label");
    if (pool.HasLabel(label)) throw Error(ErrorKind::kFormatError, "duplicate label '" + label + "'");
    const uint32_t count = r.U32("entry count");
    // Check the payload size before allocating.
    r.Need(static_cast<size_t>(count) * static_cast<size_t>(pool.dim) * 4, "embeddings");
    std::vector<PromptEmbedding> embeddings(count);
    for (auto& e : embeddings) {
      e.values.resize(static_cast<size_t>(pool.dim));
      for (auto& v : e.values) v = r.F32("embeddings");
    }
    pool.entries.emplace_back(std::move(label), std::move(embeddings));
  }
  if (!r.AtEnd()) throw Error(ErrorKind::kFormatError, "trailing bytes after prompt pool");
  return pool;
}

void WritePromptPool(const std::string& path, const PromptPool& pool) {
  const auto bytes = EncodePromptPool(pool);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::kIoError, "cannot write " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorKind::kIoError, "write failed for " + path);
}

PromptPool ReadPromptPool(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIoError, "cannot open " + path);
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return DecodePromptPool(bytes);
}

std::vector<LabeledText> GeneratePromptTexts(const EmotionLexicon& lexicon,
                                             const EmotionLabelSet& labels, int per_label,
                                             PromptStyle style, double distractor_rate,
                                             uint64_t seed) {
  const auto& templates = Templates(style);
  std::vector<LabeledText> out;
  for (int li = 0; li < labels.size(); ++li) {
    const std::string& label = labels.labels[static_cast<size_t>(li)];
    const auto& keywords = lexicon.keywords(label);
    Rng rng(MixSeed(seed, Fnv1a64(label)));
    for (int k = 0; k < per_label; ++k) {
      const Template& t = templates[UniformIndex(rng, templates.size())];
      std::string text = std::string(t.before) + keywords[UniformIndex(rng, keywords.size())] + t.after;
      if (Uniform01(rng) < distractor_rate && labels.size() > 1) {
        std::string other = labels.labels[static_cast<size_t>(li)];
        while (other == label) other = labels.labels[UniformIndex(rng, labels.labels.size())];
        const auto& other_kw = lexicon.keywords(other);
        text += " but also " + other_kw[UniformIndex(rng, other_kw.size())];
      }
      out.push_back({label, text});
    }
  }
  return out;
}

}  // namespace prompted_tts
