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

#include "prompted_tts/text_frontend.h"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include "prompted_tts/error.h"

namespace prompted_tts {

namespace {

std::vector<std::string> SplitTabs(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, '\t')) out.push_back(field);
  if (!line.empty() && line.back() == '\t') out.emplace_back();
  return out;
}

}  // namespace

std::string DefaultDataDir() {
  if (const char* env = std::getenv("PROMPTED_TTS_DATA_DIR"); env && *env) {
    return env;
  }
  return PROMPTED_TTS_DATA_DIR;
}

FeatureTable FeatureTable::Load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kIoError, "cannot open feature table " + path);
  return Parse(in);
}

FeatureTable FeatureTable::LoadDefault() {
  return Load(DefaultDataDir() + "/articulatory_features_v1.tsv");
}

FeatureTable FeatureTable::Parse(std::istream& in) {
  FeatureTable table;
  std::string line;
  if (!std::getline(in, line)) {
    throw Error(ErrorKind::kParseError, "feature table: missing header");
  }
  if (!line.empty() && line.back() == '\r') line.pop_back();
  auto header = SplitTabs(line);
  if (header.size() < 2 || header[0] != "phoneme") {
    throw Error(ErrorKind::kParseError,
                "feature table line 1: header must start with 'phoneme'");
  }
  table.feature_names_.assign(header.begin() + 1, header.end());
  const size_t num_features = table.feature_names_.size();

  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto fields = SplitTabs(line);
    if (fields.size() != num_features + 1) {
      throw Error(ErrorKind::kParseError,
                  "feature table line " + std::to_string(line_no) + ": expected " +
                      std::to_string(num_features + 1) + " fields");
    }
    std::vector<float> row(num_features);
    for (size_t i = 0; i < num_features; ++i) {
      try {
        size_t used = 0;
        row[i] = std::stof(fields[i + 1], &used);
        if (used != fields[i + 1].size()) throw std::invalid_argument("trailing");
      } catch (const std::exception&) {
        throw Error(ErrorKind::kParseError, "feature table line " +
                                                std::to_string(line_no) +
                                                ": bad value '" + fields[i + 1] + "'");
      }
      if (!(row[i] >= 0.0f && row[i] <= 1.0f)) {
        throw Error(ErrorKind::kParseError, "feature table line " +
                                                std::to_string(line_no) +
                                                ": value outside [0,1]");
      }
    }
    const std::string& phoneme = fields[0];
    if (table.rows_.count(phoneme)) {
      throw Error(ErrorKind::kParseError, "feature table line " +
                                              std::to_string(line_no) +
                                              ": duplicate phoneme " + phoneme);
    }
    table.inventory_.push_back(phoneme);
    table.rows_.emplace(phoneme, std::move(row));
  }
  return table;
}

bool FeatureTable::Contains(const std::string& phoneme) const {
  return rows_.count(phoneme) > 0;
}

const std::vector<float>& FeatureTable::Row(const std::string& phoneme) const {
  auto it = rows_.find(phoneme);
  if (it == rows_.end()) {
    throw Error(ErrorKind::kUnknownSymbol, "phoneme '" + phoneme + "' not in table");
  }
  return it->second;
}

std::string NormalizeText(const std::string& text) {
  std::string out;
  out.reserve(text.size());
  bool pending_space = false;
  for (unsigned char c : text) {
    if (c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f') {
      pending_space = !out.empty();
      continue;
    }
    if (c < 0x20 || c == 0x7f) continue;
    if (pending_space) {
      out.push_back(' ');
      pending_space = false;
    }
    out.push_back(static_cast<char>(c >= 'A' && c <= 'Z' ? c - 'A' + 'a' : c));
  }
  return out;
}

FallbackPhonemizer::FallbackPhonemizer() {
  const std::pair<char, std::vector<std::string>> letters[] = {
      {'a', {"æ"}}, {'b', {"b"}}, {'c', {"k"}}, {'d', {"d"}},  {'e', {"ɛ"}},
      {'f', {"f"}}, {'g', {"ɡ"}}, {'h', {"h"}}, {'i', {"ɪ"}},  {'j', {"dʒ"}},
      {'k', {"k"}}, {'l', {"l"}}, {'m', {"m"}}, {'n', {"n"}},  {'o', {"ɔ"}},
      {'p', {"p"}}, {'q', {"k"}}, {'r', {"ɹ"}}, {'s', {"s"}},  {'t', {"t"}},
      {'u', {"ʌ"}}, {'v', {"v"}}, {'w', {"w"}}, {'x', {"k", "s"}},
      {'y', {"j"}}, {'z', {"z"}},
  };
  for (const auto& [g, p] : letters) table_[g] = p;
  // Digits read out as their English names.
  table_['0'] = {"z", "i", "ɹ", "o"};
  table_['1'] = {"w", "ʌ", "n"};
  table_['2'] = {"t", "u"};
  table_['3'] = {"θ", "ɹ", "i"};
  table_['4'] = {"f", "ɔ", "ɹ"};
  table_['5'] = {"f", "a", "ɪ", "v"};
  table_['6'] = {"s", "ɪ", "k", "s"};
  table_['7'] = {"s", "ɛ", "v", "ə", "n"};
  table_['8'] = {"e", "ɪ", "t"};
  table_['9'] = {"n", "a", "ɪ", "n"};
  table_[' '] = {"#"};
  for (char c : std::string(",;:-")) table_[c] = {"_"};
  for (char c : std::string(".!?")) table_[c] = {"~"};
}

const std::vector<std::string>& FallbackPhonemizer::Lookup(char grapheme) const {
  static const std::vector<std::string> kNone;
  auto it = table_.find(grapheme);
  return it == table_.end() ? kNone : it->second;
}

std::vector<std::string> FallbackPhonemizer::Phonemize(
    const std::string& normalized) const {
  std::vector<std::string> out;
  for (char c : normalized) {
    const auto& phonemes = Lookup(c);
    out.insert(out.end(), phonemes.begin(), phonemes.end());
  }
  return out;
}

EspeakPhonemizer::EspeakPhonemizer(std::vector<std::string> inventory,
                                   std::string voice, std::string executable)
    : inventory_(std::move(inventory)),
      voice_(std::move(voice)),
      executable_(std::move(executable)) {}

bool EspeakPhonemizer::IsAvailable(const std::string& executable) {
  std::string cmd = "command -v " + executable + " >/dev/null 2>&1";
  return std::system(cmd.c_str()) == 0;
}

std::vector<std::string> EspeakPhonemizer::SplitIpa(const std::string& ipa) const {
  // Stress and length marks carry no segment of their own.
  static const std::unordered_set<std::string> kIgnored = {"ˈ", "ˌ", "ː", "ˑ", "͡"};
  std::vector<std::string> out;
  size_t pos = 0;
  bool word_started = false;
  while (pos < ipa.size()) {
    unsigned char c = ipa[pos];
    if (c == ' ' || c == '\n' || c == '\t') {
      if (word_started) out.push_back("#");
      word_started = false;
      ++pos;
      continue;
    }
    size_t best = 0;
    for (const auto& symbol : inventory_) {
      if (symbol.size() > best && ipa.compare(pos, symbol.size(), symbol) == 0) {
        best = symbol.size();
      }
    }
    if (best > 0) {
      out.push_back(ipa.substr(pos, best));
      word_started = true;
      pos += best;
      continue;
    }
    size_t len = 1;
    if (c >= 0xf0) len = 4;
    else if (c >= 0xe0) len = 3;
    else if (c >= 0xc0) len = 2;
    std::string symbol = ipa.substr(pos, len);
    pos += len;
    if (kIgnored.count(symbol)) continue;
    out.push_back(symbol);
    word_started = true;
  }
  while (!out.empty() && out.back() == "#") out.pop_back();
  return out;
}

std::vector<std::string> EspeakPhonemizer::Phonemize(
    const std::string& normalized) const {
  std::string quoted = "'";
  for (char c : normalized) {
    if (c == '\'') quoted += "'\\''";
    else quoted += c;
  }
  quoted += "'";
  std::string cmd = executable_ + " -q --ipa -v " + voice_ + " " + quoted + " 2>/dev/null";
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) throw Error(ErrorKind::kIoError, "cannot run " + executable_);
  std::string ipa;
  char buffer[256];
  while (fgets(buffer, sizeof(buffer), pipe)) ipa += buffer;
  if (pclose(pipe) != 0) throw Error(ErrorKind::kIoError, executable_ + " failed");
  return SplitIpa(ipa);
}

PhonemeSequence TextToPhonemes(const std::string& text,
                               const PhonemizerBackend& backend,
                               const FeatureTable& inventory) {
  const std::string normalized = NormalizeText(text);
  if (normalized.empty()) {
    throw Error(ErrorKind::kEmptyInput, "text is empty after normalization");
  }
  PhonemeSequence seq;
  seq.language_tag = backend.language_tag();
  seq.symbols = backend.Phonemize(normalized);
  for (size_t i = 0; i < seq.symbols.size(); ++i) {
    if (!inventory.Contains(seq.symbols[i])) {
      throw Error(ErrorKind::kUnknownSymbol, "backend emitted '" + seq.symbols[i] +
                                                 "' at position " + std::to_string(i));
    }
  }
  if (seq.symbols.empty()) {
    throw Error(ErrorKind::kEmptyInput, "text '" + normalized + "' yields no phonemes");
  }
  return seq;
}

ArticulatoryFeatureMatrix PhonemesToFeatures(const PhonemeSequence& seq,
                                             const FeatureTable& table) {
  const int64_t n = static_cast<int64_t>(seq.symbols.size());
  const int64_t f = table.num_features();
  ArticulatoryFeatureMatrix out;
  out.feature_names = table.feature_names();
  out.values = torch::empty({n, f}, torch::kFloat32);
  auto acc = out.values.accessor<float, 2>();
  for (int64_t i = 0; i < n; ++i) {
    const auto& symbol = seq.symbols[i];
    if (!table.Contains(symbol)) {
      throw Error(ErrorKind::kUnknownSymbol,
                  "'" + symbol + "' at position " + std::to_string(i));
    }
    const auto& row = table.Row(symbol);
    for (int64_t j = 0; j < f; ++j) acc[i][j] = row[j];
  }
  return out;
}

}  // namespace prompted_tts
