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

#include "prompted_tts/evaluation.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <boost/math/special_functions/gamma.hpp>

#include "prompted_tts/error.h"
#include "prompted_tts/parallel.h"

namespace prompted_tts {
namespace {

void CheckMarginals(const CountMatrix& counts, std::vector<double>* rows,
                    std::vector<double>* cols, double* total) {
  if (counts.empty() || counts[0].empty()) {
    throw Error(ErrorKind::kDegenerateMarginal, "empty contingency table");
  }
  const size_t c = counts[0].size();
  rows->assign(counts.size(), 0.0);
  cols->assign(c, 0.0);
  *total = 0.0;
  for (size_t i = 0; i < counts.size(); ++i) {
    if (counts[i].size() != c) throw Error(ErrorKind::kShapeMismatch, "ragged contingency table");
    for (size_t j = 0; j < c; ++j) {
      if (counts[i][j] < 0) throw Error(ErrorKind::kShapeMismatch, "negative count");
      const double v = static_cast<double>(counts[i][j]);
      (*rows)[i] += v;
      (*cols)[j] += v;
      *total += v;
    }
  }
  for (size_t i = 0; i < rows->size(); ++i) {
    if ((*rows)[i] == 0.0) {
      throw Error(ErrorKind::kDegenerateMarginal, "row " + std::to_string(i) + " sums to zero");
    }
  }
  for (size_t j = 0; j < c; ++j) {
    if ((*cols)[j] == 0.0) {
      throw Error(ErrorKind::kDegenerateMarginal, "column " + std::to_string(j) + " sums to zero");
    }
  }
}

// Frame-level quantities shared by the prosody proxy and the speaker
// embedder.
struct FrameView {
  std::vector<double> energy;  // log-sum-exp over bins
  double max_energy = -std::numeric_limits<double>::infinity();
};

FrameView ViewFrames(const torch::Tensor& mel) {
  FrameView v;
  auto e = torch::logsumexp(mel.to(torch::kFloat64), 1).contiguous();
  v.energy.assign(e.data_ptr<double>(), e.data_ptr<double>() + e.numel());
  for (double x : v.energy) v.max_energy = std::max(v.max_energy, x);
  return v;
}

// Frames within this many nats of the loudest frame count as active.
constexpr double kActiveRange = 4.0;
// A voiced frame's low band reaches within this range of the frame maximum,
// and its F0 peak within this range of the band maximum.
constexpr double kVoicedBandRange = 2.0;
constexpr double kPeakRange = 2.3;

}  // namespace

double CosineSimilarity(const std::vector<float>& a, const std::vector<float>& b) {
  if (a.size() != b.size()) {
    throw Error(ErrorKind::kLengthMismatch, "vectors of length " + std::to_string(a.size()) +
                                                " and " + std::to_string(b.size()));
  }
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    dot += static_cast<double>(a[i]) * b[i];
    na += static_cast<double>(a[i]) * a[i];
    nb += static_cast<double>(b[i]) * b[i];
  }
  if (na == 0.0 || nb == 0.0) throw Error(ErrorKind::kZeroVector, "cosine of a zero vector");
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

ChiSquareResult ChiSquareIndependence(const CountMatrix& counts) {
  std::vector<double> rows, cols;
  double n = 0.0;
  CheckMarginals(counts, &rows, &cols, &n);
  ChiSquareResult r;
  // (O - E)^2 / E = (n O - r c)^2 / (n r c); the deviation n O - r c is an
  // exact integer, so independent tables give exactly zero.
  for (size_t i = 0; i < rows.size(); ++i) {
    for (size_t j = 0; j < cols.size(); ++j) {
      const auto deviation = static_cast<__int128>(n) * counts[i][j] -
                             static_cast<__int128>(rows[i]) * static_cast<__int128>(cols[j]);
      const double d = static_cast<double>(deviation);
      r.statistic += d * d / (n * rows[i] * cols[j]);
    }
  }
  r.dof = static_cast<int64_t>((rows.size() - 1) * (cols.size() - 1));
  r.p_value = r.dof == 0 ? 1.0 : boost::math::gamma_q(r.dof / 2.0, r.statistic / 2.0);
  return r;
}

double CramersV(const CountMatrix& counts) {
  const ChiSquareResult chi = ChiSquareIndependence(counts);
  const size_t k = std::min(counts.size(), counts[0].size()) - 1;
  if (k == 0 || chi.statistic == 0.0) return 0.0;
  // chi2 / n = sum O^2 / (r c) - 1. Each term of a perfectly associated table
  // is exactly 1, so this form gives V = 1 there without rounding.
  std::vector<double> rows(counts.size(), 0.0), cols(counts[0].size(), 0.0);
  for (size_t i = 0; i < counts.size(); ++i) {
    for (size_t j = 0; j < counts[i].size(); ++j) {
      rows[i] += static_cast<double>(counts[i][j]);
      cols[j] += static_cast<double>(counts[i][j]);
    }
  }
  double sum = 0.0;
  for (size_t i = 0; i < counts.size(); ++i) {
    for (size_t j = 0; j < counts[i].size(); ++j) {
      const double o = static_cast<double>(counts[i][j]);
      if (o != 0.0) sum += o * o / (rows[i] * cols[j]);
    }
  }
  return std::sqrt(std::clamp((sum - 1.0) / static_cast<double>(k), 0.0, 1.0));
}

CountMatrix DropEmptyMarginals(const CountMatrix& counts, std::vector<size_t>* rows,
                               std::vector<size_t>* cols) {
  std::vector<size_t> keep_rows, keep_cols;
  const size_t c = counts.empty() ? 0 : counts[0].size();
  for (size_t i = 0; i < counts.size(); ++i) {
    if (std::accumulate(counts[i].begin(), counts[i].end(), int64_t{0}) != 0) keep_rows.push_back(i);
  }
  for (size_t j = 0; j < c; ++j) {
    int64_t sum = 0;
    for (const auto& row : counts) sum += row[j];
    if (sum != 0) keep_cols.push_back(j);
  }
  CountMatrix out;
  for (size_t i : keep_rows) {
    std::vector<int64_t> row;
    for (size_t j : keep_cols) row.push_back(counts[i][j]);
    out.push_back(std::move(row));
  }
  if (rows) *rows = keep_rows;
  if (cols) *cols = keep_cols;
  return out;
}

CountMatrix EmotionConfusion(const std::vector<std::string>& intended,
                             const std::vector<std::string>& recognized,
                             const EmotionLabelSet& labels) {
  if (intended.size() != recognized.size()) {
    throw Error(ErrorKind::kLengthMismatch,
                std::to_string(intended.size()) + " intended vs " +
                    std::to_string(recognized.size()) + " recognized labels");
  }
  const size_t k = labels.labels.size();
  CountMatrix counts(k, std::vector<int64_t>(k, 0));
  for (size_t i = 0; i < intended.size(); ++i) {
    ++counts[static_cast<size_t>(labels.IndexOf(intended[i]))]
            [static_cast<size_t>(labels.IndexOf(recognized[i]))];
  }
  return counts;
}

std::vector<std::vector<double>> RowNormalize(const CountMatrix& counts) {
  std::vector<std::vector<double>> out;
  for (const auto& row : counts) {
    const double sum = static_cast<double>(std::accumulate(row.begin(), row.end(), int64_t{0}));
    std::vector<double> r(row.size(), 0.0);
    if (sum > 0) {
      for (size_t j = 0; j < row.size(); ++j) r[j] = static_cast<double>(row[j]) / sum;
    }
    out.push_back(std::move(r));
  }
  return out;
}

ProsodyProxy ExtractProsodyProxy(const MelSpectrogram& mel, const AudioConfig& audio) {
  ProsodyProxy proxy;
  const int64_t frames = mel.num_frames();
  if (frames == 0) return proxy;
  const auto centers = MelBinCenters(audio);
  if (static_cast<int64_t>(centers.size()) != mel.num_bins()) {
    throw Error(ErrorKind::kShapeMismatch, "mel bin count differs from the audio config");
  }
  size_t band_lo = 0, band_hi = 0;
  while (band_lo < centers.size() && centers[band_lo] < audio.f0_min) ++band_lo;
  band_hi = band_lo;
  while (band_hi < centers.size() && centers[band_hi] <= audio.f0_max) ++band_hi;
  if (band_hi - band_lo < 3) throw Error(ErrorKind::kShapeMismatch, "too few bins in the F0 band");

  const FrameView view = ViewFrames(mel.values);
  auto values = mel.values.to(torch::kFloat64).contiguous();
  auto acc = values.accessor<double, 2>();
  std::vector<double> times, f0s;
  double energy_sum = 0.0;
  int64_t active = 0;
  for (int64_t t = 0; t < frames; ++t) {
    if (view.energy[t] < view.max_energy - kActiveRange) continue;
    energy_sum += view.energy[t];
    ++active;
    double frame_max = -std::numeric_limits<double>::infinity();
    for (int64_t m = 0; m < mel.num_bins(); ++m) frame_max = std::max(frame_max, acc[t][m]);
    double band_max = -std::numeric_limits<double>::infinity();
    for (size_t m = band_lo; m < band_hi; ++m) band_max = std::max(band_max, acc[t][m]);
    if (band_max < frame_max - kVoicedBandRange) continue;
    // First local maximum near the band maximum, scanning upwards.
    for (size_t m = band_lo; m < band_hi; ++m) {
      const double left = m > 0 ? acc[t][m - 1] : -std::numeric_limits<double>::infinity();
      const double right = m + 1 < centers.size() ? acc[t][m + 1]
                                                  : -std::numeric_limits<double>::infinity();
      const double v = acc[t][m];
      if (v < band_max - kPeakRange || v < left || v < right) continue;
      double offset = 0.0;
      if (m > 0 && m + 1 < centers.size()) {
        const double denom = left - 2.0 * v + right;
        if (denom < 0.0) offset = std::clamp(0.5 * (left - right) / denom, -0.5, 0.5);
      }
      const double lo = offset < 0 ? centers[m - 1] : centers[m];
      const double hi = offset < 0 ? centers[m] : centers[m + 1];
      const double frac = offset < 0 ? 1.0 + offset : offset;
      f0s.push_back(lo + (hi - lo) * frac);
      times.push_back(static_cast<double>(t) * audio.hop / audio.sample_rate);
      break;
    }
  }
  proxy.mean_energy = active > 0 ? energy_sum / static_cast<double>(active) : 0.0;
  if (!f0s.empty()) {
    const double n = static_cast<double>(f0s.size());
    const double mt = std::accumulate(times.begin(), times.end(), 0.0) / n;
    const double mf = std::accumulate(f0s.begin(), f0s.end(), 0.0) / n;
    double sxy = 0.0, sxx = 0.0;
    for (size_t i = 0; i < f0s.size(); ++i) {
      sxy += (times[i] - mt) * (f0s[i] - mf);
      sxx += (times[i] - mt) * (times[i] - mt);
    }
    proxy.mean_f0 = mf;
    proxy.f0_slope = sxx > 0 ? sxy / sxx : 0.0;
  }
  return proxy;
}

std::vector<double> ProsodyEmotionRecognizer::Vectorize(const ProsodyProxy& p) {
  return {p.mean_f0, p.f0_slope, p.mean_energy};
}

void ProsodyEmotionRecognizer::Fit(const std::vector<Example>& examples) {
  if (examples.empty()) throw Error(ErrorKind::kEmptyInput, "no examples to fit");
  std::map<std::pair<std::string, int64_t>, std::vector<std::vector<double>>> clusters;
  for (const auto& e : examples) {
    clusters[{e.label, e.speaker_id}].push_back(Vectorize(ExtractProsodyProxy(*e.mel, audio_)));
  }
  const size_t dims = 3;
  centroids_.clear();
  std::vector<double> var(dims, 0.0);
  double count = 0.0;
  for (const auto& [key, points] : clusters) {
    Centroid c{key.first, std::vector<double>(dims, 0.0)};
    for (const auto& p : points) {
      for (size_t d = 0; d < dims; ++d) c.mean[d] += p[d] / static_cast<double>(points.size());
    }
    for (const auto& p : points) {
      for (size_t d = 0; d < dims; ++d) var[d] += (p[d] - c.mean[d]) * (p[d] - c.mean[d]);
      count += 1.0;
    }
    centroids_.push_back(std::move(c));
  }
  scale_.assign(dims, 1.0);
  for (size_t d = 0; d < dims; ++d) scale_[d] = std::max(std::sqrt(var[d] / count), 1e-6);
}

std::string ProsodyEmotionRecognizer::Classify(const ProsodyProxy& proxy) const {
  if (centroids_.empty()) throw Error(ErrorKind::kConfigError, "recognizer has not been fit");
  const auto x = Vectorize(proxy);
  double best = std::numeric_limits<double>::infinity();
  const std::string* label = nullptr;
  for (const auto& c : centroids_) {
    double dist = 0.0;
    for (size_t d = 0; d < x.size(); ++d) {
      const double z = (x[d] - c.mean[d]) / scale_[d];
      dist += z * z;
    }
    if (dist < best) {
      best = dist;
      label = &c.label;
    }
  }
  return *label;
}

std::string ProsodyEmotionRecognizer::Recognize(const MelSpectrogram& mel) const {
  return Classify(ExtractProsodyProxy(mel, audio_));
}

std::vector<float> MelStatsSpeakerEmbedder::Embed(const MelSpectrogram& mel) const {
  if (mel.num_frames() == 0) throw Error(ErrorKind::kEmptyInput, "empty mel");
  const FrameView view = ViewFrames(mel.values);
  std::vector<int64_t> keep;
  for (int64_t t = 0; t < mel.num_frames(); ++t) {
    if (view.energy[t] >= view.max_energy - kActiveRange) keep.push_back(t);
  }
  auto frames = mel.values.to(torch::kFloat64).index_select(0, torch::tensor(keep, torch::kLong));
  auto mean = frames.mean(0);
  auto std = frames.std(0, /*unbiased=*/false);
  mean = mean - mean.mean();
  auto joined = torch::cat({mean, std}).to(torch::kFloat32).contiguous();
  return std::vector<float>(joined.data_ptr<float>(), joined.data_ptr<float>() + joined.numel());
}

const char* EvalModeName(EvalMode mode) {
  switch (mode) {
    case EvalMode::kSame:
      return "same";
    case EvalMode::kOther:
      return "other";
    case EvalMode::kBaseline:
      return "baseline";
  }
  return "?";
}

EvalMode ParseEvalMode(const std::string& name) {
  if (name == "same") return EvalMode::kSame;
  if (name == "other") return EvalMode::kOther;
  if (name == "baseline") return EvalMode::kBaseline;
  throw Error(ErrorKind::kConfigError, "unknown evaluation mode '" + name + "'");
}

std::vector<EvalPair> BuildEvalPairs(const std::vector<UtteranceRecord>& heldout,
                                     const std::vector<LabeledText>& prompts,
                                     const EmotionLabelSet& labels, EvalMode mode,
                                     int per_label, uint64_t seed) {
  labels.Validate();
  const size_t k = labels.labels.size();
  std::vector<size_t> target(k);
  std::iota(target.begin(), target.end(), size_t{0});
  if (mode == EvalMode::kOther) {
    if (k < 2) throw Error(ErrorKind::kConfigError, "other mode needs at least two labels");
    Rng rng(MixSeed(seed, 0x6465726eull));
    bool fixed_point = true;
    while (fixed_point) {
      for (size_t i = k - 1; i > 0; --i) std::swap(target[i], target[UniformIndex(rng, i + 1)]);
      fixed_point = false;
      for (size_t i = 0; i < k; ++i) fixed_point |= target[i] == i;
    }
  }
  std::vector<EvalPair> pairs;
  for (size_t li = 0; li < k; ++li) {
    const std::string& prompt_label = labels.labels[li];
    const std::string& ref_label = labels.labels[target[li]];
    std::vector<const LabeledText*> texts;
    for (const auto& p : prompts) {
      if (p.label == prompt_label) texts.push_back(&p);
    }
    std::vector<const UtteranceRecord*> refs;
    for (const auto& r : heldout) {
      if (r.emotion && *r.emotion == ref_label) refs.push_back(&r);
    }
    if (texts.empty()) throw Error(ErrorKind::kConfigError, "no prompts for '" + prompt_label + "'");
    if (refs.empty()) {
      throw Error(ErrorKind::kConfigError, "no held-out references for '" + ref_label + "'");
    }
    for (int i = 0; i < per_label; ++i) {
      const UtteranceRecord& r = *refs[static_cast<size_t>(i) % refs.size()];
      EvalPair p;
      p.reference_id = r.id;
      p.text = r.transcript;
      p.speaker_id = r.speaker_id;
      p.reference_label = ref_label;
      p.prompt_label = prompt_label;
      p.prompt_text = texts[static_cast<size_t>(i) % texts.size()]->text;
      pairs.push_back(std::move(p));
    }
  }
  return pairs;
}

nlohmann::json ToJson(const EvalReport& r) {
  nlohmann::json by_speaker = nlohmann::json::object();
  for (const auto& [speaker, sim] : r.speaker_similarity_by_speaker) {
    by_speaker[std::to_string(speaker)] = sim;
  }
  return nlohmann::json{{"condition", r.condition},
                        {"labels", r.labels},
                        {"cramers_v", r.cramers_v},
                        {"chi_square", r.chi_square},
                        {"dof", r.dof},
                        {"p_value", r.p_value},
                        {"reduced_table", r.reduced_table},
                        {"confusion_counts", r.confusion_counts},
                        {"confusion_rownorm", r.confusion_rownorm},
                        {"accuracy", r.accuracy},
                        {"speaker_similarity_mean", r.speaker_similarity_mean},
                        {"speaker_similarity_std", r.speaker_similarity_std},
                        {"cross_speaker_similarity_mean", r.cross_speaker_similarity_mean},
                        {"speaker_similarity_by_speaker", by_speaker},
                        {"num_pairs", r.num_pairs}};
}

void ScoreConfusion(const CountMatrix& counts, EvalReport* report) {
  report->confusion_counts = counts;
  report->confusion_rownorm = RowNormalize(counts);
  int64_t n = 0, correct = 0;
  for (size_t i = 0; i < counts.size(); ++i) {
    for (size_t j = 0; j < counts[i].size(); ++j) {
      n += counts[i][j];
      if (i == j) correct += counts[i][j];
    }
  }
  report->num_pairs = n;
  report->accuracy = n > 0 ? static_cast<double>(correct) / static_cast<double>(n) : 0.0;
  const CountMatrix reduced = DropEmptyMarginals(counts);
  report->reduced_table = reduced.size() != counts.size() ||
                          (!counts.empty() && (reduced.empty() || reduced[0].size() != counts[0].size()));
  if (reduced.size() < 2 || reduced[0].size() < 2) {
    report->chi_square = 0.0;
    report->dof = 0;
    report->p_value = 1.0;
    report->cramers_v = 0.0;
    return;
  }
  const ChiSquareResult chi = ChiSquareIndependence(reduced);
  report->chi_square = chi.statistic;
  report->dof = chi.dof;
  report->p_value = chi.p_value;
  report->cramers_v = CramersV(reduced);
}

EvalReport EvaluateControllability(const EvaluationInputs& inputs,
                                   const std::vector<EvalPair>& pairs,
                                   const std::string& condition) {
  if (!inputs.recognizer || !inputs.speaker_embedder || !inputs.references) {
    throw Error(ErrorKind::kConfigError, "evaluation needs a recognizer, embedder and references");
  }
  if (pairs.empty()) throw Error(ErrorKind::kEmptyInput, "no evaluation pairs");
  // Reference embeddings, with their speakers, in first-use order.
  std::vector<std::string> ref_ids;
  std::map<std::string, int64_t> ref_speaker;
  for (const auto& p : pairs) {
    if (!ref_speaker.count(p.reference_id)) {
      ref_speaker[p.reference_id] = p.speaker_id;
      ref_ids.push_back(p.reference_id);
    }
  }
  std::map<std::string, std::vector<float>> ref_embedding;
  for (const auto& id : ref_ids) {
    auto it = inputs.references->find(id);
    if (it == inputs.references->end()) {
      throw Error(ErrorKind::kConfigError, "no reference mel for '" + id + "'");
    }
    ref_embedding[id] = inputs.speaker_embedder->Embed(it->second);
  }

  std::vector<std::string> recognized(pairs.size());
  std::vector<double> same(pairs.size()), cross(pairs.size());
  ParallelFor(static_cast<int64_t>(pairs.size()), inputs.workers, [&](int64_t i) {
    const EvalPair& p = pairs[static_cast<size_t>(i)];
    const PromptEmbedding prompt =
        ExtractPromptEmbedding(p.prompt_text, *inputs.synthesis.prompt_encoder);
    const SynthesisResult out = Synthesize(inputs.synthesis, p.text, p.speaker_id, prompt,
                                           inputs.temperature,
                                           MixSeed(inputs.seed, static_cast<uint64_t>(i)));
    recognized[static_cast<size_t>(i)] = inputs.recognizer->Recognize(out.mel);
    const auto emb = inputs.speaker_embedder->Embed(out.mel);
    same[static_cast<size_t>(i)] = CosineSimilarity(emb, ref_embedding.at(p.reference_id));
    double sum = 0.0;
    int count = 0;
    for (const auto& id : ref_ids) {
      if (ref_speaker.at(id) == p.speaker_id) continue;
      sum += CosineSimilarity(emb, ref_embedding.at(id));
      ++count;
    }
    cross[static_cast<size_t>(i)] = count > 0 ? sum / count : std::nan("");
  });

  std::vector<std::string> intended;
  for (const auto& p : pairs) intended.push_back(p.prompt_label);
  EvalReport report;
  report.condition = condition;
  report.labels = inputs.labels.labels;
  ScoreConfusion(EmotionConfusion(intended, recognized, inputs.labels), &report);

  const double n = static_cast<double>(pairs.size());
  report.speaker_similarity_mean = std::accumulate(same.begin(), same.end(), 0.0) / n;
  double var = 0.0;
  for (double s : same) var += (s - report.speaker_similarity_mean) * (s - report.speaker_similarity_mean);
  report.speaker_similarity_std = std::sqrt(var / n);
  double cross_sum = 0.0;
  int cross_count = 0;
  for (double c : cross) {
    if (std::isnan(c)) continue;
    cross_sum += c;
    ++cross_count;
  }
  report.cross_speaker_similarity_mean = cross_count > 0 ? cross_sum / cross_count : 0.0;
  std::map<int64_t, int> per_speaker_count;
  for (size_t i = 0; i < pairs.size(); ++i) {
    report.speaker_similarity_by_speaker[pairs[i].speaker_id] += same[i];
    ++per_speaker_count[pairs[i].speaker_id];
  }
  for (auto& [speaker, sum] : report.speaker_similarity_by_speaker) {
    sum /= per_speaker_count[speaker];
  }
  return report;
}

}  // namespace prompted_tts
