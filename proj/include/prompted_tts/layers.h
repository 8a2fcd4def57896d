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

#ifndef PROMPTED_TTS_LAYERS_H_
#define PROMPTED_TTS_LAYERS_H_

#include <utility>
#include <vector>

#include <torch/torch.h>

#include "prompted_tts/conditioning.h"

namespace prompted_tts {

// Sinusoidal position table, [length, dim].
torch::Tensor SinusoidalPositions(int64_t length, int64_t dim, torch::TensorOptions options);

// [B, T] bool -> [B, T, 1] in x's dtype.
torch::Tensor MaskLike(const torch::Tensor& mask, const torch::Tensor& x);

class FeedForwardImpl : public torch::nn::Module {
 public:
  FeedForwardImpl(int64_t hidden, int64_t inner);
  torch::Tensor forward(const torch::Tensor& x);

  torch::nn::Linear in{nullptr}, out{nullptr};
};
TORCH_MODULE(FeedForward);

class MultiHeadSelfAttentionImpl : public torch::nn::Module {
 public:
  MultiHeadSelfAttentionImpl(int64_t hidden, int64_t heads);
  // x: [B, T, H], mask: [B, T] bool; padded keys receive no attention.
  torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& mask);

  int64_t heads;
  torch::nn::Linear query{nullptr}, key{nullptr}, value{nullptr}, out{nullptr};
};
TORCH_MODULE(MultiHeadSelfAttention);

// Pointwise -> GLU -> depthwise conv -> CLN -> SiLU -> pointwise.
class ConvolutionModuleImpl : public torch::nn::Module {
 public:
  ConvolutionModuleImpl(int64_t hidden, int64_t kernel, int64_t cond_dim);
  torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& cond,
                        const torch::Tensor& mask);

  torch::nn::Linear pointwise_in{nullptr}, pointwise_out{nullptr};
  torch::nn::Conv1d depthwise{nullptr};
  ConditionalLayerNorm norm{nullptr};
};
TORCH_MODULE(ConvolutionModule);

// Macaron conformer block whose every normalization is a conditional
// layernorm driven by the condition vector.
class ConformerBlockImpl : public torch::nn::Module {
 public:
  ConformerBlockImpl(int64_t hidden, int64_t heads, int64_t ff_inner, int64_t kernel,
                     int64_t cond_dim);
  torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& cond,
                        const torch::Tensor& mask);

  ConditionalLayerNorm norm_ff1{nullptr}, norm_attention{nullptr}, norm_conv{nullptr},
      norm_ff2{nullptr}, norm_out{nullptr};
  FeedForward ff1{nullptr}, ff2{nullptr};
  MultiHeadSelfAttention attention{nullptr};
  ConvolutionModule conv{nullptr};
};
TORCH_MODULE(ConformerBlock);

class ConformerStackImpl : public torch::nn::Module {
 public:
  ConformerStackImpl(int64_t blocks, int64_t hidden, int64_t heads, int64_t ff_inner,
                     int64_t kernel, int64_t cond_dim);
  torch::Tensor forward(torch::Tensor x, const torch::Tensor& cond, const torch::Tensor& mask);

  torch::nn::ModuleList blocks;
};
TORCH_MODULE(ConformerStack);

// Two conv -> ReLU -> CLN stages and a scalar head per position.
class VariancePredictorImpl : public torch::nn::Module {
 public:
  VariancePredictorImpl(int64_t hidden, int64_t channels, int64_t kernel, int64_t cond_dim);
  // -> [B, N]; padded positions are zero.
  torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& cond,
                        const torch::Tensor& mask);

  torch::nn::Conv1d conv1{nullptr}, conv2{nullptr};
  ConditionalLayerNorm norm1{nullptr}, norm2{nullptr};
  torch::nn::Linear head{nullptr};
};
TORCH_MODULE(VariancePredictor);

// Affine coupling over the bin axis. One half passes through and, together
// with the per-frame condition, parameterizes scale and shift of the other.
// The output layer starts at zero so the layer starts as the identity.
class AffineCouplingImpl : public torch::nn::Module {
 public:
  AffineCouplingImpl(int64_t bins, int64_t cond_dim, int64_t hidden, bool flip);
  // Returns (y, log|det J|) with logdet summed over bins.
  std::pair<torch::Tensor, torch::Tensor> forward(const torch::Tensor& x,
                                                  const torch::Tensor& cond);
  torch::Tensor inverse(const torch::Tensor& y, const torch::Tensor& cond);

  int64_t bins, split;
  bool flip;
  torch::nn::Sequential net{nullptr};

 private:
  // (passive, active) halves.
  std::pair<torch::Tensor, torch::Tensor> Split(const torch::Tensor& x) const;
  torch::Tensor Merge(const torch::Tensor& passive, const torch::Tensor& active) const;
  std::pair<torch::Tensor, torch::Tensor> ScaleShift(const torch::Tensor& passive,
                                                     const torch::Tensor& cond);
};
TORCH_MODULE(AffineCoupling);

class FlowPostNetImpl : public torch::nn::Module {
 public:
  FlowPostNetImpl(int64_t bins, int64_t layers, int64_t hidden);
  // Data -> latent; logdet summed over layers and bins, shape x.shape[:-1].
  std::pair<torch::Tensor, torch::Tensor> forward(const torch::Tensor& x,
                                                  const torch::Tensor& cond);
  torch::Tensor inverse(const torch::Tensor& z, const torch::Tensor& cond);
  // Per-frame negative log-likelihood under a standard-normal base.
  torch::Tensor FrameNll(const torch::Tensor& x, const torch::Tensor& cond);

  int64_t bins;
  torch::nn::ModuleList couplings;
};
TORCH_MODULE(FlowPostNet);

// 2-D conv stack over (time, bins) producing one score per patch.
class PatchDiscriminatorImpl : public torch::nn::Module {
 public:
  explicit PatchDiscriminatorImpl(std::vector<int64_t> channels);
  // mel: [B, T, M] -> [B, T', M'].
  torch::Tensor forward(const torch::Tensor& mel);
  // Frames seen by one output patch along time.
  int64_t receptive_field() const;

  std::vector<int64_t> time_strides;
  torch::nn::ModuleList convs;
};
TORCH_MODULE(PatchDiscriminator);

}  // namespace prompted_tts

#endif  // PROMPTED_TTS_LAYERS_H_
