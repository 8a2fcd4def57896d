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

#include "prompted_tts/layers.h"

#include <cmath>

namespace prompted_tts {

namespace F = torch::nn::functional;

torch::Tensor SinusoidalPositions(int64_t length, int64_t dim, torch::TensorOptions options) {
  auto position = torch::arange(length, options.dtype(torch::kFloat64)).unsqueeze(1);
  auto index = torch::arange(0, dim, 2, options.dtype(torch::kFloat64));
  auto freq = torch::exp(index * (-std::log(10000.0) / static_cast<double>(dim)));
  auto table = torch::zeros({length, dim}, options.dtype(torch::kFloat64));
  auto angles = position * freq;
  table.slice(1, 0, dim, 2) = torch::sin(angles);
  table.slice(1, 1, dim, 2) = torch::cos(angles).slice(1, 0, dim / 2);
  return table.to(options.dtype());
}

torch::Tensor MaskLike(const torch::Tensor& mask, const torch::Tensor& x) {
  return mask.unsqueeze(-1).to(x.dtype());
}

FeedForwardImpl::FeedForwardImpl(int64_t hidden, int64_t inner) {
  in = register_module("in", torch::nn::Linear(hidden, inner));
  out = register_module("out", torch::nn::Linear(inner, hidden));
}

torch::Tensor FeedForwardImpl::forward(const torch::Tensor& x) {
  return out(F::silu(in(x)));
}

MultiHeadSelfAttentionImpl::MultiHeadSelfAttentionImpl(int64_t hidden, int64_t h)
    : heads(h) {
  query = register_module("query", torch::nn::Linear(hidden, hidden));
  key = register_module("key", torch::nn::Linear(hidden, hidden));
  value = register_module("value", torch::nn::Linear(hidden, hidden));
  out = register_module("out", torch::nn::Linear(hidden, hidden));
}

torch::Tensor MultiHeadSelfAttentionImpl::forward(const torch::Tensor& x,
                                                  const torch::Tensor& mask) {
  const int64_t b = x.size(0), t = x.size(1), hidden = x.size(2);
  const int64_t head_dim = hidden / heads;
  auto split = [&](const torch::Tensor& y) {
    return y.view({b, t, heads, head_dim}).transpose(1, 2);  // [B, heads, T, d]
  };
  auto q = split(query(x)), k = split(key(x)), v = split(value(x));
  auto scores = torch::matmul(q, k.transpose(-2, -1)) / std::sqrt(static_cast<double>(head_dim));
  auto key_mask = mask.view({b, 1, 1, t});
  scores = scores.masked_fill(key_mask.logical_not(), -1e9);
  auto context = torch::matmul(torch::softmax(scores, -1), v);
  return out(context.transpose(1, 2).reshape({b, t, hidden}));
}

ConvolutionModuleImpl::ConvolutionModuleImpl(int64_t hidden, int64_t kernel,
                                             int64_t cond_dim) {
  pointwise_in = register_module("pointwise_in", torch::nn::Linear(hidden, 2 * hidden));
  depthwise = register_module(
      "depthwise", torch::nn::Conv1d(torch::nn::Conv1dOptions(hidden, hidden, kernel)
                                         .padding(kernel / 2)
                                         .groups(hidden)));
  norm = register_module("norm", ConditionalLayerNorm(hidden, cond_dim));
  pointwise_out = register_module("pointwise_out", torch::nn::Linear(hidden, hidden));
}

torch::Tensor ConvolutionModuleImpl::forward(const torch::Tensor& x, const torch::Tensor& cond,
                                             const torch::Tensor& mask) {
  auto keep = MaskLike(mask, x);
  auto y = F::glu(pointwise_in(x), -1) * keep;
  y = depthwise(y.transpose(1, 2)).transpose(1, 2);
  y = F::silu(norm(y, cond));
  return pointwise_out(y) * keep;
}

ConformerBlockImpl::ConformerBlockImpl(int64_t hidden, int64_t heads, int64_t ff_inner,
                                       int64_t kernel, int64_t cond_dim) {
  norm_ff1 = register_module("norm_ff1", ConditionalLayerNorm(hidden, cond_dim));
  ff1 = register_module("ff1", FeedForward(hidden, ff_inner));
  norm_attention = register_module("norm_attention", ConditionalLayerNorm(hidden, cond_dim));
  attention = register_module("attention", MultiHeadSelfAttention(hidden, heads));
  norm_conv = register_module("norm_conv", ConditionalLayerNorm(hidden, cond_dim));
  conv = register_module("conv", ConvolutionModule(hidden, kernel, cond_dim));
  norm_ff2 = register_module("norm_ff2", ConditionalLayerNorm(hidden, cond_dim));
  ff2 = register_module("ff2", FeedForward(hidden, ff_inner));
  norm_out = register_module("norm_out", ConditionalLayerNorm(hidden, cond_dim));
}

torch::Tensor ConformerBlockImpl::forward(const torch::Tensor& x_in, const torch::Tensor& cond,
                                          const torch::Tensor& mask) {
  auto keep = MaskLike(mask, x_in);
  auto x = x_in * keep;
  x = x + 0.5 * ff1(norm_ff1(x, cond));
  x = x + attention(norm_attention(x, cond), mask);
  x = x + conv(norm_conv(x, cond), cond, mask);
  x = x + 0.5 * ff2(norm_ff2(x, cond));
  return norm_out(x, cond) * keep;
}

ConformerStackImpl::ConformerStackImpl(int64_t count, int64_t hidden, int64_t heads,
                                       int64_t ff_inner, int64_t kernel, int64_t cond_dim) {
  blocks = register_module("blocks", torch::nn::ModuleList());
  for (int64_t i = 0; i < count; ++i) {
    blocks->push_back(ConformerBlock(hidden, heads, ff_inner, kernel, cond_dim));
  }
}

torch::Tensor ConformerStackImpl::forward(torch::Tensor x, const torch::Tensor& cond,
                                          const torch::Tensor& mask) {
  for (const auto& block : *blocks) {
    x = block->as<ConformerBlockImpl>()->forward(x, cond, mask);
  }
  return x;
}

VariancePredictorImpl::VariancePredictorImpl(int64_t hidden, int64_t channels,
                                             int64_t kernel, int64_t cond_dim) {
  conv1 = register_module(
      "conv1",
      torch::nn::Conv1d(torch::nn::Conv1dOptions(hidden, channels, kernel).padding(kernel / 2)));
  norm1 = register_module("norm1", ConditionalLayerNorm(channels, cond_dim));
  conv2 = register_module(
      "conv2", torch::nn::Conv1d(
                   torch::nn::Conv1dOptions(channels, channels, kernel).padding(kernel / 2)));
  norm2 = register_module("norm2", ConditionalLayerNorm(channels, cond_dim));
  head = register_module("head", torch::nn::Linear(channels, 1));
}

torch::Tensor VariancePredictorImpl::forward(const torch::Tensor& x, const torch::Tensor& cond,
                                             const torch::Tensor& mask) {
  auto keep = MaskLike(mask, x);
  auto y = conv1((x * keep).transpose(1, 2)).transpose(1, 2);
  y = norm1(torch::relu(y), cond) * keep;
  y = conv2(y.transpose(1, 2)).transpose(1, 2);
  y = norm2(torch::relu(y), cond) * keep;
  return head(y).squeeze(-1) * mask.to(x.dtype());
}

AffineCouplingImpl::AffineCouplingImpl(int64_t bins_in, int64_t cond_dim, int64_t hidden,
                                       bool flip_in)
    : bins(bins_in), split(bins_in / 2), flip(flip_in) {
  const int64_t passive = flip ? bins - split : split;
  const int64_t active = bins - passive;
  auto last = torch::nn::Linear(hidden, 2 * active);
  net = register_module(
      "net", torch::nn::Sequential(torch::nn::Linear(passive + cond_dim, hidden),
                                   torch::nn::SiLU(), torch::nn::Linear(hidden, hidden),
                                   torch::nn::SiLU(), last));
  torch::NoGradGuard no_grad;
  last->weight.zero_();
  last->bias.zero_();
}

std::pair<torch::Tensor, torch::Tensor> AffineCouplingImpl::Split(const torch::Tensor& x) const {
  auto first = x.slice(-1, 0, split);
  auto second = x.slice(-1, split, bins);
  return flip ? std::make_pair(second, first) : std::make_pair(first, second);
}

torch::Tensor AffineCouplingImpl::Merge(const torch::Tensor& passive,
                                        const torch::Tensor& active) const {
  return flip ? torch::cat({active, passive}, -1) : torch::cat({passive, active}, -1);
}

std::pair<torch::Tensor, torch::Tensor> AffineCouplingImpl::ScaleShift(
    const torch::Tensor& passive, const torch::Tensor& cond) {
  auto params = net->forward(torch::cat({passive, cond}, -1));
  auto chunks = params.chunk(2, -1);
  // Bounded log-scale, at most e^{+-2} per layer.
  auto log_scale = 2.0 * torch::tanh(0.5 * chunks[0]);
  return {log_scale, chunks[1]};
}

std::pair<torch::Tensor, torch::Tensor> AffineCouplingImpl::forward(const torch::Tensor& x,
                                                                    const torch::Tensor& cond) {
  auto [passive, active] = Split(x);
  auto [log_scale, shift] = ScaleShift(passive, cond);
  auto y = active * torch::exp(log_scale) + shift;
  return {Merge(passive, y), log_scale.sum(-1)};
}

torch::Tensor AffineCouplingImpl::inverse(const torch::Tensor& y, const torch::Tensor& cond) {
  auto [passive, active] = Split(y);
  auto [log_scale, shift] = ScaleShift(passive, cond);
  return Merge(passive, (active - shift) * torch::exp(-log_scale));
}

FlowPostNetImpl::FlowPostNetImpl(int64_t bins_in, int64_t layers, int64_t hidden)
    : bins(bins_in) {
  couplings = register_module("couplings", torch::nn::ModuleList());
  for (int64_t i = 0; i < layers; ++i) {
    couplings->push_back(AffineCoupling(bins, bins, hidden, i % 2 == 1));
  }
}

std::pair<torch::Tensor, torch::Tensor> FlowPostNetImpl::forward(const torch::Tensor& x,
                                                                 const torch::Tensor& cond) {
  auto z = x;
  auto logdet = torch::zeros(x.sizes().slice(0, x.dim() - 1), x.options());
  for (const auto& layer : *couplings) {
    auto [y, ld] = layer->as<AffineCouplingImpl>()->forward(z, cond);
    z = y;
    logdet = logdet + ld;
  }
  return {z, logdet};
}

torch::Tensor FlowPostNetImpl::inverse(const torch::Tensor& z, const torch::Tensor& cond) {
  auto x = z;
  for (size_t i = couplings->size(); i-- > 0;) {
    x = couplings[i]->as<AffineCouplingImpl>()->inverse(x, cond);
  }
  return x;
}

torch::Tensor FlowPostNetImpl::FrameNll(const torch::Tensor& x, const torch::Tensor& cond) {
  auto [z, logdet] = forward(x, cond);
  const double log_norm = 0.5 * static_cast<double>(bins) * std::log(2.0 * M_PI);
  return 0.5 * z.pow(2).sum(-1) + log_norm - logdet;
}

PatchDiscriminatorImpl::PatchDiscriminatorImpl(std::vector<int64_t> channels) {
  convs = register_module("convs", torch::nn::ModuleList());
  int64_t in = 1;
  for (size_t i = 0; i < channels.size(); ++i) {
    const int64_t stride_t = i == 0 ? 1 : 2;
    convs->push_back(torch::nn::Conv2d(torch::nn::Conv2dOptions(in, channels[i], 3)
                                           .stride({stride_t, 2})
                                           .padding(1)));
    time_strides.push_back(stride_t);
    in = channels[i];
  }
  convs->push_back(torch::nn::Conv2d(torch::nn::Conv2dOptions(in, 1, 3).padding(1)));
  time_strides.push_back(1);
}

int64_t PatchDiscriminatorImpl::receptive_field() const {
  int64_t field = 1, jump = 1;
  for (int64_t stride : time_strides) {
    field += 2 * jump;
    jump *= stride;
  }
  return field;
}

torch::Tensor PatchDiscriminatorImpl::forward(const torch::Tensor& mel) {
  auto x = mel.unsqueeze(1);
  const size_t last = convs->size() - 1;
  for (size_t i = 0; i < convs->size(); ++i) {
    x = convs[i]->as<torch::nn::Conv2dImpl>()->forward(x);
    if (i != last) x = F::leaky_relu(x, F::LeakyReLUFuncOptions().negative_slope(0.2));
  }
  return x.squeeze(1);
}

}  // namespace prompted_tts
