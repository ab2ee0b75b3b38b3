#pragma once

// Inference-only 1D network kernels. Everything is double precision; weights
// loaded from float32 containers are widened once when a model is prepared.

#include <cstddef>
#include <span>
#include <vector>

namespace istftnet::nn {

inline constexpr double kLeakySlope = 0.1;

// Channel-major activations: data[channel * frames + frame].
struct FeatureMap {
  std::size_t channels = 0;
  std::size_t frames = 0;
  std::vector<double> data;

  FeatureMap() = default;
  FeatureMap(std::size_t channels_, std::size_t frames_)
      : channels(channels_), frames(frames_), data(channels_ * frames_, 0.0) {}
  FeatureMap(std::size_t channels_, std::size_t frames_, std::vector<double> values);

  double& at(std::size_t c, std::size_t t) { return data[c * frames + t]; }
  double at(std::size_t c, std::size_t t) const { return data[c * frames + t]; }
  std::span<double> row(std::size_t c) { return {data.data() + c * frames, frames}; }
  std::span<const double> row(std::size_t c) const { return {data.data() + c * frames, frames}; }
};

// Weight layout is [out][in][kernel] for conv1d and [in][out][kernel] for
// conv_transpose1d (the usual framework conventions).
struct ConvParams {
  std::size_t in_channels = 1;
  std::size_t out_channels = 1;
  std::size_t kernel_size = 1;
  std::size_t stride = 1;
  std::size_t dilation = 1;
  std::size_t padding = 0;
  std::vector<double> weight;
  std::vector<double> bias;

  void validate() const;
};

/// Output frame count of conv1d; 0 when the kernel does not fit.
std::size_t conv1d_output_frames(std::size_t frames, const ConvParams& p) noexcept;
std::size_t conv_transpose1d_output_frames(std::size_t frames, const ConvParams& p) noexcept;

/// Zero-padded cross-correlation:
/// out[o][t] = bias[o] + sum_{i,k} w[o][i][k] * x_pad[i][t*stride + k*dilation].
FeatureMap conv1d(const FeatureMap& x, const ConvParams& p);

/// Scatter form: input frame t adds w[i][o][k] * x[i][t] to out[o][t*stride + k - padding].
FeatureMap conv_transpose1d(const FeatureMap& x, const ConvParams& p);

FeatureMap leaky_relu(const FeatureMap& x, double slope = kLeakySlope);
void leaky_relu_inplace(FeatureMap& x, double slope = kLeakySlope);

FeatureMap exp_activation(const FeatureMap& x);
FeatureMap sin_activation(const FeatureMap& x);
FeatureMap tanh_activation(const FeatureMap& x);

// One residual block of a multi-receptive-field fusion. With `second` empty
// each dilation contributes y += conv_d(lrelu(y)); otherwise
// y += conv2(lrelu(conv_d(lrelu(y)))).
struct ResBlockParams {
  std::size_t kernel_size = 3;
  std::vector<std::size_t> dilations;
  std::vector<ConvParams> first;
  std::vector<ConvParams> second;
};

FeatureMap resblock(const FeatureMap& x, const ResBlockParams& block);

/// Mean of resblock(x, b) over all blocks.
FeatureMap resblock_mrf(const FeatureMap& x, std::span<const ResBlockParams> blocks);

}  // namespace istftnet::nn
