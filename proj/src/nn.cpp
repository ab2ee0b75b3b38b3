#include "istftnet/nn.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <optional>
#include <string>

#if defined(__AVX512F__)
#include <immintrin.h>
#endif

#include "istftnet/errors.hpp"

namespace istftnet::nn {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMatrixView = Eigen::Map<const RowMatrix>;
using StridedView = Eigen::Map<RowMatrix, 0, Eigen::OuterStride<>>;
using ConstStridedView = Eigen::Map<const RowMatrix, 0, Eigen::OuterStride<>>;

// Column tiles are sized to keep the unfolded buffer around 2 MiB.
constexpr std::size_t kTileElements = std::size_t{1} << 18;

std::size_t tile_frames(std::size_t rows, std::size_t total) {
  const std::size_t tile = std::max<std::size_t>(64, kTileElements / std::max<std::size_t>(rows, 1));
  return std::min(tile, total);
}

void check_channels(const char* op, const FeatureMap& x, const ConvParams& p) {
  if (x.channels != p.in_channels) {
    throw InvalidArgument(std::string(op) + ": input has " + std::to_string(x.channels) +
                          " channels, layer expects " + std::to_string(p.in_channels));
  }
  if (x.data.size() != x.channels * x.frames) {
    throw InvalidArgument(std::string(op) + ": feature map data size does not match its shape");
  }
}

template <class Fn>
FeatureMap map_elements(const FeatureMap& x, Fn fn) {
  FeatureMap y(x.channels, x.frames);
  std::transform(x.data.begin(), x.data.end(), y.data.begin(), fn);
  return y;
}

}  // namespace

FeatureMap::FeatureMap(std::size_t channels_, std::size_t frames_, std::vector<double> values)
    : channels(channels_), frames(frames_), data(std::move(values)) {
  if (data.size() != channels * frames) {
    throw InvalidArgument("feature map data length " + std::to_string(data.size()) +
                          " != channels x frames " + std::to_string(channels * frames));
  }
}

void ConvParams::validate() const {
  if (in_channels < 1 || out_channels < 1 || kernel_size < 1 || stride < 1 || dilation < 1) {
    throw InvalidArgument("conv params: channel, kernel, stride and dilation counts must be >= 1");
  }
  if (weight.size() != in_channels * out_channels * kernel_size) {
    throw InvalidArgument("conv params: weight has " + std::to_string(weight.size()) +
                          " elements, expected " +
                          std::to_string(in_channels * out_channels * kernel_size));
  }
  if (bias.size() != out_channels) {
    throw InvalidArgument("conv params: bias has " + std::to_string(bias.size()) +
                          " elements, expected " + std::to_string(out_channels));
  }
}

std::size_t conv1d_output_frames(std::size_t frames, const ConvParams& p) noexcept {
  const std::size_t span = p.dilation * (p.kernel_size - 1) + 1;
  const std::size_t padded = frames + 2 * p.padding;
  if (padded < span || p.stride == 0) return 0;
  return (padded - span) / p.stride + 1;
}

std::size_t conv_transpose1d_output_frames(std::size_t frames, const ConvParams& p) noexcept {
  if (frames == 0) return 0;
  const std::size_t grown = (frames - 1) * p.stride + p.kernel_size;
  return grown > 2 * p.padding ? grown - 2 * p.padding : 0;
}

namespace {

// Zero-padded copy of x with `slack` extra zero frames per row, optionally
// passed through a leaky ReLU on the way.
std::vector<double> pad_input(const FeatureMap& x, std::size_t padding, std::size_t slack,
                              std::optional<double> slope, std::size_t& stride_out) {
  const std::size_t stride = x.frames + 2 * padding + slack;
  std::vector<double> out(x.channels * stride, 0.0);
  for (std::size_t i = 0; i < x.channels; ++i) {
    const double* src = x.data.data() + i * x.frames;
    double* dst = out.data() + i * stride + padding;
    if (slope) {
      const double s = *slope;
      for (std::size_t t = 0; t < x.frames; ++t) dst[t] = src[t] >= 0.0 ? src[t] : s * src[t];
    } else {
      std::copy_n(src, x.frames, dst);
    }
  }
  stride_out = stride;
  return out;
}

#if defined(__AVX512F__)
constexpr std::size_t kOutBlock = 8;
constexpr std::size_t kTimeVectors = 3;
constexpr std::size_t kTimeBlock = kTimeVectors * 8;

// Register-blocked stride-1 convolution: 8 output channels x 24 frames per
// block, summed over (input channel, tap) in order.
void conv1d_direct(const FeatureMap& x, const ConvParams& p, std::optional<double> slope,
                   bool accumulate, FeatureMap& y) {
  const std::size_t cin = p.in_channels;
  const std::size_t cout = p.out_channels;
  const std::size_t k = p.kernel_size;
  const std::size_t out_frames = y.frames;
  std::size_t stride = 0;
  const std::vector<double> xpad = pad_input(x, p.padding, kTimeBlock, slope, stride);

  // Packed weights: [cout / 8][cin][k][8], zero rows past cout.
  const std::size_t blocks = (cout + kOutBlock - 1) / kOutBlock;
  std::vector<double> packed(blocks * cin * k * kOutBlock, 0.0);
  for (std::size_t o = 0; o < cout; ++o) {
    for (std::size_t i = 0; i < cin; ++i) {
      for (std::size_t j = 0; j < k; ++j) {
        packed[(((o / kOutBlock) * cin + i) * k + j) * kOutBlock + o % kOutBlock] =
            p.weight[(o * cin + i) * k + j];
      }
    }
  }

  std::vector<double> bias(blocks * kOutBlock, 0.0);
  std::copy(p.bias.begin(), p.bias.end(), bias.begin());

  const std::size_t span = p.dilation * (k - 1);
  const std::size_t budget = (std::size_t{1} << 16) / cin;
  const std::size_t chunk =
      std::max(kTimeBlock, (budget > span ? (budget - span) / kTimeBlock : 1) * kTimeBlock);

  for (std::size_t c0 = 0; c0 < out_frames; c0 += chunk) {
    const std::size_t c1 = std::min(out_frames, c0 + chunk);
    for (std::size_t ob = 0; ob < blocks; ++ob) {
      const double* wb = packed.data() + ob * cin * k * kOutBlock;
      const std::size_t rows = std::min(kOutBlock, cout - ob * kOutBlock);
      for (std::size_t tb = c0; tb < c1; tb += kTimeBlock) {
        __m512d acc[kOutBlock][kTimeVectors];
        for (std::size_t o = 0; o < kOutBlock; ++o) {
          const __m512d b = _mm512_set1_pd(bias[ob * kOutBlock + o]);
          for (std::size_t v = 0; v < kTimeVectors; ++v) acc[o][v] = b;
        }
        for (std::size_t i = 0; i < cin; ++i) {
          const double* xr = xpad.data() + i * stride + tb;
          const double* wr = wb + i * k * kOutBlock;
          for (std::size_t j = 0; j < k; ++j) {
            const double* xs = xr + j * p.dilation;
            const double* w = wr + j * kOutBlock;
            __m512d xv[kTimeVectors];
            for (std::size_t v = 0; v < kTimeVectors; ++v) xv[v] = _mm512_loadu_pd(xs + 8 * v);
            for (std::size_t o = 0; o < kOutBlock; ++o) {
              const __m512d wv = _mm512_set1_pd(w[o]);
              for (std::size_t v = 0; v < kTimeVectors; ++v) {
                acc[o][v] = _mm512_fmadd_pd(wv, xv[v], acc[o][v]);
              }
            }
          }
        }
        alignas(64) double lanes[kOutBlock][kTimeBlock];
        for (std::size_t o = 0; o < kOutBlock; ++o) {
          for (std::size_t v = 0; v < kTimeVectors; ++v) _mm512_store_pd(lanes[o] + 8 * v, acc[o][v]);
        }
        const std::size_t n = std::min(kTimeBlock, c1 - tb);
        for (std::size_t o = 0; o < rows; ++o) {
          double* dst = y.data.data() + (ob * kOutBlock + o) * out_frames + tb;
          if (accumulate) {
            for (std::size_t t = 0; t < n; ++t) dst[t] += lanes[o][t];
          } else {
            std::copy_n(lanes[o], n, dst);
          }
        }
      }
    }
  }
}
#endif

// im2col tiles multiplied through Eigen; handles any stride.
void conv1d_gemm(const FeatureMap& x, const ConvParams& p, std::optional<double> slope,
                 bool accumulate, FeatureMap& y) {
  const std::size_t cin = p.in_channels;
  const std::size_t cout = p.out_channels;
  const std::size_t k = p.kernel_size;
  const std::size_t taps = cin * k;
  const std::size_t out_frames = y.frames;

  std::size_t src_stride = 0;
  const std::vector<double> xpad = pad_input(x, p.padding, 0, slope, src_stride);

  const ConstMatrixView weights(p.weight.data(), static_cast<Eigen::Index>(cout),
                                static_cast<Eigen::Index>(taps));
  const std::size_t tile = tile_frames(taps, out_frames);
  std::vector<double> cols(taps * tile);
  RowMatrix part(static_cast<Eigen::Index>(cout), static_cast<Eigen::Index>(tile));

  for (std::size_t t0 = 0; t0 < out_frames; t0 += tile) {
    const std::size_t n = std::min(tile, out_frames - t0);
    // Unfold: cols[(i*k + j) * n + t] = x_pad[i][(t0 + t) * stride + j * dilation].
    for (std::size_t i = 0; i < cin; ++i) {
      const double* in_row = xpad.data() + i * src_stride;
      for (std::size_t j = 0; j < k; ++j) {
        double* dst = cols.data() + (i * k + j) * n;
        const double* base = in_row + t0 * p.stride + j * p.dilation;
        if (p.stride == 1) {
          std::copy_n(base, n, dst);
        } else {
          for (std::size_t t = 0; t < n; ++t) dst[t] = base[t * p.stride];
        }
      }
    }
    StridedView out(part.data(), static_cast<Eigen::Index>(cout), static_cast<Eigen::Index>(n),
                    Eigen::OuterStride<>(tile));
    out.noalias() = weights * ConstMatrixView(cols.data(), static_cast<Eigen::Index>(taps),
                                              static_cast<Eigen::Index>(n));
    for (std::size_t o = 0; o < cout; ++o) {
      const double b = p.bias[o];
      const double* src = part.data() + o * tile;
      double* dst = y.data.data() + o * out_frames + t0;
      if (accumulate) {
        for (std::size_t t = 0; t < n; ++t) dst[t] += src[t] + b;
      } else {
        for (std::size_t t = 0; t < n; ++t) dst[t] = src[t] + b;
      }
    }
  }
}

std::size_t checked_conv1d_frames(const FeatureMap& x, const ConvParams& p) {
  p.validate();
  check_channels("conv1d", x, p);
  const std::size_t out_frames = conv1d_output_frames(x.frames, p);
  if (out_frames == 0) {
    throw InvalidArgument("conv1d: receptive field of " +
                          std::to_string(p.dilation * (p.kernel_size - 1) + 1) +
                          " frames does not fit padded input of " +
                          std::to_string(x.frames + 2 * p.padding));
  }
  return out_frames;
}

void conv1d_into(const FeatureMap& x, const ConvParams& p, std::optional<double> slope,
                 bool accumulate, FeatureMap& y) {
#if defined(__AVX512F__)
  if (p.stride == 1) {
    conv1d_direct(x, p, slope, accumulate, y);
    return;
  }
#endif
  conv1d_gemm(x, p, slope, accumulate, y);
}

}  // namespace

FeatureMap conv1d(const FeatureMap& x, const ConvParams& p) {
  FeatureMap y(p.out_channels, checked_conv1d_frames(x, p));
  conv1d_into(x, p, std::nullopt, false, y);
  return y;
}

FeatureMap conv_transpose1d(const FeatureMap& x, const ConvParams& p) {
  p.validate();
  check_channels("conv_transpose1d", x, p);
  const std::size_t out_frames = conv_transpose1d_output_frames(x.frames, p);
  if (out_frames == 0) throw InvalidArgument("conv_transpose1d: empty output");

  const std::size_t cin = p.in_channels;
  const std::size_t cout = p.out_channels;
  const std::size_t k = p.kernel_size;
  const std::size_t rows = cout * k;

  FeatureMap y(cout, out_frames);
  for (std::size_t o = 0; o < cout; ++o) std::fill_n(y.data.data() + o * out_frames, out_frames, p.bias[o]);

  // weight [in][out*k]; cols = weight^T * x gives one (o, j) row per tap.
  const ConstMatrixView weights(p.weight.data(), static_cast<Eigen::Index>(cin),
                                static_cast<Eigen::Index>(rows));
  const std::size_t tile = tile_frames(rows, x.frames);
  RowMatrix cols(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(tile));

  for (std::size_t t0 = 0; t0 < x.frames; t0 += tile) {
    const std::size_t n = std::min(tile, x.frames - t0);
    const ConstStridedView in(x.data.data() + t0, static_cast<Eigen::Index>(cin),
                              static_cast<Eigen::Index>(n), Eigen::OuterStride<>(x.frames));
    StridedView c(cols.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(n),
                  Eigen::OuterStride<>(tile));
    c.noalias() = weights.transpose() * in;

    for (std::size_t o = 0; o < cout; ++o) {
      double* out_row = y.data.data() + o * out_frames;
      for (std::size_t j = 0; j < k; ++j) {
        const double* contrib = cols.data() + (o * k + j) * tile;
        for (std::size_t t = 0; t < n; ++t) {
          const std::size_t shifted = (t0 + t) * p.stride + j;
          if (shifted < p.padding) continue;
          const std::size_t pos = shifted - p.padding;
          if (pos >= out_frames) break;
          out_row[pos] += contrib[t];
        }
      }
    }
  }
  return y;
}

FeatureMap leaky_relu(const FeatureMap& x, double slope) {
  return map_elements(x, [slope](double v) { return v >= 0.0 ? v : slope * v; });
}

void leaky_relu_inplace(FeatureMap& x, double slope) {
  for (double& v : x.data) v = v >= 0.0 ? v : slope * v;
}

FeatureMap exp_activation(const FeatureMap& x) {
  return map_elements(x, [](double v) { return std::exp(v); });
}

FeatureMap sin_activation(const FeatureMap& x) {
  return map_elements(x, [](double v) { return std::sin(v); });
}

FeatureMap tanh_activation(const FeatureMap& x) {
  return map_elements(x, [](double v) { return std::tanh(v); });
}

FeatureMap resblock(const FeatureMap& x, const ResBlockParams& block) {
  if (block.first.size() != block.dilations.size() ||
      (!block.second.empty() && block.second.size() != block.dilations.size())) {
    throw InvalidArgument("resblock: conv count does not match dilation count");
  }
  FeatureMap y = x;
  for (std::size_t d = 0; d < block.dilations.size(); ++d) {
    if (block.first[d].in_channels != y.channels || block.first[d].out_channels != y.channels ||
        (!block.second.empty() && (block.second[d].in_channels != y.channels ||
                                   block.second[d].out_channels != y.channels))) {
      throw InvalidArgument("resblock: conv " + std::to_string(d) + " does not preserve " +
                            std::to_string(y.channels) + " channels");
    }
    const ConvParams& last = block.second.empty() ? block.first[d] : block.second[d];
    if (checked_conv1d_frames(y, block.first[d]) != y.frames) {
      throw InvalidArgument("resblock: conv changed the frame count");
    }
    if (block.second.empty()) {
      conv1d_into(y, last, kLeakySlope, true, y);
      continue;
    }
    FeatureMap t(y.channels, y.frames);
    conv1d_into(y, block.first[d], kLeakySlope, false, t);
    if (checked_conv1d_frames(t, last) != y.frames) {
      throw InvalidArgument("resblock: conv changed the frame count");
    }
    conv1d_into(t, last, kLeakySlope, true, y);
  }
  return y;
}

FeatureMap resblock_mrf(const FeatureMap& x, std::span<const ResBlockParams> blocks) {
  if (blocks.empty()) throw InvalidArgument("resblock_mrf: no blocks");
  FeatureMap sum(x.channels, x.frames);
  for (const auto& block : blocks) {
    const FeatureMap y = resblock(x, block);
    for (std::size_t i = 0; i < sum.data.size(); ++i) sum.data[i] += y.data[i];
  }
  const auto count = static_cast<double>(blocks.size());
  for (double& v : sum.data) v /= count;
  return sum;
}

}  // namespace istftnet::nn
