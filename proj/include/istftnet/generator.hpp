#pragma once

// Model identifiers, shape schedules and the generator forward pass.
//
// An identifier such as "C8C8I" lists upsampling stages (C<factor>) and an
// optional trailing I selecting the inverse-STFT head. With total upsampling
// s the head runs an inverse STFT with (fft, hop, win) = base / s, so every
// head produces exactly mel_frames * base.hop_length samples. Without I the
// network must upsample all the way (s == base.hop_length) and emits the
// waveform through tanh.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "istftnet/dsp.hpp"
#include "istftnet/nn.hpp"

namespace istftnet {

inline constexpr std::size_t kMelChannels = 80;

enum class Variant : std::uint8_t { V1 = 1, V2 = 2, V3 = 3 };

std::string to_string(Variant variant);
/// Accepts "V1"/"v1"/"1" and so on. Throws InvalidArgument otherwise.
Variant parse_variant(std::string_view text);

enum class HeadType { Istft, Waveform };

struct ResBlockShape {
  std::size_t kernel_size;
  std::vector<std::size_t> dilations;
};

// Channel and residual-block layout shared by every model of one variant.
struct VariantProfile {
  std::size_t initial_channels;
  std::vector<ResBlockShape> resblocks;
  // true: two convs per dilation (lrelu, dilated conv, lrelu, conv).
  // false: a single dilated conv per dilation.
  bool two_convs_per_dilation;
  std::string baseline_id;
};

const VariantProfile& variant_profile(Variant variant);

/// 1024 / 256 / 1024 with centre padding.
dsp::StftConfig default_base_config();

struct ModelSpec {
  std::string id;
  std::vector<std::size_t> stages;
  HeadType head = HeadType::Istft;
  dsp::StftConfig base_config;
  std::size_t total_upsample = 1;
  std::optional<dsp::StftConfig> head_config;
  Variant variant = Variant::V1;
};

/// Throws ParseError for strings outside ("C" uint)+ ("I")? and
/// InvalidArchitecture when the head constraints cannot be met.
ModelSpec parse_model_id(std::string_view id, Variant variant = Variant::V1,
                         const dsp::StftConfig& base = default_base_config());

/// (f, h, w) / s. Throws InvalidArchitecture naming the first non-divisible field.
dsp::StftConfig derive_istft_params(const dsp::StftConfig& base, std::size_t s);

enum class LayerKind { Conv, ConvTranspose };

struct LayerDesc {
  std::string name;
  LayerKind kind = LayerKind::Conv;
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t kernel_size = 1;
  std::size_t stride = 1;
  std::size_t dilation = 1;
  std::size_t padding = 0;

  std::string weight_name() const { return name + ".weight"; }
  std::string bias_name() const { return name + ".bias"; }
  std::vector<std::uint32_t> weight_shape() const;
  std::vector<std::uint32_t> bias_shape() const;
  std::size_t param_count() const;
};

/// Every layer in execution order: conv_pre, per stage ups.j then
/// resblocks.j.b.convs{1,2}.d, and conv_post.
std::vector<LayerDesc> build_shape_schedule(const ModelSpec& spec);

/// Channels of conv_post: (f_s/2 + 1) * 2 for the iSTFT head, 1 otherwise.
std::size_t head_channels(const ModelSpec& spec);

std::size_t count_params(const ModelSpec& spec);

struct Tensor {
  std::string name;
  std::vector<std::uint32_t> shape;
  std::vector<float> values;

  std::size_t element_count() const;
};

// Named tensors in insertion order.
class GeneratorWeights {
 public:
  void insert(Tensor tensor);
  const Tensor* find(std::string_view name) const;
  const std::vector<Tensor>& tensors() const& noexcept { return tensors_; }
  // Moves out of a temporary so range-for over random_init(...).tensors() is safe.
  std::vector<Tensor> tensors() && noexcept { return std::move(tensors_); }
  std::size_t size() const noexcept { return tensors_.size(); }

  /// FNV-1a 64 over names, shapes and little-endian float bytes.
  std::uint64_t checksum() const;

 private:
  std::vector<Tensor> tensors_;
};

struct WeightMismatch {
  std::string tensor;
  std::string detail;
};

/// First tensor whose presence, shape or values disagree with the schedule.
std::optional<WeightMismatch> find_weight_mismatch(const ModelSpec& spec,
                                                   const GeneratorWeights& weights);

/// Deterministic weights: each tensor draws uniform [-1, 1) values from a
/// splitmix64 stream keyed by (seed, tensor name), scaled by 1/sqrt(fan_in).
GeneratorWeights random_init(const ModelSpec& spec, std::uint64_t seed);

/// Prepared generator: weights widened to double and arranged per stage.
/// Immutable after construction; synthesize may be called concurrently.
class Generator {
 public:
  /// Throws InvalidArgument naming the first tensor that does not match.
  Generator(ModelSpec spec, const GeneratorWeights& weights);

  const ModelSpec& spec() const noexcept { return spec_; }

  struct HeadOutput {
    nn::FeatureMap raw;
    dsp::MagnitudeSpectrogram magnitude;
    dsp::PhaseSpectrogram phase;
  };

  /// Post-conv output and, for the iSTFT head, its exp/sin activations.
  HeadOutput head(const dsp::MelSpectrogram& mel) const;

  /// Waveform of exactly mel.frames * base hop samples.
  dsp::AudioBuffer synthesize(const dsp::MelSpectrogram& mel) const;

 private:
  struct Stage {
    nn::ConvParams upsample;
    bool transposed = true;
    std::vector<nn::ResBlockParams> mrf;
  };

  nn::FeatureMap run_network(const dsp::MelSpectrogram& mel) const;

  ModelSpec spec_;
  nn::ConvParams pre_;
  std::vector<Stage> stages_;
  nn::ConvParams post_;
};

dsp::AudioBuffer forward(const dsp::MelSpectrogram& mel, const GeneratorWeights& weights,
                         const ModelSpec& spec);

}  // namespace istftnet
