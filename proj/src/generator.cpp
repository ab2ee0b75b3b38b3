#include "istftnet/generator.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstring>
#include <limits>
#include <numeric>

#include "istftnet/errors.hpp"

namespace istftnet {

namespace {

constexpr std::size_t kMaxFactor = 1u << 20;
constexpr std::size_t kPrePostKernel = 7;

std::uint64_t fnv1a(std::uint64_t hash, const void* data, std::size_t len) {
  const auto* bytes = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < len; ++i) {
    hash ^= bytes[i];
    hash *= 0x100000001b3ull;
  }
  return hash;
}

constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ull;

std::uint64_t fnv1a_u32(std::uint64_t hash, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v >> 16),
                              static_cast<unsigned char>(v >> 24)};
  return fnv1a(hash, b, 4);
}

class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t state) : state_(state) {}

  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // Uniform on [-1, 1) from the top 53 bits.
  double next_symmetric() {
    const double unit = static_cast<double>(next() >> 11) * 0x1.0p-53;
    return 2.0 * unit - 1.0;
  }

 private:
  std::uint64_t state_;
};

std::vector<double> widen(const std::vector<float>& values) {
  return {values.begin(), values.end()};
}

}  // namespace

std::string to_string(Variant variant) {
  return "V" + std::to_string(static_cast<int>(variant));
}

Variant parse_variant(std::string_view text) {
  if (!text.empty() && (text.front() == 'V' || text.front() == 'v')) text.remove_prefix(1);
  if (text == "1") return Variant::V1;
  if (text == "2") return Variant::V2;
  if (text == "3") return Variant::V3;
  throw InvalidArgument("unknown variant '" + std::string(text) + "' (expected V1, V2 or V3)");
}

const VariantProfile& variant_profile(Variant variant) {
  static const VariantProfile v1{512, {{3, {1, 3, 5}}, {7, {1, 3, 5}}, {11, {1, 3, 5}}}, true,
                                 "C8C8C2C2"};
  static const VariantProfile v2{128, {{3, {1, 3, 5}}, {7, {1, 3, 5}}, {11, {1, 3, 5}}}, true,
                                 "C8C8C2C2"};
  static const VariantProfile v3{256, {{3, {1, 2}}, {5, {2, 6}}, {7, {3, 12}}}, false, "C8C8C4"};
  switch (variant) {
    case Variant::V1:
      return v1;
    case Variant::V2:
      return v2;
    case Variant::V3:
      return v3;
  }
  throw InvalidArgument("unknown variant");
}

dsp::StftConfig default_base_config() { return {1024, 256, 1024, true}; }

dsp::StftConfig derive_istft_params(const dsp::StftConfig& base, std::size_t s) {
  if (s == 0) throw InvalidArchitecture("upsample factor must be >= 1");
  const struct {
    const char* name;
    std::size_t value;
  } fields[] = {{"fft_size", base.fft_size},
                {"hop_length", base.hop_length},
                {"win_length", base.win_length}};
  for (const auto& f : fields) {
    if (f.value % s != 0) {
      throw InvalidArchitecture(std::string(f.name) + " " + std::to_string(f.value) +
                                " is not divisible by total upsampling " + std::to_string(s));
    }
  }
  return {base.fft_size / s, base.hop_length / s, base.win_length / s, base.center_pad};
}

ModelSpec parse_model_id(std::string_view id, Variant variant, const dsp::StftConfig& base) {
  base.validate();
  ModelSpec spec;
  spec.id = std::string(id);
  spec.variant = variant;
  spec.base_config = base;

  std::size_t pos = 0;
  while (pos < id.size() && id[pos] == 'C') {
    ++pos;
    const std::size_t start = pos;
    std::size_t factor = 0;
    while (pos < id.size() && std::isdigit(static_cast<unsigned char>(id[pos]))) {
      factor = factor * 10 + static_cast<std::size_t>(id[pos] - '0');
      if (factor > kMaxFactor) {
        throw ParseError("model id '" + spec.id + "': upsample factor too large");
      }
      ++pos;
    }
    if (pos == start) {
      throw ParseError("model id '" + spec.id + "': expected digits after 'C' at position " +
                       std::to_string(start));
    }
    if (factor == 0) {
      throw ParseError("model id '" + spec.id + "': upsample factor must be >= 1");
    }
    spec.stages.push_back(factor);
  }
  if (spec.stages.empty()) {
    throw ParseError("model id '" + spec.id + "': needs at least one C<factor> stage");
  }
  if (pos < id.size() && id[pos] == 'I') {
    spec.head = HeadType::Istft;
    ++pos;
  } else {
    spec.head = HeadType::Waveform;
  }
  if (pos != id.size()) {
    throw ParseError("model id '" + spec.id + "': unexpected character '" +
                     std::string(1, id[pos]) + "' at position " + std::to_string(pos));
  }

  std::size_t s = 1;
  for (const std::size_t u : spec.stages) {
    if (s > (std::size_t{1} << 40) / u) {
      throw InvalidArchitecture("model id '" + spec.id + "': total upsampling overflows");
    }
    s *= u;
  }
  spec.total_upsample = s;

  if (spec.head == HeadType::Istft) {
    spec.head_config = derive_istft_params(base, s);
  } else if (s != base.hop_length) {
    throw InvalidArchitecture("model id '" + spec.id + "': waveform head needs total upsampling " +
                              std::to_string(base.hop_length) + ", got " + std::to_string(s));
  }
  return spec;
}

std::vector<std::uint32_t> LayerDesc::weight_shape() const {
  if (kind == LayerKind::ConvTranspose) {
    return {static_cast<std::uint32_t>(in_channels), static_cast<std::uint32_t>(out_channels),
            static_cast<std::uint32_t>(kernel_size)};
  }
  return {static_cast<std::uint32_t>(out_channels), static_cast<std::uint32_t>(in_channels),
          static_cast<std::uint32_t>(kernel_size)};
}

std::vector<std::uint32_t> LayerDesc::bias_shape() const {
  return {static_cast<std::uint32_t>(out_channels)};
}

std::size_t LayerDesc::param_count() const {
  return in_channels * out_channels * kernel_size + out_channels;
}

std::size_t head_channels(const ModelSpec& spec) {
  if (spec.head == HeadType::Waveform) return 1;
  return (spec.head_config->fft_size / 2 + 1) * 2;
}

std::vector<LayerDesc> build_shape_schedule(const ModelSpec& spec) {
  const auto& profile = variant_profile(spec.variant);
  std::vector<LayerDesc> layers;

  std::size_t channels = profile.initial_channels;
  layers.push_back({"conv_pre", LayerKind::Conv, kMelChannels, channels, kPrePostKernel, 1, 1,
                    kPrePostKernel / 2});

  for (std::size_t j = 0; j < spec.stages.size(); ++j) {
    const std::size_t u = spec.stages[j];
    const std::string stage = std::to_string(j);
    if (u == 1) {
      // No upsampling: a plain conv that keeps the channel count.
      layers.push_back({"ups." + stage, LayerKind::Conv, channels, channels, 3, 1, 1, 1});
    } else {
      if (u % 2 != 0) {
        throw InvalidArchitecture("model id '" + spec.id + "': odd upsample factor " +
                                  std::to_string(u) + " at stage " + stage +
                                  " cannot grow frames exactly with kernel 2u");
      }
      if (channels < 2 || channels % 2 != 0) {
        throw InvalidArchitecture("model id '" + spec.id + "': cannot halve " +
                                  std::to_string(channels) + " channels at stage " + stage);
      }
      layers.push_back({"ups." + stage, LayerKind::ConvTranspose, channels, channels / 2, 2 * u,
                        u, 1, u / 2});
      channels /= 2;
    }
    for (std::size_t b = 0; b < profile.resblocks.size(); ++b) {
      const auto& rb = profile.resblocks[b];
      const std::string prefix = "resblocks." + stage + "." + std::to_string(b);
      for (std::size_t d = 0; d < rb.dilations.size(); ++d) {
        const std::size_t dil = rb.dilations[d];
        layers.push_back({prefix + ".convs1." + std::to_string(d), LayerKind::Conv, channels,
                          channels, rb.kernel_size, 1, dil, dil * (rb.kernel_size - 1) / 2});
        if (profile.two_convs_per_dilation) {
          layers.push_back({prefix + ".convs2." + std::to_string(d), LayerKind::Conv, channels,
                            channels, rb.kernel_size, 1, 1, (rb.kernel_size - 1) / 2});
        }
      }
    }
  }
  layers.push_back({"conv_post", LayerKind::Conv, channels, head_channels(spec), kPrePostKernel,
                    1, 1, kPrePostKernel / 2});
  return layers;
}

std::size_t count_params(const ModelSpec& spec) {
  const auto layers = build_shape_schedule(spec);
  return std::accumulate(layers.begin(), layers.end(), std::size_t{0},
                         [](std::size_t acc, const LayerDesc& l) { return acc + l.param_count(); });
}

std::size_t Tensor::element_count() const {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         [](std::size_t acc, std::uint32_t d) { return acc * d; });
}

void GeneratorWeights::insert(Tensor tensor) {
  if (find(tensor.name) != nullptr) {
    throw InvalidArgument("duplicate tensor '" + tensor.name + "'");
  }
  if (tensor.values.size() != tensor.element_count()) {
    throw InvalidArgument("tensor '" + tensor.name + "' holds " +
                          std::to_string(tensor.values.size()) + " values for shape of " +
                          std::to_string(tensor.element_count()));
  }
  tensors_.push_back(std::move(tensor));
}

const Tensor* GeneratorWeights::find(std::string_view name) const {
  auto it = std::find_if(tensors_.begin(), tensors_.end(),
                         [name](const Tensor& t) { return t.name == name; });
  return it == tensors_.end() ? nullptr : &*it;
}

std::uint64_t GeneratorWeights::checksum() const {
  std::uint64_t h = kFnvOffset;
  for (const auto& t : tensors_) {
    h = fnv1a(h, t.name.data(), t.name.size());
    for (const auto d : t.shape) h = fnv1a_u32(h, d);
    for (const float v : t.values) {
      std::uint32_t bits;
      std::memcpy(&bits, &v, sizeof bits);
      h = fnv1a_u32(h, bits);
    }
  }
  return h;
}

namespace {

std::string shape_string(const std::vector<std::uint32_t>& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

std::optional<WeightMismatch> check_tensor(const GeneratorWeights& weights,
                                           const std::string& name,
                                           const std::vector<std::uint32_t>& shape) {
  const Tensor* t = weights.find(name);
  if (t == nullptr) return WeightMismatch{name, "missing"};
  if (t->shape != shape) {
    return WeightMismatch{name, "shape " + shape_string(t->shape) + ", expected " +
                                    shape_string(shape)};
  }
  for (const float v : t->values) {
    if (!std::isfinite(v)) return WeightMismatch{name, "non-finite value"};
  }
  return std::nullopt;
}

}  // namespace

std::optional<WeightMismatch> find_weight_mismatch(const ModelSpec& spec,
                                                   const GeneratorWeights& weights) {
  const auto layers = build_shape_schedule(spec);
  for (const auto& layer : layers) {
    if (auto m = check_tensor(weights, layer.weight_name(), layer.weight_shape())) return m;
    if (auto m = check_tensor(weights, layer.bias_name(), layer.bias_shape())) return m;
  }
  if (weights.size() != layers.size() * 2) {
    for (const auto& t : weights.tensors()) {
      const bool known = std::any_of(layers.begin(), layers.end(), [&](const LayerDesc& l) {
        return t.name == l.weight_name() || t.name == l.bias_name();
      });
      if (!known) return WeightMismatch{t.name, "not part of model " + spec.id};
    }
  }
  return std::nullopt;
}

GeneratorWeights random_init(const ModelSpec& spec, std::uint64_t seed) {
  GeneratorWeights weights;
  for (const auto& layer : build_shape_schedule(spec)) {
    const auto wshape = layer.weight_shape();
    const double fan_in = static_cast<double>(wshape[1]) * static_cast<double>(wshape[2]);
    const double scale = 1.0 / std::sqrt(fan_in);
    for (const auto& [name, shape] : {std::pair{layer.weight_name(), wshape},
                                      std::pair{layer.bias_name(), layer.bias_shape()}}) {
      SplitMix64 rng(SplitMix64(seed).next() ^ fnv1a(kFnvOffset, name.data(), name.size()));
      Tensor t{name, shape, {}};
      t.values.resize(t.element_count());
      for (float& v : t.values) v = static_cast<float>(rng.next_symmetric() * scale);
      weights.insert(std::move(t));
    }
  }
  return weights;
}

Generator::Generator(ModelSpec spec, const GeneratorWeights& weights) : spec_(std::move(spec)) {
  if (auto m = find_weight_mismatch(spec_, weights)) {
    throw InvalidArgument("weights do not match model " + spec_.id + ": tensor '" + m->tensor +
                          "' " + m->detail);
  }
  const auto layers = build_shape_schedule(spec_);
  const auto& profile = variant_profile(spec_.variant);

  auto params = [&](const LayerDesc& l) {
    nn::ConvParams p;
    p.in_channels = l.in_channels;
    p.out_channels = l.out_channels;
    p.kernel_size = l.kernel_size;
    p.stride = l.stride;
    p.dilation = l.dilation;
    p.padding = l.padding;
    p.weight = widen(weights.find(l.weight_name())->values);
    p.bias = widen(weights.find(l.bias_name())->values);
    return p;
  };

  std::size_t next = 0;
  pre_ = params(layers[next++]);
  for (std::size_t j = 0; j < spec_.stages.size(); ++j) {
    Stage stage;
    stage.transposed = layers[next].kind == LayerKind::ConvTranspose;
    stage.upsample = params(layers[next++]);
    for (const auto& rb : profile.resblocks) {
      nn::ResBlockParams block;
      block.kernel_size = rb.kernel_size;
      block.dilations = rb.dilations;
      for (std::size_t d = 0; d < rb.dilations.size(); ++d) {
        block.first.push_back(params(layers[next++]));
        if (profile.two_convs_per_dilation) block.second.push_back(params(layers[next++]));
      }
      stage.mrf.push_back(std::move(block));
    }
    stages_.push_back(std::move(stage));
  }
  post_ = params(layers[next++]);
}

nn::FeatureMap Generator::run_network(const dsp::MelSpectrogram& mel) const {
  if (mel.n_mels != kMelChannels) {
    throw InvalidArgument("generator expects " + std::to_string(kMelChannels) +
                          " mel channels, got " + std::to_string(mel.n_mels));
  }
  if (mel.frames == 0) throw InvalidArgument("mel spectrogram has no frames");
  if (mel.data.size() != mel.n_mels * mel.frames) {
    throw InvalidArgument("mel data size does not match its shape");
  }
  if (mel.hop_length != spec_.base_config.hop_length) {
    throw InvalidArgument("mel hop length " + std::to_string(mel.hop_length) +
                          " does not match model hop length " +
                          std::to_string(spec_.base_config.hop_length));
  }
  for (const float v : mel.data) {
    if (!std::isfinite(v)) throw InvalidArgument("mel spectrogram contains non-finite values");
  }

  nn::FeatureMap x(mel.n_mels, mel.frames, widen(mel.data));
  x = nn::conv1d(x, pre_);
  for (const auto& stage : stages_) {
    nn::leaky_relu_inplace(x);
    x = stage.transposed ? nn::conv_transpose1d(x, stage.upsample) : nn::conv1d(x, stage.upsample);
    x = nn::resblock_mrf(x, stage.mrf);
  }
  nn::leaky_relu_inplace(x);
  return nn::conv1d(x, post_);
}

Generator::HeadOutput Generator::head(const dsp::MelSpectrogram& mel) const {
  HeadOutput out;
  out.raw = run_network(mel);
  if (spec_.head != HeadType::Istft) return out;

  const std::size_t bins = spec_.head_config->bins();
  const std::size_t frames = out.raw.frames;
  out.magnitude = dsp::MagnitudeSpectrogram(bins, frames);
  out.phase = dsp::PhaseSpectrogram(bins, frames);
  for (std::size_t b = 0; b < bins; ++b) {
    const auto mag_row = out.raw.row(b);
    const auto phase_row = out.raw.row(bins + b);
    for (std::size_t f = 0; f < frames; ++f) {
      const double m = std::exp(mag_row[f]);
      if (!std::isfinite(m)) {
        throw NumericError("magnitude overflow at bin " + std::to_string(b) + ", frame " +
                           std::to_string(f));
      }
      // exp underflows to 0 below about -745; keep the magnitude strictly positive.
      out.magnitude.at(b, f) = std::max(m, std::numeric_limits<double>::min());
      out.phase.at(b, f) = std::sin(phase_row[f]);
    }
  }
  return out;
}

dsp::AudioBuffer Generator::synthesize(const dsp::MelSpectrogram& mel) const {
  const std::size_t target = mel.frames * spec_.base_config.hop_length;
  dsp::AudioBuffer audio;
  if (spec_.head == HeadType::Istft) {
    const auto out = head(mel);
    const auto spec = dsp::polar_to_complex(out.magnitude, out.phase, *spec_.head_config);
    audio = dsp::istft(spec, *spec_.head_config, target, mel.sample_rate);
  } else {
    const auto raw = run_network(mel);
    audio.sample_rate = mel.sample_rate;
    audio.samples.resize(raw.frames);
    std::transform(raw.data.begin(), raw.data.end(), audio.samples.begin(),
                   [](double v) { return std::tanh(v); });
  }
  if (audio.samples.size() != target) {
    throw NumericError("synthesized " + std::to_string(audio.samples.size()) +
                       " samples, expected " + std::to_string(target));
  }
  for (std::size_t i = 0; i < audio.samples.size(); ++i) {
    if (!std::isfinite(audio.samples[i])) {
      throw NumericError("non-finite output sample at index " + std::to_string(i));
    }
  }
  return audio;
}

dsp::AudioBuffer forward(const dsp::MelSpectrogram& mel, const GeneratorWeights& weights,
                         const ModelSpec& spec) {
  return Generator(spec, weights).synthesize(mel);
}

}  // namespace istftnet
