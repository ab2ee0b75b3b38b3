#include "istftnet/model_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <map>

#include "istftnet/errors.hpp"

namespace istftnet::io {

namespace {

class ByteReader {
 public:
  ByteReader(std::span<const unsigned char> bytes, std::string context)
      : bytes_(bytes), context_(std::move(context)) {}

  std::size_t offset() const noexcept { return pos_; }
  std::size_t remaining() const noexcept { return bytes_.size() - pos_; }

  void need(std::size_t n, const std::string& what) const {
    if (n > remaining()) {
      throw TruncatedData(context_ + ": truncated " + what, pos_ + n, bytes_.size());
    }
  }

  std::span<const unsigned char> take(std::size_t n, const std::string& what) {
    need(n, what);
    auto out = bytes_.subspan(pos_, n);
    pos_ += n;
    return out;
  }

  std::uint8_t u8(const std::string& what) { return take(1, what)[0]; }

  std::uint16_t u16(const std::string& what) {
    const auto b = take(2, what);
    return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
  }

  std::uint32_t u32(const std::string& what) {
    const auto b = take(4, what);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
  }

  float f32(const std::string& what) {
    const std::uint32_t bits = u32(what);
    float v;
    std::memcpy(&v, &bits, sizeof v);
    return v;
  }

  std::string string(std::size_t n, const std::string& what) {
    const auto b = take(n, what);
    return {b.begin(), b.end()};
  }

  void skip(std::size_t n, const std::string& what) { take(n, what); }

 private:
  std::span<const unsigned char> bytes_;
  std::string context_;
  std::size_t pos_ = 0;
};

class ByteWriter {
 public:
  void bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    out_.insert(out_.end(), p, p + n);
  }
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u16(std::uint16_t v) {
    out_.push_back(static_cast<unsigned char>(v));
    out_.push_back(static_cast<unsigned char>(v >> 8));
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<unsigned char>(v >> (8 * i)));
  }
  void f32(float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    u32(bits);
  }
  void string(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  std::vector<unsigned char> release() { return std::move(out_); }

 private:
  std::vector<unsigned char> out_;
};

void check_magic(ByteReader& in, const char (&magic)[8], const std::string& context) {
  const auto got = in.take(8, "magic");
  if (!std::equal(got.begin(), got.end(), magic)) {
    throw MagicMismatch(context + ": bad magic '" + std::string(got.begin(), got.end()) +
                            "', expected '" + std::string(magic, 8) + "'",
                        0);
  }
}

std::uint32_t checked_u32(std::size_t v, const std::string& what) {
  if (v > std::numeric_limits<std::uint32_t>::max()) {
    throw InvalidArgument(what + " does not fit in 32 bits");
  }
  return static_cast<std::uint32_t>(v);
}

constexpr std::size_t kMaxNameLength = 1 << 16;
constexpr std::uint32_t kMaxRank = 8;

}  // namespace

std::vector<unsigned char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("error reading '" + path.string() + "'");
  return bytes;
}

void write_file(const std::filesystem::path& path, std::span<const unsigned char> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("error writing '" + path.string() + "'");
}

// ---------------------------------------------------------------- WAV

std::int16_t quantize_pcm16(double sample) noexcept {
  const double clamped = std::clamp(sample, -1.0, 1.0);
  const double scaled = std::round(clamped * 32768.0);
  return static_cast<std::int16_t>(std::clamp(scaled, -32768.0, 32767.0));
}

dsp::AudioBuffer decode_wav(std::span<const unsigned char> bytes) {
  ByteReader in(bytes, "wav");
  const std::string riff = in.string(4, "RIFF header");
  in.u32("RIFF size");
  const std::string wave = in.string(4, "RIFF header");
  if (riff != "RIFF" || wave != "WAVE") throw MagicMismatch("wav: not a RIFF/WAVE file", 0);

  bool have_format = false;
  std::uint32_t sample_rate = 0;
  while (in.remaining() > 0) {
    const std::size_t chunk_at = in.offset();
    const std::string id = in.string(4, "chunk id");
    const std::uint32_t size = in.u32("chunk size");
    if (id == "fmt ") {
      in.need(size, "fmt chunk");
      if (size < 16) throw FormatError("wav: fmt chunk too small", chunk_at);
      const std::size_t fmt_at = in.offset();
      const std::uint16_t tag = in.u16("format tag");
      const std::uint16_t channels = in.u16("channel count");
      sample_rate = in.u32("sample rate");
      in.u32("byte rate");
      in.u16("block align");
      const std::uint16_t bits = in.u16("bits per sample");
      if (tag != 1) {
        throw FormatError("wav: format tag " + std::to_string(tag) + " is not PCM", fmt_at);
      }
      if (channels != 1) {
        throw FormatError("wav: " + std::to_string(channels) + " channels, only mono is supported",
                          fmt_at + 2);
      }
      if (bits != 16) {
        throw FormatError("wav: " + std::to_string(bits) + "-bit samples, only 16-bit PCM",
                          fmt_at + 14);
      }
      if (sample_rate == 0) throw FormatError("wav: sample rate is zero", fmt_at + 4);
      in.skip(size - 16 + (size & 1u), "fmt chunk");
      have_format = true;
    } else if (id == "data") {
      if (!have_format) throw FormatError("wav: data chunk before fmt chunk", chunk_at);
      in.need(size, "sample data");
      if (size % 2 != 0) throw FormatError("wav: odd data chunk size", chunk_at + 4);
      dsp::AudioBuffer audio{std::vector<double>(size / 2), static_cast<double>(sample_rate)};
      for (double& s : audio.samples) {
        s = static_cast<double>(static_cast<std::int16_t>(in.u16("sample"))) / 32768.0;
      }
      return audio;
    } else {
      in.skip(size + (size & 1u), "chunk '" + id + "'");
    }
  }
  throw FormatError("wav: no data chunk", in.offset());
}

std::vector<unsigned char> encode_wav(const dsp::AudioBuffer& audio) {
  audio.validate();
  const double rounded_rate = std::round(audio.sample_rate);
  if (rounded_rate < 1.0 || rounded_rate > std::numeric_limits<std::uint32_t>::max()) {
    throw InvalidArgument("wav: sample rate out of range");
  }
  const auto rate = static_cast<std::uint32_t>(rounded_rate);
  const std::uint32_t data_bytes = checked_u32(audio.samples.size() * 2, "wav data size");
  if (data_bytes > std::numeric_limits<std::uint32_t>::max() - 36) {
    throw InvalidArgument("wav: audio too long");
  }

  ByteWriter out;
  out.bytes("RIFF", 4);
  out.u32(36 + data_bytes);
  out.bytes("WAVE", 4);
  out.bytes("fmt ", 4);
  out.u32(16);
  out.u16(1);
  out.u16(1);
  out.u32(rate);
  out.u32(rate * 2);
  out.u16(2);
  out.u16(16);
  out.bytes("data", 4);
  out.u32(data_bytes);
  for (const double s : audio.samples) out.u16(static_cast<std::uint16_t>(quantize_pcm16(s)));
  return out.release();
}

dsp::AudioBuffer read_wav(const std::filesystem::path& path) { return decode_wav(read_file(path)); }

void write_wav(const std::filesystem::path& path, const dsp::AudioBuffer& audio) {
  write_file(path, encode_wav(audio));
}

// ---------------------------------------------------------------- weights

LoadedModel decode_weights(std::span<const unsigned char> bytes, const dsp::StftConfig& base) {
  ByteReader in(bytes, "weights");
  check_magic(in, kWeightMagic, "weights");

  const std::size_t id_at = in.offset();
  const std::uint32_t id_len = in.u32("model id length");
  if (id_len > kMaxNameLength) throw FormatError("weights: model id too long", id_at);
  const std::string model_id = in.string(id_len, "model id");
  const std::size_t variant_at = in.offset();
  const std::uint8_t variant_byte = in.u8("variant");
  if (variant_byte < 1 || variant_byte > 3) {
    throw FormatError("weights: variant byte " + std::to_string(variant_byte) + " not in 1..3",
                      variant_at);
  }
  const std::uint32_t count = in.u32("tensor count");

  ModelSpec spec;
  try {
    spec = parse_model_id(model_id, static_cast<Variant>(variant_byte), base);
  } catch (const ParseError& e) {
    throw FormatError(std::string("weights: ") + e.what(), id_at);
  } catch (const InvalidArchitecture& e) {
    throw FormatError(std::string("weights: ") + e.what(), id_at);
  }

  GeneratorWeights weights;
  std::map<std::string, std::size_t> offsets;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::size_t tensor_at = in.offset();
    const std::uint32_t name_len = in.u32("tensor name length");
    if (name_len > kMaxNameLength) throw FormatError("weights: tensor name too long", tensor_at);
    Tensor t{in.string(name_len, "tensor name"), {}, {}};
    const std::uint32_t rank = in.u32("tensor rank");
    if (rank > kMaxRank) {
      throw FormatError("weights: tensor '" + t.name + "' has rank " + std::to_string(rank),
                        tensor_at);
    }
    std::size_t elements = 1;
    for (std::uint32_t r = 0; r < rank; ++r) {
      const std::uint32_t d = in.u32("tensor dims");
      t.shape.push_back(d);
      // Cap before multiplying so a corrupt dim cannot overflow.
      if (d != 0 && elements > in.remaining() / d + 1) elements = in.remaining() + 1;
      else elements *= d;
    }
    in.need(elements * 4, "data of tensor '" + t.name + "'");
    t.values.resize(elements);
    for (float& v : t.values) v = in.f32("tensor data");
    if (offsets.count(t.name)) {
      throw FormatError("weights: duplicate tensor '" + t.name + "'", tensor_at);
    }
    offsets[t.name] = tensor_at;
    weights.insert(std::move(t));
  }
  if (in.remaining() != 0) {
    throw FormatError("weights: " + std::to_string(in.remaining()) + " trailing bytes",
                      in.offset());
  }

  if (auto m = find_weight_mismatch(spec, weights)) {
    const auto it = offsets.find(m->tensor);
    throw ScheduleMismatch(m->tensor, m->detail + " for model " + spec.id + " (" +
                                          to_string(spec.variant) + ")",
                           it == offsets.end() ? bytes.size() : it->second);
  }
  return {std::move(spec), std::move(weights)};
}

std::vector<unsigned char> encode_weights(const ModelSpec& spec, const GeneratorWeights& weights) {
  ByteWriter out;
  out.bytes(kWeightMagic, 8);
  out.string(spec.id);
  out.u8(static_cast<std::uint8_t>(spec.variant));
  out.u32(checked_u32(weights.size(), "tensor count"));
  for (const auto& t : weights.tensors()) {
    out.string(t.name);
    out.u32(checked_u32(t.shape.size(), "tensor rank"));
    for (const auto d : t.shape) out.u32(d);
    for (const float v : t.values) out.f32(v);
  }
  return out.release();
}

LoadedModel read_weights(const std::filesystem::path& path, const dsp::StftConfig& base) {
  return decode_weights(read_file(path), base);
}

void write_weights(const std::filesystem::path& path, const ModelSpec& spec,
                   const GeneratorWeights& weights) {
  write_file(path, encode_weights(spec, weights));
}

// ---------------------------------------------------------------- mel

dsp::MelSpectrogram decode_mel(std::span<const unsigned char> bytes) {
  ByteReader in(bytes, "mel");
  check_magic(in, kMelMagic, "mel");
  dsp::MelSpectrogram mel;
  mel.n_mels = in.u32("n_mels");
  mel.frames = in.u32("frames");
  const std::uint32_t rate = in.u32("sample rate");
  mel.hop_length = in.u32("hop length");
  if (mel.n_mels == 0) throw FormatError("mel: n_mels is zero", 8);
  if (rate == 0) throw FormatError("mel: sample rate is zero", 16);
  if (mel.hop_length == 0) throw FormatError("mel: hop length is zero", 20);
  mel.sample_rate = rate;

  // Two u32 dims always fit in 64 bits; the byte count may not.
  const std::size_t values = mel.n_mels * mel.frames;
  const std::size_t expected =
      values > (std::numeric_limits<std::size_t>::max() - in.offset()) / 4
          ? std::numeric_limits<std::size_t>::max()
          : in.offset() + values * 4;
  if (bytes.size() < expected) {
    throw TruncatedData("mel: truncated data", expected, bytes.size());
  }
  if (bytes.size() > expected) {
    throw FormatError("mel: " + std::to_string(bytes.size() - expected) +
                          " trailing bytes after " + std::to_string(expected),
                      expected);
  }
  mel.data.resize(values);
  for (std::size_t f = 0; f < mel.frames; ++f) {
    for (std::size_t m = 0; m < mel.n_mels; ++m) mel.at(m, f) = in.f32("mel data");
  }
  return mel;
}

std::vector<unsigned char> encode_mel(const dsp::MelSpectrogram& mel) {
  if (mel.data.size() != mel.n_mels * mel.frames) {
    throw InvalidArgument("mel: data size does not match its shape");
  }
  const double rate = std::round(mel.sample_rate);
  if (rate < 1.0 || rate > std::numeric_limits<std::uint32_t>::max()) {
    throw InvalidArgument("mel: sample rate out of range");
  }
  ByteWriter out;
  out.bytes(kMelMagic, 8);
  out.u32(checked_u32(mel.n_mels, "n_mels"));
  out.u32(checked_u32(mel.frames, "frames"));
  out.u32(static_cast<std::uint32_t>(rate));
  out.u32(checked_u32(mel.hop_length, "hop length"));
  for (std::size_t f = 0; f < mel.frames; ++f) {
    for (std::size_t m = 0; m < mel.n_mels; ++m) out.f32(mel.at(m, f));
  }
  return out.release();
}

dsp::MelSpectrogram read_mel(const std::filesystem::path& path) { return decode_mel(read_file(path)); }

void write_mel(const std::filesystem::path& path, const dsp::MelSpectrogram& mel) {
  write_file(path, encode_mel(mel));
}

}  // namespace istftnet::io
