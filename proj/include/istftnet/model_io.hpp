#pragma once

// Little-endian file containers.
//
// Weights ("ISTFTNW1"):
//   magic[8] | u32 id_len | id bytes | u8 variant | u32 tensor_count |
//   tensor_count x (u32 name_len | name | u32 rank | rank x u32 dim | f32 data)
// Mel ("ISTFTMEL"):
//   magic[8] | u32 n_mels | u32 frames | u32 sample_rate | u32 hop_length |
//   f32 data, frames outer, mels inner
// Audio: RIFF/WAVE, PCM 16-bit mono.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "istftnet/dsp.hpp"
#include "istftnet/generator.hpp"

namespace istftnet::io {

inline constexpr char kWeightMagic[8] = {'I', 'S', 'T', 'F', 'T', 'N', 'W', '1'};
inline constexpr char kMelMagic[8] = {'I', 'S', 'T', 'F', 'T', 'M', 'E', 'L'};

/// Samples are scaled by 1/32768.
dsp::AudioBuffer read_wav(const std::filesystem::path& path);
dsp::AudioBuffer decode_wav(std::span<const unsigned char> bytes);

/// Clamps to [-1, 1], scales by 32768, rounds half away from zero and
/// saturates to the int16 range.
void write_wav(const std::filesystem::path& path, const dsp::AudioBuffer& audio);
std::vector<unsigned char> encode_wav(const dsp::AudioBuffer& audio);

/// PCM-16 quantization used by write_wav.
std::int16_t quantize_pcm16(double sample) noexcept;

struct LoadedModel {
  ModelSpec spec;
  GeneratorWeights weights;
};

/// Validates the tensors against the shape schedule of the stored model id.
/// Throws MagicMismatch, TruncatedData, FormatError or ScheduleMismatch.
LoadedModel read_weights(const std::filesystem::path& path,
                         const dsp::StftConfig& base = default_base_config());
LoadedModel decode_weights(std::span<const unsigned char> bytes,
                           const dsp::StftConfig& base = default_base_config());

void write_weights(const std::filesystem::path& path, const ModelSpec& spec,
                   const GeneratorWeights& weights);
std::vector<unsigned char> encode_weights(const ModelSpec& spec, const GeneratorWeights& weights);

dsp::MelSpectrogram read_mel(const std::filesystem::path& path);
dsp::MelSpectrogram decode_mel(std::span<const unsigned char> bytes);
void write_mel(const std::filesystem::path& path, const dsp::MelSpectrogram& mel);
std::vector<unsigned char> encode_mel(const dsp::MelSpectrogram& mel);

std::vector<unsigned char> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const unsigned char> bytes);

}  // namespace istftnet::io
