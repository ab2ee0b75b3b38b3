#pragma once

// Analysis/synthesis primitives: windows, FFT, STFT/iSTFT, mel features.

#include <complex>
#include <cstddef>
#include <optional>
#include <span>
#include <vector>

namespace istftnet::dsp {

using Complex = std::complex<double>;

inline constexpr double kDefaultSampleRate = 22050.0;
inline constexpr std::size_t kDefaultMels = 80;
inline constexpr double kDefaultFmin = 0.0;
inline constexpr double kDefaultFmax = 8000.0;
inline constexpr double kLogFloor = 1e-5;
inline constexpr double kOverlapFloor = 1e-11;

struct AudioBuffer {
  std::vector<double> samples;
  double sample_rate = kDefaultSampleRate;

  std::size_t size() const noexcept { return samples.size(); }
  double duration_seconds() const noexcept {
    return static_cast<double>(samples.size()) / sample_rate;
  }
  // Throws InvalidArgument on a non-positive rate or non-finite samples.
  void validate() const;
};

struct StftConfig {
  std::size_t fft_size = 1024;
  std::size_t hop_length = 256;
  std::size_t win_length = 1024;
  bool center_pad = true;

  // fft_size >= win_length >= hop_length >= 1, fft_size a power of two.
  void validate() const;
  std::size_t bins() const noexcept { return fft_size / 2 + 1; }

  friend bool operator==(const StftConfig&, const StftConfig&) = default;
};

// Half spectrum, frame-major: data[frame * bins + bin].
struct ComplexSpectrogram {
  std::size_t bins = 0;
  std::size_t frames = 0;
  std::vector<Complex> data;
  StftConfig config;

  Complex& at(std::size_t bin, std::size_t frame) { return data[frame * bins + bin]; }
  const Complex& at(std::size_t bin, std::size_t frame) const {
    return data[frame * bins + bin];
  }
};

// Real-valued grid on the same (bin, frame) layout as ComplexSpectrogram.
template <class Tag>
struct RealSpectrogram {
  std::size_t bins = 0;
  std::size_t frames = 0;
  std::vector<double> data;

  RealSpectrogram() = default;
  RealSpectrogram(std::size_t bins_, std::size_t frames_)
      : bins(bins_), frames(frames_), data(bins_ * frames_, 0.0) {}

  double& at(std::size_t bin, std::size_t frame) { return data[frame * bins + bin]; }
  double at(std::size_t bin, std::size_t frame) const { return data[frame * bins + bin]; }
};

struct MagnitudeTag {};
struct PhaseTag {};
using MagnitudeSpectrogram = RealSpectrogram<MagnitudeTag>;
using PhaseSpectrogram = RealSpectrogram<PhaseTag>;

struct MelFilterbank {
  std::size_t n_mels = 0;
  std::size_t fft_size = 0;
  double sample_rate = 0.0;
  double fmin = 0.0;
  double fmax = 0.0;
  // n_mels x (fft_size/2 + 1), row-major.
  std::vector<double> weights;

  std::size_t bins() const noexcept { return fft_size / 2 + 1; }
  std::span<const double> row(std::size_t mel) const {
    return {weights.data() + mel * bins(), bins()};
  }
  // Peak frequency of each triangle in Hz.
  std::vector<double> center_frequencies() const;
};

// Log-mel features, mel-major: data[mel * frames + frame]. Stored as float,
// the precision of the on-disk mel format.
struct MelSpectrogram {
  std::size_t n_mels = 0;
  std::size_t frames = 0;
  std::vector<float> data;
  double sample_rate = kDefaultSampleRate;
  std::size_t hop_length = 256;

  float& at(std::size_t mel, std::size_t frame) { return data[mel * frames + frame]; }
  float at(std::size_t mel, std::size_t frame) const { return data[mel * frames + frame]; }
};

/// Periodic Hann window, w[n] = 0.5 (1 - cos(2 pi n / length)).
std::vector<double> hann_window(std::size_t length);

bool is_power_of_two(std::size_t n) noexcept;

/// Iterative radix-2 FFT. Throws InvalidArgument unless the size is a power
/// of two. inverse_fft includes the 1/N scale.
std::vector<Complex> fft(std::span<const Complex> input);
std::vector<Complex> inverse_fft(std::span<const Complex> input);

/// Direct O(N^2) DFT for any N >= 1.
std::vector<Complex> naive_dft(std::span<const Complex> input);

std::size_t stft_frame_count(std::size_t signal_length, const StftConfig& config);

ComplexSpectrogram stft(const AudioBuffer& audio, const StftConfig& config);

/// Full length-n spectrum of a real signal from its n/2+1 lower bins:
/// X[n-k] = conj(X[k]), with the DC and Nyquist bins forced real.
std::vector<Complex> hermitian_extend(std::span<const Complex> half, std::size_t n);
void hermitian_extend(std::span<const Complex> half, std::span<Complex> full);

/// Weighted overlap-add inverse of stft. With center_pad, fft_size/2 samples
/// are dropped from the front; target_len then selects the output length
/// (zero-extended past the synthesized span), otherwise fft_size/2 samples
/// are also dropped from the end.
AudioBuffer istft(const ComplexSpectrogram& spec, const StftConfig& config,
                  std::optional<std::size_t> target_len = std::nullopt,
                  double sample_rate = kDefaultSampleRate);

ComplexSpectrogram polar_to_complex(const MagnitudeSpectrogram& magnitude,
                                    const PhaseSpectrogram& phase,
                                    const StftConfig& config);
MagnitudeSpectrogram magnitude(const ComplexSpectrogram& spec);
PhaseSpectrogram phase(const ComplexSpectrogram& spec);

double hz_to_mel(double hz) noexcept;
double mel_to_hz(double mel) noexcept;

/// Triangular filters on the HTK mel scale with Slaney area normalization.
MelFilterbank mel_filterbank(std::size_t n_mels, std::size_t fft_size,
                             double sample_rate, double fmin, double fmax);

/// log(max(fb * |stft(audio)|, 1e-5)).
MelSpectrogram log_mel(const AudioBuffer& audio, const StftConfig& config,
                       const MelFilterbank& fb);

}  // namespace istftnet::dsp
