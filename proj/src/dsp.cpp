#include "istftnet/dsp.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "istftnet/errors.hpp"

namespace istftnet::dsp {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

// Bit-reversal permutation and twiddles for one transform size, reused across
// the frames of a spectrogram.
class FftPlan {
 public:
  explicit FftPlan(std::size_t n) : n_(n), reversed_(n), twiddles_(n / 2) {
    if (!is_power_of_two(n)) {
      throw InvalidArgument("fft size must be a power of two, got " + std::to_string(n));
    }
    std::size_t bits = 0;
    while ((std::size_t{1} << bits) < n) ++bits;
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t r = 0;
      for (std::size_t b = 0; b < bits; ++b) {
        if (i & (std::size_t{1} << b)) r |= std::size_t{1} << (bits - 1 - b);
      }
      reversed_[i] = r;
    }
    for (std::size_t k = 0; k < n / 2; ++k) {
      const double angle = -kTwoPi * static_cast<double>(k) / static_cast<double>(n);
      twiddles_[k] = Complex(std::cos(angle), std::sin(angle));
    }
  }

  std::size_t size() const noexcept { return n_; }

  // In-place transform of `data` (size n). Inverse conjugates the twiddles and
  // does not scale.
  void transform(std::span<Complex> data, bool inverse) const {
    for (std::size_t i = 0; i < n_; ++i) {
      if (i < reversed_[i]) std::swap(data[i], data[reversed_[i]]);
    }
    for (std::size_t len = 2; len <= n_; len <<= 1) {
      const std::size_t half = len / 2;
      const std::size_t step = n_ / len;
      for (std::size_t start = 0; start < n_; start += len) {
        for (std::size_t j = 0; j < half; ++j) {
          Complex w = twiddles_[j * step];
          if (inverse) w = std::conj(w);
          const Complex odd = w * data[start + j + half];
          const Complex even = data[start + j];
          data[start + j] = even + odd;
          data[start + j + half] = even - odd;
        }
      }
    }
  }

 private:
  std::size_t n_;
  std::vector<std::size_t> reversed_;
  std::vector<Complex> twiddles_;
};

// Hann(win_length) centred in an fft_size frame.
std::vector<double> frame_window(const StftConfig& config) {
  std::vector<double> window(config.fft_size, 0.0);
  const auto hann = hann_window(config.win_length);
  const std::size_t offset = (config.fft_size - config.win_length) / 2;
  std::copy(hann.begin(), hann.end(), window.begin() + static_cast<std::ptrdiff_t>(offset));
  return window;
}

std::vector<double> reflect_pad(const std::vector<double>& x, std::size_t pad) {
  const std::size_t n = x.size();
  if (pad >= n) {
    throw InvalidArgument("reflect padding of " + std::to_string(pad) +
                          " samples needs a signal longer than the padding, got " +
                          std::to_string(n) + " samples");
  }
  std::vector<double> out(n + 2 * pad);
  for (std::size_t i = 0; i < pad; ++i) out[i] = x[pad - i];
  std::copy(x.begin(), x.end(), out.begin() + static_cast<std::ptrdiff_t>(pad));
  for (std::size_t i = 0; i < pad; ++i) out[pad + n + i] = x[n - 2 - i];
  return out;
}

}  // namespace

void AudioBuffer::validate() const {
  if (!(sample_rate > 0.0) || !std::isfinite(sample_rate)) {
    throw InvalidArgument("sample rate must be positive");
  }
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (!std::isfinite(samples[i])) {
      throw InvalidArgument("non-finite sample at index " + std::to_string(i));
    }
  }
}

void StftConfig::validate() const {
  if (hop_length < 1) throw InvalidArgument("hop_length must be >= 1");
  if (win_length < hop_length) throw InvalidArgument("win_length must be >= hop_length");
  if (fft_size < win_length) throw InvalidArgument("fft_size must be >= win_length");
  if (!is_power_of_two(fft_size)) {
    throw InvalidArgument("fft_size must be a power of two, got " + std::to_string(fft_size));
  }
}

bool is_power_of_two(std::size_t n) noexcept { return n != 0 && (n & (n - 1)) == 0; }

std::vector<double> hann_window(std::size_t length) {
  if (length == 0) throw InvalidArgument("window length must be >= 1");
  std::vector<double> w(length);
  for (std::size_t n = 0; n < length; ++n) {
    w[n] = 0.5 * (1.0 - std::cos(kTwoPi * static_cast<double>(n) / static_cast<double>(length)));
  }
  return w;
}

std::vector<Complex> fft(std::span<const Complex> input) {
  FftPlan plan(input.size());
  std::vector<Complex> out(input.begin(), input.end());
  plan.transform(out, false);
  return out;
}

std::vector<Complex> inverse_fft(std::span<const Complex> input) {
  FftPlan plan(input.size());
  std::vector<Complex> out(input.begin(), input.end());
  plan.transform(out, true);
  const double scale = 1.0 / static_cast<double>(out.size());
  for (auto& v : out) v *= scale;
  return out;
}

std::vector<Complex> naive_dft(std::span<const Complex> input) {
  const std::size_t n = input.size();
  std::vector<Complex> out(n);
  for (std::size_t k = 0; k < n; ++k) {
    Complex acc{0.0, 0.0};
    for (std::size_t t = 0; t < n; ++t) {
      // Reduce k*t mod n first so the angle stays accurate for large n.
      const double angle = -kTwoPi * static_cast<double>((k * t) % n) / static_cast<double>(n);
      acc += input[t] * Complex(std::cos(angle), std::sin(angle));
    }
    out[k] = acc;
  }
  return out;
}

std::size_t stft_frame_count(std::size_t signal_length, const StftConfig& config) {
  if (config.center_pad) return signal_length / config.hop_length + 1;
  if (signal_length < config.fft_size) return 0;
  return (signal_length - config.fft_size) / config.hop_length + 1;
}

ComplexSpectrogram stft(const AudioBuffer& audio, const StftConfig& config) {
  config.validate();
  if (audio.samples.empty()) throw InvalidArgument("stft: audio is empty");
  audio.validate();

  std::vector<double> signal =
      config.center_pad ? reflect_pad(audio.samples, config.fft_size / 2) : audio.samples;
  if (signal.size() < config.fft_size) {
    throw InvalidArgument("stft: signal of " + std::to_string(signal.size()) +
                          " samples is shorter than fft_size " +
                          std::to_string(config.fft_size));
  }

  const std::size_t n = config.fft_size;
  const std::size_t bins = config.bins();
  const std::size_t frames = (signal.size() - n) / config.hop_length + 1;
  const auto window = frame_window(config);
  const FftPlan plan(n);

  ComplexSpectrogram spec{bins, frames, std::vector<Complex>(bins * frames), config};
  std::vector<Complex> buf(n);
  for (std::size_t f = 0; f < frames; ++f) {
    const double* src = signal.data() + f * config.hop_length;
    for (std::size_t i = 0; i < n; ++i) buf[i] = Complex(src[i] * window[i], 0.0);
    plan.transform(buf, false);
    std::copy(buf.begin(), buf.begin() + static_cast<std::ptrdiff_t>(bins),
              spec.data.begin() + static_cast<std::ptrdiff_t>(f * bins));
    spec.at(0, f).imag(0.0);
    spec.at(bins - 1, f).imag(0.0);
  }
  return spec;
}

void hermitian_extend(std::span<const Complex> half, std::span<Complex> full) {
  const std::size_t n = full.size();
  if (n == 0 || half.size() != n / 2 + 1) {
    throw InvalidArgument("hermitian_extend: " + std::to_string(half.size()) +
                          " bins do not describe a spectrum of size " + std::to_string(n));
  }
  full[0] = Complex(half[0].real(), 0.0);
  for (std::size_t k = 1; k < n - k; ++k) {
    full[k] = half[k];
    full[n - k] = std::conj(half[k]);
  }
  if (n > 1 && n % 2 == 0) full[n / 2] = Complex(half[n / 2].real(), 0.0);
}

std::vector<Complex> hermitian_extend(std::span<const Complex> half, std::size_t n) {
  std::vector<Complex> full(n);
  hermitian_extend(half, full);
  return full;
}

AudioBuffer istft(const ComplexSpectrogram& spec, const StftConfig& config,
                  std::optional<std::size_t> target_len, double sample_rate) {
  config.validate();
  const std::size_t n = config.fft_size;
  const std::size_t bins = config.bins();
  if (spec.bins != bins) {
    throw InvalidArgument("istft: spectrogram has " + std::to_string(spec.bins) +
                          " bins, config expects " + std::to_string(bins));
  }
  if (spec.data.size() != spec.bins * spec.frames) {
    throw InvalidArgument("istft: spectrogram data size does not match its grid");
  }

  const std::size_t frames = spec.frames;
  const std::size_t hop = config.hop_length;
  const std::size_t full = frames == 0 ? 0 : n + hop * (frames - 1);
  const auto window = frame_window(config);
  const FftPlan plan(n);

  std::vector<double> acc(full, 0.0);
  std::vector<double> wsum(full, 0.0);
  std::vector<Complex> buf(n);
  for (std::size_t f = 0; f < frames; ++f) {
    hermitian_extend({spec.data.data() + f * bins, bins}, buf);
    plan.transform(buf, true);

    double* out = acc.data() + f * hop;
    double* ws = wsum.data() + f * hop;
    const double scale = 1.0 / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
      out[i] += buf[i].real() * scale * window[i];
      ws[i] += window[i] * window[i];
    }
  }
  for (std::size_t i = 0; i < full; ++i) acc[i] /= std::max(wsum[i], kOverlapFloor);

  const std::size_t trim = config.center_pad ? n / 2 : 0;
  std::size_t length = 0;
  if (target_len) {
    length = *target_len;
  } else if (full > 2 * trim) {
    length = full - 2 * trim;
  }
  AudioBuffer audio{std::vector<double>(length, 0.0), sample_rate};
  for (std::size_t i = 0; i < length && trim + i < full; ++i) audio.samples[i] = acc[trim + i];
  return audio;
}

ComplexSpectrogram polar_to_complex(const MagnitudeSpectrogram& magnitude,
                                    const PhaseSpectrogram& phase, const StftConfig& config) {
  if (magnitude.bins != phase.bins || magnitude.frames != phase.frames ||
      magnitude.data.size() != phase.data.size()) {
    throw InvalidArgument("polar_to_complex: magnitude and phase grids differ");
  }
  ComplexSpectrogram spec{magnitude.bins, magnitude.frames,
                          std::vector<Complex>(magnitude.data.size()), config};
  for (std::size_t i = 0; i < magnitude.data.size(); ++i) {
    spec.data[i] = magnitude.data[i] * Complex(std::cos(phase.data[i]), std::sin(phase.data[i]));
  }
  return spec;
}

MagnitudeSpectrogram magnitude(const ComplexSpectrogram& spec) {
  MagnitudeSpectrogram out(spec.bins, spec.frames);
  for (std::size_t i = 0; i < spec.data.size(); ++i) out.data[i] = std::abs(spec.data[i]);
  return out;
}

PhaseSpectrogram phase(const ComplexSpectrogram& spec) {
  PhaseSpectrogram out(spec.bins, spec.frames);
  for (std::size_t i = 0; i < spec.data.size(); ++i) out.data[i] = std::arg(spec.data[i]);
  return out;
}

double hz_to_mel(double hz) noexcept { return 2595.0 * std::log10(1.0 + hz / 700.0); }

double mel_to_hz(double mel) noexcept { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

namespace {

std::vector<double> mel_band_edges(std::size_t n_mels, double fmin, double fmax) {
  const double lo = hz_to_mel(fmin);
  const double hi = hz_to_mel(fmax);
  std::vector<double> edges(n_mels + 2);
  for (std::size_t i = 0; i < edges.size(); ++i) {
    edges[i] = mel_to_hz(lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n_mels + 1));
  }
  return edges;
}

}  // namespace

std::vector<double> MelFilterbank::center_frequencies() const {
  auto edges = mel_band_edges(n_mels, fmin, fmax);
  return {edges.begin() + 1, edges.end() - 1};
}

MelFilterbank mel_filterbank(std::size_t n_mels, std::size_t fft_size, double sample_rate,
                             double fmin, double fmax) {
  if (n_mels < 1) throw InvalidArgument("n_mels must be >= 1");
  if (!is_power_of_two(fft_size)) throw InvalidArgument("fft_size must be a power of two");
  if (!(sample_rate > 0.0)) throw InvalidArgument("sample rate must be positive");
  if (!(fmin >= 0.0 && fmin < fmax && fmax <= sample_rate / 2.0)) {
    throw InvalidArgument("mel range requires 0 <= fmin < fmax <= sample_rate/2, got fmin=" +
                          std::to_string(fmin) + " fmax=" + std::to_string(fmax));
  }

  MelFilterbank fb{n_mels, fft_size, sample_rate, fmin, fmax, {}};
  const std::size_t bins = fb.bins();
  fb.weights.assign(n_mels * bins, 0.0);
  const auto edges = mel_band_edges(n_mels, fmin, fmax);

  for (std::size_t m = 0; m < n_mels; ++m) {
    const double lower = edges[m];
    const double center = edges[m + 1];
    const double upper = edges[m + 2];
    const double norm = 2.0 / (upper - lower);
    bool any = false;
    for (std::size_t k = 0; k < bins; ++k) {
      const double f = static_cast<double>(k) * sample_rate / static_cast<double>(fft_size);
      const double rising = (f - lower) / (center - lower);
      const double falling = (upper - f) / (upper - center);
      const double w = std::max(0.0, std::min(rising, falling));
      if (w > 0.0) {
        fb.weights[m * bins + k] = w * norm;
        any = true;
      }
    }
    if (!any) {
      throw InvalidArgument("mel filter " + std::to_string(m) +
                            " covers no FFT bin; use a larger fft_size or fewer mels");
    }
  }
  return fb;
}

MelSpectrogram log_mel(const AudioBuffer& audio, const StftConfig& config,
                       const MelFilterbank& fb) {
  if (fb.fft_size != config.fft_size) {
    throw InvalidArgument("log_mel: filterbank fft_size " + std::to_string(fb.fft_size) +
                          " does not match config fft_size " + std::to_string(config.fft_size));
  }
  const auto spec = stft(audio, config);
  const std::size_t bins = spec.bins;

  MelSpectrogram mel{fb.n_mels, spec.frames, std::vector<float>(fb.n_mels * spec.frames),
                     audio.sample_rate, config.hop_length};
  std::vector<double> mag(bins);
  for (std::size_t f = 0; f < spec.frames; ++f) {
    for (std::size_t k = 0; k < bins; ++k) mag[k] = std::abs(spec.at(k, f));
    for (std::size_t m = 0; m < fb.n_mels; ++m) {
      const auto row = fb.row(m);
      double energy = 0.0;
      for (std::size_t k = 0; k < bins; ++k) energy += row[k] * mag[k];
      mel.at(m, f) = static_cast<float>(std::log(std::max(energy, kLogFloor)));
    }
  }
  return mel;
}

}  // namespace istftnet::dsp
