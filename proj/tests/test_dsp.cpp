#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "istftnet/dsp.hpp"
#include "istftnet/errors.hpp"
#include "oracles.hpp"

using namespace istftnet;
using namespace istftnet::dsp;
using Catch::Matchers::ContainsSubstring;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

std::vector<Complex> random_complex(std::mt19937_64& rng, std::size_t n) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<Complex> v(n);
  for (auto& c : v) c = Complex(u(rng), u(rng));
  return v;
}

double max_rel_error(const std::vector<Complex>& got, const std::vector<Complex>& want) {
  double err = 0.0, scale = 0.0;
  for (std::size_t i = 0; i < got.size(); ++i) {
    err = std::max(err, std::abs(got[i] - want[i]));
    scale = std::max(scale, std::abs(want[i]));
  }
  return err / std::max(scale, 1e-300);
}

double roundtrip_error(const AudioBuffer& x, const StftConfig& cfg) {
  const auto y = istft(stft(x, cfg), cfg, x.size());
  REQUIRE(y.size() == x.size());
  return oracle::max_abs(x.samples, y.samples);
}

std::size_t argmax_bin(const ComplexSpectrogram& s, std::size_t frame) {
  std::size_t best = 0;
  for (std::size_t b = 1; b < s.bins; ++b) {
    if (std::abs(s.at(b, frame)) > std::abs(s.at(best, frame))) best = b;
  }
  return best;
}

std::size_t argmax_mel(const MelSpectrogram& mel, std::size_t frame) {
  std::size_t best = 0;
  for (std::size_t m = 1; m < mel.n_mels; ++m) {
    if (mel.at(m, frame) > mel.at(best, frame)) best = m;
  }
  return best;
}

}  // namespace

TEST_CASE("hann window closed-form values", "[dsp][window]") {
  const auto w4 = hann_window(4);
  REQUIRE(w4.size() == 4);
  CHECK_THAT(w4[0], WithinAbs(0.0, 1e-15));
  CHECK_THAT(w4[1], WithinAbs(0.5, 1e-15));
  CHECK_THAT(w4[2], WithinAbs(1.0, 1e-15));
  CHECK_THAT(w4[3], WithinAbs(0.5, 1e-15));

  const auto w1 = hann_window(1);
  REQUIRE(w1.size() == 1);
  CHECK(w1[0] == 0.0);

  const auto w16 = hann_window(16);
  double sum = 0.0;
  for (double v : w16) sum += v;
  CHECK_THAT(sum, WithinAbs(8.0, 1e-12));

  CHECK_THROWS_AS(hann_window(0), InvalidArgument);
}

TEST_CASE("fft small closed forms", "[dsp][fft]") {
  const std::vector<Complex> impulse{1, 0, 0, 0};
  for (const auto& c : fft(impulse)) CHECK(std::abs(c - Complex(1, 0)) < 1e-15);

  const std::vector<Complex> dc{1, 1, 1, 1};
  const auto out = fft(dc);
  CHECK(std::abs(out[0] - Complex(4, 0)) < 1e-15);
  for (std::size_t k = 1; k < 4; ++k) CHECK(std::abs(out[k]) < 1e-15);

  CHECK(fft(std::vector<Complex>{Complex(2.5, -1)})[0] == Complex(2.5, -1));
}

TEST_CASE("fft rejects non power-of-two sizes", "[dsp][fft]") {
  for (std::size_t n : {0u, 3u, 6u, 12u, 1000u}) {
    const std::vector<Complex> v(n);
    CHECK_THROWS_AS(fft(v), InvalidArgument);
    CHECK_THROWS_AS(inverse_fft(v), InvalidArgument);
  }
}

TEST_CASE("fft agrees with the direct DFT for every size up to 1024", "[dsp][fft]") {
  std::mt19937_64 rng(11);
  for (std::size_t n = 2; n <= 1024; n *= 2) {
    for (int trial = 0; trial < 5; ++trial) {
      const auto x = random_complex(rng, n);
      CHECK(max_rel_error(fft(x), oracle::dft(x)) < 1e-9);
      CHECK(max_rel_error(naive_dft(x), oracle::dft(x)) < 1e-9);
    }
  }
}

TEST_CASE("inverse_fft undoes fft", "[dsp][fft]") {
  std::mt19937_64 rng(12);
  for (std::size_t n = 1; n <= 4096; n *= 2) {
    const auto x = random_complex(rng, n);
    CHECK(max_rel_error(inverse_fft(fft(x)), x) < 1e-12);
  }
}

TEST_CASE("naive_dft closed forms", "[dsp][fft]") {
  const auto a = naive_dft(std::vector<Complex>{1, 0});
  CHECK(std::abs(a[0] - Complex(1, 0)) < 1e-15);
  CHECK(std::abs(a[1] - Complex(1, 0)) < 1e-15);

  const auto b = naive_dft(std::vector<Complex>{0, 1});
  CHECK(std::abs(b[0] - Complex(1, 0)) < 1e-15);
  CHECK(std::abs(b[1] - Complex(-1, 0)) < 1e-15);

  std::vector<Complex> imp(8);
  imp[3] = 1.0;
  const auto c = naive_dft(imp);
  for (std::size_t k = 0; k < 8; ++k) {
    const double angle = -2.0 * std::numbers::pi * 3.0 * static_cast<double>(k) / 8.0;
    CHECK(std::abs(c[k] - std::polar(1.0, angle)) < 1e-12);
  }

  // Any length, not only powers of two.
  std::mt19937_64 rng(13);
  const auto x = random_complex(rng, 12);
  CHECK(max_rel_error(naive_dft(x), oracle::dft(x)) < 1e-12);
  CHECK(naive_dft(std::vector<Complex>{}).empty());
}

TEST_CASE("stft frame counts and silence", "[dsp][stft]") {
  const StftConfig cfg{1024, 256, 1024, true};
  AudioBuffer zeros{std::vector<double>(1024, 0.0)};
  const auto s = stft(zeros, cfg);
  CHECK(s.frames == 5);
  CHECK(s.bins == 513);
  for (const auto& c : s.data) CHECK(c == Complex(0.0, 0.0));

  AudioBuffer second{std::vector<double>(22050, 0.1)};
  CHECK(stft(second, cfg).frames == 87);
  CHECK(stft_frame_count(22050, cfg) == 87);
  CHECK(stft_frame_count(64, StftConfig{16, 4, 16, false}) == 13);
  CHECK(stft_frame_count(10, StftConfig{16, 4, 16, false}) == 0);
}

TEST_CASE("stft of a bin-centred cosine peaks at that bin", "[dsp][stft]") {
  AudioBuffer x;
  for (int n = 0; n < 64; ++n) x.samples.push_back(std::cos(2.0 * std::numbers::pi * 0.25 * n));
  const StftConfig cfg{16, 4, 16, false};
  const auto s = stft(x, cfg);
  REQUIRE(s.frames == 13);
  for (std::size_t f = 0; f < s.frames; ++f) CHECK(argmax_bin(s, f) == 4);
}

TEST_CASE("stft input validation", "[dsp][stft]") {
  const StftConfig cfg{1024, 256, 1024, true};
  CHECK_THROWS_AS(stft(AudioBuffer{}, cfg), InvalidArgument);
  // Reflect padding of 512 needs at least 513 samples.
  CHECK_THROWS_WITH(stft(AudioBuffer{std::vector<double>(512, 0.0)}, cfg),
                    ContainsSubstring("reflect padding"));
  CHECK_NOTHROW(stft(AudioBuffer{std::vector<double>(513, 0.0)}, cfg));
  // Without centring the signal must cover one frame.
  CHECK_THROWS_AS(stft(AudioBuffer{std::vector<double>(15, 0.0)}, StftConfig{16, 4, 16, false}),
                  InvalidArgument);
  AudioBuffer bad{std::vector<double>(2048, 0.0)};
  bad.samples[7] = std::nan("");
  CHECK_THROWS_AS(stft(bad, cfg), InvalidArgument);
  CHECK_THROWS_AS(stft(AudioBuffer{std::vector<double>(2048, 0.0)}, StftConfig{1000, 250, 1000}),
                  InvalidArgument);
  CHECK_THROWS_AS(stft(AudioBuffer{std::vector<double>(2048, 0.0)}, StftConfig{1024, 512, 256}),
                  InvalidArgument);
}

TEST_CASE("stft DC and Nyquist bins are real", "[dsp][stft]") {
  std::mt19937_64 rng(14);
  const auto s = stft(oracle::noise(rng, 3000), StftConfig{});
  for (std::size_t f = 0; f < s.frames; ++f) {
    CHECK(s.at(0, f).imag() == 0.0);
    CHECK(s.at(s.bins - 1, f).imag() == 0.0);
  }
}

TEST_CASE("stft matches a direct per-frame DFT", "[dsp][stft]") {
  std::mt19937_64 rng(15);
  const auto x = oracle::noise(rng, 300);
  const StftConfig cfg{64, 16, 64, true};
  const auto s = stft(x, cfg);
  const auto window = hann_window(64);
  const long n = static_cast<long>(x.size());
  for (std::size_t f = 0; f < s.frames; ++f) {
    std::vector<std::complex<double>> buf(64);
    for (long j = 0; j < 64; ++j) {
      long i = static_cast<long>(f) * 16 + j - 32;
      if (i < 0) i = -i;
      if (i >= n) i = 2 * (n - 1) - i;
      buf[static_cast<std::size_t>(j)] = window[static_cast<std::size_t>(j)] * x.samples[static_cast<std::size_t>(i)];
    }
    const auto want = oracle::dft(buf);
    std::vector<Complex> got(s.data.begin() + static_cast<long>(f * s.bins),
                             s.data.begin() + static_cast<long>((f + 1) * s.bins));
    std::vector<Complex> half(want.begin(), want.begin() + 33);
    CHECK(max_rel_error(got, half) < 1e-9);
  }
}

TEST_CASE("istft inverts stft at the analysis and head scales", "[dsp][istft]") {
  std::mt19937_64 rng(16);
  const auto x = oracle::noise(rng, 4096);
  for (const StftConfig cfg : {StftConfig{1024, 256, 1024, true}, StftConfig{16, 4, 16, true},
                               StftConfig{128, 32, 128, true}, StftConfig{8, 2, 8, true}}) {
    CAPTURE(cfg.fft_size);
    CHECK(roundtrip_error(x, cfg) < 1e-6);
  }
}

TEST_CASE("istft round trip for lengths that are not hop multiples", "[dsp][istft]") {
  std::mt19937_64 rng(17);
  for (std::size_t len : {4096u, 4097u, 5000u, 22050u}) {
    CAPTURE(len);
    const auto x = oracle::speech_like(rng, len);
    CHECK(roundtrip_error(x, StftConfig{}) < 1e-6);
  }
}

TEST_CASE("istft without centring reconstructs the interior", "[dsp][istft]") {
  std::mt19937_64 rng(18);
  const auto x = oracle::noise(rng, 2048);
  const StftConfig cfg{256, 64, 256, false};
  const auto y = istft(stft(x, cfg), cfg);
  // Fully overlapped region: one window past the start and before the end.
  double err = 0.0;
  for (std::size_t i = 256; i + 256 < y.size(); ++i) err = std::max(err, std::abs(y.samples[i] - x.samples[i]));
  CHECK(err < 1e-6);
}

TEST_CASE("istft of silence is silence and target lengths are honoured", "[dsp][istft]") {
  const StftConfig cfg{16, 4, 16, true};
  ComplexSpectrogram zero{9, 10, std::vector<Complex>(90), cfg};
  const auto y = istft(zero, cfg, 40);
  REQUIRE(y.size() == 40);
  for (double v : y.samples) CHECK(v == 0.0);
  // Untargeted output trims fft/2 from both ends: 16 + 4*9 - 16.
  CHECK(istft(zero, cfg).size() == 36);
  // Longer targets are zero-extended past the synthesized span.
  const auto longer = istft(zero, cfg, 100);
  CHECK(longer.size() == 100);
  ComplexSpectrogram wrong{8, 10, std::vector<Complex>(80), cfg};
  CHECK_THROWS_AS(istft(wrong, cfg), InvalidArgument);
  ComplexSpectrogram ragged{9, 10, std::vector<Complex>(89), cfg};
  CHECK_THROWS_AS(istft(ragged, cfg), InvalidArgument);
}

TEST_CASE("istft is linear in the spectrogram", "[dsp][istft]") {
  std::mt19937_64 rng(19);
  const StftConfig cfg{64, 16, 64, true};
  const auto a = stft(oracle::noise(rng, 1000), cfg);
  const auto b = stft(oracle::noise(rng, 1000), cfg);
  ComplexSpectrogram mix = a;
  for (std::size_t i = 0; i < mix.data.size(); ++i) mix.data[i] = 2.0 * a.data[i] - 0.5 * b.data[i];
  const auto ya = istft(a, cfg, 1000), yb = istft(b, cfg, 1000), ym = istft(mix, cfg, 1000);
  std::vector<double> expect(1000);
  for (std::size_t i = 0; i < 1000; ++i) expect[i] = 2.0 * ya.samples[i] - 0.5 * yb.samples[i];
  CHECK(oracle::max_abs(ym.samples, expect) < 1e-12);
}

TEST_CASE("hermitian extension is exactly conjugate-symmetric", "[dsp][istft]") {
  std::mt19937_64 rng(20);
  for (std::size_t n : {1u, 2u, 8u, 16u, 1024u}) {
    const auto half = random_complex(rng, n / 2 + 1);
    const auto full = hermitian_extend(half, n);
    REQUIRE(full.size() == n);
    CHECK(full[0].imag() == 0.0);
    for (std::size_t k = 1; k < n; ++k) CHECK(full[n - k] == std::conj(full[k]));
    // The inverse of a Hermitian spectrum is real.
    if (n > 1) {
      for (const auto& v : inverse_fft(full)) CHECK(std::abs(v.imag()) < 1e-12);
    }
  }
  CHECK_THROWS_AS(hermitian_extend(std::vector<Complex>(4), 8), InvalidArgument);
}

TEST_CASE("stft is linear", "[dsp][stft][property]") {
  std::mt19937_64 rng(21);
  const StftConfig cfg{};
  for (int trial = 0; trial < 4; ++trial) {
    const auto x = oracle::noise(rng, 5000);
    const auto y = oracle::speech_like(rng, 5000);
    const double a = 1.7, b = -0.3;
    AudioBuffer mix{std::vector<double>(5000)};
    for (std::size_t i = 0; i < 5000; ++i) mix.samples[i] = a * x.samples[i] + b * y.samples[i];
    const auto sx = stft(x, cfg), sy = stft(y, cfg), sm = stft(mix, cfg);
    std::vector<Complex> expect(sm.data.size());
    for (std::size_t i = 0; i < expect.size(); ++i) expect[i] = a * sx.data[i] + b * sy.data[i];
    CHECK(max_rel_error(sm.data, expect) < 1e-9);
  }
}

TEST_CASE("Parseval holds for a windowed frame", "[dsp][fft][property]") {
  std::mt19937_64 rng(22);
  for (std::size_t n : {16u, 256u, 1024u}) {
    const auto w = hann_window(n);
    const auto x = oracle::noise(rng, n);
    std::vector<Complex> frame(n);
    double time_energy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      frame[i] = x.samples[i] * w[i];
      time_energy += std::norm(frame[i]);
    }
    double freq_energy = 0.0;
    for (const auto& c : fft(frame)) freq_energy += std::norm(c);
    CHECK_THAT(freq_energy / static_cast<double>(n), WithinRel(time_energy, 1e-9));
  }
}

TEST_CASE("polar_to_complex and its inverses", "[dsp][polar]") {
  const StftConfig cfg{16, 4, 16, true};
  MagnitudeSpectrogram m(1, 1);
  PhaseSpectrogram p(1, 1);
  m.at(0, 0) = 1.0;
  CHECK(polar_to_complex(m, p, cfg).data[0] == Complex(1.0, 0.0));
  m.at(0, 0) = 2.0;
  p.at(0, 0) = std::numbers::pi / 2;
  CHECK(std::abs(polar_to_complex(m, p, cfg).data[0] - Complex(0.0, 2.0)) < 1e-12);

  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> mag(0.01, 5.0), ang(-3.0, 3.0);
  MagnitudeSpectrogram rm(9, 20);
  PhaseSpectrogram rp(9, 20);
  for (double& v : rm.data) v = mag(rng);
  for (double& v : rp.data) v = ang(rng);
  const auto c = polar_to_complex(rm, rp, cfg);
  const auto back_m = magnitude(c);
  const auto back_p = phase(c);
  for (std::size_t i = 0; i < c.data.size(); ++i) {
    CHECK_THAT(back_m.data[i], WithinAbs(rm.data[i], 1e-9));
    const double d = std::remainder(back_p.data[i] - rp.data[i], 2.0 * std::numbers::pi);
    CHECK(std::abs(d) < 1e-9);
  }
  CHECK_THROWS_AS(polar_to_complex(MagnitudeSpectrogram(9, 20), PhaseSpectrogram(9, 19), cfg),
                  InvalidArgument);
}

TEST_CASE("mel scale conversions", "[dsp][mel]") {
  CHECK(hz_to_mel(0.0) == 0.0);
  CHECK_THAT(hz_to_mel(700.0), WithinRel(2595.0 * std::log10(2.0), 1e-14));
  for (double hz : {10.0, 440.0, 1000.0, 8000.0}) CHECK_THAT(mel_to_hz(hz_to_mel(hz)), WithinRel(hz, 1e-12));
}

TEST_CASE("mel filterbank shape and triangle structure", "[dsp][mel]") {
  const auto fb = mel_filterbank(80, 1024, 22050.0, 0.0, 8000.0);
  REQUIRE(fb.n_mels == 80);
  REQUIRE(fb.bins() == 513);
  REQUIRE(fb.weights.size() == 80 * 513);
  for (double w : fb.weights) CHECK(w >= 0.0);

  for (std::size_t m = 0; m < 80; ++m) {
    const auto row = fb.row(m);
    std::size_t first = row.size(), last = 0, count = 0;
    for (std::size_t k = 0; k < row.size(); ++k) {
      if (row[k] > 0.0) {
        first = std::min(first, k);
        last = k;
        ++count;
      }
    }
    CAPTURE(m);
    REQUIRE(count > 0);
    CHECK(last - first + 1 == count);
  }

  const auto centers = fb.center_frequencies();
  REQUIRE(centers.size() == 80);
  for (std::size_t m = 1; m < 80; ++m) CHECK(centers[m] > centers[m - 1]);
  CHECK(centers.front() > 0.0);
  CHECK(centers.back() < 8000.0);
}

TEST_CASE("mel filterbank matches an HTK/Slaney construction", "[dsp][mel]") {
  const std::size_t n_mels = 80, n_fft = 1024;
  const double sr = 22050.0, fmax = 8000.0;
  const auto fb = mel_filterbank(n_mels, n_fft, sr, 0.0, fmax);
  auto to_mel = [](double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); };
  auto to_hz = [](double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); };
  std::vector<double> pts(n_mels + 2);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    pts[i] = to_hz(to_mel(fmax) * static_cast<double>(i) / static_cast<double>(n_mels + 1));
  }
  for (std::size_t m = 0; m < n_mels; ++m) {
    for (std::size_t k = 0; k <= n_fft / 2; ++k) {
      const double f = sr * static_cast<double>(k) / static_cast<double>(n_fft);
      const double lo = (f - pts[m]) / (pts[m + 1] - pts[m]);
      const double hi = (pts[m + 2] - f) / (pts[m + 2] - pts[m + 1]);
      const double want = std::max(0.0, std::min(lo, hi)) * 2.0 / (pts[m + 2] - pts[m]);
      CHECK_THAT(fb.weights[m * 513 + k], WithinAbs(want, 1e-12));
    }
  }
}

TEST_CASE("mel filterbank rejects bad ranges", "[dsp][mel]") {
  CHECK_THROWS_AS(mel_filterbank(80, 1024, 22050.0, 8000.0, 4000.0), InvalidArgument);
  CHECK_THROWS_AS(mel_filterbank(80, 1024, 22050.0, -1.0, 8000.0), InvalidArgument);
  CHECK_THROWS_AS(mel_filterbank(80, 1024, 22050.0, 0.0, 12000.0), InvalidArgument);
  CHECK_THROWS_AS(mel_filterbank(80, 1024, 22050.0, 100.0, 100.0), InvalidArgument);
  CHECK_THROWS_AS(mel_filterbank(0, 1024, 22050.0, 0.0, 8000.0), InvalidArgument);
  CHECK_THROWS_AS(mel_filterbank(80, 1000, 22050.0, 0.0, 8000.0), InvalidArgument);
  CHECK_THROWS_AS(mel_filterbank(80, 1024, 0.0, 0.0, 8000.0), InvalidArgument);
  // Too many bands for the bin spacing leaves empty triangles.
  CHECK_THROWS_AS(mel_filterbank(80, 64, 22050.0, 0.0, 8000.0), InvalidArgument);
}

TEST_CASE("log_mel of silence sits at the floor", "[dsp][mel]") {
  const auto fb = mel_filterbank(80, 1024, 22050.0, 0.0, 8000.0);
  const auto mel = log_mel(AudioBuffer{std::vector<double>(4096, 0.0)}, StftConfig{}, fb);
  CHECK(mel.frames == 17);
  for (float v : mel.data) CHECK(v == static_cast<float>(std::log(1e-5)));
}

TEST_CASE("log_mel dimensions for one second", "[dsp][mel]") {
  std::mt19937_64 rng(24);
  const auto fb = mel_filterbank(80, 1024, 22050.0, 0.0, 8000.0);
  const auto mel = log_mel(oracle::speech_like(rng, 22050), StftConfig{}, fb);
  CHECK(mel.frames == 87);
  CHECK(mel.n_mels == 80);
  CHECK(mel.data.size() == 87 * 80);
  CHECK(mel.hop_length == 256);
  CHECK(mel.sample_rate == 22050.0);
  CHECK_THROWS_AS(log_mel(oracle::speech_like(rng, 22050), StftConfig{512, 128, 512}, fb),
                  InvalidArgument);
}

TEST_CASE("log_mel agrees with a direct DFT and matrix product", "[dsp][mel]") {
  const auto fb = mel_filterbank(80, 1024, 22050.0, 0.0, 8000.0);
  const auto x = oracle::tone(1000.0, 4096);
  const auto mel = log_mel(x, StftConfig{}, fb);
  const auto want = oracle::log_mel(x, 1024, 256, fb);
  REQUIRE(want[0].size() == mel.frames);
  for (std::size_t f = 0; f < mel.frames; ++f) {
    std::size_t best = 0;
    for (std::size_t m = 1; m < 80; ++m) {
      if (want[m][f] > want[best][f]) best = m;
    }
    CHECK(argmax_mel(mel, f) == best);
    for (std::size_t m = 0; m < 80; ++m) {
      // Values are stored in single precision.
      CHECK_THAT(mel.at(m, f), WithinAbs(want[m][f], 1e-5));
    }
  }
}

TEST_CASE("higher tones never move to a lower mel row", "[dsp][mel][property]") {
  const auto fb = mel_filterbank(80, 1024, 22050.0, 0.0, 8000.0);
  std::size_t previous = 0;
  for (double hz = 100.0; hz <= 7800.0; hz += 50.0) {
    const auto mel = log_mel(oracle::tone(hz, 4096), StftConfig{}, fb);
    const std::size_t row = argmax_mel(mel, mel.frames / 2);
    CAPTURE(hz);
    CHECK(row >= previous);
    previous = row;
  }
  CHECK(previous > 70);
}
