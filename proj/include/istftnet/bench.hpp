#pragma once

// Real-time-factor measurement and baseline-relative comparison tables.
// The harness runs one forward pass at a time and is not thread-safe.

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "istftnet/dsp.hpp"
#include "istftnet/generator.hpp"

namespace istftnet::bench {

/// ~10 s of audio at 22.05 kHz with hop 256.
inline constexpr std::size_t kDefaultBenchFrames = 861;
inline constexpr std::size_t kMinTimedRuns = 3;

struct BenchReport {
  std::string model_id;
  Variant variant = Variant::V1;
  std::size_t params = 0;
  // Seconds of audio per wall-clock second, median over timed runs.
  double rtf = 0.0;
  // Filled in by compare().
  std::optional<double> param_rate_pct;
  std::optional<double> speed_rate_pct;
  std::size_t warmup_runs = 0;
  std::size_t timed_runs = 0;
  std::size_t input_frames = 0;
};

double median(std::vector<double> values);

/// Times Generator::synthesize on `mel`; warmup runs are discarded.
/// Throws InvalidArgument when runs < 3.
BenchReport benchmark(const Generator& generator, const dsp::MelSpectrogram& mel,
                      std::size_t warmup, std::size_t runs);
BenchReport benchmark(const ModelSpec& spec, const GeneratorWeights& weights,
                      const dsp::MelSpectrogram& mel, std::size_t warmup, std::size_t runs);

/// Deterministic mel input for benchmarks (speed does not depend on values).
dsp::MelSpectrogram synthetic_mel(std::size_t frames, std::uint64_t seed = 0);

/// Percent rates against the same-variant report whose id is `baseline_id`,
/// sorted by (variant, model id). Throws InvalidArgument if a variant has no
/// baseline report.
std::vector<BenchReport> compare(std::vector<BenchReport> reports, std::string_view baseline_id);

/// `#` header line, `#` run-metadata line, then
/// model_id \t variant \t params \t rtf \t param_rate_pct \t speed_rate_pct per row.
std::string serialize(const std::vector<BenchReport>& reports);
std::vector<BenchReport> parse_reports(std::string_view text);

}  // namespace istftnet::bench
