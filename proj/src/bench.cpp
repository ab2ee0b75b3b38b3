#include "istftnet/bench.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cstdio>
#include <random>
#include <sstream>
#include <tuple>

#include "istftnet/errors.hpp"

namespace istftnet::bench {

namespace {

constexpr std::string_view kHeader =
    "# model_id\tvariant\tparams\trtf\tparam_rate_pct\tspeed_rate_pct";

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string format_rate(const std::optional<double>& v) { return v ? format_double(*v) : "-"; }

std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t end = line.find(sep, start);
    out.push_back(line.substr(start, end == std::string_view::npos ? end : end - start));
    if (end == std::string_view::npos) break;
    start = end + 1;
  }
  return out;
}

template <class T>
T parse_number(std::string_view text, std::size_t line_no) {
  T value{};
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || ptr != text.data() + text.size()) {
    throw InvalidArgument("bench report line " + std::to_string(line_no) + ": bad number '" +
                          std::string(text) + "'");
  }
  return value;
}

std::optional<double> parse_rate(std::string_view text, std::size_t line_no) {
  if (text == "-") return std::nullopt;
  return parse_number<double>(text, line_no);
}

}  // namespace

double median(std::vector<double> values) {
  if (values.empty()) throw InvalidArgument("median of empty set");
  std::sort(values.begin(), values.end());
  const std::size_t mid = values.size() / 2;
  return values.size() % 2 ? values[mid] : 0.5 * (values[mid - 1] + values[mid]);
}

BenchReport benchmark(const Generator& generator, const dsp::MelSpectrogram& mel,
                      std::size_t warmup, std::size_t runs) {
  if (runs < kMinTimedRuns) {
    throw InvalidArgument("benchmark needs at least " + std::to_string(kMinTimedRuns) +
                          " timed runs, got " + std::to_string(runs));
  }
  for (std::size_t i = 0; i < warmup; ++i) generator.synthesize(mel);

  std::vector<double> rtfs;
  rtfs.reserve(runs);
  for (std::size_t i = 0; i < runs; ++i) {
    const auto start = std::chrono::steady_clock::now();
    const auto audio = generator.synthesize(mel);
    const auto stop = std::chrono::steady_clock::now();
    const double wall = std::chrono::duration<double>(stop - start).count();
    rtfs.push_back(audio.duration_seconds() / std::max(wall, 1e-9));
  }

  BenchReport report;
  report.model_id = generator.spec().id;
  report.variant = generator.spec().variant;
  report.params = count_params(generator.spec());
  report.rtf = median(std::move(rtfs));
  report.warmup_runs = warmup;
  report.timed_runs = runs;
  report.input_frames = mel.frames;
  return report;
}

BenchReport benchmark(const ModelSpec& spec, const GeneratorWeights& weights,
                      const dsp::MelSpectrogram& mel, std::size_t warmup, std::size_t runs) {
  return benchmark(Generator(spec, weights), mel, warmup, runs);
}

dsp::MelSpectrogram synthetic_mel(std::size_t frames, std::uint64_t seed) {
  dsp::MelSpectrogram mel{kMelChannels, frames, std::vector<float>(kMelChannels * frames),
                          dsp::kDefaultSampleRate, 256};
  std::mt19937_64 rng(seed);
  for (float& v : mel.data) {
    const double unit = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    // Typical log-mel range between the log floor and loud speech.
    v = static_cast<float>(-11.5 + 12.0 * unit);
  }
  return mel;
}

std::vector<BenchReport> compare(std::vector<BenchReport> reports, std::string_view baseline_id) {
  for (auto& r : reports) {
    const auto base = std::find_if(reports.begin(), reports.end(), [&](const BenchReport& b) {
      return b.model_id == baseline_id && b.variant == r.variant;
    });
    if (base == reports.end()) {
      throw InvalidArgument("no " + to_string(r.variant) + " baseline '" +
                            std::string(baseline_id) + "' among the reports");
    }
    r.param_rate_pct = 100.0 * static_cast<double>(r.params) / static_cast<double>(base->params);
    r.speed_rate_pct = base->rtf > 0.0 ? std::optional(100.0 * r.rtf / base->rtf) : std::nullopt;
  }
  std::stable_sort(reports.begin(), reports.end(), [](const BenchReport& a, const BenchReport& b) {
    return std::tie(a.variant, a.model_id) < std::tie(b.variant, b.model_id);
  });
  return reports;
}

std::string serialize(const std::vector<BenchReport>& reports) {
  std::ostringstream out;
  out << kHeader << '\n';
  if (!reports.empty()) {
    const auto& first = reports.front();
    for (const auto& r : reports) {
      if (r.warmup_runs != first.warmup_runs || r.timed_runs != first.timed_runs ||
          r.input_frames != first.input_frames) {
        throw InvalidArgument("bench reports with different run settings cannot share a table");
      }
    }
    out << "# warmup_runs=" << first.warmup_runs << "\ttimed_runs=" << first.timed_runs
        << "\tinput_frames=" << first.input_frames << '\n';
  }
  for (const auto& r : reports) {
    out << r.model_id << '\t' << to_string(r.variant) << '\t' << r.params << '\t'
        << format_double(r.rtf) << '\t' << format_rate(r.param_rate_pct) << '\t'
        << format_rate(r.speed_rate_pct) << '\n';
  }
  return out.str();
}

std::vector<BenchReport> parse_reports(std::string_view text) {
  std::vector<BenchReport> reports;
  std::size_t warmup = 0, timed = 0, frames = 0;
  std::size_t line_no = 0;
  for (std::string_view line : split(text, '\n')) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    if (line.front() == '#') {
      line.remove_prefix(1);
      while (!line.empty() && line.front() == ' ') line.remove_prefix(1);
      for (const auto field : split(line, '\t')) {
        const auto eq = field.find('=');
        if (eq == std::string_view::npos) continue;
        const auto key = field.substr(0, eq);
        const auto value = field.substr(eq + 1);
        if (key == "warmup_runs") warmup = parse_number<std::size_t>(value, line_no);
        else if (key == "timed_runs") timed = parse_number<std::size_t>(value, line_no);
        else if (key == "input_frames") frames = parse_number<std::size_t>(value, line_no);
      }
      continue;
    }
    const auto fields = split(line, '\t');
    if (fields.size() != 6) {
      throw InvalidArgument("bench report line " + std::to_string(line_no) + ": expected 6 fields, got " +
                            std::to_string(fields.size()));
    }
    BenchReport r;
    r.model_id = std::string(fields[0]);
    r.variant = parse_variant(fields[1]);
    r.params = parse_number<std::size_t>(fields[2], line_no);
    r.rtf = parse_number<double>(fields[3], line_no);
    r.param_rate_pct = parse_rate(fields[4], line_no);
    r.speed_rate_pct = parse_rate(fields[5], line_no);
    reports.push_back(std::move(r));
  }
  for (auto& r : reports) {
    r.warmup_runs = warmup;
    r.timed_runs = timed;
    r.input_frames = frames;
  }
  return reports;
}

}  // namespace istftnet::bench
