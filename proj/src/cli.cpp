#include "istftnet/cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "istftnet/bench.hpp"
#include "istftnet/dsp.hpp"
#include "istftnet/errors.hpp"
#include "istftnet/generator.hpp"
#include "istftnet/model_io.hpp"

namespace istftnet::cli {

namespace {

constexpr double kRoundTripTolerance = 1e-6;

// Bad command-line values, reported with exit code 1.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct CliConfig {
  double sample_rate = dsp::kDefaultSampleRate;
  std::size_t fft = 1024;
  std::size_t hop = 256;
  std::size_t win = 1024;
  std::size_t n_mels = dsp::kDefaultMels;
  double fmin = dsp::kDefaultFmin;
  double fmax = dsp::kDefaultFmax;
  std::string model;
  std::vector<std::string> variants;
  std::uint64_t seed = 0;
  std::string baseline;
  std::size_t runs = 7;
  std::size_t warmup = 1;
  std::size_t frames = bench::kDefaultBenchFrames;
  std::string out;
  std::vector<std::string> inputs;
  std::vector<std::string> model_ids;

  dsp::StftConfig stft() const {
    dsp::StftConfig c{fft, hop, win, true};
    try {
      c.validate();
    } catch (const InvalidArgument& e) {
      throw UsageError(std::string("--fft/--hop/--win: ") + e.what());
    }
    return c;
  }

  Variant variant() const {
    if (variants.empty()) return Variant::V1;
    if (variants.size() > 1) throw UsageError("this command takes a single --variant");
    return parse_variant_arg(variants.front());
  }

  static Variant parse_variant_arg(const std::string& text) {
    try {
      return parse_variant(text);
    } catch (const InvalidArgument& e) {
      throw UsageError(e.what());
    }
  }
};

ModelSpec parse_model_arg(const std::string& id, Variant variant, const dsp::StftConfig& base) {
  try {
    return parse_model_id(id, variant, base);
  } catch (const ParseError& e) {
    throw UsageError(e.what());
  } catch (const InvalidArchitecture& e) {
    throw UsageError(e.what());
  }
}

std::string output_path(const CliConfig& cfg, std::size_t positional_index, const char* what) {
  if (!cfg.out.empty()) return cfg.out;
  if (cfg.inputs.size() > positional_index) return cfg.inputs[positional_index];
  throw UsageError(std::string("missing output path for ") + what + " (use --out)");
}

void add_stft_flags(CLI::App* cmd, CliConfig& cfg) {
  cmd->add_option("--fft", cfg.fft, "FFT size")->capture_default_str();
  cmd->add_option("--hop", cfg.hop, "Hop length")->capture_default_str();
  cmd->add_option("--win", cfg.win, "Window length")->capture_default_str();
}

int cmd_mel(const CliConfig& cfg, bool rate_given, std::ostream& err) {
  if (cfg.inputs.empty()) throw UsageError("mel: missing input WAV");
  const auto out_path = output_path(cfg, 1, "mel");
  const auto config = cfg.stft();

  auto audio = io::read_wav(cfg.inputs[0]);
  if (rate_given) {
    audio.sample_rate = cfg.sample_rate;
  } else if (audio.sample_rate != dsp::kDefaultSampleRate) {
    err << "warning: " << cfg.inputs[0] << " is sampled at " << audio.sample_rate
        << " Hz, not " << dsp::kDefaultSampleRate << " Hz; processing at the file's rate\n";
  }
  dsp::MelFilterbank fb;
  try {
    fb = dsp::mel_filterbank(cfg.n_mels, config.fft_size, audio.sample_rate, cfg.fmin, cfg.fmax);
  } catch (const InvalidArgument& e) {
    throw UsageError(std::string("mel filterbank: ") + e.what());
  }
  const auto mel = dsp::log_mel(audio, config, fb);
  io::write_mel(out_path, mel);
  err << "mel: " << mel.frames << " frames x " << mel.n_mels << " mels -> " << out_path << "\n";
  return kSuccess;
}

int cmd_synth(const CliConfig& cfg, std::ostream& err) {
  if (cfg.inputs.size() < 2) throw UsageError("synth: expected MEL WEIGHTS [OUT]");
  const auto out_path = output_path(cfg, 2, "synth");
  const auto base = cfg.stft();

  const auto mel = io::read_mel(cfg.inputs[0]);
  auto loaded = io::read_weights(cfg.inputs[1], base);
  if (!cfg.model.empty()) {
    const Variant variant = cfg.variants.empty() ? loaded.spec.variant : cfg.variant();
    const auto expected = parse_model_arg(cfg.model, variant, base);
    if (auto m = find_weight_mismatch(expected, loaded.weights)) {
      throw ScheduleMismatch(m->tensor, m->detail + " for model " + expected.id + " (weights hold " +
                                            loaded.spec.id + ")",
                             0);
    }
    loaded.spec = expected;
  }
  const Generator generator(loaded.spec, loaded.weights);
  const auto audio = generator.synthesize(mel);
  io::write_wav(out_path, audio);
  err << "synth: " << loaded.spec.id << " (" << to_string(loaded.spec.variant) << "), "
      << mel.frames << " frames -> " << audio.size() << " samples -> " << out_path << "\n";
  return kSuccess;
}

int cmd_roundtrip(const CliConfig& cfg, std::ostream& out) {
  if (cfg.inputs.size() != 1) throw UsageError("roundtrip: expected one input WAV");
  const auto config = cfg.stft();
  const auto audio = io::read_wav(cfg.inputs[0]);
  const auto spec = dsp::stft(audio, config);
  const auto rebuilt = dsp::istft(spec, config, audio.size(), audio.sample_rate);
  double max_error = 0.0;
  for (std::size_t i = 0; i < audio.size(); ++i) {
    max_error = std::max(max_error, std::abs(rebuilt.samples[i] - audio.samples[i]));
  }
  out << "max_abs_error " << std::setprecision(6) << std::scientific << max_error << "\n";
  return max_error < kRoundTripTolerance ? kSuccess : kNumericError;
}

std::vector<std::string> model_list(const CliConfig& cfg, Variant variant) {
  if (!cfg.model_ids.empty()) return cfg.model_ids;
  const auto& baseline = variant_profile(variant).baseline_id;
  std::vector<std::string> ids{baseline, "C8C8I", "C8I", "C8C1I"};
  if (variant != Variant::V3) ids.insert(ids.begin() + 1, "C8C8C2I");
  return ids;
}

int cmd_params(const CliConfig& cfg, std::ostream& out) {
  const Variant variant = cfg.variant();
  const auto base = cfg.stft();
  const std::string baseline =
      cfg.baseline.empty() ? variant_profile(variant).baseline_id : cfg.baseline;
  const std::size_t baseline_params = count_params(parse_model_arg(baseline, variant, base));

  out << "# model_id\tvariant\tparams\tparams_m\tparam_rate_pct\n";
  for (const auto& id : model_list(cfg, variant)) {
    const std::size_t params = count_params(parse_model_arg(id, variant, base));
    const double rate = 100.0 * static_cast<double>(params) / static_cast<double>(baseline_params);
    out << id << '\t' << to_string(variant) << '\t' << params << '\t' << std::fixed
        << std::setprecision(2) << static_cast<double>(params) / 1e6 << '\t'
        << std::setprecision(1) << rate << '\n';
    out << std::defaultfloat;
  }
  return kSuccess;
}

int cmd_bench(const CliConfig& cfg, std::ostream& out, std::ostream& err) {
  const auto base = cfg.stft();
  std::vector<Variant> variants;
  for (const auto& v : cfg.variants) variants.push_back(CliConfig::parse_variant_arg(v));
  if (variants.empty()) variants.push_back(Variant::V1);
  if (cfg.runs < bench::kMinTimedRuns) throw UsageError("--runs must be >= 3");
  if (cfg.frames == 0) throw UsageError("--frames must be >= 1");

  std::vector<bench::BenchReport> reports;
  std::string baseline;
  for (const Variant variant : variants) {
    const auto ids = model_list(cfg, variant);
    baseline = cfg.baseline.empty() ? variant_profile(variant).baseline_id : cfg.baseline;
    if (std::find(ids.begin(), ids.end(), baseline) == ids.end()) {
      throw UsageError("bench: baseline '" + baseline + "' is not among the benchmarked models");
    }
    std::vector<ModelSpec> specs;
    for (const auto& id : ids) specs.push_back(parse_model_arg(id, variant, base));

    auto mel = bench::synthetic_mel(cfg.frames, cfg.seed);
    mel.hop_length = base.hop_length;
    for (const auto& spec : specs) {
      const Generator generator(spec, random_init(spec, cfg.seed));
      auto report = bench::benchmark(generator, mel, cfg.warmup, cfg.runs);
      err << "bench: " << spec.id << " (" << to_string(variant) << ") rtf x" << std::fixed
          << std::setprecision(2) << report.rtf << std::defaultfloat << "\n";
      reports.push_back(std::move(report));
    }
  }
  if (!cfg.baseline.empty() || variants.size() == 1) {
    reports = bench::compare(std::move(reports), baseline);
  } else {
    // Per-variant default baselines differ (V3 has its own).
    std::vector<bench::BenchReport> merged;
    for (const Variant variant : variants) {
      std::vector<bench::BenchReport> subset;
      for (const auto& r : reports) {
        if (r.variant == variant) subset.push_back(r);
      }
      auto compared = bench::compare(std::move(subset), variant_profile(variant).baseline_id);
      merged.insert(merged.end(), compared.begin(), compared.end());
    }
    reports = std::move(merged);
  }

  const std::string text = bench::serialize(reports);
  if (cfg.out.empty()) {
    out << text;
  } else {
    std::ofstream file(cfg.out);
    if (!file) throw IoError("cannot open '" + cfg.out + "' for writing");
    file << text;
    err << "bench: report written to " << cfg.out << "\n";
  }
  return kSuccess;
}

int cmd_init_weights(const CliConfig& cfg, std::ostream& err) {
  std::string id = cfg.model;
  if (id.empty() && !cfg.model_ids.empty()) id = cfg.model_ids.front();
  if (id.empty()) throw UsageError("init-weights: missing model id");
  if (cfg.out.empty()) throw UsageError("init-weights: missing --out");
  const auto spec = parse_model_arg(id, cfg.variant(), cfg.stft());
  const auto weights = random_init(spec, cfg.seed);
  io::write_weights(cfg.out, spec, weights);
  err << "init-weights: " << spec.id << " (" << to_string(spec.variant) << "), seed " << cfg.seed
      << ", " << count_params(spec) << " params -> " << cfg.out << "\n";
  return kSuccess;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"iSTFT-head mel-spectrogram vocoder toolkit", "istftnet"};
  app.require_subcommand(1);
  CliConfig cfg;

  auto* mel = app.add_subcommand("mel", "Extract an 80-band log-mel file from a WAV");
  mel->add_option("paths", cfg.inputs, "IN.wav [OUT.mel]")->expected(1, 2);
  mel->add_option("--out", cfg.out, "Output mel path");
  add_stft_flags(mel, cfg);
  mel->add_option("--mels", cfg.n_mels, "Number of mel bands")->capture_default_str();
  mel->add_option("--fmin", cfg.fmin, "Lowest filter edge (Hz)")->capture_default_str();
  mel->add_option("--fmax", cfg.fmax, "Highest filter edge (Hz)")->capture_default_str();
  auto* rate_opt = mel->add_option("--sample-rate", cfg.sample_rate,
                                   "Override the WAV sample rate");

  auto* synth = app.add_subcommand("synth", "Synthesize a WAV from a mel file and weights");
  synth->add_option("paths", cfg.inputs, "IN.mel WEIGHTS.bin [OUT.wav]")->expected(2, 3);
  synth->add_option("--out", cfg.out, "Output WAV path");
  synth->add_option("--model", cfg.model, "Expected model id");
  synth->add_option("--variant", cfg.variants, "Expected variant (V1/V2/V3)")
      ->expected(1)
      ->allow_extra_args(false);
  add_stft_flags(synth, cfg);

  auto* roundtrip = app.add_subcommand("roundtrip", "Check istft(stft(x)) == x on a WAV");
  roundtrip->add_option("input", cfg.inputs, "IN.wav")->expected(1)->allow_extra_args(false);
  add_stft_flags(roundtrip, cfg);

  auto* params = app.add_subcommand("params", "Print parameter counts and rates");
  params->add_option("models", cfg.model_ids, "Model ids");
  params->add_option("--variant", cfg.variants, "Variant (V1/V2/V3)")
      ->expected(1)
      ->allow_extra_args(false);
  params->add_option("--baseline", cfg.baseline, "Baseline model id");
  add_stft_flags(params, cfg);

  auto* benchmark = app.add_subcommand("bench", "Measure real-time factors");
  benchmark->add_option("models", cfg.model_ids, "Model ids");
  benchmark->add_option("--variant", cfg.variants, "Variants to run (repeatable)")
      ->expected(1)
      ->allow_extra_args(false)
      ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
  benchmark->add_option("--baseline", cfg.baseline, "Baseline model id");
  benchmark->add_option("--runs", cfg.runs, "Timed runs")->capture_default_str();
  benchmark->add_option("--warmup", cfg.warmup, "Discarded warmup runs")->capture_default_str();
  benchmark->add_option("--seed", cfg.seed, "Weight/input seed")->capture_default_str();
  benchmark->add_option("--frames", cfg.frames, "Mel frames per run")->capture_default_str();
  benchmark->add_option("--out", cfg.out, "Report path (default stdout)");
  add_stft_flags(benchmark, cfg);

  auto* init = app.add_subcommand("init-weights", "Write deterministic random weights");
  init->add_option("model_id", cfg.model_ids, "Model id")->expected(0, 1);
  init->add_option("--model", cfg.model, "Model id");
  init->add_option("--variant", cfg.variants, "Variant (V1/V2/V3)")
      ->expected(1)
      ->allow_extra_args(false);
  init->add_option("--seed", cfg.seed, "PRNG seed")->capture_default_str();
  init->add_option("--out", cfg.out, "Weight file path");
  add_stft_flags(init, cfg);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kSuccess : kUsageError;
  }

  try {
    if (mel->parsed()) return cmd_mel(cfg, rate_opt->count() > 0, err);
    if (synth->parsed()) return cmd_synth(cfg, err);
    if (roundtrip->parsed()) return cmd_roundtrip(cfg, out);
    if (params->parsed()) return cmd_params(cfg, out);
    if (benchmark->parsed()) return cmd_bench(cfg, out, err);
    if (init->parsed()) return cmd_init_weights(cfg, err);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kUsageError;
  } catch (const NumericError& e) {
    err << "numeric error: " << e.what() << "\n";
    return kNumericError;
  } catch (const ScheduleMismatch& e) {
    err << "schedule mismatch: " << e.what() << "\n";
    return kFormatError;
  } catch (const FormatError& e) {
    err << "format error: " << e.what() << "\n";
    return kFormatError;
  } catch (const IoError& e) {
    err << "i/o error: " << e.what() << "\n";
    return kFormatError;
  } catch (const InvalidArgument& e) {
    err << "invalid input: " << e.what() << "\n";
    return kFormatError;
  }
  return kUsageError;
}

}  // namespace istftnet::cli
