#include "emonas/harness/synth.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "emonas/autodiff/random.hpp"
#include "emonas/errors.hpp"
#include "emonas/features/matrix.hpp"

namespace emonas::harness {

namespace {

constexpr double kTopFrequency = 5600;   // upper edge of the default spectrogram
constexpr double kDenseSpacing = 400;
constexpr double kSparseSpacing = 800;
constexpr double kEnvelopePeriod = 2.4;  // seconds
constexpr double kHarmonicAmplitude = 0.04;
constexpr double kAudioNoise = 0.02;
constexpr double kSequenceNoise = 0.8;
constexpr double kSpeakerSpread = 0.3;

// Audio signature per class: {sparse harmonics, amplitude envelope}.
struct AudioStyle {
  bool sparse;
  bool pulsed;
};

AudioStyle audio_style(int label, bool complementary) {
  // neutral: dense/steady, angry: dense/pulsed, happy: sparse/steady,
  // sad: sparse/pulsed. The complementary variant renders sad like happy.
  if (complementary && label == 3) label = 2;
  return {label >= 2, label % 2 == 1};
}

// Walsh-style +-1 pattern of class `c` in a band of `width` channels.
double band_pattern(int c, std::size_t k) {
  return (std::popcount(static_cast<unsigned>(c + 1) & static_cast<unsigned>(k)) & 1) ? -1.0
                                                                                      : 1.0;
}

int sequence_class(int label, bool complementary) {
  return complementary && label == 1 ? 0 : label;
}

struct Speaker {
  std::string session;
  std::string name;
  double pitch;  // fundamental offset inside one 400 Hz band
  double gain;
  std::vector<double> offset;
};

features::Waveform render_audio(const SynthConfig& cfg, const Speaker& spk, int label, Rng& rng) {
  const AudioStyle style = audio_style(label, cfg.complementary);
  const double duration = rng.uniform(cfg.min_duration, cfg.max_duration);
  const std::size_t n = static_cast<std::size_t>(std::llround(duration * cfg.sample_rate));
  const double spacing = style.sparse ? kSparseSpacing : kDenseSpacing;
  const double f0 = spk.pitch + rng.uniform(-10, 10);
  const double envelope_phase = rng.uniform(0, 2 * std::numbers::pi);

  // One phasor per harmonic, advanced by rotation instead of calling sin.
  std::vector<double> re, im, step_re, step_im;
  for (double f = f0; f < std::min(kTopFrequency, 0.5 * cfg.sample_rate) - 100; f += spacing) {
    const double phase = rng.uniform(0, 2 * std::numbers::pi);
    const double delta = 2 * std::numbers::pi * f / cfg.sample_rate;
    re.push_back(std::cos(phase));
    im.push_back(std::sin(phase));
    step_re.push_back(std::cos(delta));
    step_im.push_back(std::sin(delta));
  }
  features::Waveform w;
  w.sample_rate = cfg.sample_rate;
  w.samples.resize(n);
  const double dt = 1.0 / cfg.sample_rate;
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0;
    for (std::size_t h = 0; h < re.size(); ++h) {
      s += im[h];
      const double r = re[h] * step_re[h] - im[h] * step_im[h];
      im[h] = re[h] * step_im[h] + im[h] * step_re[h];
      re[h] = r;
    }
    double env = 1;
    if (style.pulsed) {
      const double t = static_cast<double>(i) * dt;
      env = 0.5 * (1 + std::tanh(8 * std::sin(2 * std::numbers::pi * t / kEnvelopePeriod +
                                               envelope_phase)));
    }
    double v = spk.gain * kHarmonicAmplitude * env * s + cfg.noise * kAudioNoise * rng.normal();
    v = std::clamp(v, -1.0, 32767.0 / 32768.0);
    // Snap to the 16-bit grid so the in-memory copy equals the file.
    w.samples[i] = std::round(v * 32768.0) / 32768.0;
  }
  return w;
}

Tensor render_sequence(const SynthConfig& cfg, const Speaker& spk, int label, Rng& rng) {
  const std::size_t T =
      cfg.min_frames + static_cast<std::size_t>(rng.below(cfg.max_frames - cfg.min_frames + 1));
  const std::size_t D = cfg.sequence_dim;
  const int c = sequence_class(label, cfg.complementary);
  Tensor m({T, D});
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t d = 0; d < D; ++d) {
      double v = spk.offset[d] + cfg.noise * kSequenceNoise * rng.normal();
      if (d >= cfg.band_start && d < cfg.band_start + cfg.band_width) {
        v += band_pattern(c, d - cfg.band_start);
      }
      m[t * D + d] = static_cast<float>(v);
    }
  }
  return m;
}

}  // namespace

void SynthConfig::validate() const {
  if (num_sessions < 2) throw ConfigError("synth needs at least two sessions");
  if (speakers_per_session < 2) throw ConfigError("synth needs at least two speakers per session");
  if (utterances_per_class == 0) throw ConfigError("synth utterances_per_class must be positive");
  if (!(noise >= 0) || !std::isfinite(noise)) throw ConfigError("synth noise must be >= 0");
  if (!(min_duration > 0) || max_duration < min_duration) {
    throw ConfigError("synth durations need 0 < min_duration <= max_duration");
  }
  if (sample_rate < 2 * 1000) throw ConfigError("synth sample_rate too low");
  if (min_frames == 0 || max_frames < min_frames) {
    throw ConfigError("synth frames need 1 <= min_frames <= max_frames");
  }
  if (band_width < 4 || band_start + band_width > sequence_dim) {
    throw ConfigError("synth class band must have >= 4 channels inside sequence_dim");
  }
}

std::vector<SynthUtterance> synth_utterances(const SynthConfig& config) {
  config.validate();
  const Rng root(config.seed);
  std::vector<SynthUtterance> out;
  out.reserve(config.size());
  for (std::size_t s = 0; s < config.num_sessions; ++s) {
    for (std::size_t p = 0; p < config.speakers_per_session; ++p) {
      Speaker spk;
      spk.session = "S" + std::to_string(s + 1);
      spk.name = spk.session + static_cast<char>('A' + p % 26) +
                 (p >= 26 ? std::to_string(p / 26) : std::string());
      Rng srng = root.split("speaker:" + spk.name);
      spk.pitch = srng.uniform(150, 250);
      spk.gain = srng.uniform(0.8, 1.0);
      spk.offset.resize(config.sequence_dim);
      for (auto& v : spk.offset) v = kSpeakerSpread * srng.normal();

      for (int label = 0; label < 4; ++label) {
        for (std::size_t k = 0; k < config.utterances_per_class; ++k) {
          char idx[16];
          std::snprintf(idx, sizeof idx, "%04zu", k);
          SynthUtterance u;
          u.record.id = spk.name + "_" + std::to_string(label) + "_" + idx;
          u.record.label = label;
          u.record.session = spk.session;
          u.record.speaker = spk.name;
          Rng rng = root.split("utt:" + u.record.id);
          Rng arng = rng.split("audio"), qrng = rng.split("sequence");
          u.audio = render_audio(config, spk, label, arng);
          u.sequence = render_sequence(config, spk, label, qrng);
          out.push_back(std::move(u));
        }
      }
    }
  }
  return out;
}

std::vector<UtteranceRecord> synth_dataset(const SynthConfig& config,
                                           const std::filesystem::path& dir) {
  auto utterances = synth_utterances(config);
  std::error_code ec;
  const auto root = std::filesystem::absolute(dir);
  std::filesystem::create_directories(root / "wav", ec);
  std::filesystem::create_directories(root / "seq", ec);
  if (ec) throw IoError("cannot create " + root.string() + ": " + ec.message());
  std::vector<UtteranceRecord> records;
  for (auto& u : utterances) {
    u.record.audio = root / "wav" / (u.record.id + ".wav");
    u.record.sequence = root / "seq" / (u.record.id + ".emns");
    features::write_wav(u.record.audio, u.audio);
    features::write_feature_matrix(u.record.sequence, u.sequence);
    records.push_back(u.record);
  }
  write_manifest(root / "manifest.csv", records);
  return records;
}

}  // namespace emonas::harness
