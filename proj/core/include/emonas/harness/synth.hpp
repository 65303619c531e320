#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "emonas/autodiff/tensor.hpp"
#include "emonas/features/audio.hpp"
#include "emonas/harness/records.hpp"

namespace emonas::harness {

/// Desk-scale stand-in for an acted emotion corpus with two modalities.
///
/// Audio: a harmonic stack on a speaker-dependent pitch. Harmonic spacing
/// (every 400 Hz or every 800 Hz) and a slow on/off amplitude envelope
/// together encode the class, so the signature survives coarse pooling of
/// the spectrogram. Sequence features: a [T, dim] matrix whose channels
/// [band_start, band_start + band_width) carry a class pattern; the other
/// channels carry speaker offsets and noise.
struct SynthConfig {
  std::size_t num_sessions = 2;
  std::size_t speakers_per_session = 2;
  /// Per speaker and class.
  std::size_t utterances_per_class = 40;
  /// Scales the additive noise of both modalities; 0 is noise free.
  double noise = 1.0;
  double min_duration = 3.0;
  double max_duration = 5.0;
  unsigned sample_rate = 16000;
  std::size_t min_frames = 12;
  std::size_t max_frames = 24;
  std::size_t sequence_dim = 32;
  std::size_t band_start = 8;
  std::size_t band_width = 8;
  /// Audio cannot separate happy from sad and the sequence features cannot
  /// separate neutral from angry; only the combination can tell all four.
  bool complementary = false;
  std::uint64_t seed = 0;

  /// Throws ConfigError.
  void validate() const;
  std::size_t size() const {
    return num_sessions * speakers_per_session * utterances_per_class * 4;
  }
};

struct SynthUtterance {
  UtteranceRecord record;
  features::Waveform audio;
  /// [T, sequence_dim]
  Tensor sequence;
};

/// Generates everything in memory. Each utterance is drawn from its own
/// stream keyed by (seed, id), so any subset is reproducible.
std::vector<SynthUtterance> synth_utterances(const SynthConfig& config);

/// Writes wav/<id>.wav, seq/<id>.emns and manifest.csv under `dir` and
/// returns the records (absolute paths). Throws IoError.
std::vector<UtteranceRecord> synth_dataset(const SynthConfig& config,
                                           const std::filesystem::path& dir);

}  // namespace emonas::harness
