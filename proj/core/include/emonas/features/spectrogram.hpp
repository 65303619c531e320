#pragma once

#include <cstddef>
#include <filesystem>
#include <string>

#include "emonas/features/audio.hpp"
#include "emonas/features/matrix.hpp"

namespace emonas::features {

struct SpectrogramConfig {
  double target_duration = 8.0;
  /// Seconds.
  double window_length = 0.025;
  double window_overlap = 0.014;
  std::size_t feature_bins = 140;
  std::size_t output_rows = 140;
  /// Only this rate is accepted; there is no resampling.
  unsigned sample_rate = 16000;

  /// Throws ConfigError on an inconsistent configuration.
  void validate() const;
  std::size_t window_samples() const;
  std::size_t hop_samples() const;
  /// FFT length equals the window length.
  std::size_t fft_bins() const { return window_samples() / 2 + 1; }
  std::size_t target_samples() const;
  /// Stable fingerprint of every field.
  std::string fingerprint() const;
};

/// floor((samples - window) / hop) + 1. Throws ShapeError when the window
/// is longer than the signal.
std::size_t frame_count(std::size_t samples, std::size_t window, std::size_t hop);

/// Hamming-windowed FFT magnitude per frame, log(1 + |X|), first
/// feature_bins bins, then average pooling over frames down to output_rows.
/// The waveform must already have the target duration and rate.
FeatureMatrix spectrogram(const Waveform& wave, const SpectrogramConfig& config);

/// Frame-level log magnitudes before pooling: [frames, feature_bins].
Tensor frame_spectra(const Waveform& wave, const SpectrogramConfig& config);

/// Loads, pads or truncates to the target duration, then extracts.
FeatureMatrix spectrogram_from_wav(const std::filesystem::path& path,
                                   const SpectrogramConfig& config);

/// Averages contiguous row groups down to target_rows. Groups differ in
/// size by at most one; the earlier groups take the remainder.
Tensor pool_to_shape(const Tensor& matrix, std::size_t target_rows);
FeatureMatrix pool_to_shape(const FeatureMatrix& matrix, std::size_t target_rows);

}  // namespace emonas::features
