#include "emonas/features/spectrogram.hpp"

#include <fftw3.h>

#include <cmath>
#include <cstdio>
#include <memory>
#include <mutex>
#include <numbers>
#include <sstream>

#include "emonas/autodiff/random.hpp"
#include "emonas/errors.hpp"

namespace emonas::features {

namespace {

std::size_t to_samples(double seconds, unsigned rate) {
  return static_cast<std::size_t>(std::llround(seconds * rate));
}

// The FFTW planner is not thread-safe; execution is.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

struct FftwFree {
  void operator()(void* p) const { fftw_free(p); }
};

}  // namespace

void SpectrogramConfig::validate() const {
  if (!(target_duration > 0)) throw ConfigError("target_duration must be positive");
  if (sample_rate == 0) throw ConfigError("sample_rate must be positive");
  if (!(window_length > 0) || !(window_overlap > 0) || window_overlap >= window_length) {
    throw ConfigError("need 0 < window_overlap < window_length");
  }
  if (hop_samples() == 0) throw ConfigError("window hop rounds to zero samples");
  if (feature_bins == 0 || feature_bins > fft_bins()) {
    throw ConfigError("feature_bins must be in [1, " + std::to_string(fft_bins()) + "]");
  }
  if (output_rows == 0) throw ConfigError("output_rows must be positive");
  const std::size_t frames = frame_count(target_samples(), window_samples(), hop_samples());
  if (frames < output_rows) {
    throw ConfigError("only " + std::to_string(frames) + " frames for " +
                      std::to_string(output_rows) + " output rows");
  }
}

std::size_t SpectrogramConfig::window_samples() const {
  return to_samples(window_length, sample_rate);
}

std::size_t SpectrogramConfig::hop_samples() const {
  return window_samples() - to_samples(window_overlap, sample_rate);
}

std::size_t SpectrogramConfig::target_samples() const {
  return to_samples(target_duration, sample_rate);
}

std::string SpectrogramConfig::fingerprint() const {
  std::ostringstream os;
  os.precision(17);
  os << "spectrogram;duration=" << target_duration << ";window=" << window_length
     << ";overlap=" << window_overlap << ";bins=" << feature_bins << ";rows=" << output_rows
     << ";rate=" << sample_rate << ";hamming;log1p";
  char hex[17];
  std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(fnv1a(os.str())));
  return hex;
}

std::size_t frame_count(std::size_t samples, std::size_t window, std::size_t hop) {
  if (window == 0 || hop == 0) throw ShapeError("window and hop must be positive");
  if (window > samples) {
    throw ShapeError("window of " + std::to_string(window) + " samples is longer than the " +
                     std::to_string(samples) + "-sample signal");
  }
  return (samples - window) / hop + 1;
}

Tensor frame_spectra(const Waveform& wave, const SpectrogramConfig& config) {
  config.validate();
  if (wave.sample_rate != config.sample_rate) {
    throw ConfigError("sample rate " + std::to_string(wave.sample_rate) + " Hz, expected " +
                      std::to_string(config.sample_rate) + " Hz (no resampling)");
  }
  if (wave.samples.size() != config.target_samples()) {
    throw ShapeError("waveform has " + std::to_string(wave.samples.size()) + " samples, expected " +
                     std::to_string(config.target_samples()) + " (" +
                     std::to_string(config.target_duration) + " s)");
  }
  const std::size_t n = config.window_samples(), hop = config.hop_samples();
  const std::size_t frames = frame_count(wave.samples.size(), n, hop);
  const std::size_t bins = config.feature_bins;

  std::vector<double> window(n);
  for (std::size_t i = 0; i < n; ++i) {
    window[i] = 0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / n);
  }
  std::unique_ptr<double, FftwFree> in(fftw_alloc_real(n));
  std::unique_ptr<fftw_complex, FftwFree> out(fftw_alloc_complex(n / 2 + 1));
  fftw_plan plan;
  {
    std::lock_guard lock(planner_mutex());
    plan = fftw_plan_dft_r2c_1d(static_cast<int>(n), in.get(), out.get(), FFTW_ESTIMATE);
  }
  Tensor spectra({frames, bins});
  for (std::size_t f = 0; f < frames; ++f) {
    const real* src = wave.samples.data() + f * hop;
    for (std::size_t i = 0; i < n; ++i) in.get()[i] = src[i] * window[i];
    fftw_execute(plan);
    for (std::size_t k = 0; k < bins; ++k) {
      spectra[f * bins + k] = std::log1p(std::hypot(out.get()[k][0], out.get()[k][1]));
    }
  }
  {
    std::lock_guard lock(planner_mutex());
    fftw_destroy_plan(plan);
  }
  return spectra;
}

FeatureMatrix spectrogram(const Waveform& wave, const SpectrogramConfig& config) {
  FeatureMatrix m;
  m.data = pool_to_shape(frame_spectra(wave, config), config.output_rows);
  m.kind = FeatureKind::spectrogram;
  m.config_hash = config.fingerprint();
  return m;
}

FeatureMatrix spectrogram_from_wav(const std::filesystem::path& path,
                                   const SpectrogramConfig& config) {
  FeatureMatrix m = spectrogram(pad_or_truncate(load_wav(path), config.target_duration), config);
  m.source = path.string();
  return m;
}

Tensor pool_to_shape(const Tensor& matrix, std::size_t target_rows) {
  if (matrix.rank() != 2) throw ShapeError("pooling expects a 2-D matrix");
  const std::size_t rows = matrix.dim(0), cols = matrix.dim(1);
  if (target_rows == 0 || rows < target_rows) {
    throw ShapeError("cannot pool " + std::to_string(rows) + " rows into " +
                     std::to_string(target_rows));
  }
  const std::size_t base = rows / target_rows, extra = rows % target_rows;
  Tensor out({target_rows, cols}, 0.0);
  std::size_t r = 0;
  for (std::size_t g = 0; g < target_rows; ++g) {
    const std::size_t size = base + (g < extra ? 1 : 0);
    real* dst = out.raw() + g * cols;
    for (std::size_t i = 0; i < size; ++i, ++r) {
      const real* src = matrix.raw() + r * cols;
      for (std::size_t c = 0; c < cols; ++c) dst[c] += src[c];
    }
    for (std::size_t c = 0; c < cols; ++c) dst[c] /= static_cast<real>(size);
  }
  return out;
}

FeatureMatrix pool_to_shape(const FeatureMatrix& matrix, std::size_t target_rows) {
  FeatureMatrix out = matrix;
  out.data = pool_to_shape(matrix.data, target_rows);
  return out;
}

}  // namespace emonas::features
