#pragma once

#include <filesystem>
#include <vector>

#include "emonas/autodiff/tensor.hpp"

namespace emonas::features {

struct Waveform {
  /// Mono samples in [-1, 1].
  std::vector<real> samples;
  unsigned sample_rate = 16000;

  double duration() const { return static_cast<double>(samples.size()) / sample_rate; }
};

/// Reads RIFF/WAVE with integer PCM (8/16/24/32 bit) or IEEE float (32/64
/// bit) samples. Multi-channel audio is averaged to mono. Throws IoError
/// when the file cannot be read and FormatError on a corrupt header or an
/// unsupported encoding.
Waveform load_wav(const std::filesystem::path& path);
Waveform parse_wav(const std::vector<unsigned char>& bytes);

/// Writes 16-bit PCM mono; samples are clipped to [-1, 1].
void write_wav(const std::filesystem::path& path, const Waveform& wave);
std::vector<unsigned char> encode_wav(const Waveform& wave);

/// Exactly round(target_seconds * rate) samples: keeps the prefix of longer
/// input and appends zeros to shorter input.
Waveform pad_or_truncate(const Waveform& wave, double target_seconds);

}  // namespace emonas::features
