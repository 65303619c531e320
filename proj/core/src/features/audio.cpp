#include "emonas/features/audio.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

#include "emonas/errors.hpp"

namespace emonas::features {

namespace {

std::uint32_t u32(const unsigned char* p) {
  return p[0] | (p[1] << 8) | (p[2] << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}
std::uint16_t u16(const unsigned char* p) { return static_cast<std::uint16_t>(p[0] | (p[1] << 8)); }

void put32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}
void put16(std::vector<unsigned char>& out, std::uint16_t v) {
  out.push_back(static_cast<unsigned char>(v & 0xff));
  out.push_back(static_cast<unsigned char>(v >> 8));
}

constexpr std::uint16_t kPcm = 1;
constexpr std::uint16_t kFloat = 3;
constexpr std::uint16_t kExtensible = 0xfffe;

real decode_sample(const unsigned char* p, std::uint16_t format, std::uint16_t bits) {
  if (format == kFloat) {
    if (bits == 32) {
      std::uint32_t raw = u32(p);
      float f;
      std::memcpy(&f, &raw, 4);
      return f;
    }
    std::uint64_t raw = u32(p) | (static_cast<std::uint64_t>(u32(p + 4)) << 32);
    double d;
    std::memcpy(&d, &raw, 8);
    return d;
  }
  switch (bits) {
    case 8: return (static_cast<real>(p[0]) - 128.0) / 128.0;
    case 16: return static_cast<std::int16_t>(u16(p)) / 32768.0;
    case 24: {
      std::int32_t v = p[0] | (p[1] << 8) | (p[2] << 16);
      if (v & 0x800000) v -= 0x1000000;
      return v / 8388608.0;
    }
    default: return static_cast<std::int32_t>(u32(p)) / 2147483648.0;
  }
}

}  // namespace

Waveform parse_wav(const std::vector<unsigned char>& bytes) {
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw FormatError("not a RIFF/WAVE file");
  }
  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  const unsigned char* data = nullptr;
  std::size_t data_size = 0;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* chunk = bytes.data() + pos;
    const std::size_t size = u32(chunk + 4);
    if (pos + 8 + size > bytes.size()) throw FormatError("wav chunk runs past the end of file");
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (size < 16) throw FormatError("wav fmt chunk is too short");
      format = u16(chunk + 8);
      channels = u16(chunk + 10);
      rate = u32(chunk + 12);
      bits = u16(chunk + 22);
      if (format == kExtensible) {
        if (size < 40) throw FormatError("wav extensible fmt chunk is too short");
        format = u16(chunk + 8 + 24);
      }
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      data = chunk + 8;
      data_size = size;
    }
    pos += 8 + size + (size & 1);
  }
  if (channels == 0 || rate == 0) throw FormatError("wav file has no valid fmt chunk");
  if (!data) throw FormatError("wav file has no data chunk");
  const bool pcm_ok = format == kPcm && (bits == 8 || bits == 16 || bits == 24 || bits == 32);
  const bool float_ok = format == kFloat && (bits == 32 || bits == 64);
  if (!pcm_ok && !float_ok) {
    throw FormatError("unsupported wav encoding (format " + std::to_string(format) + ", " +
                      std::to_string(bits) + " bit)");
  }
  const std::size_t frame_bytes = static_cast<std::size_t>(bits / 8) * channels;
  const std::size_t frames = data_size / frame_bytes;
  Waveform w;
  w.sample_rate = rate;
  w.samples.resize(frames);
  for (std::size_t i = 0; i < frames; ++i) {
    real acc = 0;
    for (std::size_t c = 0; c < channels; ++c) {
      acc += decode_sample(data + i * frame_bytes + c * (bits / 8), format, bits);
    }
    w.samples[i] = acc / channels;
    if (!std::isfinite(w.samples[i])) throw FormatError("wav sample " + std::to_string(i) + " is not finite");
  }
  return w;
}

Waveform load_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  try {
    return parse_wav(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

std::vector<unsigned char> encode_wav(const Waveform& wave) {
  const std::uint32_t data_bytes = static_cast<std::uint32_t>(wave.samples.size() * 2);
  std::vector<unsigned char> out;
  out.reserve(44 + data_bytes);
  out.insert(out.end(), {'R', 'I', 'F', 'F'});
  put32(out, 36 + data_bytes);
  out.insert(out.end(), {'W', 'A', 'V', 'E', 'f', 'm', 't', ' '});
  put32(out, 16);
  put16(out, kPcm);
  put16(out, 1);
  put32(out, wave.sample_rate);
  put32(out, wave.sample_rate * 2);
  put16(out, 2);
  put16(out, 16);
  out.insert(out.end(), {'d', 'a', 't', 'a'});
  put32(out, data_bytes);
  for (real s : wave.samples) {
    const real c = std::clamp<real>(s, -1.0, 1.0);
    const long v = std::lround(c * 32767.0);
    put16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(v)));
  }
  return out;
}

void write_wav(const std::filesystem::path& path, const Waveform& wave) {
  const auto bytes = encode_wav(wave);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

Waveform pad_or_truncate(const Waveform& wave, double target_seconds) {
  if (!(target_seconds > 0)) throw ConfigError("target duration must be positive");
  Waveform out;
  out.sample_rate = wave.sample_rate;
  const auto n = static_cast<std::size_t>(std::llround(target_seconds * wave.sample_rate));
  out.samples.assign(n, 0.0);
  std::copy_n(wave.samples.begin(), std::min(n, wave.samples.size()), out.samples.begin());
  return out;
}

}  // namespace emonas::features
