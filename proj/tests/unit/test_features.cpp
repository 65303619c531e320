#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numbers>

#include "emonas/autodiff/random.hpp"
#include "emonas/errors.hpp"
#include "emonas/features/spectrogram.hpp"

namespace emonas::features {
namespace {

namespace fs = std::filesystem;

class TempDir {
 public:
  TempDir() {
    path_ = fs::temp_directory_path() /
            ("emonas-test-" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) +
             "-" + ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

Waveform tone(double seconds, double freq, unsigned rate = 16000, double amp = 0.5) {
  Waveform w;
  w.sample_rate = rate;
  w.samples.resize(static_cast<std::size_t>(std::llround(seconds * rate)));
  for (std::size_t i = 0; i < w.samples.size(); ++i) {
    w.samples[i] = amp * std::sin(2 * std::numbers::pi * freq * static_cast<double>(i) / rate);
  }
  return w;
}

// hand-built RIFF with arbitrary sample layout
std::vector<unsigned char> riff(std::uint16_t format, std::uint16_t channels, std::uint16_t bits,
                                const std::vector<unsigned char>& payload) {
  auto put32 = [](std::vector<unsigned char>& o, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) o.push_back(static_cast<unsigned char>(v >> (8 * i)));
  };
  auto put16 = [](std::vector<unsigned char>& o, std::uint16_t v) {
    o.push_back(v & 0xff);
    o.push_back(v >> 8);
  };
  std::vector<unsigned char> o{'R', 'I', 'F', 'F'};
  put32(o, static_cast<std::uint32_t>(36 + payload.size()));
  o.insert(o.end(), {'W', 'A', 'V', 'E', 'f', 'm', 't', ' '});
  put32(o, 16);
  put16(o, format);
  put16(o, channels);
  put32(o, 16000);
  put32(o, 16000u * channels * bits / 8);
  put16(o, static_cast<std::uint16_t>(channels * bits / 8));
  put16(o, bits);
  o.insert(o.end(), {'d', 'a', 't', 'a'});
  put32(o, static_cast<std::uint32_t>(payload.size()));
  o.insert(o.end(), payload.begin(), payload.end());
  return o;
}

TEST(Wav, FullScaleSixteenBit) {
  const auto w = parse_wav(riff(1, 1, 16, {0xff, 0x7f, 0x00, 0x80, 0x00, 0x00}));
  ASSERT_EQ(w.samples.size(), 3u);
  EXPECT_NEAR(w.samples[0], 1.0, 1e-4);
  EXPECT_EQ(w.samples[1], -1.0);
  EXPECT_EQ(w.samples[2], 0.0);
}

TEST(Wav, StereoIsChannelMean) {
  // left 16384 (0.5), right -8192 (-0.25)
  const auto w = parse_wav(riff(1, 2, 16, {0x00, 0x40, 0x00, 0xe0}));
  ASSERT_EQ(w.samples.size(), 1u);
  EXPECT_DOUBLE_EQ(w.samples[0], 0.125);
}

TEST(Wav, FloatSamples) {
  const float v = -0.375f;
  std::vector<unsigned char> payload(4);
  std::memcpy(payload.data(), &v, 4);
  EXPECT_DOUBLE_EQ(parse_wav(riff(3, 1, 32, payload)).samples[0], -0.375);
}

TEST(Wav, OneSecondFileRoundTrip) {
  TempDir dir;
  const Waveform w = tone(1.0, 440);
  write_wav(dir / "a.wav", w);
  const Waveform r = load_wav(dir / "a.wav");
  EXPECT_EQ(r.samples.size(), 16000u);
  EXPECT_EQ(r.sample_rate, 16000u);
  for (std::size_t i = 0; i < w.samples.size(); ++i) EXPECT_NEAR(r.samples[i], w.samples[i], 1e-4);
  EXPECT_EQ(encode_wav(r), encode_wav(w));
}

TEST(Wav, Errors) {
  TempDir dir;
  EXPECT_THROW(load_wav(dir / "missing.wav"), IoError);
  EXPECT_THROW(parse_wav({'R', 'I', 'F', 'F'}), FormatError);
  EXPECT_THROW(parse_wav(riff(1, 1, 12, {0, 0})), FormatError);
  EXPECT_THROW(parse_wav(riff(7, 1, 8, {0})), FormatError);
  auto truncated = riff(1, 1, 16, {0, 0, 0, 0});
  truncated.resize(truncated.size() - 3);
  EXPECT_THROW(parse_wav(truncated), FormatError);
}

TEST(PadOrTruncate, Rules) {
  Waveform ten = tone(10.0, 200);
  const Waveform a = pad_or_truncate(ten, 8.0);
  ASSERT_EQ(a.samples.size(), 128000u);
  EXPECT_TRUE(std::equal(a.samples.begin(), a.samples.end(), ten.samples.begin()));

  Waveform five = tone(5.0, 200);
  const Waveform b = pad_or_truncate(five, 8.0);
  ASSERT_EQ(b.samples.size(), 128000u);
  EXPECT_TRUE(std::equal(five.samples.begin(), five.samples.end(), b.samples.begin()));
  for (std::size_t i = 80000; i < 128000; ++i) ASSERT_EQ(b.samples[i], 0.0);

  Waveform eight = tone(8.0, 200);
  EXPECT_EQ(pad_or_truncate(eight, 8.0).samples, eight.samples);
  EXPECT_THROW(pad_or_truncate(eight, 0.0), ConfigError);
}

TEST(Framing, ClosedFormCount) {
  EXPECT_EQ(frame_count(128000, 400, 176), 726u);
  Rng r(3);
  for (int i = 0; i < 500; ++i) {
    const std::size_t W = 1 + r.below(500), H = 1 + r.below(300), S = W + r.below(20000);
    std::size_t count = 0;
    for (std::size_t start = 0; start + W <= S; start += H) ++count;
    EXPECT_EQ(frame_count(S, W, H), count);
  }
  EXPECT_THROW(frame_count(100, 400, 176), ShapeError);
}

TEST(Spectrogram, DefaultsGive140By140) {
  const SpectrogramConfig c;
  EXPECT_EQ(c.window_samples(), 400u);
  EXPECT_EQ(c.hop_samples(), 176u);
  EXPECT_EQ(c.fft_bins(), 201u);
  const Tensor frames = frame_spectra(tone(8.0, 1000), c);
  EXPECT_EQ(frames.shape(), (Shape{726, 140}));
  const FeatureMatrix m = spectrogram(tone(8.0, 1000), c);
  EXPECT_EQ(m.data.shape(), (Shape{140, 140}));
  EXPECT_EQ(m.kind, FeatureKind::spectrogram);
  EXPECT_EQ(m.config_hash, c.fingerprint());
}

TEST(Spectrogram, SilenceIsZero) {
  Waveform w;
  w.samples.assign(128000, 0.0);
  const FeatureMatrix m = spectrogram(w, {});
  for (real v : m.data.data()) EXPECT_EQ(v, 0.0);
}

TEST(Spectrogram, ToneLandsInItsBin) {
  // 1 kHz with a 400-point FFT at 16 kHz sits on bin 25
  const Tensor frames = frame_spectra(tone(8.0, 1000), {});
  const real* row = frames.raw() + 100 * 140;
  EXPECT_EQ(std::max_element(row, row + 140) - row, 25);
}

TEST(Spectrogram, DoublingAmplitudeNeverDecreases) {
  Rng r(5);
  Waveform w;
  w.samples.resize(128000);
  for (auto& s : w.samples) s = 0.2 * r.uniform(-1, 1);
  Waveform louder = w;
  for (auto& s : louder.samples) s *= 2;
  const Tensor a = spectrogram(w, {}).data, b = spectrogram(louder, {}).data;
  for (std::size_t i = 0; i < a.numel(); ++i) EXPECT_GE(b[i], a[i]);
  EXPECT_EQ(spectrogram(w, {}).data, a);
}

TEST(Spectrogram, ShapeHoldsAcrossRatesAndDurations) {
  Rng r(6);
  for (int i = 0; i < 12; ++i) {
    SpectrogramConfig c;
    c.sample_rate = static_cast<unsigned>(8000 + r.below(40000));
    c.target_duration = 2.0 + r.uniform(0, 6);
    c.output_rows = 20 + r.below(120);
    c.feature_bins = 10 + r.below(c.fft_bins() - 10);
    Waveform w;
    w.sample_rate = c.sample_rate;
    w.samples.assign(c.target_samples(), 0.1);
    EXPECT_EQ(spectrogram(w, c).data.shape(), (Shape{c.output_rows, c.feature_bins}));
  }
}

TEST(Spectrogram, Rejections) {
  SpectrogramConfig c;
  EXPECT_THROW(spectrogram(tone(8.0, 100, 8000), c), ConfigError);
  EXPECT_THROW(spectrogram(tone(7.0, 100), c), ShapeError);
  c.window_overlap = 0.03;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.feature_bins = 202;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(PoolToShape, RemainderGoesToEarlyGroups) {
  Tensor m({726, 1});
  for (std::size_t i = 0; i < 726; ++i) m[i] = static_cast<real>(i);
  const Tensor p = pool_to_shape(m, 140);
  ASSERT_EQ(p.shape(), (Shape{140, 1}));
  EXPECT_DOUBLE_EQ(p[0], 2.5);          // rows 0..5
  EXPECT_DOUBLE_EQ(p[25], 152.5);       // rows 150..155
  EXPECT_DOUBLE_EQ(p[26], 158.0);       // rows 156..160
  EXPECT_DOUBLE_EQ(p[139], 723.0);      // rows 721..725
}

TEST(PoolToShape, IdentityConstantAndMean) {
  Rng r(7);
  Tensor m({12, 3});
  for (auto& v : m.data()) v = r.uniform(-1, 1);
  EXPECT_EQ(pool_to_shape(m, 12), m);
  const Tensor p = pool_to_shape(m, 4);
  for (std::size_t c = 0; c < 3; ++c) {
    real a = 0, b = 0;
    for (std::size_t i = 0; i < 12; ++i) a += m[i * 3 + c] / 12;
    for (std::size_t i = 0; i < 4; ++i) b += p[i * 3 + c] / 4;
    EXPECT_NEAR(a, b, 1e-5);
  }
  EXPECT_EQ(pool_to_shape(Tensor({9, 2}, 1.5), 4), Tensor({4, 2}, 1.5));
  EXPECT_THROW(pool_to_shape(m, 13), ShapeError);
}

TEST(MatrixFile, RoundTripIsBitExact) {
  TempDir dir;
  Rng r(8);
  Tensor m({727, 512});
  for (auto& v : m.data()) v = static_cast<float>(r.uniform(-4, 4));
  write_feature_matrix(dir / "m.emns", m);
  const FeatureMatrix f = ingest_feature_matrix(dir / "m.emns");
  EXPECT_EQ(f.data.shape(), (Shape{727, 512}));
  EXPECT_EQ(f.data, m);
  EXPECT_EQ(f.kind, FeatureKind::sequence);
  EXPECT_EQ(f.cols(), 512u);
}

TEST(MatrixFile, CorruptionIsDetected) {
  const auto good = encode_matrix(Tensor({2, 3}, 1.0));
  auto bad_magic = good;
  bad_magic[0] = 'X';
  EXPECT_THROW(decode_matrix(bad_magic), FormatError);
  auto bad_version = good;
  bad_version[4] = 2;
  EXPECT_THROW(decode_matrix(bad_version), FormatError);
  auto short_payload = good;
  short_payload.pop_back();
  EXPECT_THROW(decode_matrix(short_payload), FormatError);
  auto long_payload = good;
  long_payload.push_back(0);
  EXPECT_THROW(decode_matrix(long_payload), FormatError);
  auto nan = encode_matrix(Tensor({1, 1}, std::nan("")));
  EXPECT_THROW(decode_matrix(nan), FormatError);
}

TEST(PadFeatures, SingleMatrixUnchanged) {
  const Tensor m({3, 2}, {1, 2, 3, 4, 5, 6});
  const auto p = pad_features_to_max(std::vector<Tensor>{m});
  EXPECT_EQ(p.batch, Tensor({1, 3, 2}, {1, 2, 3, 4, 5, 6}));
  EXPECT_EQ(p.mask, Tensor({1, 3}, 1.0));
}

TEST(PadFeatures, MaskAndMaskedMeans) {
  Rng r(9);
  std::vector<Tensor> ms{Tensor({3, 4}), Tensor({5, 4})};
  for (auto& m : ms)
    for (auto& v : m.data()) v = r.uniform(-1, 1);
  const auto p = pad_features_to_max(ms);
  EXPECT_EQ(p.batch.shape(), (Shape{2, 5, 4}));
  EXPECT_EQ(p.mask, Tensor({2, 5}, {1, 1, 1, 0, 0, 1, 1, 1, 1, 1}));
  for (std::size_t b = 0; b < 2; ++b) {
    for (std::size_t d = 0; d < 4; ++d) {
      real masked = 0, count = 0, direct = 0;
      for (std::size_t t = 0; t < 5; ++t) {
        masked += p.mask[b * 5 + t] * p.batch[(b * 5 + t) * 4 + d];
        count += p.mask[b * 5 + t];
      }
      for (std::size_t t = 0; t < ms[b].dim(0); ++t) direct += ms[b][t * 4 + d];
      EXPECT_NEAR(masked / count, direct / static_cast<real>(ms[b].dim(0)), 1e-12);
    }
  }
  EXPECT_THROW(pad_features_to_max(std::vector<Tensor>{Tensor({2, 3}), Tensor({2, 4})}),
               ShapeError);
}

}  // namespace
}  // namespace emonas::features
