#include "emonas/features/matrix.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include "emonas/errors.hpp"

namespace emonas::features {

namespace {

constexpr unsigned char kMagic[4] = {'E', 'M', 'N', 'S'};
constexpr unsigned char kVersion = 1;
constexpr std::size_t kHeader = 4 + 1 + 4 + 4;

void put32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}
std::uint32_t get32(const unsigned char* p) {
  return p[0] | (p[1] << 8) | (p[2] << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

}  // namespace

std::vector<unsigned char> encode_matrix(const Tensor& m) {
  if (m.rank() != 2) throw ShapeError("feature matrix must be 2-D, got " + shape_str(m.shape()));
  std::vector<unsigned char> out(std::begin(kMagic), std::end(kMagic));
  out.push_back(kVersion);
  put32(out, static_cast<std::uint32_t>(m.dim(0)));
  put32(out, static_cast<std::uint32_t>(m.dim(1)));
  out.reserve(kHeader + 4 * m.numel());
  for (real v : m.data()) put32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  return out;
}

Tensor decode_matrix(std::span<const unsigned char> bytes) {
  if (bytes.size() < kHeader || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw FormatError("not an EMNS feature matrix (bad magic)");
  }
  if (bytes[4] != kVersion) {
    throw FormatError("unsupported EMNS version " + std::to_string(bytes[4]));
  }
  const std::uint64_t rows = get32(bytes.data() + 5), cols = get32(bytes.data() + 9);
  const std::uint64_t expected = kHeader + 4 * rows * cols;
  if (bytes.size() != expected) {
    throw FormatError("EMNS header declares " + std::to_string(rows) + "x" +
                      std::to_string(cols) + " values (" + std::to_string(expected) +
                      " bytes) but the file has " + std::to_string(bytes.size()) + " bytes");
  }
  if (rows == 0 || cols == 0) throw FormatError("EMNS matrix is empty");
  Tensor m({static_cast<std::size_t>(rows), static_cast<std::size_t>(cols)});
  const unsigned char* p = bytes.data() + kHeader;
  for (std::size_t i = 0; i < m.numel(); ++i) {
    const float f = std::bit_cast<float>(get32(p + 4 * i));
    if (!std::isfinite(f)) throw FormatError("EMNS value " + std::to_string(i) + " is not finite");
    m[i] = f;
  }
  return m;
}

void write_feature_matrix(const std::filesystem::path& path, const Tensor& matrix) {
  const auto bytes = encode_matrix(matrix);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

FeatureMatrix ingest_feature_matrix(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  FeatureMatrix m;
  try {
    m.data = decode_matrix(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  m.kind = FeatureKind::sequence;
  m.source = path.string();
  return m;
}

PaddedBatch pad_features_to_max(std::span<const Tensor> matrices) {
  if (matrices.empty()) throw ShapeError("no matrices to pad");
  const std::size_t D = matrices[0].rank() == 2 ? matrices[0].dim(1) : 0;
  std::size_t T = 0;
  for (const auto& m : matrices) {
    if (m.rank() != 2 || m.dim(1) != D) {
      throw ShapeError("cannot pad matrices with different column counts (" +
                       shape_str(matrices[0].shape()) + " vs " + shape_str(m.shape()) + ")");
    }
    T = std::max(T, m.dim(0));
  }
  const std::size_t B = matrices.size();
  PaddedBatch out{Tensor({B, T, D}, 0.0), Tensor({B, T}, 0.0), {}};
  for (std::size_t b = 0; b < B; ++b) {
    const Tensor& m = matrices[b];
    std::copy(m.data().begin(), m.data().end(), out.batch.raw() + b * T * D);
    std::fill_n(out.mask.raw() + b * T, m.dim(0), 1.0);
    out.lengths.push_back(m.dim(0));
  }
  return out;
}

}  // namespace emonas::features
