#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "emonas/autodiff/tensor.hpp"

namespace emonas::features {

enum class FeatureKind { spectrogram, sequence };

/// A 2-D feature map, rows x cols, row-major (time x feature).
struct FeatureMatrix {
  Tensor data;
  FeatureKind kind = FeatureKind::sequence;
  std::string source;
  /// Fingerprint of the extraction settings; empty for ingested files.
  std::string config_hash;

  std::size_t rows() const { return data.dim(0); }
  std::size_t cols() const { return data.dim(1); }
};

/// "EMNS", version byte 1, u32 rows, u32 cols, rows*cols float32 values,
/// all little-endian, row-major.
std::vector<unsigned char> encode_matrix(const Tensor& matrix);
/// Throws FormatError on a bad magic or version, a payload whose length
/// does not match the header, or non-finite values.
Tensor decode_matrix(std::span<const unsigned char> bytes);

void write_feature_matrix(const std::filesystem::path& path, const Tensor& matrix);
/// Loads a sequence matrix (kind = sequence, source = path).
FeatureMatrix ingest_feature_matrix(const std::filesystem::path& path);

struct PaddedBatch {
  Tensor batch;  // [B, T_max, D]
  Tensor mask;   // [B, T_max], 1 = real frame
  std::vector<std::size_t> lengths;
};

/// Zero-pads every matrix to the longest one. Throws ShapeError on mixed
/// column counts or an empty list.
PaddedBatch pad_features_to_max(std::span<const Tensor> matrices);

}  // namespace emonas::features
