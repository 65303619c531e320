#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "emonas/autodiff/random.hpp"
#include "emonas/autodiff/tensor.hpp"

namespace emonas::train {

/// One mini-batch. `mask` ([B,T], 1 = real frame) is present for
/// variable-length sequence data.
struct Batch {
  Tensor inputs;
  std::vector<int> labels;
  std::optional<Tensor> mask;
};

/// Fixed-shape labelled samples stored contiguously. Sequence samples may
/// declare how many leading rows are real; the rest is zero padding.
class Dataset {
 public:
  Dataset() = default;
  explicit Dataset(Shape sample_shape);

  /// Throws ShapeError when `values` does not match the sample shape.
  void add(std::string id, std::span<const real> values, int label,
           std::optional<std::size_t> valid_rows = std::nullopt);
  void add(std::string id, const Tensor& sample, int label,
           std::optional<std::size_t> valid_rows = std::nullopt);

  std::size_t size() const noexcept { return labels_.size(); }
  bool empty() const noexcept { return labels_.empty(); }
  const Shape& sample_shape() const noexcept { return sample_shape_; }
  std::size_t sample_numel() const noexcept { return sample_numel_; }
  int label(std::size_t i) const { return labels_.at(i); }
  const std::vector<int>& labels() const noexcept { return labels_; }
  const std::string& id(std::size_t i) const { return ids_.at(i); }
  const std::vector<std::string>& ids() const noexcept { return ids_; }
  std::span<const real> sample(std::size_t i) const;
  bool has_mask() const noexcept { return masked_; }
  std::size_t valid_rows(std::size_t i) const;

  Batch batch(std::span<const std::size_t> indices) const;
  Batch all() const;
  Dataset subset(std::span<const std::size_t> indices) const;

 private:
  Shape sample_shape_;
  std::size_t sample_numel_ = 0;
  std::vector<real> values_;
  std::vector<int> labels_;
  std::vector<std::string> ids_;
  std::vector<std::size_t> rows_;
  bool masked_ = false;
};

/// Shuffled mini-batches covering [0, n) once; the last batch may be short.
std::vector<std::vector<std::size_t>> shuffled_batches(std::size_t n, std::size_t batch_size,
                                                       Rng& rng);
/// In-order mini-batches covering [0, n).
std::vector<std::vector<std::size_t>> ordered_batches(std::size_t n, std::size_t batch_size);

}  // namespace emonas::train
