#include "emonas/train/dataset.hpp"

#include <algorithm>
#include <numeric>

#include "emonas/errors.hpp"

namespace emonas::train {

Dataset::Dataset(Shape sample_shape)
    : sample_shape_(std::move(sample_shape)), sample_numel_(shape_numel(sample_shape_)) {
  if (sample_shape_.empty() || sample_numel_ == 0) {
    throw ShapeError("dataset sample shape " + shape_str(sample_shape_) + " is empty");
  }
}

void Dataset::add(std::string id, std::span<const real> values, int label,
                  std::optional<std::size_t> valid_rows) {
  if (values.size() != sample_numel_) {
    throw ShapeError("sample '" + id + "' has " + std::to_string(values.size()) +
                     " values, expected " + shape_str(sample_shape_));
  }
  if (label < 0) throw ConfigError("sample '" + id + "' has a negative label");
  if (valid_rows) {
    if (*valid_rows == 0 || *valid_rows > sample_shape_[0]) {
      throw ShapeError("sample '" + id + "' declares " + std::to_string(*valid_rows) +
                       " valid rows out of " + std::to_string(sample_shape_[0]));
    }
    if (!masked_ && !labels_.empty()) {
      throw ConfigError("cannot mix masked and unmasked samples");
    }
    masked_ = true;
  } else if (masked_) {
    throw ConfigError("cannot mix masked and unmasked samples");
  }
  values_.insert(values_.end(), values.begin(), values.end());
  labels_.push_back(label);
  ids_.push_back(std::move(id));
  rows_.push_back(valid_rows.value_or(sample_shape_[0]));
}

void Dataset::add(std::string id, const Tensor& sample, int label,
                  std::optional<std::size_t> valid_rows) {
  add(std::move(id), sample.data(), label, valid_rows);
}

std::span<const real> Dataset::sample(std::size_t i) const {
  if (i >= size()) throw ShapeError("sample index out of range");
  return {values_.data() + i * sample_numel_, sample_numel_};
}

std::size_t Dataset::valid_rows(std::size_t i) const { return rows_.at(i); }

Batch Dataset::batch(std::span<const std::size_t> indices) const {
  if (indices.empty()) throw ShapeError("empty batch");
  Shape shape{indices.size()};
  shape.insert(shape.end(), sample_shape_.begin(), sample_shape_.end());
  Batch b{Tensor(shape), {}, std::nullopt};
  real* out = b.inputs.raw();
  for (std::size_t k = 0; k < indices.size(); ++k) {
    const auto s = sample(indices[k]);
    std::copy(s.begin(), s.end(), out + k * sample_numel_);
    b.labels.push_back(labels_[indices[k]]);
  }
  if (masked_) {
    const std::size_t t = sample_shape_[0];
    Tensor mask({indices.size(), t}, 0.0);
    for (std::size_t k = 0; k < indices.size(); ++k) {
      std::fill_n(mask.raw() + k * t, rows_[indices[k]], 1.0);
    }
    b.mask = std::move(mask);
  }
  return b;
}

Batch Dataset::all() const {
  std::vector<std::size_t> idx(size());
  std::iota(idx.begin(), idx.end(), 0);
  return batch(idx);
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  Dataset out(sample_shape_);
  for (auto i : indices) {
    out.add(ids_.at(i), sample(i), labels_[i],
            masked_ ? std::optional<std::size_t>(rows_[i]) : std::nullopt);
  }
  return out;
}

std::vector<std::vector<std::size_t>> shuffled_batches(std::size_t n, std::size_t batch_size,
                                                       Rng& rng) {
  if (batch_size == 0) throw ConfigError("batch size must be positive");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(order.begin(), order.end());
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < n; i += batch_size) {
    out.emplace_back(order.begin() + i, order.begin() + std::min(n, i + batch_size));
  }
  return out;
}

std::vector<std::vector<std::size_t>> ordered_batches(std::size_t n, std::size_t batch_size) {
  if (batch_size == 0) throw ConfigError("batch size must be positive");
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < n; i += batch_size) {
    std::vector<std::size_t> b(std::min(n, i + batch_size) - i);
    std::iota(b.begin(), b.end(), i);
    out.push_back(std::move(b));
  }
  return out;
}

}  // namespace emonas::train
