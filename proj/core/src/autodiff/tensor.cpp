#include "emonas/autodiff/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "emonas/errors.hpp"

namespace emonas {

std::size_t shape_numel(const Shape& shape) noexcept {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace {
void check_shape(const Shape& shape) {
  if (shape.empty()) throw ShapeError("tensor shape must have at least one dimension");
  if (std::any_of(shape.begin(), shape.end(), [](std::size_t d) { return d == 0; })) {
    throw ShapeError("tensor dimensions must be positive, got " + shape_str(shape));
  }
}
}  // namespace

Tensor::Tensor(Shape shape, real fill) : shape_(std::move(shape)) {
  check_shape(shape_);
  data_.assign(shape_numel(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<real> values)
    : shape_(std::move(shape)), data_(std::move(values)) {
  check_shape(shape_);
  if (shape_numel(shape_) != data_.size()) {
    throw ShapeError("shape " + shape_str(shape_) + " holds " +
                     std::to_string(shape_numel(shape_)) + " values, got " +
                     std::to_string(data_.size()));
  }
}

Tensor Tensor::vector(std::vector<real> values) {
  const auto n = values.size();
  return Tensor({n}, std::move(values));
}

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= shape_.size()) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for " + shape_str(shape_));
  }
  return shape_[axis];
}

real Tensor::item() const {
  if (data_.size() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape_));
  return data_[0];
}

Tensor Tensor::reshaped(Shape shape) const {
  Tensor out(std::move(shape), data_);
  out.requires_grad_ = requires_grad_;
  return out;
}

void Tensor::fill(real v) { std::fill(data_.begin(), data_.end(), v); }

std::size_t Tensor::first_non_finite() const noexcept {
  for (std::size_t i = 0; i < data_.size(); ++i) {
    if (!std::isfinite(data_[i])) return i;
  }
  return data_.size();
}

}  // namespace emonas
