#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace emonas {

/// Scalar type of every tensor. Reductions accumulate in this type too.
using real = double;

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape) noexcept;
std::string shape_str(const Shape& shape);

/// Dense row-major n-dimensional array. Value semantics; an optional
/// requires-grad flag marks trainable leaves.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, real fill = 0);
  Tensor(Shape shape, std::vector<real> values);

  static Tensor scalar(real v) { return Tensor({1}, std::vector<real>{v}); }
  static Tensor vector(std::vector<real> values);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<real> data() noexcept { return data_; }
  std::span<const real> data() const noexcept { return data_; }
  real* raw() noexcept { return data_.data(); }
  const real* raw() const noexcept { return data_.data(); }

  real& operator[](std::size_t i) noexcept { return data_[i]; }
  real operator[](std::size_t i) const noexcept { return data_[i]; }

  /// The single value of a one-element tensor.
  real item() const;

  bool requires_grad() const noexcept { return requires_grad_; }
  void set_requires_grad(bool on) noexcept { requires_grad_ = on; }

  Tensor reshaped(Shape shape) const;
  void fill(real v);

  /// Index of the first non-finite entry, or numel() when all are finite.
  std::size_t first_non_finite() const noexcept;

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  Shape shape_;
  std::vector<real> data_;
  bool requires_grad_ = false;
};

}  // namespace emonas
