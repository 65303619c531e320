#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "emonas/autodiff/random.hpp"
#include "emonas/autodiff/tensor.hpp"

namespace emonas::ad {

/// Handle to one trainable tensor inside a ParameterStore.
struct ParamId {
  std::uint32_t index = 0;
  friend auto operator<=>(const ParamId&, const ParamId&) = default;
};

/// Owns trainable tensors and their gradient accumulators. Single-writer:
/// one training session per store.
class ParameterStore {
 public:
  ParamId add(std::string name, Tensor init);
  /// Uniform in [-1/sqrt(fan_in), +1/sqrt(fan_in)].
  ParamId add_uniform(std::string name, Shape shape, std::size_t fan_in, Rng& rng);
  ParamId add_zeros(std::string name, Shape shape);

  std::size_t size() const noexcept { return values_.size(); }
  const std::string& name(ParamId id) const { return names_.at(id.index); }
  Tensor& value(ParamId id) { return values_.at(id.index); }
  const Tensor& value(ParamId id) const { return values_.at(id.index); }
  Tensor& grad(ParamId id) { return grads_.at(id.index); }
  const Tensor& grad(ParamId id) const { return grads_.at(id.index); }

  void zero_grad();
  void zero_grad(std::span<const ParamId> ids);

  /// Total number of scalar entries over `ids`.
  std::size_t numel(std::span<const ParamId> ids) const;
  std::size_t numel() const;

  std::vector<ParamId> all() const;

 private:
  std::vector<std::string> names_;
  std::vector<Tensor> values_;
  std::vector<Tensor> grads_;
};

}  // namespace emonas::ad
