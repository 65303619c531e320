#include "emonas/autodiff/parameters.hpp"

#include <cmath>

#include "emonas/errors.hpp"

namespace emonas::ad {

ParamId ParameterStore::add(std::string name, Tensor init) {
  if (init.first_non_finite() != init.numel()) {
    throw NumericError("parameter '" + name + "' initialised with non-finite values");
  }
  init.set_requires_grad(true);
  const ParamId id{static_cast<std::uint32_t>(values_.size())};
  grads_.emplace_back(init.shape(), 0.0);
  values_.push_back(std::move(init));
  names_.push_back(std::move(name));
  return id;
}

ParamId ParameterStore::add_uniform(std::string name, Shape shape, std::size_t fan_in, Rng& rng) {
  if (fan_in == 0) throw ConfigError("fan_in must be positive for '" + name + "'");
  Tensor t(std::move(shape));
  const real bound = 1.0 / std::sqrt(static_cast<real>(fan_in));
  for (auto& v : t.data()) v = rng.uniform(-bound, bound);
  return add(std::move(name), std::move(t));
}

ParamId ParameterStore::add_zeros(std::string name, Shape shape) {
  return add(std::move(name), Tensor(std::move(shape)));
}

void ParameterStore::zero_grad() {
  for (auto& g : grads_) g.fill(0);
}

void ParameterStore::zero_grad(std::span<const ParamId> ids) {
  for (auto id : ids) grads_.at(id.index).fill(0);
}

std::size_t ParameterStore::numel(std::span<const ParamId> ids) const {
  std::size_t n = 0;
  for (auto id : ids) n += values_.at(id.index).numel();
  return n;
}

std::size_t ParameterStore::numel() const {
  std::size_t n = 0;
  for (const auto& v : values_) n += v.numel();
  return n;
}

std::vector<ParamId> ParameterStore::all() const {
  std::vector<ParamId> ids(values_.size());
  for (std::uint32_t i = 0; i < ids.size(); ++i) ids[i] = ParamId{i};
  return ids;
}

}  // namespace emonas::ad
