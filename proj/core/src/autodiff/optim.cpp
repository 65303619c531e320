#include "emonas/autodiff/optim.hpp"

#include <cmath>
#include <limits>

#include "emonas/errors.hpp"

namespace emonas::ad {

namespace {
void check_slot(const ParameterStore& store, ParamId id, const Tensor& slot) {
  if (store.value(id).shape() != slot.shape() || store.grad(id).shape() != slot.shape()) {
    throw ShapeError("optimizer slot " + shape_str(slot.shape()) + " does not match parameter '" +
                     store.name(id) + "' " + shape_str(store.value(id).shape()));
  }
}
}  // namespace

Sgd::Sgd(std::vector<ParamId> params, SgdOptions options)
    : params_(std::move(params)), options_(options) {}

void Sgd::step(ParameterStore& store) {
  if (velocity_.empty()) {
    velocity_.reserve(params_.size());
    for (auto id : params_) velocity_.emplace_back(store.value(id).shape(), 0.0);
  }
  for (std::size_t k = 0; k < params_.size(); ++k) {
    const ParamId id = params_[k];
    Tensor& v = velocity_[k];
    check_slot(store, id, v);
    auto p = store.value(id).data();
    auto g = store.grad(id).data();
    auto vel = v.data();
    for (std::size_t i = 0; i < p.size(); ++i) {
      vel[i] = options_.momentum * vel[i] + g[i] + options_.weight_decay * p[i];
      p[i] -= options_.lr * vel[i];
    }
  }
}

Adam::Adam(std::vector<ParamId> params, AdamOptions options)
    : params_(std::move(params)), options_(options) {}

void Adam::step(ParameterStore& store) {
  if (step_count_ == std::numeric_limits<std::uint64_t>::max()) {
    throw StateError("adam step counter overflow");
  }
  if (m_.empty()) {
    for (auto id : params_) {
      m_.emplace_back(store.value(id).shape(), 0.0);
      v_.emplace_back(store.value(id).shape(), 0.0);
    }
  }
  ++step_count_;
  const real t = static_cast<real>(step_count_);
  const real bc1 = 1.0 - std::pow(options_.beta1, t);
  const real bc2 = 1.0 - std::pow(options_.beta2, t);
  for (std::size_t k = 0; k < params_.size(); ++k) {
    const ParamId id = params_[k];
    check_slot(store, id, m_[k]);
    auto p = store.value(id).data();
    auto g = store.grad(id).data();
    auto m = m_[k].data();
    auto v = v_[k].data();
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = options_.beta1 * m[i] + (1.0 - options_.beta1) * g[i];
      v[i] = options_.beta2 * v[i] + (1.0 - options_.beta2) * g[i] * g[i];
      const real mhat = m[i] / bc1;
      const real vhat = v[i] / bc2;
      p[i] -= options_.lr * mhat / (std::sqrt(vhat) + options_.epsilon);
    }
  }
}

}  // namespace emonas::ad
