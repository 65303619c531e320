#include "emonas/darts/bilevel.hpp"

#include <algorithm>
#include <string>

#include "emonas/errors.hpp"

namespace emonas::darts {

BilevelState::BilevelState(ad::ParameterStore& store, std::vector<ad::ParamId> omega,
                           std::vector<ad::ParamId> alpha, const BilevelConfig& config)
    : store_(&store),
      omega_(std::move(omega)),
      alpha_(std::move(alpha)),
      sgd_(omega_, config.weights),
      adam_(alpha_, config.architecture) {
  if (alpha_.empty()) throw ConfigError("bilevel search without architecture parameters");
  auto a = alpha_;
  auto w = omega_;
  std::sort(a.begin(), a.end());
  std::sort(w.begin(), w.end());
  std::vector<ad::ParamId> both;
  std::set_intersection(a.begin(), a.end(), w.begin(), w.end(), std::back_inserter(both));
  if (!both.empty()) {
    throw ConfigError("parameter '" + store.name(both.front()) +
                      "' is both a weight and an architecture parameter");
  }
}

StepLosses bilevel_step(BilevelState& state, const BatchLoss& train_loss,
                        const BatchLoss& val_loss, std::string_view batch_label) {
  ad::ParameterStore& store = state.store();
  const auto saved_omega = [&] {
    std::vector<Tensor> v;
    for (auto id : state.omega_) v.push_back(store.value(id));
    return v;
  }();
  const ad::Sgd saved_sgd = state.sgd_;
  StepLosses out;
  try {
    {
      store.zero_grad(state.omega_);
      ad::Tape tape(&store);
      ad::Var loss = train_loss(tape);
      out.train = loss.value().item();
      tape.backward(loss);
      state.sgd_.step(store);
      store.zero_grad(state.alpha_);
    }
    {
      store.zero_grad(state.alpha_);
      ad::Tape tape(&store);
      ad::Var loss = val_loss(tape);
      out.val = loss.value().item();
      tape.backward(loss);
      state.adam_.step(store);
      store.zero_grad(state.omega_);
    }
  } catch (const NumericError& e) {
    for (std::size_t i = 0; i < state.omega_.size(); ++i) {
      store.value(state.omega_[i]) = saved_omega[i];
    }
    state.sgd_ = saved_sgd;
    store.zero_grad(state.omega_);
    store.zero_grad(state.alpha_);
    throw NumericError("non-finite loss on batch '" + std::string(batch_label) + "': " +
                       e.what());
  }
  return out;
}

}  // namespace emonas::darts
