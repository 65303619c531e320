#pragma once

#include <cstddef>
#include <functional>
#include <string_view>
#include <vector>

#include "emonas/autodiff/optim.hpp"
#include "emonas/autodiff/tape.hpp"

namespace emonas::darts {

struct BilevelConfig {
  ad::SgdOptions weights{};
  ad::AdamOptions architecture{.lr = ad::kArchitectureAdamLr};
};

struct StepLosses {
  real train = 0;
  real val = 0;
};

using BatchLoss = std::function<ad::Var(ad::Tape&)>;

class BilevelState;

/// One alternating step: SGD on omega with grad L_train at the current
/// alpha, then Adam on alpha with grad L_val at the updated omega
/// (first-order). Returns both losses as evaluated before their update.
/// A non-finite value rolls back the step and throws NumericError naming
/// `batch_label`.
StepLosses bilevel_step(BilevelState& state, const BatchLoss& train_loss,
                        const BatchLoss& val_loss, std::string_view batch_label = {});

/// Optimiser state of a search: SGD over the network weights (omega), Adam
/// over the architecture parameters (alpha). The two sets are disjoint.
class BilevelState {
 public:
  BilevelState(ad::ParameterStore& store, std::vector<ad::ParamId> omega,
               std::vector<ad::ParamId> alpha, const BilevelConfig& config = {});

  ad::ParameterStore& store() noexcept { return *store_; }
  const std::vector<ad::ParamId>& omega() const noexcept { return omega_; }
  const std::vector<ad::ParamId>& alpha() const noexcept { return alpha_; }
  const ad::Sgd& weight_optimizer() const noexcept { return sgd_; }
  const ad::Adam& architecture_optimizer() const noexcept { return adam_; }
  std::size_t epoch() const noexcept { return epoch_; }
  void next_epoch() noexcept { ++epoch_; }

 private:
  friend StepLosses bilevel_step(BilevelState&, const BatchLoss&, const BatchLoss&,
                                 std::string_view);

  ad::ParameterStore* store_;
  std::vector<ad::ParamId> omega_;
  std::vector<ad::ParamId> alpha_;
  ad::Sgd sgd_;
  ad::Adam adam_;
  std::size_t epoch_ = 0;
};

}  // namespace emonas::darts
