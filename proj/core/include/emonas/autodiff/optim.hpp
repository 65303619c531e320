#pragma once

#include <cstdint>
#include <vector>

#include "emonas/autodiff/parameters.hpp"

namespace emonas::ad {

/// Weight optimiser for the relaxed network and derived-network retraining.
struct SgdOptions {
  real lr = 0.025;
  real momentum = 0.9;
  real weight_decay = 3e-4;
};

struct AdamOptions {
  real lr = 1e-3;
  real beta1 = 0.9;
  real beta2 = 0.999;
  real epsilon = 1e-8;
};

/// Learning rate for architecture parameters during search.
inline constexpr real kArchitectureAdamLr = 3e-4;
/// Learning rate for the recurrent branch and the fusion network.
inline constexpr real kTrainerAdamLr = 1e-3;

/// v <- momentum*v + grad + weight_decay*param; param <- param - lr*v
class Sgd {
 public:
  Sgd(std::vector<ParamId> params, SgdOptions options = {});

  void step(ParameterStore& store);
  const SgdOptions& options() const noexcept { return options_; }
  void set_lr(real lr) noexcept { options_.lr = lr; }
  const std::vector<ParamId>& params() const noexcept { return params_; }

 private:
  std::vector<ParamId> params_;
  SgdOptions options_;
  std::vector<Tensor> velocity_;
};

/// Bias-corrected Adam.
class Adam {
 public:
  Adam(std::vector<ParamId> params, AdamOptions options = {});

  void step(ParameterStore& store);
  std::uint64_t step_count() const noexcept { return step_count_; }
  const AdamOptions& options() const noexcept { return options_; }
  const std::vector<ParamId>& params() const noexcept { return params_; }

 private:
  std::vector<ParamId> params_;
  AdamOptions options_;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
  std::uint64_t step_count_ = 0;
};

}  // namespace emonas::ad
