#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <vector>

#include "emonas/autodiff/tape.hpp"

namespace emonas::ad {

struct GradCheckOptions {
  real epsilon = 1e-4;
  /// 0 probes every entry of every parameter; otherwise a seeded sample.
  std::size_t max_probes = 0;
  std::uint64_t seed = 0;
  /// Relative error is |a-n| / max(|a|, |n|, floor).
  real denominator_floor = 1e-3;
};

struct GradCheckReport {
  real max_rel_error = 0;
  std::size_t probes = 0;
  /// Probes skipped because the perturbation crossed a non-differentiable
  /// point (pooling tie, activation kink).
  std::size_t excluded = 0;
  bool base_has_ties = false;
};

using LossBuilder = std::function<Var(Tape&)>;

/// Compares backward() against central finite differences over `params`.
/// `build` must rebuild the same scalar loss on a fresh tape every call.
GradCheckReport grad_check(ParameterStore& store, const std::vector<ParamId>& params,
                           const LossBuilder& build, const GradCheckOptions& options = {});

}  // namespace emonas::ad
