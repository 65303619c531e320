#include "emonas/autodiff/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

#include "emonas/autodiff/random.hpp"
#include "emonas/errors.hpp"

namespace emonas::ad {

namespace {

struct Evaluation {
  real loss;
  std::uint64_t signature;
};

Evaluation evaluate(ParameterStore& store, const LossBuilder& build) {
  Tape tape(&store);
  tape.set_grad_enabled(false);
  Var loss = build(tape);
  return {loss.value().item(), tape.kink_signature()};
}

}  // namespace

GradCheckReport grad_check(ParameterStore& store, const std::vector<ParamId>& params,
                           const LossBuilder& build, const GradCheckOptions& options) {
  if (!(options.epsilon > 0)) throw ConfigError("grad_check epsilon must be positive");
  if (params.empty() || store.numel(params) == 0) {
    throw StateError("grad_check on a degenerate tape: no parameters");
  }
  for (auto id : params) {
    if (store.value(id).first_non_finite() != store.value(id).numel()) {
      throw NumericError("grad_check: parameter '" + store.name(id) + "' is not finite");
    }
  }

  GradientMap analytic;
  std::uint64_t base_signature = 0;
  GradCheckReport report;
  {
    // backward() accumulates into the store; leave the caller's buffers as found
    const auto every = store.all();
    std::vector<Tensor> saved_grads;
    for (auto id : every) saved_grads.push_back(store.grad(id));
    Tape tape(&store);
    Var loss = build(tape);
    base_signature = tape.kink_signature();
    report.base_has_ties = tape.has_ties();
    analytic = tape.backward(loss);
    for (std::size_t k = 0; k < every.size(); ++k) store.grad(every[k]) = saved_grads[k];
  }

  std::vector<std::pair<std::size_t, std::size_t>> probes;
  for (std::size_t p = 0; p < params.size(); ++p) {
    for (std::size_t i = 0; i < store.value(params[p]).numel(); ++i) probes.emplace_back(p, i);
  }
  if (options.max_probes != 0 && probes.size() > options.max_probes) {
    Rng rng(options.seed);
    rng.shuffle(probes.begin(), probes.end());
    probes.resize(options.max_probes);
    std::sort(probes.begin(), probes.end());
  }

  const real eps = options.epsilon;
  for (const auto& [p, i] : probes) {
    const ParamId id = params[p];
    real& slot = store.value(id)[i];
    const real saved = slot;
    slot = saved + eps;
    const Evaluation plus = evaluate(store, build);
    slot = saved - eps;
    const Evaluation minus = evaluate(store, build);
    slot = saved;
    if (plus.signature != base_signature || minus.signature != base_signature) {
      ++report.excluded;
      continue;
    }
    const real numeric = (plus.loss - minus.loss) / (2 * eps);
    const auto it = analytic.find(id);
    const real a = it == analytic.end() ? 0.0 : it->second[i];
    const real denom = std::max({std::abs(a), std::abs(numeric), options.denominator_floor});
    report.max_rel_error = std::max(report.max_rel_error, std::abs(a - numeric) / denom);
    ++report.probes;
  }
  return report;
}

}  // namespace emonas::ad
