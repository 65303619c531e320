#include "emonas/train/trainer.hpp"

#include <algorithm>
#include <optional>
#include <variant>

#include "emonas/autodiff/ops.hpp"
#include "emonas/errors.hpp"
#include "emonas/harness/metrics.hpp"

namespace emonas::train {

std::vector<Tensor> snapshot(const ad::ParameterStore& store,
                             const std::vector<ad::ParamId>& params) {
  std::vector<Tensor> out;
  out.reserve(params.size());
  for (auto id : params) out.push_back(store.value(id));
  return out;
}

void restore(ad::ParameterStore& store, const std::vector<ad::ParamId>& params,
             const std::vector<Tensor>& values) {
  for (std::size_t i = 0; i < params.size(); ++i) store.value(params[i]) = values.at(i);
}

Evaluation evaluate_model(ad::ParameterStore& store, const Model& model, const Dataset& data,
                          std::size_t batch_size) {
  if (data.empty()) throw ConfigError("cannot evaluate on an empty split");
  Evaluation ev;
  std::vector<real> probs;
  real loss_sum = 0;
  std::size_t classes = 0;
  for (const auto& idx : ordered_batches(data.size(), batch_size)) {
    const Batch b = data.batch(idx);
    ad::Tape tape(&store);
    tape.set_grad_enabled(false);
    ad::Var logits = model(tape, b);
    loss_sum += ad::cross_entropy(logits, b.labels).value().item() * static_cast<real>(idx.size());
    const Tensor p = ad::softmax(logits).value();
    classes = p.shape()[1];
    probs.insert(probs.end(), p.data().begin(), p.data().end());
    for (std::size_t r = 0; r < idx.size(); ++r) {
      const real* row = p.raw() + r * classes;
      ev.predictions.push_back(static_cast<int>(std::max_element(row, row + classes) - row));
    }
  }
  ev.probabilities = Tensor({data.size(), classes}, std::move(probs));
  ev.loss = loss_sum / static_cast<real>(data.size());
  return ev;
}

TrainReport train_classifier(ad::ParameterStore& store, const std::vector<ad::ParamId>& params,
                             const Model& model, const Dataset& train, const Dataset& val,
                             std::size_t num_classes, const TrainSchedule& schedule) {
  if (train.empty() || val.empty()) throw ConfigError("training needs non-empty train and val");
  if (params.empty()) throw ConfigError("nothing to train");
  std::variant<ad::Sgd, ad::Adam> opt =
      schedule.optimizer == OptimizerKind::sgd
          ? std::variant<ad::Sgd, ad::Adam>(ad::Sgd(params, schedule.sgd))
          : std::variant<ad::Sgd, ad::Adam>(ad::Adam(params, schedule.adam));
  Rng rng(derive_seed(schedule.seed, "batches"));
  TrainReport report;
  std::optional<std::vector<Tensor>> best;

  for (std::size_t epoch = 1; epoch <= schedule.epochs; ++epoch) {
    real loss_sum = 0;
    try {
      for (const auto& idx : shuffled_batches(train.size(), schedule.batch_size, rng)) {
        const Batch b = train.batch(idx);
        store.zero_grad(params);
        ad::Tape tape(&store);
        ad::Var loss = ad::cross_entropy(model(tape, b), b.labels);
        loss_sum += loss.value().item() * static_cast<real>(idx.size());
        tape.backward(loss);
        std::visit([&](auto& o) { o.step(store); }, opt);
      }
    } catch (const NumericError&) {
      report.diverged = true;
      break;
    }
    Evaluation ev;
    try {
      ev = evaluate_model(store, model, val);
    } catch (const NumericError&) {
      report.diverged = true;
      break;
    }
    const real score = harness::present_class_recall(ev.predictions, val.labels(), num_classes);
    report.train_loss.push_back(loss_sum / static_cast<real>(train.size()));
    report.val_loss.push_back(ev.loss);
    report.val_score.push_back(score);
    // ties on the score go to the lower validation loss
    const bool better = report.best_epoch == 0 || score > report.best_val_score ||
                        (score == report.best_val_score && ev.loss < report.val_loss[report.best_epoch - 1]);
    if (better) {
      report.best_epoch = epoch;
      report.best_val_score = score;
      if (schedule.keep_best) best = snapshot(store, params);
    }
  }
  if (schedule.keep_best && best) restore(store, params, *best);
  store.zero_grad(params);
  return report;
}

}  // namespace emonas::train
