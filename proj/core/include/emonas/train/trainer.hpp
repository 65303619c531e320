#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <vector>

#include "emonas/autodiff/optim.hpp"
#include "emonas/autodiff/tape.hpp"
#include "emonas/train/dataset.hpp"

namespace emonas::train {

/// Builds logits [B,classes] for a batch on the given tape.
using Model = std::function<ad::Var(ad::Tape&, const Batch&)>;

enum class OptimizerKind { sgd, adam };

struct TrainSchedule {
  std::size_t epochs = 50;
  std::size_t batch_size = 16;
  std::uint64_t seed = 0;
  OptimizerKind optimizer = OptimizerKind::adam;
  ad::SgdOptions sgd{};
  ad::AdamOptions adam{};
  /// Restore the weights of the epoch with the best validation score; ties
  /// go to the lower validation loss.
  bool keep_best = true;
};

struct TrainReport {
  std::vector<real> train_loss;
  std::vector<real> val_loss;
  /// Mean recall over the classes present in the validation split.
  std::vector<real> val_score;
  /// 1-based epoch whose weights were kept; 0 when no epoch completed.
  std::size_t best_epoch = 0;
  real best_val_score = 0;
  bool diverged = false;
  real final_val_loss() const { return val_loss.empty() ? real(0) : val_loss.back(); }
};

/// Mini-batch cross-entropy training of `params`. A non-finite loss stops
/// training and marks the report diverged; the best checkpoint so far is
/// kept.
TrainReport train_classifier(ad::ParameterStore& store, const std::vector<ad::ParamId>& params,
                             const Model& model, const Dataset& train, const Dataset& val,
                             std::size_t num_classes, const TrainSchedule& schedule);

struct Evaluation {
  std::vector<int> predictions;
  /// Softmax rows [N,classes].
  Tensor probabilities;
  real loss = 0;
};

/// Inference over a whole dataset in order.
Evaluation evaluate_model(ad::ParameterStore& store, const Model& model, const Dataset& data,
                          std::size_t batch_size = 64);

std::vector<Tensor> snapshot(const ad::ParameterStore& store,
                             const std::vector<ad::ParamId>& params);
void restore(ad::ParameterStore& store, const std::vector<ad::ParamId>& params,
             const std::vector<Tensor>& values);

}  // namespace emonas::train
