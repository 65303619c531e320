#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "emonas/rnn/branch.hpp"
#include "emonas/train/trainer.hpp"

namespace emonas::rnn {

struct CandidateResult {
  std::string name;
  std::size_t params = 0;
  /// Validation loss of the retained weights.
  real final_val_loss = 0;
  real best_val_score = 0;
  bool diverged = false;
};

struct SelectionResult {
  std::string best;
  /// Best first: finished runs by ascending loss, ties by name; diverged last.
  std::vector<CandidateResult> ranking;
};

using CandidateTrainer = std::function<CandidateResult(const RnnCellGraph&)>;

/// Orders candidates by the lowest-validation-loss rule.
std::vector<CandidateResult> rank_candidates(std::vector<CandidateResult> results);

/// Runs `trainer` on every cell and keeps the minimiser. Throws ConfigError
/// on an empty bank and NumericError when every candidate diverged.
SelectionResult select_cell(const CellBank& bank, const CandidateTrainer& trainer);

struct TrainedBranch {
  std::unique_ptr<RnnBranch> model;
  train::TrainReport report;
  CandidateResult summary;
};

/// Trains one branch with `cell`. The seed is derived from schedule.seed and
/// the cell name, so results do not depend on bank order.
TrainedBranch train_rnn_branch(const RnnCellGraph& cell, const train::Dataset& train,
                               const train::Dataset& val, const RnnBranchConfig& config,
                               const train::TrainSchedule& schedule);

/// Trains every candidate independently and selects by final validation
/// loss. Throws ConfigError on empty splits.
SelectionResult select_cell(const CellBank& bank, const train::Dataset& train,
                            const train::Dataset& val, const RnnBranchConfig& config,
                            const train::TrainSchedule& schedule);

/// name,params,final_val_loss in ranking order.
std::string selection_csv(const SelectionResult& result);

}  // namespace emonas::rnn
