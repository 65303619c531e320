#include "emonas/rnn/select.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "emonas/errors.hpp"

namespace emonas::rnn {

std::vector<CandidateResult> rank_candidates(std::vector<CandidateResult> results) {
  std::sort(results.begin(), results.end(), [](const CandidateResult& a, const CandidateResult& b) {
    const bool fa = !a.diverged && std::isfinite(a.final_val_loss);
    const bool fb = !b.diverged && std::isfinite(b.final_val_loss);
    if (fa != fb) return fa;
    if (fa && a.final_val_loss != b.final_val_loss) return a.final_val_loss < b.final_val_loss;
    return a.name < b.name;
  });
  return results;
}

SelectionResult select_cell(const CellBank& bank, const CandidateTrainer& trainer) {
  if (bank.empty()) throw ConfigError("cell bank is empty");
  std::vector<CandidateResult> results;
  for (const auto& cell : bank) {
    CandidateResult r = trainer(cell);
    r.name = cell.name();
    results.push_back(std::move(r));
  }
  SelectionResult out{{}, rank_candidates(std::move(results))};
  const auto& top = out.ranking.front();
  if (top.diverged || !std::isfinite(top.final_val_loss)) {
    throw NumericError("training diverged for every candidate cell");
  }
  out.best = top.name;
  return out;
}

TrainedBranch train_rnn_branch(const RnnCellGraph& cell, const train::Dataset& train,
                               const train::Dataset& val, const RnnBranchConfig& config,
                               const train::TrainSchedule& schedule) {
  if (train.empty() || val.empty()) throw ConfigError("cell training needs train and val data");
  if (train.sample_shape().size() != 2) {
    throw ShapeError("sequence samples must be [T,D], got " + shape_str(train.sample_shape()));
  }
  const std::uint64_t seed = derive_seed(schedule.seed, cell.name());
  TrainedBranch out;
  out.model = std::make_unique<RnnBranch>(cell, config, train.sample_shape()[1], seed);
  RnnBranch& net = *out.model;
  train::TrainSchedule s = schedule;
  s.seed = seed;
  auto model = [&net](ad::Tape& t, const train::Batch& b) { return net.forward(t, b); };
  out.report =
      train::train_classifier(net.store(), net.weights(), model, train, val, config.num_classes, s);
  out.summary.name = cell.name();
  out.summary.params = net.weight_count();
  out.summary.diverged = out.report.best_epoch == 0;
  if (!out.summary.diverged) {
    out.summary.final_val_loss = out.report.val_loss[out.report.best_epoch - 1];
    out.summary.best_val_score = out.report.best_val_score;
  }
  return out;
}

SelectionResult select_cell(const CellBank& bank, const train::Dataset& train,
                            const train::Dataset& val, const RnnBranchConfig& config,
                            const train::TrainSchedule& schedule) {
  return select_cell(bank, [&](const RnnCellGraph& cell) {
    return train_rnn_branch(cell, train, val, config, schedule).summary;
  });
}

std::string selection_csv(const SelectionResult& result) {
  std::ostringstream os;
  os.precision(17);
  os << "name,params,final_val_loss\n";
  for (const auto& r : result.ranking) {
    os << r.name << ',' << r.params << ',';
    if (r.diverged) {
      os << "nan";
    } else {
      os << r.final_val_loss;
    }
    os << '\n';
  }
  return os.str();
}

}  // namespace emonas::rnn
