#include "emonas/darts/search.hpp"

#include <sstream>

#include "emonas/autodiff/ops.hpp"
#include "emonas/darts/network.hpp"
#include "emonas/errors.hpp"

namespace emonas::darts {

namespace {

std::vector<real> alpha_snapshot(const SearchNetwork& net) {
  std::vector<real> out;
  for (auto type : {CellType::normal, CellType::reduction}) {
    const Tensor w = edge_weights(net.store().value(net.theta(type)));
    out.insert(out.end(), w.data().begin(), w.data().end());
  }
  return out;
}

}  // namespace

SearchResult search(const train::Dataset& train, const train::Dataset& val,
                    const NetworkConfig& config, const SearchSchedule& schedule,
                    const EpochCallback& on_epoch) {
  if (train.empty() || val.empty()) {
    throw ConfigError("search needs non-empty train and validation splits");
  }
  SearchNetwork net(config, derive_seed(schedule.seed, "network"));
  BilevelState state(net.store(), net.weights(), net.architecture(), schedule.optimizers);
  Rng rng(derive_seed(schedule.seed, "batches"));
  SearchResult result;
  result.weight_count = net.weight_count();

  std::size_t streak = 0;
  for (std::size_t epoch = 1; epoch <= schedule.epochs; ++epoch) {
    const auto train_batches = train::shuffled_batches(train.size(), schedule.batch_size, rng);
    const auto val_batches = train::shuffled_batches(val.size(), schedule.batch_size, rng);
    real train_sum = 0;
    real val_sum = 0;
    std::size_t steps = 0;
    for (std::size_t b = 0; b < train_batches.size(); ++b) {
      const train::Batch tb = train.batch(train_batches[b]);
      const train::Batch vb = val.batch(val_batches[b % val_batches.size()]);
      auto loss_of = [&net](const train::Batch& batch) {
        return [&net, &batch](ad::Tape& tape) {
          return ad::cross_entropy(net.forward(tape, batch.inputs), batch.labels);
        };
      };
      try {
        const StepLosses l = bilevel_step(state, loss_of(tb), loss_of(vb),
                                          "epoch " + std::to_string(epoch) + " batch " +
                                              std::to_string(b));
        train_sum += l.train;
        val_sum += l.val;
        ++steps;
        streak = 0;
      } catch (const NumericError&) {
        ++result.skipped_steps;
        if (++streak > schedule.nonfinite_patience) throw;
      }
    }
    state.next_epoch();
    EpochRecord rec{epoch, steps ? train_sum / static_cast<real>(steps) : real(0),
                    steps ? val_sum / static_cast<real>(steps) : real(0), alpha_snapshot(net)};
    if (on_epoch) on_epoch(rec);
    result.history.push_back(std::move(rec));
  }

  result.genotype = net.derive();
  result.genotype.metadata.seed = schedule.seed;
  result.genotype.metadata.epochs = schedule.epochs;
  if (!result.history.empty()) {
    result.genotype.metadata.final_val_loss = result.history.back().val_loss;
  }
  return result;
}

std::string history_csv(const std::vector<EpochRecord>& history, const NetworkConfig& config) {
  std::ostringstream out;
  out.precision(17);
  out << "epoch,L_train,L_val";
  const std::size_t edges = edge_count(config.num_nodes);
  for (const char* cell : {"normal", "reduction"}) {
    for (std::size_t e = 0; e < edges; ++e) {
      for (auto op : config.ops) {
        out << ",alpha_" << cell << "_e" << e << "_" << space::to_string(op);
      }
    }
  }
  out << "\n";
  for (const auto& r : history) {
    out << r.epoch << "," << r.train_loss << "," << r.val_loss;
    for (real a : r.alpha) out << "," << a;
    out << "\n";
  }
  return out.str();
}

}  // namespace emonas::darts
