#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "emonas/darts/bilevel.hpp"
#include "emonas/darts/config.hpp"
#include "emonas/darts/genotype.hpp"
#include "emonas/train/dataset.hpp"

namespace emonas::darts {

struct SearchSchedule {
  std::size_t epochs = 50;
  std::size_t batch_size = 16;
  /// Consecutive non-finite steps tolerated before the search aborts.
  std::size_t nonfinite_patience = 3;
  std::uint64_t seed = 0;
  BilevelConfig optimizers{};
};

struct EpochRecord {
  std::size_t epoch = 0;
  real train_loss = 0;
  real val_loss = 0;
  /// softmax(theta) of the normal cell, then the reduction cell, row-major.
  std::vector<real> alpha;
};

struct SearchResult {
  Genotype genotype;
  std::vector<EpochRecord> history;
  std::size_t weight_count = 0;
  std::size_t skipped_steps = 0;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Bilevel search over `config` followed by derivation. Each train batch is
/// paired with the next validation batch (cycling). Throws ConfigError on
/// empty splits and NumericError when more than `nonfinite_patience`
/// consecutive steps fail.
SearchResult search(const train::Dataset& train, const train::Dataset& val,
                    const NetworkConfig& config, const SearchSchedule& schedule,
                    const EpochCallback& on_epoch = {});

/// CSV with columns epoch, L_train, L_val and one column per alpha entry.
std::string history_csv(const std::vector<EpochRecord>& history, const NetworkConfig& config);

}  // namespace emonas::darts
