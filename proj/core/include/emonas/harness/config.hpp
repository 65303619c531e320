#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "emonas/darts/config.hpp"
#include "emonas/darts/search.hpp"
#include "emonas/features/spectrogram.hpp"
#include "emonas/fusion/fusion.hpp"
#include "emonas/harness/synth.hpp"
#include "emonas/rnn/branch.hpp"
#include "emonas/train/trainer.hpp"

namespace emonas::harness {

/// Everything a run depends on. Defaults follow the published setup; the
/// desk profile in configs/desk.conf shrinks the schedules.
struct PipelineConfig {
  std::uint64_t seed = 0;
  /// Fold indices to run; empty runs every fold.
  std::vector<std::size_t> folds;

  SynthConfig synth;
  features::SpectrogramConfig spectrogram;
  /// Standardise spectrogram inputs with the train split's mean and std.
  bool standardize = true;

  darts::NetworkConfig network;
  darts::SearchSchedule search;
  /// Retraining of the derived network (best-on-validation checkpoint).
  train::TrainSchedule retrain{.epochs = 50, .optimizer = train::OptimizerKind::sgd};

  rnn::RnnBranchConfig rnn;
  train::TrainSchedule rnn_schedule{.epochs = 50, .optimizer = train::OptimizerKind::adam};
  /// Cell bank file; empty uses the built-in bank.
  std::filesystem::path cell_bank;

  fusion::FusionSchedule fusion;
};

using KeyValues = std::map<std::string, std::string, std::less<>>;

/// Parses `key = value` lines. Blank lines and lines starting with '#' are
/// ignored. Throws FormatError naming the line on a missing '=', an empty
/// key or a repeated key.
KeyValues parse_key_values(std::string_view text);
KeyValues read_key_values(const std::filesystem::path& path);

/// Parses one `key=value` override.
std::pair<std::string, std::string> parse_override(std::string_view text);

/// Applies keys in order. Throws ConfigError on an unknown key or a value
/// that does not parse; the configuration is validated afterwards.
void apply(PipelineConfig& config, const KeyValues& values);

/// Every key with its resolved value, one `key = value` line each, sorted.
/// Feeding the text back through parse/apply reproduces the configuration.
std::string to_text(const PipelineConfig& config);

/// Documented keys, sorted.
std::vector<std::string> config_keys();

/// Cross-field checks. Throws ConfigError.
void validate(const PipelineConfig& config);

}  // namespace emonas::harness
