#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "emonas/darts/genotype.hpp"
#include "emonas/darts/search.hpp"
#include "emonas/fusion/fusion.hpp"
#include "emonas/harness/config.hpp"
#include "emonas/harness/metrics.hpp"
#include "emonas/harness/records.hpp"
#include "emonas/harness/synth.hpp"
#include "emonas/rnn/cell_graph.hpp"
#include "emonas/rnn/select.hpp"

namespace emonas::harness {

/// Extracted inputs of both branches, keyed by utterance id.
struct FeatureSet {
  /// [output_rows, feature_bins] per utterance.
  std::map<std::string, Tensor> spectrogram;
  /// [T, D] per utterance; T varies.
  std::map<std::string, Tensor> sequence;
  std::map<std::string, int> labels;
};

/// Spectrograms from each record's WAV and sequence matrices from its EMNS
/// file. Throws IoError/FormatError naming the record on failure.
FeatureSet extract_features(const std::vector<UtteranceRecord>& records,
                            const features::SpectrogramConfig& config);
/// Same, from in-memory synthetic utterances.
FeatureSet extract_features(const std::vector<SynthUtterance>& utterances,
                            const features::SpectrogramConfig& config);

/// Mean and standard deviation of every spectrogram value over `ids`.
struct Standardizer {
  real mean = 0;
  real scale = 1;
};
Standardizer fit_standardizer(const FeatureSet& features, const std::vector<std::string>& ids);

/// [1, rows, cols] samples, optionally standardised. Throws ConfigError
/// naming a missing id.
train::Dataset spectrogram_dataset(const FeatureSet& features, const std::vector<std::string>& ids,
                                   const std::optional<Standardizer>& standardizer = {});
/// [T_max, D] samples zero-padded to the longest sequence of `ids` (or
/// `max_rows` when larger) with their valid row counts.
train::Dataset sequence_dataset(const FeatureSet& features, const std::vector<std::string>& ids,
                                std::size_t max_rows = 0);

/// Longest sequence in the feature set.
std::size_t max_sequence_rows(const FeatureSet& features);

/// Class probabilities of one branch on the validation and test splits.
struct BranchOutputs {
  std::vector<std::string> val_ids;
  Tensor val_probs;
  std::vector<int> val_labels;
  std::vector<std::string> test_ids;
  Tensor test_probs;
  std::vector<int> test_labels;
  MetricsReport test_metrics;
  train::TrainReport report;
};

struct SpectrogramRun {
  darts::SearchResult search;
  BranchOutputs outputs;
};

struct SequenceRun {
  rnn::SelectionResult selection;
  /// The winning cell.
  std::optional<rnn::RnnCellGraph> cell;
  BranchOutputs outputs;
};

struct FusionRun {
  std::vector<fusion::BranchOutputs> test_rows;
  Tensor test_probs;
  MetricsReport test_metrics;
  train::TrainReport report;
};

struct FoldResult {
  std::size_t fold = 0;
  std::string session;
  SpectrogramRun spectrogram;
  SequenceRun sequence;
  FusionRun fused;
};

/// Per-job seeds, all split from the root seed.
std::uint64_t job_seed(std::uint64_t root, std::size_t fold, std::string_view job);

/// Bi-level search on the fold's train/val splits; the result holds the
/// derived genotype.
darts::SearchResult search_spectrogram(const FeatureSet& features, const Fold& fold,
                                       std::size_t fold_index, const PipelineConfig& config);
/// Search on the fold's train/val splits, derive, and retrain.
SpectrogramRun run_spectrogram_search(const FeatureSet& features, const Fold& fold,
                                      std::size_t fold_index, const PipelineConfig& config);
/// Retrains `genotype` on train with best-on-validation checkpointing and
/// scores val and test.
BranchOutputs train_spectrogram(const darts::Genotype& genotype, const FeatureSet& features,
                                const Fold& fold, std::size_t fold_index,
                                const PipelineConfig& config);

/// Trains every bank cell on train and ranks them by validation loss.
SequenceRun select_sequence_cell(const FeatureSet& features, const Fold& fold,
                                 std::size_t fold_index, const PipelineConfig& config);
/// Selects a cell from the bank on train/val, then scores the winner.
SequenceRun run_sequence_selection(const FeatureSet& features, const Fold& fold,
                                   std::size_t fold_index, const PipelineConfig& config);
BranchOutputs train_sequence(const rnn::RnnCellGraph& cell, const FeatureSet& features,
                             const Fold& fold, std::size_t fold_index,
                             const PipelineConfig& config);

/// Fits the fusion network on the branches' validation outputs and scores
/// the test split. Labels come from the spectrogram outputs; throws
/// ValueError when the branches disagree on ids or labels.
FusionRun run_fusion(const BranchOutputs& spectrogram, const BranchOutputs& sequence,
                     std::size_t fold_index, const PipelineConfig& config);

/// The built-in bank, or the file named by the config.
rnn::CellBank load_bank(const PipelineConfig& config);

/// Folds selected by the config (all when empty). Throws ConfigError on an
/// out-of-range index.
std::vector<std::size_t> selected_folds(const PipelineConfig& config, std::size_t fold_count);

FoldResult run_fold(const FeatureSet& features, const Fold& fold, std::size_t fold_index,
                    const PipelineConfig& config);

struct PipelineResult {
  std::vector<FoldResult> folds;
  /// Per-fold scores averaged over folds.
  real spectrogram_ua = 0;
  real sequence_ua = 0;
  real fused_ua = 0;
};

PipelineResult run_pipeline(const FeatureSet& features, const std::vector<Fold>& folds,
                            const PipelineConfig& config);

/// One line of the cross-fold table.
struct EvalRow {
  std::size_t fold = 0;
  std::string session;
  real spectrogram_ua = 0;
  real sequence_ua = 0;
  real fused_ua = 0;
  std::size_t spectrogram_params = 0;
  std::size_t sequence_params = 0;
  std::size_t fusion_params = 0;
};

std::vector<EvalRow> eval_rows(const PipelineResult& result);

/// fold,session,spectrogram_ua,sequence_ua,fused_ua,spectrogram_params,
/// sequence_params,fusion_params per fold, then a "mean" row of the
/// per-fold scores.
std::string eval_csv(const std::vector<EvalRow>& rows);
std::string eval_csv(const PipelineResult& result);

/// id,p_neutral,...,label per row.
std::string probabilities_csv(const std::vector<std::string>& ids, const Tensor& probs,
                              const std::vector<int>& labels);

struct ProbabilityTable {
  std::vector<std::string> ids;
  Tensor probs;
  std::vector<int> labels;
};
/// Inverse of probabilities_csv. Throws FormatError/ValueError.
ProbabilityTable parse_probabilities_csv(const std::string& text);

/// metric,value rows: per-class recalls, unweighted_accuracy,
/// weighted_accuracy, parameters and the confusion matrix.
std::string metrics_csv(const MetricsReport& report);
/// Inverse of metrics_csv. Throws FormatError.
MetricsReport parse_metrics_csv(const std::string& text);

}  // namespace emonas::harness
