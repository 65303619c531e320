#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>

#include "emonas/harness/config.hpp"
#include "emonas/harness/pipeline.hpp"
#include "emonas/harness/records.hpp"

namespace emonas::harness {

/// On-disk layout shared by the command-line stages:
///
///   data/manifest.csv, data/wav, data/seq     synthetic corpus
///   features/records.csv                      records the features belong to
///   features/spectrogram/<id>.emns            [rows, bins]
///   features/sequence/<id>.emns               [T, D]
///   features/features.txt                     extraction settings
///   folds/fold<k>/{search,select,spectrogram,sequence,fusion}/...
///   eval.csv
///   manifests/<command>.txt                   resolved config per command
class Workspace {
 public:
  explicit Workspace(std::filesystem::path root) : root_(std::move(root)) {}

  const std::filesystem::path& root() const noexcept { return root_; }
  std::filesystem::path data_dir() const { return root_ / "data"; }
  std::filesystem::path data_manifest() const { return data_dir() / "manifest.csv"; }
  std::filesystem::path features_dir() const { return root_ / "features"; }
  std::filesystem::path fold_dir(std::size_t fold) const {
    return root_ / "folds" / ("fold" + std::to_string(fold));
  }
  std::filesystem::path stage_dir(std::size_t fold, std::string_view stage) const {
    return fold_dir(fold) / stage;
  }
  std::filesystem::path eval_csv() const { return root_ / "eval.csv"; }
  std::filesystem::path run_manifest(std::string_view command) const {
    return root_ / "manifests" / (std::string(command) + ".txt");
  }

 private:
  std::filesystem::path root_;
};

/// Creates parent directories and writes `text` atomically enough for a
/// single writer. Throws IoError.
void write_text(const std::filesystem::path& path, std::string_view text);
/// Throws IoError naming the path.
std::string read_text(const std::filesystem::path& path);

/// Writes every matrix of `features` plus the records they came from.
void save_features(const Workspace& ws, const FeatureSet& features,
                   const std::vector<UtteranceRecord>& records,
                   const features::SpectrogramConfig& config);

struct StoredFeatures {
  std::vector<UtteranceRecord> records;
  FeatureSet features;
};

/// Loads what save_features wrote. Throws ConfigError when the stored
/// extraction settings differ from `config`, IoError when missing.
StoredFeatures load_features(const Workspace& ws, const features::SpectrogramConfig& config);

/// The resolved configuration of one command, enough to rerun it.
std::string run_manifest_text(std::string_view command, const PipelineConfig& config);

/// Reads back a branch's probability tables into BranchOutputs (metrics
/// and training report are left empty).
BranchOutputs load_branch_outputs(const std::filesystem::path& dir);
/// Writes val/test probability tables, metrics.csv and training.csv.
void save_branch_outputs(const std::filesystem::path& dir, const BranchOutputs& outputs);

/// epoch,train_loss,val_loss,val_score rows plus the kept epoch.
std::string training_csv(const train::TrainReport& report);

}  // namespace emonas::harness
