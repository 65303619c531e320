#include "emonas/harness/workspace.hpp"

#include <fstream>
#include <sstream>

#include "emonas/errors.hpp"
#include "emonas/features/matrix.hpp"
#include "util/text.hpp"

namespace emonas::harness {

namespace fs = std::filesystem;

namespace {

constexpr const char* kFeatureHeader = "emonas-features 1";

}  // namespace

void write_text(const fs::path& path, std::string_view text) {
  std::error_code ec;
  if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
  if (ec) throw IoError("cannot create " + path.parent_path().string() + ": " + ec.message());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void save_features(const Workspace& ws, const FeatureSet& features,
                   const std::vector<UtteranceRecord>& records,
                   const features::SpectrogramConfig& config) {
  const fs::path dir = ws.features_dir();
  for (const auto& r : records) {
    const auto spec = features.spectrogram.find(r.id);
    const auto seq = features.sequence.find(r.id);
    if (spec == features.spectrogram.end() || seq == features.sequence.end()) {
      throw ValueError("no features for record '" + r.id + "'");
    }
    fs::create_directories(dir / "spectrogram");
    fs::create_directories(dir / "sequence");
    features::write_feature_matrix(dir / "spectrogram" / (r.id + ".emns"), spec->second);
    features::write_feature_matrix(dir / "sequence" / (r.id + ".emns"), seq->second);
  }
  write_manifest(dir / "records.csv", records);
  write_text(dir / "features.txt", std::string(kFeatureHeader) + "\nspectrogram = " +
                                       config.fingerprint() + "\nrecords = " +
                                       std::to_string(records.size()) + "\n");
}

StoredFeatures load_features(const Workspace& ws, const features::SpectrogramConfig& config) {
  const fs::path dir = ws.features_dir();
  if (!fs::exists(dir / "features.txt")) {
    throw IoError("no features in " + dir.string() + " (run the features step first)");
  }
  const std::string info = read_text(dir / "features.txt");
  if (!info.starts_with(kFeatureHeader)) throw FormatError(dir.string() + "/features.txt is not a feature index");
  const KeyValues kv = parse_key_values(info.substr(info.find('\n') + 1));
  auto it = kv.find("spectrogram");
  if (it == kv.end()) throw FormatError("feature index has no spectrogram fingerprint");
  if (it->second != config.fingerprint()) {
    throw ConfigError("stored spectrograms were extracted with different settings (" + it->second +
                      " vs " + config.fingerprint() + "); rerun the features step");
  }
  StoredFeatures out;
  out.records = read_manifest(dir / "records.csv");
  for (const auto& r : out.records) {
    out.features.spectrogram[r.id] =
        features::ingest_feature_matrix(dir / "spectrogram" / (r.id + ".emns")).data;
    out.features.sequence[r.id] =
        features::ingest_feature_matrix(dir / "sequence" / (r.id + ".emns")).data;
    out.features.labels[r.id] = r.label;
  }
  return out;
}

std::string run_manifest_text(std::string_view command, const PipelineConfig& config) {
  std::ostringstream os;
  os << "# emonas run manifest: rerun with --config <this file>\n";
  os << "# command = " << command << "\n";
  os << to_text(config);
  return os.str();
}

BranchOutputs load_branch_outputs(const fs::path& dir) {
  auto val = parse_probabilities_csv(read_text(dir / "val_probabilities.csv"));
  auto test = parse_probabilities_csv(read_text(dir / "test_probabilities.csv"));
  BranchOutputs out;
  out.val_ids = std::move(val.ids);
  out.val_probs = std::move(val.probs);
  out.val_labels = std::move(val.labels);
  out.test_ids = std::move(test.ids);
  out.test_probs = std::move(test.probs);
  out.test_labels = std::move(test.labels);
  if (fs::exists(dir / "metrics.csv")) out.test_metrics = parse_metrics_csv(read_text(dir / "metrics.csv"));
  return out;
}

void save_branch_outputs(const fs::path& dir, const BranchOutputs& outputs) {
  write_text(dir / "val_probabilities.csv",
             probabilities_csv(outputs.val_ids, outputs.val_probs, outputs.val_labels));
  write_text(dir / "test_probabilities.csv",
             probabilities_csv(outputs.test_ids, outputs.test_probs, outputs.test_labels));
  write_text(dir / "metrics.csv", metrics_csv(outputs.test_metrics));
  write_text(dir / "training.csv", training_csv(outputs.report));
}

std::string training_csv(const train::TrainReport& report) {
  std::ostringstream os;
  os << "epoch,train_loss,val_loss,val_score,kept\n";
  auto at = [](const std::vector<real>& v, std::size_t i) {
    return i < v.size() ? util::format_real(v[i]) : std::string();
  };
  for (std::size_t i = 0; i < report.train_loss.size(); ++i) {
    os << i + 1 << ',' << at(report.train_loss, i) << ',' << at(report.val_loss, i) << ','
       << at(report.val_score, i) << ',' << (i + 1 == report.best_epoch ? 1 : 0) << '\n';
  }
  return os.str();
}

}  // namespace emonas::harness
