#include "emonas/harness/pipeline.hpp"

#include <cmath>
#include <sstream>

#include "emonas/darts/network.hpp"
#include "emonas/errors.hpp"
#include "emonas/features/matrix.hpp"
#include "emonas/features/spectrogram.hpp"
#include "emonas/labels.hpp"
#include "util/text.hpp"

namespace emonas::harness {

namespace {

constexpr std::size_t kClasses = kNumEmotions;

const Tensor& lookup(const std::map<std::string, Tensor>& m, const std::string& id,
                     const char* what) {
  auto it = m.find(id);
  if (it == m.end()) {
    throw ConfigError("no " + std::string(what) + " features for utterance '" + id +
                      "' (run the features step first)");
  }
  return it->second;
}

std::vector<int> labels_of(const FeatureSet& features, const std::vector<std::string>& ids) {
  std::vector<int> out;
  for (const auto& id : ids) {
    auto it = features.labels.find(id);
    if (it == features.labels.end()) throw ConfigError("no label for utterance '" + id + "'");
    out.push_back(it->second);
  }
  return out;
}

darts::NetworkConfig network_for(const PipelineConfig& config) {
  darts::NetworkConfig net = config.network;
  net.input_height = config.spectrogram.output_rows;
  net.input_width = config.spectrogram.feature_bins;
  net.num_classes = kClasses;
  return net;
}

void check_split(const std::vector<std::string>& ids, const char* name, std::size_t fold) {
  if (ids.empty()) {
    throw ConfigError("fold " + std::to_string(fold) + " has an empty " + name + " split");
  }
}

BranchOutputs score(ad::ParameterStore& store, const train::Model& model,
                    const train::Dataset& val, const train::Dataset& test,
                    train::TrainReport report, std::size_t params) {
  BranchOutputs out;
  auto ev_val = train::evaluate_model(store, model, val);
  auto ev_test = train::evaluate_model(store, model, test);
  out.val_ids = val.ids();
  out.val_probs = std::move(ev_val.probabilities);
  out.val_labels = val.labels();
  out.test_ids = test.ids();
  out.test_probs = std::move(ev_test.probabilities);
  out.test_labels = test.labels();
  out.test_metrics = evaluate(ev_test.predictions, test.labels(), kClasses);
  out.test_metrics.parameter_count = params;
  out.report = std::move(report);
  return out;
}

}  // namespace

FeatureSet extract_features(const std::vector<UtteranceRecord>& records,
                            const features::SpectrogramConfig& config) {
  validate_records(records);
  FeatureSet fs;
  for (const auto& r : records) {
    fs.spectrogram[r.id] = features::spectrogram_from_wav(r.audio, config).data;
    fs.sequence[r.id] = features::ingest_feature_matrix(r.sequence).data;
    fs.labels[r.id] = r.label;
  }
  max_sequence_rows(fs);
  return fs;
}

FeatureSet extract_features(const std::vector<SynthUtterance>& utterances,
                            const features::SpectrogramConfig& config) {
  FeatureSet fs;
  for (const auto& u : utterances) {
    fs.spectrogram[u.record.id] =
        features::spectrogram(features::pad_or_truncate(u.audio, config.target_duration), config)
            .data;
    fs.sequence[u.record.id] = u.sequence;
    fs.labels[u.record.id] = u.record.label;
  }
  max_sequence_rows(fs);
  return fs;
}

std::size_t max_sequence_rows(const FeatureSet& features) {
  std::size_t rows = 0, cols = 0;
  for (const auto& [id, m] : features.sequence) {
    if (m.rank() != 2 || m.dim(0) == 0) throw ShapeError("sequence of '" + id + "' is empty");
    if (cols == 0) cols = m.dim(1);
    if (m.dim(1) != cols) {
      throw ShapeError("sequence of '" + id + "' has " + std::to_string(m.dim(1)) +
                       " channels, expected " + std::to_string(cols));
    }
    rows = std::max(rows, m.dim(0));
  }
  return rows;
}

Standardizer fit_standardizer(const FeatureSet& features, const std::vector<std::string>& ids) {
  double sum = 0, sq = 0;
  std::size_t n = 0;
  for (const auto& id : ids) {
    for (real v : lookup(features.spectrogram, id, "spectrogram").data()) {
      sum += v;
      sq += v * v;
      ++n;
    }
  }
  if (n == 0) throw ConfigError("cannot standardise an empty split");
  const double mean = sum / static_cast<double>(n);
  const double var = std::max(0.0, sq / static_cast<double>(n) - mean * mean);
  return {mean, var > 1e-24 ? std::sqrt(var) : 1.0};
}

train::Dataset spectrogram_dataset(const FeatureSet& features, const std::vector<std::string>& ids,
                                   const std::optional<Standardizer>& standardizer) {
  if (ids.empty()) throw ConfigError("empty spectrogram split");
  const Tensor& first = lookup(features.spectrogram, ids.front(), "spectrogram");
  train::Dataset d({1, first.dim(0), first.dim(1)});
  const auto labels = labels_of(features, ids);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    Tensor x = lookup(features.spectrogram, ids[i], "spectrogram");
    if (standardizer) {
      for (auto& v : x.data()) v = (v - standardizer->mean) / standardizer->scale;
    }
    d.add(ids[i], x.data(), labels[i]);
  }
  return d;
}

train::Dataset sequence_dataset(const FeatureSet& features, const std::vector<std::string>& ids,
                                std::size_t max_rows) {
  if (ids.empty()) throw ConfigError("empty sequence split");
  std::size_t T = max_rows;
  for (const auto& id : ids) T = std::max(T, lookup(features.sequence, id, "sequence").dim(0));
  const std::size_t D = lookup(features.sequence, ids.front(), "sequence").dim(1);
  train::Dataset d({T, D});
  const auto labels = labels_of(features, ids);
  std::vector<real> padded(T * D);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const Tensor& m = lookup(features.sequence, ids[i], "sequence");
    if (m.dim(1) != D) throw ShapeError("sequence of '" + ids[i] + "' has a different width");
    std::fill(padded.begin(), padded.end(), 0.0);
    std::copy(m.data().begin(), m.data().end(), padded.begin());
    d.add(ids[i], padded, labels[i], m.dim(0));
  }
  return d;
}

std::uint64_t job_seed(std::uint64_t root, std::size_t fold, std::string_view job) {
  return derive_seed(root, "fold" + std::to_string(fold) + "/" + std::string(job));
}

darts::SearchResult search_spectrogram(const FeatureSet& features, const Fold& fold,
                                       std::size_t fold_index, const PipelineConfig& config) {
  check_split(fold.train, "train", fold_index);
  check_split(fold.val, "validation", fold_index);
  std::optional<Standardizer> st;
  if (config.standardize) st = fit_standardizer(features, fold.train);
  const auto train = spectrogram_dataset(features, fold.train, st);
  const auto val = spectrogram_dataset(features, fold.val, st);
  darts::SearchSchedule schedule = config.search;
  schedule.seed = job_seed(config.seed, fold_index, "search");
  return darts::search(train, val, network_for(config), schedule);
}

SpectrogramRun run_spectrogram_search(const FeatureSet& features, const Fold& fold,
                                      std::size_t fold_index, const PipelineConfig& config) {
  SpectrogramRun run;
  run.search = search_spectrogram(features, fold, fold_index, config);
  run.outputs = train_spectrogram(run.search.genotype, features, fold, fold_index, config);
  return run;
}

BranchOutputs train_spectrogram(const darts::Genotype& genotype, const FeatureSet& features,
                                const Fold& fold, std::size_t fold_index,
                                const PipelineConfig& config) {
  check_split(fold.train, "train", fold_index);
  check_split(fold.val, "validation", fold_index);
  check_split(fold.test, "test", fold_index);
  std::optional<Standardizer> st;
  if (config.standardize) st = fit_standardizer(features, fold.train);
  const auto train = spectrogram_dataset(features, fold.train, st);
  const auto val = spectrogram_dataset(features, fold.val, st);
  const auto test = spectrogram_dataset(features, fold.test, st);

  darts::DerivedNetwork net(genotype, network_for(config),
                            job_seed(config.seed, fold_index, "derived-init"));
  train::Model model = [&net](ad::Tape& t, const train::Batch& b) {
    return net.forward(t, b.inputs);
  };
  train::TrainSchedule schedule = config.retrain;
  schedule.seed = job_seed(config.seed, fold_index, "retrain");
  auto report =
      train::train_classifier(net.store(), net.weights(), model, train, val, kClasses, schedule);
  return score(net.store(), model, val, test, std::move(report), net.weight_count());
}

rnn::CellBank load_bank(const PipelineConfig& config) {
  if (config.cell_bank.empty()) return rnn::default_cell_bank();
  return rnn::load_cell_bank(config.cell_bank);
}

SequenceRun select_sequence_cell(const FeatureSet& features, const Fold& fold,
                                 std::size_t fold_index, const PipelineConfig& config) {
  check_split(fold.train, "train", fold_index);
  check_split(fold.val, "validation", fold_index);
  const std::size_t T = max_sequence_rows(features);
  const auto train = sequence_dataset(features, fold.train, T);
  const auto val = sequence_dataset(features, fold.val, T);
  train::TrainSchedule schedule = config.rnn_schedule;
  schedule.seed = job_seed(config.seed, fold_index, "select");
  const rnn::CellBank bank = load_bank(config);

  SequenceRun run;
  run.selection = rnn::select_cell(bank, train, val, config.rnn, schedule);
  for (const auto& c : bank) {
    if (c.name() == run.selection.best) run.cell = c;
  }
  return run;
}

SequenceRun run_sequence_selection(const FeatureSet& features, const Fold& fold,
                                   std::size_t fold_index, const PipelineConfig& config) {
  SequenceRun run = select_sequence_cell(features, fold, fold_index, config);
  run.outputs = train_sequence(*run.cell, features, fold, fold_index, config);
  return run;
}

BranchOutputs train_sequence(const rnn::RnnCellGraph& cell, const FeatureSet& features,
                             const Fold& fold, std::size_t fold_index,
                             const PipelineConfig& config) {
  check_split(fold.train, "train", fold_index);
  check_split(fold.val, "validation", fold_index);
  check_split(fold.test, "test", fold_index);
  const std::size_t T = max_sequence_rows(features);
  const auto train = sequence_dataset(features, fold.train, T);
  const auto val = sequence_dataset(features, fold.val, T);
  const auto test = sequence_dataset(features, fold.test, T);
  // Same seed as during selection, so the winner is reproduced exactly.
  train::TrainSchedule schedule = config.rnn_schedule;
  schedule.seed = job_seed(config.seed, fold_index, "select");
  auto trained = rnn::train_rnn_branch(cell, train, val, config.rnn, schedule);
  if (trained.report.diverged && trained.report.best_epoch == 0) {
    throw NumericError("sequence branch with cell '" + cell.name() + "' diverged");
  }
  rnn::RnnBranch& model_ref = *trained.model;
  train::Model model = [&model_ref](ad::Tape& t, const train::Batch& b) {
    return model_ref.forward(t, b);
  };
  return score(model_ref.store(), model, val, test, std::move(trained.report),
               model_ref.weight_count());
}

FusionRun run_fusion(const BranchOutputs& spectrogram, const BranchOutputs& sequence,
                     std::size_t fold_index, const PipelineConfig& config) {
  auto check_labels = [](const std::vector<std::string>& ids_a, const std::vector<int>& a,
                         const std::vector<std::string>& ids_b, const std::vector<int>& b) {
    std::map<std::string, int> by_id;
    for (std::size_t i = 0; i < ids_a.size() && i < a.size(); ++i) by_id[ids_a[i]] = a[i];
    for (std::size_t i = 0; i < ids_b.size() && i < b.size(); ++i) {
      auto it = by_id.find(ids_b[i]);
      if (it != by_id.end() && it->second != b[i]) {
        throw ValueError("branches disagree on the label of utterance '" + ids_b[i] + "'");
      }
    }
  };
  check_labels(spectrogram.val_ids, spectrogram.val_labels, sequence.val_ids, sequence.val_labels);
  check_labels(spectrogram.test_ids, spectrogram.test_labels, sequence.test_ids,
               sequence.test_labels);
  const auto val_rows =
      fusion::align_outputs(spectrogram.val_ids, spectrogram.val_probs, sequence.val_ids,
                            sequence.val_probs, spectrogram.val_labels);
  FusionRun run;
  run.test_rows =
      fusion::align_outputs(spectrogram.test_ids, spectrogram.test_probs, sequence.test_ids,
                            sequence.test_probs, spectrogram.test_labels);
  fusion::FusionNet net(job_seed(config.seed, fold_index, "fusion-init"));
  fusion::FusionSchedule schedule = config.fusion;
  schedule.seed = job_seed(config.seed, fold_index, "fusion");
  auto result = fusion::train_fusion(net, val_rows, run.test_rows, schedule);
  std::vector<int> labels;
  for (const auto& r : run.test_rows) labels.push_back(r.label);
  run.test_metrics = evaluate(result.predictions, labels, kClasses);
  run.test_metrics.parameter_count = net.store().numel(net.weights());
  run.test_probs = std::move(result.probabilities);
  run.report = std::move(result.report);
  return run;
}

std::vector<std::size_t> selected_folds(const PipelineConfig& config, std::size_t fold_count) {
  std::vector<std::size_t> out = config.folds;
  if (out.empty()) {
    for (std::size_t i = 0; i < fold_count; ++i) out.push_back(i);
  }
  for (std::size_t f : out) {
    if (f >= fold_count) {
      throw ConfigError("fold " + std::to_string(f) + " requested but only " +
                        std::to_string(fold_count) + " folds exist");
    }
  }
  return out;
}

FoldResult run_fold(const FeatureSet& features, const Fold& fold, std::size_t fold_index,
                    const PipelineConfig& config) {
  FoldResult r;
  r.fold = fold_index;
  r.session = fold.session;
  r.spectrogram = run_spectrogram_search(features, fold, fold_index, config);
  r.sequence = run_sequence_selection(features, fold, fold_index, config);
  r.fused = run_fusion(r.spectrogram.outputs, r.sequence.outputs, fold_index, config);
  return r;
}

PipelineResult run_pipeline(const FeatureSet& features, const std::vector<Fold>& folds,
                            const PipelineConfig& config) {
  validate(config);
  PipelineResult result;
  for (std::size_t f : selected_folds(config, folds.size())) {
    result.folds.push_back(run_fold(features, folds[f], f, config));
  }
  const real n = static_cast<real>(result.folds.size());
  for (const auto& r : result.folds) {
    result.spectrogram_ua += r.spectrogram.outputs.test_metrics.unweighted_accuracy / n;
    result.sequence_ua += r.sequence.outputs.test_metrics.unweighted_accuracy / n;
    result.fused_ua += r.fused.test_metrics.unweighted_accuracy / n;
  }
  return result;
}

std::vector<EvalRow> eval_rows(const PipelineResult& result) {
  std::vector<EvalRow> rows;
  for (const auto& r : result.folds) {
    rows.push_back({r.fold, r.session, r.spectrogram.outputs.test_metrics.unweighted_accuracy,
                    r.sequence.outputs.test_metrics.unweighted_accuracy,
                    r.fused.test_metrics.unweighted_accuracy,
                    r.spectrogram.outputs.test_metrics.parameter_count,
                    r.sequence.outputs.test_metrics.parameter_count,
                    r.fused.test_metrics.parameter_count});
  }
  return rows;
}

std::string eval_csv(const std::vector<EvalRow>& rows) {
  if (rows.empty()) throw ValueError("no folds to tabulate");
  std::ostringstream os;
  os << "fold,session,spectrogram_ua,sequence_ua,fused_ua,spectrogram_params,sequence_params,"
        "fusion_params\n";
  real spec = 0, seq = 0, fused = 0;
  const real n = static_cast<real>(rows.size());
  for (const auto& r : rows) {
    os << r.fold << ',' << r.session << ',' << util::format_real(r.spectrogram_ua) << ','
       << util::format_real(r.sequence_ua) << ',' << util::format_real(r.fused_ua) << ','
       << r.spectrogram_params << ',' << r.sequence_params << ',' << r.fusion_params << '\n';
    spec += r.spectrogram_ua / n;
    seq += r.sequence_ua / n;
    fused += r.fused_ua / n;
  }
  os << "mean,," << util::format_real(spec) << ',' << util::format_real(seq) << ','
     << util::format_real(fused) << ",,,\n";
  return os.str();
}

std::string eval_csv(const PipelineResult& result) { return eval_csv(eval_rows(result)); }

std::string probabilities_csv(const std::vector<std::string>& ids, const Tensor& probs,
                              const std::vector<int>& labels) {
  if (probs.rank() != 2 || probs.dim(0) != ids.size() || probs.dim(1) != kClasses ||
      labels.size() != ids.size()) {
    throw ShapeError("probability table does not match its ids");
  }
  std::ostringstream os;
  os << "utterance_id";
  for (auto name : kEmotionNames) os << ",p_" << name;
  os << ",label\n";
  for (std::size_t i = 0; i < ids.size(); ++i) {
    os << ids[i];
    for (std::size_t c = 0; c < kClasses; ++c) os << ',' << util::format_real(probs[i * kClasses + c]);
    os << ',' << emotion_name(labels[i]) << '\n';
  }
  return os.str();
}

ProbabilityTable parse_probabilities_csv(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  if (!std::getline(is, line) || util::split_csv(util::trim(line)).size() != kClasses + 2 ||
      util::split_csv(line).front() != "utterance_id") {
    throw FormatError("probability table needs a header utterance_id,p_...,label");
  }
  ProbabilityTable t;
  std::vector<real> values;
  std::size_t n = 1;
  while (std::getline(is, line)) {
    ++n;
    const auto trimmed = util::trim(line);
    if (trimmed.empty()) continue;
    const auto cells = util::split_csv(trimmed);
    if (cells.size() != kClasses + 2) {
      throw FormatError("probability table line " + std::to_string(n) + " has " +
                        std::to_string(cells.size()) + " columns");
    }
    t.ids.push_back(cells[0]);
    for (std::size_t c = 0; c < kClasses; ++c) {
      values.push_back(util::parse_real(cells[1 + c], "line " + std::to_string(n)));
    }
    t.labels.push_back(parse_emotion(cells.back()));
  }
  if (t.ids.empty()) throw FormatError("probability table has no rows");
  t.probs = Tensor({t.ids.size(), kClasses}, std::move(values));
  fusion::check_probabilities(t.probs, "probability table");
  return t;
}

std::string metrics_csv(const MetricsReport& report) {
  std::ostringstream os;
  os << "metric,value\n";
  for (std::size_t c = 0; c < report.recalls.size(); ++c) {
    os << "recall_" << (c < kClasses ? std::string(kEmotionNames[c]) : std::to_string(c)) << ','
       << util::format_real(report.recalls[c]) << '\n';
  }
  os << "unweighted_accuracy," << util::format_real(report.unweighted_accuracy) << '\n';
  os << "weighted_accuracy," << util::format_real(report.weighted_accuracy) << '\n';
  os << "parameters," << report.parameter_count << '\n';
  for (std::size_t i = 0; i < report.confusion.size(); ++i) {
    os << "confusion_" << i << ',';
    for (std::size_t j = 0; j < report.confusion[i].size(); ++j) {
      os << (j ? " " : "") << report.confusion[i][j];
    }
    os << '\n';
  }
  return os.str();
}

MetricsReport parse_metrics_csv(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  if (!std::getline(is, line) || util::trim(line) != "metric,value") {
    throw FormatError("metrics table needs a header metric,value");
  }
  MetricsReport r;
  bool has_ua = false;
  std::size_t n = 1;
  while (std::getline(is, line)) {
    ++n;
    const auto trimmed = util::trim(line);
    if (trimmed.empty()) continue;
    const auto cells = util::split_csv(trimmed);
    const std::string where = "metrics line " + std::to_string(n);
    if (cells.size() != 2) throw FormatError(where + " is not metric,value");
    const std::string& key = cells[0];
    if (key.starts_with("recall_")) {
      r.recalls.push_back(util::parse_real(cells[1], where));
    } else if (key == "unweighted_accuracy") {
      r.unweighted_accuracy = util::parse_real(cells[1], where);
      has_ua = true;
    } else if (key == "weighted_accuracy") {
      r.weighted_accuracy = util::parse_real(cells[1], where);
    } else if (key == "parameters") {
      r.parameter_count = static_cast<std::size_t>(util::parse_real(cells[1], where));
    } else if (key.starts_with("confusion_")) {
      std::vector<std::size_t> row;
      std::istringstream values(cells[1]);
      std::size_t v;
      while (values >> v) row.push_back(v);
      r.confusion.push_back(std::move(row));
    } else {
      throw FormatError(where + " has unknown metric '" + key + "'");
    }
  }
  if (!has_ua) throw FormatError("metrics table has no unweighted_accuracy");
  r.num_classes = r.recalls.size();
  return r;
}

}  // namespace emonas::harness
