#include "emonas/fusion/fusion.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "emonas/autodiff/ops.hpp"
#include "emonas/errors.hpp"
#include "emonas/harness/metrics.hpp"
#include "emonas/labels.hpp"
#include "util/text.hpp"

namespace emonas::fusion {

namespace {

constexpr std::size_t kIn = 2 * kClasses;
constexpr std::array<std::pair<std::size_t, std::size_t>, 3> kLayers = {
    {{kIn, 8}, {8, kClasses}, {kClasses, kClasses}}};

void check_row(std::span<const real> row, const std::string& what, real tolerance) {
  real total = 0;
  for (real p : row) {
    if (!std::isfinite(p) || p < -tolerance) {
      throw ValueError(what + " has a negative or non-finite probability");
    }
    total += p;
  }
  if (std::abs(total - 1) > tolerance) {
    throw ValueError(what + " sums to " + util::format_real(total) + ", not 1");
  }
}

}  // namespace

FusionNet::FusionNet(std::uint64_t seed) {
  Rng rng(seed);
  for (std::size_t k = 0; k < kLayers.size(); ++k) {
    const auto [in, out] = kLayers[k];
    const std::string p = "fusion.l" + std::to_string(k + 1);
    w_[k] = store_.add_uniform(p + ".w", {out, in}, in, rng);
    b_[k] = store_.add_uniform(p + ".b", {out}, in, rng);
    weights_.push_back(w_[k]);
    weights_.push_back(b_[k]);
  }
}

FusionNet FusionNet::zeros() {
  FusionNet net;
  for (std::size_t k = 0; k < kLayers.size(); ++k) {
    const auto [in, out] = kLayers[k];
    const std::string p = "fusion.l" + std::to_string(k + 1);
    net.w_[k] = net.store_.add_zeros(p + ".w", {out, in});
    net.b_[k] = net.store_.add_zeros(p + ".b", {out});
    net.weights_.push_back(net.w_[k]);
    net.weights_.push_back(net.b_[k]);
  }
  return net;
}

ad::Var FusionNet::logits(ad::Var input) const {
  if (input.shape().size() != 2 || input.shape()[1] != kIn) {
    throw ShapeError("fusion input must be [B," + std::to_string(kIn) + "], got " +
                     shape_str(input.shape()));
  }
  ad::Tape& t = input.tape();
  ad::Var h = ad::leaky_relu(ad::affine(input, t.param(w_[0]), t.param(b_[0])));
  h = ad::leaky_relu(ad::affine(h, t.param(w_[1]), t.param(b_[1])));
  return ad::affine(h, t.param(w_[2]), t.param(b_[2]));
}

ad::Var FusionNet::forward(ad::Tape& tape, const train::Batch& batch) const {
  return logits(tape.input("fusion_in", batch.inputs));
}

void check_probabilities(const Tensor& p, const char* what, real tolerance) {
  if (p.rank() != 2 || p.dim(1) != kClasses) {
    throw ShapeError(std::string(what) + " must be [B," + std::to_string(kClasses) + "], got " +
                     shape_str(p.shape()));
  }
  for (std::size_t b = 0; b < p.dim(0); ++b) {
    check_row(std::span(p.raw() + b * kClasses, kClasses),
              std::string(what) + " row " + std::to_string(b), tolerance);
  }
}

Tensor fuse(const Tensor& p_spec, const Tensor& p_seq, FusionNet& net) {
  check_probabilities(p_spec, "spectrogram probabilities");
  check_probabilities(p_seq, "sequence probabilities");
  if (p_spec.dim(0) != p_seq.dim(0)) {
    throw ShapeError("branch outputs have " + std::to_string(p_spec.dim(0)) + " and " +
                     std::to_string(p_seq.dim(0)) + " rows");
  }
  const std::size_t B = p_spec.dim(0);
  Tensor in({B, kIn});
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t c = 0; c < kClasses; ++c) {
      in[b * kIn + c] = p_spec[b * kClasses + c];
      in[b * kIn + kClasses + c] = p_seq[b * kClasses + c];
    }
  }
  ad::Tape tape(&net.store());
  tape.set_grad_enabled(false);
  return ad::softmax(net.logits(tape.input("fusion_in", std::move(in)))).value();
}

std::vector<BranchOutputs> align_outputs(const std::vector<std::string>& spec_ids,
                                         const Tensor& spec_probs,
                                         const std::vector<std::string>& seq_ids,
                                         const Tensor& seq_probs, const std::vector<int>& labels) {
  check_probabilities(spec_probs, "spectrogram probabilities");
  check_probabilities(seq_probs, "sequence probabilities");
  if (spec_ids.size() != spec_probs.dim(0) || labels.size() != spec_ids.size() ||
      seq_ids.size() != seq_probs.dim(0)) {
    throw ShapeError("ids, probabilities and labels disagree in length");
  }
  std::unordered_map<std::string, std::size_t> seq_index;
  for (std::size_t i = 0; i < seq_ids.size(); ++i) {
    if (!seq_index.emplace(seq_ids[i], i).second) {
      throw ValueError("duplicate utterance id '" + seq_ids[i] + "' in sequence outputs");
    }
  }
  std::unordered_set<std::string> seen;
  std::vector<BranchOutputs> rows;
  for (std::size_t i = 0; i < spec_ids.size(); ++i) {
    if (!seen.insert(spec_ids[i]).second) {
      throw ValueError("duplicate utterance id '" + spec_ids[i] + "' in spectrogram outputs");
    }
    auto it = seq_index.find(spec_ids[i]);
    if (it == seq_index.end()) {
      throw ValueError("utterance '" + spec_ids[i] + "' has no sequence-branch output");
    }
    if (labels[i] < 0 || labels[i] >= static_cast<int>(kClasses)) {
      throw ValueError("label " + std::to_string(labels[i]) + " out of range");
    }
    BranchOutputs r;
    r.id = spec_ids[i];
    r.label = labels[i];
    for (std::size_t c = 0; c < kClasses; ++c) {
      r.spectrogram[c] = spec_probs[i * kClasses + c];
      r.sequence[c] = seq_probs[it->second * kClasses + c];
    }
    rows.push_back(std::move(r));
  }
  if (seq_ids.size() != spec_ids.size()) {
    for (const auto& id : seq_ids) {
      if (!seen.contains(id)) {
        throw ValueError("utterance '" + id + "' has no spectrogram-branch output");
      }
    }
  }
  return rows;
}

std::string interchange_csv(const std::vector<BranchOutputs>& rows) {
  std::ostringstream os;
  os << "utterance_id";
  for (std::size_t c = 0; c < kClasses; ++c) os << ",spec_" << kEmotionNames[c];
  for (std::size_t c = 0; c < kClasses; ++c) os << ",seq_" << kEmotionNames[c];
  os << ",label\n";
  for (const auto& r : rows) {
    if (r.id.empty() || r.id.find_first_of(",\n\r") != std::string::npos) {
      throw ValueError("utterance id '" + r.id + "' cannot be written to CSV");
    }
    os << r.id;
    for (real p : r.spectrogram) os << ',' << util::format_real(p);
    for (real p : r.sequence) os << ',' << util::format_real(p);
    os << ',' << emotion_name(r.label) << '\n';
  }
  return os.str();
}

std::vector<BranchOutputs> parse_interchange_csv(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  const std::size_t width = 2 + 2 * kClasses;
  if (!std::getline(is, line) || util::split_csv(line).size() != width ||
      util::split_csv(line).front() != "utterance_id") {
    throw FormatError("branch output CSV needs a header of " + std::to_string(width) +
                      " columns starting with utterance_id");
  }
  std::vector<BranchOutputs> rows;
  std::unordered_set<std::string> seen;
  std::size_t n = 1;
  while (std::getline(is, line)) {
    ++n;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = util::split_csv(line);
    if (cells.size() != width) {
      throw FormatError("line " + std::to_string(n) + " has " + std::to_string(cells.size()) +
                        " columns, expected " + std::to_string(width));
    }
    BranchOutputs r;
    r.id = cells[0];
    if (!seen.insert(r.id).second) throw ValueError("duplicate utterance id '" + r.id + "'");
    for (std::size_t c = 0; c < kClasses; ++c) {
      const std::string where = "line " + std::to_string(n);
      r.spectrogram[c] = util::parse_real(cells[1 + c], where);
      r.sequence[c] = util::parse_real(cells[1 + kClasses + c], where);
    }
    check_row(r.spectrogram, "spectrogram probabilities of '" + r.id + "'", 1e-4);
    check_row(r.sequence, "sequence probabilities of '" + r.id + "'", 1e-4);
    r.label = parse_emotion(cells.back());
    rows.push_back(std::move(r));
  }
  return rows;
}

void write_interchange(const std::filesystem::path& path, const std::vector<BranchOutputs>& rows) {
  const std::string text = interchange_csv(rows);
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("failed writing " + path.string());
}

std::vector<BranchOutputs> read_interchange(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  try {
    return parse_interchange_csv(os.str());
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

train::Dataset to_dataset(const std::vector<BranchOutputs>& rows) {
  train::Dataset d({kIn});
  std::array<real, kIn> v{};
  for (const auto& r : rows) {
    std::copy(r.spectrogram.begin(), r.spectrogram.end(), v.begin());
    std::copy(r.sequence.begin(), r.sequence.end(), v.begin() + kClasses);
    d.add(r.id, v, r.label);
  }
  return d;
}

FusionResult train_fusion(FusionNet& net, const std::vector<BranchOutputs>& fit,
                          const std::vector<BranchOutputs>& held_out,
                          const FusionSchedule& schedule) {
  if (fit.empty()) throw ConfigError("fusion needs at least one training utterance");
  if (held_out.empty()) throw ConfigError("fusion needs at least one evaluation utterance");
  const train::Dataset fit_set = to_dataset(fit), eval_set = to_dataset(held_out);
  train::Model model = [&net](ad::Tape& t, const train::Batch& b) { return net.forward(t, b); };

  train::TrainSchedule s;
  s.epochs = schedule.epochs;
  s.batch_size = schedule.batch_size;
  s.seed = schedule.seed;
  s.optimizer = train::OptimizerKind::adam;
  s.adam = schedule.adam;
  s.keep_best = false;

  FusionResult result;
  // The fit split doubles as the monitoring split; nothing is selected on it.
  result.report =
      train_classifier(net.store(), net.weights(), model, fit_set, fit_set, kClasses, s);
  if (!result.report.diverged) result.report.best_epoch = result.report.train_loss.size();
  auto ev = train::evaluate_model(net.store(), model, eval_set);
  result.predictions = std::move(ev.predictions);
  result.probabilities = std::move(ev.probabilities);
  result.unweighted_accuracy = static_cast<real>(
      harness::present_class_recall(result.predictions, eval_set.labels(), kClasses));
  return result;
}

}  // namespace emonas::fusion
