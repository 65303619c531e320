#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "emonas/autodiff/parameters.hpp"
#include "emonas/autodiff/tape.hpp"
#include "emonas/train/trainer.hpp"

namespace emonas::fusion {

inline constexpr std::size_t kClasses = 4;

/// Three affine layers (8->8, 8->4, 4->4) with leaky_relu between them and
/// a terminal softmax.
class FusionNet {
 public:
  /// Uniform +-1/sqrt(fan_in) initialisation.
  explicit FusionNet(std::uint64_t seed);
  /// Every weight and bias zero.
  static FusionNet zeros();

  ad::ParameterStore& store() noexcept { return store_; }
  const ad::ParameterStore& store() const noexcept { return store_; }
  const std::vector<ad::ParamId>& weights() const noexcept { return weights_; }
  /// Layer k (0..2) weight [out,in] and bias [out].
  ad::ParamId weight(std::size_t layer) const { return w_.at(layer); }
  ad::ParamId bias(std::size_t layer) const { return b_.at(layer); }

  /// [B,8] -> logits [B,4].
  ad::Var logits(ad::Var input) const;
  /// Batch inputs are the concatenated probabilities [B,8].
  ad::Var forward(ad::Tape& tape, const train::Batch& batch) const;

 private:
  FusionNet() = default;
  ad::ParameterStore store_;
  std::array<ad::ParamId, 3> w_{};
  std::array<ad::ParamId, 3> b_{};
  std::vector<ad::ParamId> weights_;
};

/// Throws ValueError unless every row of [B,4] is non-negative and sums to
/// one within `tolerance`.
void check_probabilities(const Tensor& p, const char* what, real tolerance = 1e-4);

/// Fused class probabilities [B,4] from two branch outputs [B,4].
Tensor fuse(const Tensor& p_spec, const Tensor& p_seq, FusionNet& net);

/// One utterance of the branch-output interchange.
struct BranchOutputs {
  std::string id;
  std::array<real, kClasses> spectrogram{};
  std::array<real, kClasses> sequence{};
  int label = 0;
};

/// Joins per-branch outputs on utterance id, in the order of `spec_ids`.
/// Throws ValueError when the two id sets differ or contain duplicates.
std::vector<BranchOutputs> align_outputs(const std::vector<std::string>& spec_ids,
                                         const Tensor& spec_probs,
                                         const std::vector<std::string>& seq_ids,
                                         const Tensor& seq_probs, const std::vector<int>& labels);

/// utterance_id, spec_p0..3, seq_p0..3, label (class name).
std::string interchange_csv(const std::vector<BranchOutputs>& rows);
std::vector<BranchOutputs> parse_interchange_csv(const std::string& text);
void write_interchange(const std::filesystem::path& path, const std::vector<BranchOutputs>& rows);
std::vector<BranchOutputs> read_interchange(const std::filesystem::path& path);

/// Samples [8] = spectrogram then sequence probabilities.
train::Dataset to_dataset(const std::vector<BranchOutputs>& rows);

struct FusionSchedule {
  std::size_t epochs = 100;
  /// The fit split is one speaker's validation outputs; small batches give
  /// the optimiser enough steps within the epoch budget.
  std::size_t batch_size = 4;
  ad::AdamOptions adam{.lr = 1e-3};
  std::uint64_t seed = 0;
};

struct FusionResult {
  train::TrainReport report;
  std::vector<int> predictions;
  Tensor probabilities;
  /// Mean recall over the classes present in `held_out`.
  real unweighted_accuracy = 0;
};

/// Cross-entropy training on `fit` for the full schedule (the last epoch's
/// weights are kept), then evaluation on `held_out`.
FusionResult train_fusion(FusionNet& net, const std::vector<BranchOutputs>& fit,
                          const std::vector<BranchOutputs>& held_out,
                          const FusionSchedule& schedule = {});

}  // namespace emonas::fusion
