#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "emonas/autodiff/parameters.hpp"
#include "emonas/autodiff/tape.hpp"
#include "emonas/rnn/cell_graph.hpp"
#include "emonas/train/dataset.hpp"

namespace emonas::rnn {

struct RnnBranchConfig {
  std::size_t num_layers = 2;
  std::size_t hidden = 256;
  /// Width of the attention projection; 0 means hidden / 2.
  std::size_t attention_width = 0;
  std::size_t num_classes = 4;
  /// Freeze states and drop attention on padded frames.
  bool masking = true;

  void validate() const;
  std::size_t effective_attention_width() const;
};

/// Learned weights of one cell instance: one RnnOpParams per graph node.
struct CellParams {
  std::vector<space::RnnOpParams> nodes;
};

CellParams make_cell_params(const RnnCellGraph& graph, std::size_t hidden,
                            ad::ParameterStore& store, Rng& rng, const std::string& prefix);

/// Evaluates the DAG once. All three operands must be [B,h] with x already
/// projected to width h.
std::pair<ad::Var, ad::Var> rnn_cell_step(const RnnCellGraph& graph, const CellParams& params,
                                          ad::Var x, ad::Var h1, ad::Var h2);

struct AttentionPoolParams {
  ad::ParamId projection;  // [h,a]
  ad::ParamId context;     // [a,1]
};

/// score_t = ctx . tanh(W frame_t), softmax over unmasked frames, weighted
/// sum of frames. frames [B,T,h], mask [B,T] or none -> [B,h]. Throws
/// ShapeError when an utterance has no unmasked frame.
ad::Var attention_pool(ad::Var frames, const AttentionPoolParams& params,
                       const Tensor* mask = nullptr);
/// Softmax attention weights [B,T] of the same computation.
ad::Var attention_weights(ad::Var frames, const AttentionPoolParams& params,
                          const Tensor* mask = nullptr);

/// Stacked recurrent cells over an input sequence, attention pooling and an
/// affine classifier. Layers share the cell graph but not its weights.
class RnnBranch {
 public:
  RnnBranch(RnnCellGraph cell, const RnnBranchConfig& config, std::size_t input_dim,
            std::uint64_t seed);

  const RnnCellGraph& cell() const noexcept { return cell_; }
  const RnnBranchConfig& config() const noexcept { return config_; }
  std::size_t input_dim() const noexcept { return input_dim_; }
  ad::ParameterStore& store() noexcept { return store_; }
  const ad::ParameterStore& store() const noexcept { return store_; }
  const std::vector<ad::ParamId>& weights() const noexcept { return weights_; }
  std::size_t weight_count() const { return store_.numel(weights_); }
  const AttentionPoolParams& attention() const noexcept { return attention_; }
  const CellParams& layer_cell(std::size_t layer) const { return layers_.at(layer).cell; }
  ad::ParamId classifier_weight() const noexcept { return head_w_; }
  ad::ParamId classifier_bias() const noexcept { return head_b_; }

  /// Top-layer h1 at every step, [B,T,h]. States start at zero. With masking
  /// on, states are held through frames where mask == 0.
  ad::Var unroll(ad::Var sequence, const Tensor* mask = nullptr) const;
  /// Logits [B,classes].
  ad::Var forward(ad::Tape& tape, const train::Batch& batch) const;

 private:
  struct Layer {
    ad::ParamId proj_w;
    ad::ParamId proj_b;
    CellParams cell;
  };

  RnnCellGraph cell_;
  RnnBranchConfig config_;
  std::size_t input_dim_;
  ad::ParameterStore store_;
  std::vector<Layer> layers_;
  AttentionPoolParams attention_;
  ad::ParamId head_w_;
  ad::ParamId head_b_;
  std::vector<ad::ParamId> weights_;
};

/// Softmax probabilities of an affine map: pooled [B,h] -> [B,classes].
ad::Var classify(ad::Var pooled, ad::Var weight, ad::Var bias);

}  // namespace emonas::rnn
