#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <utility>
#include <array>
#include <vector>

#include "emonas/autodiff/ops.hpp"
#include "emonas/autodiff/parameters.hpp"
#include "emonas/darts/config.hpp"
#include "emonas/darts/genotype.hpp"

namespace emonas::darts {

/// softmax over the last axis of a theta tensor, without a tape.
Tensor edge_weights(const Tensor& theta);

/// One relaxed edge: every candidate op with its own weights.
class MixedEdge {
 public:
  MixedEdge(const std::vector<space::CnnOp>& ops, std::size_t channels, std::size_t stride,
            ad::ParameterStore& store, Rng& rng, const std::string& prefix);

  std::size_t stride() const noexcept { return stride_; }
  std::size_t channels() const noexcept { return channels_; }
  const std::vector<space::CnnOpParams>& candidates() const noexcept { return candidates_; }
  std::vector<ad::ParamId> weights() const;

 private:
  std::size_t channels_;
  std::size_t stride_;
  std::vector<space::CnnOpParams> candidates_;
};

/// sum_o w[o] * o(x). `alpha` is a [1, ops] (or [ops]) row of mixing weights
/// already on the tape. Terms are summed in candidate order.
ad::Var mixed_op_forward(const MixedEdge& edge, ad::Var x, ad::Var alpha);

/// A relaxed cell operating on already-preprocessed inputs.
class SearchCell {
 public:
  SearchCell(CellType type, std::size_t num_nodes, std::size_t channels,
             const std::vector<space::CnnOp>& ops, ad::ParameterStore& store, Rng& rng,
             const std::string& prefix);

  CellType type() const noexcept { return type_; }
  std::size_t num_nodes() const noexcept { return num_nodes_; }
  const std::vector<MixedEdge>& edges() const noexcept { return edges_; }

  /// `alpha` is softmax(theta) as [edges, ops]. Returns the N node outputs.
  std::vector<ad::Var> nodes(ad::Var s0, ad::Var s1, ad::Var alpha) const;
  /// Channel concat of all nodes: N*C channels.
  ad::Var forward(ad::Var s0, ad::Var s1, ad::Var alpha) const;

 private:
  CellType type_;
  std::size_t num_nodes_;
  std::size_t channels_;
  std::vector<MixedEdge> edges_;
};

/// Stem, per-cell input preprocessing and classifier head common to the
/// relaxed and the derived network.
class Skeleton {
 public:
  Skeleton(const NetworkConfig& config, ad::ParameterStore& store, std::uint64_t seed);

  const NetworkConfig& config() const noexcept { return config_; }
  const std::vector<CellGeometry>& geometry() const noexcept { return geometry_; }
  std::vector<ad::ParamId> weights() const;

  /// Validates [B,1,H,W] against the config and applies pooling + stem.
  ad::Var stem(ad::Tape& tape, const Tensor& input) const;
  std::pair<ad::Var, ad::Var> preprocess(std::size_t cell, ad::Var s0, ad::Var s1) const;
  ad::Var head(ad::Var last) const;

 private:
  NetworkConfig config_;
  std::vector<CellGeometry> geometry_;
  ad::ParamId stem_;
  std::vector<std::vector<ad::ParamId>> pre0_;
  std::vector<ad::ParamId> pre1_;
  ad::ParamId head_w_;
  ad::ParamId head_b_;
};

/// The relaxed supernet. Owns its parameter store; theta is shared by all
/// cells of one type and initialised to zero (uniform mixing).
class SearchNetwork {
 public:
  SearchNetwork(const NetworkConfig& config, std::uint64_t seed);

  const NetworkConfig& config() const noexcept { return skeleton_.config(); }
  ad::ParameterStore& store() noexcept { return store_; }
  const ad::ParameterStore& store() const noexcept { return store_; }

  /// Network weights (omega): stem, preprocessing, op weights, head.
  const std::vector<ad::ParamId>& weights() const noexcept { return weights_; }
  /// Architecture parameters: theta per cell type.
  std::vector<ad::ParamId> architecture() const { return {theta_normal_, theta_reduce_}; }
  ad::ParamId theta(CellType type) const {
    return type == CellType::normal ? theta_normal_ : theta_reduce_;
  }
  const SearchCell& cell(std::size_t k) const { return cells_.at(k); }

  /// [B,1,H,W] -> logits [B,classes].
  ad::Var forward(ad::Tape& tape, const Tensor& input) const;

  std::size_t weight_count() const { return store_.numel(weights_); }
  std::size_t architecture_count() const { return store_.numel(architecture()); }

  Genotype derive() const;

 private:
  ad::ParameterStore store_;
  Skeleton skeleton_;
  std::vector<SearchCell> cells_;
  std::vector<ad::ParamId> weights_;
  ad::ParamId theta_normal_;
  ad::ParamId theta_reduce_;
};

/// Discrete network built from a genotype with fresh weights.
class DerivedNetwork {
 public:
  /// Throws ConfigError when the genotype does not fit the config (N, L,
  /// reduction positions).
  DerivedNetwork(const Genotype& genotype, const NetworkConfig& config, std::uint64_t seed);

  const NetworkConfig& config() const noexcept { return skeleton_.config(); }
  const Genotype& genotype() const noexcept { return genotype_; }
  ad::ParameterStore& store() noexcept { return store_; }
  const ad::ParameterStore& store() const noexcept { return store_; }
  const std::vector<ad::ParamId>& weights() const noexcept { return weights_; }
  std::size_t weight_count() const { return store_.numel(weights_); }

  ad::Var forward(ad::Tape& tape, const Tensor& input) const;

 private:
  struct Cell {
    CellType type;
    std::vector<std::array<space::CnnOpParams, 2>> ops;
  };

  Genotype genotype_;
  ad::ParameterStore store_;
  Skeleton skeleton_;
  std::vector<Cell> cells_;
  std::vector<ad::ParamId> weights_;
};

/// Applies one discrete cell: node j = op_a(src_a) + op_b(src_b).
ad::Var derived_cell_forward(const GenotypeCell& cell,
                             const std::vector<std::array<space::CnnOpParams, 2>>& ops,
                             ad::Var s0, ad::Var s1);

}  // namespace emonas::darts
