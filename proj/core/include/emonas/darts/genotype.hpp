#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "emonas/autodiff/tensor.hpp"
#include "emonas/darts/config.hpp"

namespace emonas::darts {

/// Source index 0 is c_{k-2}, 1 is c_{k-1}, 2+i is intermediate node i.
struct GenotypeEdge {
  std::size_t source = 0;
  space::CnnOp op = space::CnnOp::skip_connect;
  friend bool operator==(const GenotypeEdge&, const GenotypeEdge&) = default;
};

using GenotypeNode = std::array<GenotypeEdge, 2>;

struct GenotypeCell {
  std::vector<GenotypeNode> nodes;
  friend bool operator==(const GenotypeCell&, const GenotypeCell&) = default;
};

struct GenotypeMetadata {
  std::uint64_t seed = 0;
  std::size_t epochs = 0;
  std::optional<double> final_val_loss;
  friend bool operator==(const GenotypeMetadata&, const GenotypeMetadata&) = default;
};

struct Genotype {
  static constexpr int kFormatVersion = 1;

  GenotypeCell normal;
  GenotypeCell reduction;
  /// Macro layout the genotype was searched for.
  std::size_t num_cells = 0;
  std::vector<std::size_t> reduction_positions;
  GenotypeMetadata metadata;

  std::size_t num_nodes() const noexcept { return normal.nodes.size(); }
  const GenotypeCell& cell(CellType type) const {
    return type == CellType::normal ? normal : reduction;
  }
  /// Throws FormatError: none retained, wrong edge count, out-of-range source.
  void validate() const;
  friend bool operator==(const Genotype&, const Genotype&) = default;
};

/// Discretises one cell. `theta` is [edges, ops.size()]; rows follow
/// first_edge() order. Per edge the strongest non-none op is kept, then the
/// two edges with the largest kept weights per node. Ties go to the lowest
/// op index, then the lowest source index.
GenotypeCell derive_cell(const Tensor& theta, const std::vector<space::CnnOp>& ops,
                         std::size_t num_nodes);

/// Every discrete cell of the space: per node, two distinct sources in
/// ascending order, each with a non-none op from `ops`.
std::vector<GenotypeCell> enumerate_cells(const std::vector<space::CnnOp>& ops,
                                          std::size_t num_nodes);
/// Number of cells enumerate_cells would return.
std::size_t count_cells(const std::vector<space::CnnOp>& ops, std::size_t num_nodes);

/// Every discrete architecture of `config`. A network without reduction
/// cells only enumerates the normal cell and mirrors it into the unused
/// reduction slot. Throws ConfigError above `limit` architectures.
std::vector<Genotype> enumerate_genotypes(const NetworkConfig& config, std::size_t limit = 4096);

std::string to_json(const Genotype& genotype);
/// Throws FormatError on malformed text, unknown ops or a version mismatch.
Genotype genotype_from_json(std::string_view text);

}  // namespace emonas::darts
