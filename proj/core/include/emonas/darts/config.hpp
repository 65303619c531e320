#pragma once

#include <cstddef>
#include <vector>

#include "emonas/search_space/ops.hpp"

namespace emonas::darts {

enum class CellType { normal, reduction };

/// {L/3, 2L/3} without duplicates, the usual DARTS placement. Empty for L < 2.
std::vector<std::size_t> default_reduction_positions(std::size_t num_cells);

struct NetworkConfig {
  std::size_t num_cells = 3;
  std::size_t channels = 6;
  std::size_t num_nodes = 4;
  std::vector<std::size_t> reduction_positions = default_reduction_positions(3);
  std::size_t input_height = 140;
  std::size_t input_width = 140;
  std::size_t num_classes = 4;
  /// Average-pool factor applied to the input before the stem (1 = none).
  std::size_t input_pool = 1;
  /// Candidate set of every mixed edge, in canonical order.
  std::vector<space::CnnOp> ops{space::kAllCnnOps.begin(), space::kAllCnnOps.end()};

  /// Throws ConfigError on an inconsistent configuration.
  void validate() const;
  bool is_reduction(std::size_t cell) const;
  /// Spatial size seen by the stem after input pooling.
  std::size_t stem_height() const;
  std::size_t stem_width() const;
};

/// Number of mixed edges in a cell with `num_nodes` intermediate nodes.
constexpr std::size_t edge_count(std::size_t num_nodes) {
  return num_nodes * (num_nodes + 3) / 2;
}
/// Index of the first edge into node j; its sources are 0..j+1.
constexpr std::size_t first_edge(std::size_t node) { return node * (node + 3) / 2; }

/// Per-cell channel bookkeeping shared by the relaxed and derived networks.
struct CellGeometry {
  CellType type;
  std::size_t channels;        // C_k, per-node channels
  std::size_t prev_prev_in;    // channels of c_{k-2} before preprocessing
  std::size_t prev_in;         // channels of c_{k-1} before preprocessing
  bool reduce_prev_prev;       // c_{k-2} is at twice the resolution of c_{k-1}
};

std::vector<CellGeometry> cell_geometry(const NetworkConfig& config);

}  // namespace emonas::darts
