#include "emonas/darts/config.hpp"

#include <algorithm>
#include <string>

#include "emonas/errors.hpp"

namespace emonas::darts {

std::vector<std::size_t> default_reduction_positions(std::size_t num_cells) {
  if (num_cells < 2) return {};
  std::vector<std::size_t> out{num_cells / 3, 2 * num_cells / 3};
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

void NetworkConfig::validate() const {
  if (num_cells == 0) throw ConfigError("num_cells must be positive");
  if (channels == 0) throw ConfigError("channels must be positive");
  if (num_nodes == 0) throw ConfigError("num_nodes must be positive");
  if (num_classes < 2) throw ConfigError("num_classes must be at least 2");
  if (input_pool == 0) throw ConfigError("input_pool must be positive");
  if (input_height < input_pool || input_width < input_pool) {
    throw ConfigError("input smaller than the input pooling factor");
  }
  for (std::size_t i = 0; i < reduction_positions.size(); ++i) {
    if (reduction_positions[i] >= num_cells) {
      throw ConfigError("reduction position " + std::to_string(reduction_positions[i]) +
                        " outside [0, " + std::to_string(num_cells) + ")");
    }
    if (i > 0 && reduction_positions[i] <= reduction_positions[i - 1]) {
      throw ConfigError("reduction positions must be strictly increasing");
    }
  }
  if (ops.empty()) throw ConfigError("empty candidate op set");
  for (std::size_t i = 1; i < ops.size(); ++i) {
    if (space::index_of(ops[i]) <= space::index_of(ops[i - 1])) {
      throw ConfigError("candidate ops must be unique and in canonical order");
    }
  }
  if (std::all_of(ops.begin(), ops.end(), [](auto op) { return op == space::CnnOp::none; })) {
    throw ConfigError("candidate op set needs at least one op other than none");
  }
}

bool NetworkConfig::is_reduction(std::size_t cell) const {
  return std::find(reduction_positions.begin(), reduction_positions.end(), cell) !=
         reduction_positions.end();
}

std::size_t NetworkConfig::stem_height() const { return input_height / input_pool; }
std::size_t NetworkConfig::stem_width() const { return input_width / input_pool; }

std::vector<CellGeometry> cell_geometry(const NetworkConfig& config) {
  config.validate();
  std::vector<CellGeometry> out;
  std::size_t c = config.channels;
  std::size_t pp = config.channels;
  std::size_t p = config.channels;
  bool prev_reduced = false;
  for (std::size_t k = 0; k < config.num_cells; ++k) {
    const bool reduce = config.is_reduction(k);
    if (reduce) c *= 2;
    out.push_back({reduce ? CellType::reduction : CellType::normal, c, pp, p, prev_reduced});
    prev_reduced = reduce;
    pp = p;
    p = config.num_nodes * c;
  }
  return out;
}

}  // namespace emonas::darts
