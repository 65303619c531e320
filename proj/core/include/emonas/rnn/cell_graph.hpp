#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "emonas/search_space/ops.hpp"

namespace emonas::rnn {

/// Operand names every cell may read.
inline constexpr std::string_view kInputSource = "x_t";
inline constexpr std::string_view kH1Source = "h1_prev";
inline constexpr std::string_view kH2Source = "h2_prev";

bool is_source(std::string_view name) noexcept;

struct RnnNode {
  std::string name;
  space::RnnOp op = space::RnnOp::linear;
  /// Source or node names, as many as the op's arity.
  std::vector<std::string> inputs;
  friend bool operator==(const RnnNode&, const RnnNode&) = default;
};

/// A recurrent cell as a DAG over x_t, h1_prev and h2_prev. h1 is the
/// exposed frame representation, h2 a cell-internal state.
class RnnCellGraph {
 public:
  static constexpr int kFormatVersion = 1;

  /// Validates names, arities and references and topologically sorts the
  /// nodes. Throws FormatError on a cycle or a dangling reference.
  RnnCellGraph(std::string name, std::vector<RnnNode> nodes, std::string h1_output,
               std::string h2_output);

  const std::string& name() const noexcept { return name_; }
  /// Nodes in declaration order.
  const std::vector<RnnNode>& nodes() const noexcept { return nodes_; }
  /// Indices into nodes() in evaluation order.
  const std::vector<std::size_t>& order() const noexcept { return order_; }
  const std::string& h1_output() const noexcept { return h1_output_; }
  const std::string& h2_output() const noexcept { return h2_output_; }
  /// Index of a node by name, or npos for sources.
  std::size_t find(std::string_view name) const;
  /// True when `output` depends on the named source.
  bool depends_on(std::string_view output, std::string_view source) const;

  friend bool operator==(const RnnCellGraph& a, const RnnCellGraph& b) {
    return a.name_ == b.name_ && a.nodes_ == b.nodes_ && a.h1_output_ == b.h1_output_ &&
           a.h2_output_ == b.h2_output_;
  }

  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

 private:
  std::string name_;
  std::vector<RnnNode> nodes_;
  std::vector<std::size_t> order_;
  std::string h1_output_;
  std::string h2_output_;
};

using CellBank = std::vector<RnnCellGraph>;

std::string to_json(const RnnCellGraph& cell);
RnnCellGraph cell_from_json(std::string_view text);

std::string bank_to_json(const CellBank& bank);
/// Throws FormatError on malformed text, a version mismatch, duplicate
/// names or an empty bank.
CellBank bank_from_json(std::string_view text);
CellBank load_cell_bank(const std::filesystem::path& path);

/// Standard gated cells written in the op DSL.
RnnCellGraph lstm_like_cell();
RnnCellGraph gru_like_cell();
/// h1 = tanh(linear(x_t)); h2 passes through. Has no memory.
RnnCellGraph feedforward_cell();
/// Random DAG over the zero-preserving ops (every op maps zero inputs to
/// zero when biases are zero). h1 always depends on x_t and on a previous
/// state.
RnnCellGraph random_cell(std::string name, std::uint64_t seed, std::size_t num_nodes);

/// LSTM-like, GRU-like, feed-forward and two random cells.
CellBank default_cell_bank();

}  // namespace emonas::rnn
