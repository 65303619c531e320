#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "emonas/darts/genotype.hpp"
#include "emonas/rnn/cell_graph.hpp"

namespace emonas::harness {

/// Normal and reduction cells as two digraphs named "normal" and
/// "reduction". Nodes are c_{k-2}, c_{k-1}, 0..N-1 and c_{k}; each retained
/// operation is an edge labelled with its op name; the concatenation into
/// c_{k} is drawn with unlabelled dashed edges. Throws FormatError on an
/// invalid genotype.
std::string export_dot(const darts::Genotype& genotype);

/// One digraph named after the cell. Sources x_t, h1_prev, h2_prev; each
/// node is drawn as "name: op"; edges run from operands to the node, and
/// the two outputs feed h1_next and h2_next.
std::string export_dot(const rnn::RnnCellGraph& cell);

struct DotEdge {
  std::string graph;
  std::string from;
  std::string to;
  /// Empty for unlabelled edges.
  std::string label;
  friend bool operator==(const DotEdge&, const DotEdge&) = default;
  friend auto operator<=>(const DotEdge&, const DotEdge&) = default;
};

/// Edges of the digraphs written by export_dot (quoted ids, optional
/// label attribute). Throws FormatError on anything else.
std::vector<DotEdge> parse_dot_edges(std::string_view text);

}  // namespace emonas::harness
