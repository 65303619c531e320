#include "emonas/darts/genotype.hpp"

#include <algorithm>
#include <nlohmann/json.hpp>
#include <string>

#include "emonas/darts/network.hpp"
#include "emonas/errors.hpp"

namespace emonas::darts {

namespace {

void validate_cell(const GenotypeCell& cell, const char* label) {
  for (std::size_t j = 0; j < cell.nodes.size(); ++j) {
    const auto& node = cell.nodes[j];
    for (const auto& e : node) {
      if (e.op == space::CnnOp::none) {
        throw FormatError(std::string(label) + " node " + std::to_string(j) + " retains none");
      }
      if (e.source >= j + 2) {
        throw FormatError(std::string(label) + " node " + std::to_string(j) +
                          " reads from source " + std::to_string(e.source) +
                          " which is not an earlier state");
      }
    }
    if (node[0].source == node[1].source) {
      throw FormatError(std::string(label) + " node " + std::to_string(j) +
                        " keeps two edges from the same source");
    }
  }
}

}  // namespace

void Genotype::validate() const {
  if (normal.nodes.empty()) throw FormatError("genotype has no nodes");
  if (reduction.nodes.size() != normal.nodes.size()) {
    throw FormatError("normal and reduction cells differ in node count");
  }
  validate_cell(normal, "normal");
  validate_cell(reduction, "reduction");
  if (num_cells == 0) throw FormatError("genotype num_cells must be positive");
  for (std::size_t i = 0; i < reduction_positions.size(); ++i) {
    if (reduction_positions[i] >= num_cells ||
        (i > 0 && reduction_positions[i] <= reduction_positions[i - 1])) {
      throw FormatError("genotype reduction positions are invalid");
    }
  }
}

GenotypeCell derive_cell(const Tensor& theta, const std::vector<space::CnnOp>& ops,
                         std::size_t num_nodes) {
  const std::size_t edges = edge_count(num_nodes);
  if (theta.shape() != Shape{edges, ops.size()}) {
    throw ShapeError("theta " + shape_str(theta.shape()) + " does not fit " +
                     std::to_string(edges) + " edges x " + std::to_string(ops.size()) + " ops");
  }
  const Tensor w = edge_weights(theta);
  struct Candidate {
    real weight;
    std::size_t op_index;
    std::size_t source;
    space::CnnOp op;
  };
  GenotypeCell cell;
  for (std::size_t j = 0; j < num_nodes; ++j) {
    std::vector<Candidate> kept;
    for (std::size_t s = 0; s < j + 2; ++s) {
      const std::size_t e = first_edge(j) + s;
      std::optional<Candidate> best;
      for (std::size_t o = 0; o < ops.size(); ++o) {
        if (ops[o] == space::CnnOp::none) continue;
        const real v = w[e * ops.size() + o];
        if (!best || v > best->weight) best = Candidate{v, space::index_of(ops[o]), s, ops[o]};
      }
      if (best) kept.push_back(*best);
    }
    if (kept.size() < 2) {
      throw ConfigError("node " + std::to_string(j) +
                        " has fewer than two edges with a non-none op");
    }
    std::stable_sort(kept.begin(), kept.end(), [](const Candidate& a, const Candidate& b) {
      if (a.weight != b.weight) return a.weight > b.weight;
      if (a.op_index != b.op_index) return a.op_index < b.op_index;
      return a.source < b.source;
    });
    GenotypeNode node{GenotypeEdge{kept[0].source, kept[0].op},
                      GenotypeEdge{kept[1].source, kept[1].op}};
    if (node[1].source < node[0].source) std::swap(node[0], node[1]);
    cell.nodes.push_back(node);
  }
  return cell;
}

namespace {

std::vector<space::CnnOp> retainable(const std::vector<space::CnnOp>& ops) {
  std::vector<space::CnnOp> out;
  for (auto op : ops) {
    if (op != space::CnnOp::none) out.push_back(op);
  }
  return out;
}

}  // namespace

std::size_t count_cells(const std::vector<space::CnnOp>& ops, std::size_t num_nodes) {
  const std::size_t k = retainable(ops).size();
  std::size_t n = 1;
  for (std::size_t j = 0; j < num_nodes; ++j) {
    const std::size_t sources = j + 2;
    n *= sources * (sources - 1) / 2 * k * k;
  }
  return n;
}

std::vector<GenotypeCell> enumerate_cells(const std::vector<space::CnnOp>& ops,
                                          std::size_t num_nodes) {
  const auto choices = retainable(ops);
  if (choices.empty()) throw ConfigError("no retainable op to enumerate");
  std::vector<GenotypeCell> cells{GenotypeCell{}};
  for (std::size_t j = 0; j < num_nodes; ++j) {
    std::vector<GenotypeCell> next;
    for (const auto& prefix : cells) {
      for (std::size_t a = 0; a < j + 2; ++a) {
        for (std::size_t b = a + 1; b < j + 2; ++b) {
          for (auto op_a : choices) {
            for (auto op_b : choices) {
              GenotypeCell cell = prefix;
              cell.nodes.push_back({GenotypeEdge{a, op_a}, GenotypeEdge{b, op_b}});
              next.push_back(std::move(cell));
            }
          }
        }
      }
    }
    cells = std::move(next);
  }
  return cells;
}

std::vector<Genotype> enumerate_genotypes(const NetworkConfig& config, std::size_t limit) {
  config.validate();
  const std::size_t per_cell = count_cells(config.ops, config.num_nodes);
  const bool has_reduction = !config.reduction_positions.empty();
  const std::size_t total = has_reduction ? per_cell * per_cell : per_cell;
  if (per_cell > limit || total > limit) {
    throw ConfigError("search space has " + std::to_string(total) +
                      " architectures, above the enumeration limit of " + std::to_string(limit));
  }
  const auto cells = enumerate_cells(config.ops, config.num_nodes);
  std::vector<Genotype> out;
  out.reserve(total);
  auto make = [&](const GenotypeCell& normal, const GenotypeCell& reduction) {
    Genotype g;
    g.normal = normal;
    g.reduction = reduction;
    g.num_cells = config.num_cells;
    g.reduction_positions = config.reduction_positions;
    return g;
  };
  for (const auto& normal : cells) {
    if (!has_reduction) {
      out.push_back(make(normal, normal));
      continue;
    }
    for (const auto& reduction : cells) out.push_back(make(normal, reduction));
  }
  return out;
}

namespace {

using nlohmann::json;

json cell_json(const GenotypeCell& cell) {
  json nodes = json::array();
  for (const auto& node : cell.nodes) {
    json edges = json::array();
    for (const auto& e : node) {
      edges.push_back({{"source", e.source}, {"op", std::string(space::to_string(e.op))}});
    }
    nodes.push_back(edges);
  }
  return nodes;
}

GenotypeCell cell_from_json(const json& j) {
  GenotypeCell cell;
  for (const auto& node : j) {
    if (!node.is_array() || node.size() != 2) {
      throw FormatError("every genotype node needs exactly two edges");
    }
    GenotypeNode out;
    for (std::size_t i = 0; i < 2; ++i) {
      out[i].source = node[i].at("source").get<std::size_t>();
      out[i].op = space::parse_cnn_op(node[i].at("op").get<std::string>());
    }
    cell.nodes.push_back(out);
  }
  return cell;
}

}  // namespace

std::string to_json(const Genotype& g) {
  json meta = {{"seed", g.metadata.seed}, {"epochs", g.metadata.epochs}};
  meta["final_val_loss"] =
      g.metadata.final_val_loss ? json(*g.metadata.final_val_loss) : json(nullptr);
  json j = {
      {"format", "emonas-genotype"},
      {"version", Genotype::kFormatVersion},
      {"num_cells", g.num_cells},
      {"reduction_positions", g.reduction_positions},
      {"normal", cell_json(g.normal)},
      {"reduction", cell_json(g.reduction)},
      {"metadata", meta},
  };
  return j.dump(2) + "\n";
}

Genotype genotype_from_json(std::string_view text) {
  Genotype g;
  try {
    const json j = json::parse(text);
    if (j.at("format").get<std::string>() != "emonas-genotype") {
      throw FormatError("not a genotype file");
    }
    if (j.at("version").get<int>() != Genotype::kFormatVersion) {
      throw FormatError("unsupported genotype version " + j.at("version").dump());
    }
    g.num_cells = j.at("num_cells").get<std::size_t>();
    g.reduction_positions = j.at("reduction_positions").get<std::vector<std::size_t>>();
    g.normal = cell_from_json(j.at("normal"));
    g.reduction = cell_from_json(j.at("reduction"));
    const json& m = j.at("metadata");
    g.metadata.seed = m.at("seed").get<std::uint64_t>();
    g.metadata.epochs = m.at("epochs").get<std::size_t>();
    if (!m.at("final_val_loss").is_null()) {
      g.metadata.final_val_loss = m.at("final_val_loss").get<double>();
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed genotype: ") + e.what());
  }
  g.validate();
  return g;
}

}  // namespace emonas::darts
