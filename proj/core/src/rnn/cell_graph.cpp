#include "emonas/rnn/cell_graph.hpp"

#include <algorithm>
#include <fstream>
#include <nlohmann/json.hpp>
#include <set>
#include <sstream>

#include "emonas/autodiff/random.hpp"
#include "emonas/errors.hpp"

namespace emonas::rnn {

using space::RnnOp;

bool is_source(std::string_view name) noexcept {
  return name == kInputSource || name == kH1Source || name == kH2Source;
}

RnnCellGraph::RnnCellGraph(std::string name, std::vector<RnnNode> nodes, std::string h1_output,
                           std::string h2_output)
    : name_(std::move(name)),
      nodes_(std::move(nodes)),
      h1_output_(std::move(h1_output)),
      h2_output_(std::move(h2_output)) {
  const std::string where = "cell '" + name_ + "': ";
  if (name_.empty()) throw FormatError("cell name is empty");
  std::set<std::string_view> seen;
  for (const auto& n : nodes_) {
    if (n.name.empty() || is_source(n.name)) {
      throw FormatError(where + "invalid node name '" + n.name + "'");
    }
    if (!seen.insert(n.name).second) throw FormatError(where + "duplicate node '" + n.name + "'");
    if (n.inputs.size() != space::arity(n.op)) {
      throw FormatError(where + "node '" + n.name + "' (" + std::string(space::to_string(n.op)) +
                        ") takes " + std::to_string(space::arity(n.op)) + " operands, got " +
                        std::to_string(n.inputs.size()));
    }
  }
  auto resolve = [&](const std::string& ref, const std::string& user) {
    if (!is_source(ref) && !seen.contains(ref)) {
      throw FormatError(where + user + " reads unknown operand '" + ref + "'");
    }
  };
  for (const auto& n : nodes_) {
    for (const auto& in : n.inputs) resolve(in, "node '" + n.name + "'");
  }
  resolve(h1_output_, "output h1");
  resolve(h2_output_, "output h2");

  // Kahn's algorithm; among ready nodes the earliest declared goes first.
  std::vector<std::size_t> pending(nodes_.size(), 0);
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    for (const auto& in : nodes_[i].inputs) pending[i] += is_source(in) ? 0 : 1;
  }
  std::vector<bool> done(nodes_.size(), false);
  while (order_.size() < nodes_.size()) {
    std::size_t next = npos;
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      if (!done[i] && pending[i] == 0) {
        next = i;
        break;
      }
    }
    if (next == npos) {
      const auto it = std::find(done.begin(), done.end(), false);
      throw FormatError(where + "cycle through node '" + nodes_[it - done.begin()].name + "'");
    }
    done[next] = true;
    order_.push_back(next);
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      for (const auto& in : nodes_[i].inputs) {
        if (in == nodes_[next].name) --pending[i];
      }
    }
  }
}

std::size_t RnnCellGraph::find(std::string_view name) const {
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (nodes_[i].name == name) return i;
  }
  return npos;
}

bool RnnCellGraph::depends_on(std::string_view output, std::string_view source) const {
  if (output == source) return true;
  const std::size_t i = find(output);
  if (i == npos) return false;
  return std::any_of(nodes_[i].inputs.begin(), nodes_[i].inputs.end(),
                     [&](const std::string& in) { return depends_on(in, source); });
}

namespace {

using nlohmann::json;

json cell_object(const RnnCellGraph& cell) {
  json nodes = json::array();
  for (const auto& n : cell.nodes()) {
    nodes.push_back(
        {{"name", n.name}, {"op", std::string(space::to_string(n.op))}, {"inputs", n.inputs}});
  }
  return {{"name", cell.name()},
          {"nodes", nodes},
          {"outputs", {{"h1", cell.h1_output()}, {"h2", cell.h2_output()}}}};
}

RnnCellGraph cell_from_object(const json& j) {
  std::vector<RnnNode> nodes;
  for (const auto& n : j.at("nodes")) {
    nodes.push_back({n.at("name").get<std::string>(),
                     space::parse_rnn_op(n.at("op").get<std::string>()),
                     n.at("inputs").get<std::vector<std::string>>()});
  }
  const json& out = j.at("outputs");
  return RnnCellGraph(j.at("name").get<std::string>(), std::move(nodes),
                      out.at("h1").get<std::string>(), out.at("h2").get<std::string>());
}

json parse_versioned(std::string_view text, const char* format) {
  json j = json::parse(text);
  if (j.at("format").get<std::string>() != format) {
    throw FormatError(std::string("not an ") + format + " file");
  }
  if (j.at("version").get<int>() != RnnCellGraph::kFormatVersion) {
    throw FormatError("unsupported " + std::string(format) + " version " + j.at("version").dump());
  }
  return j;
}

}  // namespace

std::string to_json(const RnnCellGraph& cell) {
  json j = {{"format", "emonas-rnn-cell"}, {"version", RnnCellGraph::kFormatVersion}};
  j.update(cell_object(cell));
  return j.dump(2) + "\n";
}

RnnCellGraph cell_from_json(std::string_view text) {
  try {
    return cell_from_object(parse_versioned(text, "emonas-rnn-cell"));
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed cell: ") + e.what());
  }
}

std::string bank_to_json(const CellBank& bank) {
  json cells = json::array();
  for (const auto& c : bank) cells.push_back(cell_object(c));
  json j = {{"format", "emonas-cell-bank"},
            {"version", RnnCellGraph::kFormatVersion},
            {"cells", cells}};
  return j.dump(2) + "\n";
}

CellBank bank_from_json(std::string_view text) {
  CellBank bank;
  try {
    const json j = parse_versioned(text, "emonas-cell-bank");
    for (const auto& c : j.at("cells")) bank.push_back(cell_from_object(c));
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed cell bank: ") + e.what());
  }
  if (bank.empty()) throw FormatError("cell bank is empty");
  std::set<std::string> names;
  for (const auto& c : bank) {
    if (!names.insert(c.name()).second) {
      throw FormatError("cell bank has two cells named '" + c.name() + "'");
    }
  }
  return bank;
}

CellBank load_cell_bank(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open cell bank " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return bank_from_json(ss.str());
}

namespace {

RnnNode node(std::string name, RnnOp op, std::vector<std::string> inputs) {
  return {std::move(name), op, std::move(inputs)};
}

// pre-activation W x + U h as three nodes: <p>_x, <p>_h, <p>
void gate_input(std::vector<RnnNode>& nodes, const std::string& p, const std::string& state) {
  nodes.push_back(node(p + "_x", RnnOp::linear, {"x_t"}));
  nodes.push_back(node(p + "_h", RnnOp::linear, {state}));
  nodes.push_back(node(p, RnnOp::elementwise_sum, {p + "_x", p + "_h"}));
}

}  // namespace

RnnCellGraph lstm_like_cell() {
  std::vector<RnnNode> n;
  for (const char* g : {"i", "f", "o"}) {
    gate_input(n, std::string(g) + "_pre", "h1_prev");
    n.push_back(node(g, RnnOp::sigmoid_act, {std::string(g) + "_pre"}));
  }
  gate_input(n, "g_pre", "h1_prev");
  n.push_back(node("g", RnnOp::tanh_act, {"g_pre"}));
  n.push_back(node("keep", RnnOp::elementwise_product, {"f", "h2_prev"}));
  n.push_back(node("write", RnnOp::elementwise_product, {"i", "g"}));
  n.push_back(node("c", RnnOp::elementwise_sum, {"keep", "write"}));
  n.push_back(node("c_act", RnnOp::tanh_act, {"c"}));
  n.push_back(node("h", RnnOp::elementwise_product, {"o", "c_act"}));
  return RnnCellGraph("lstm_like", std::move(n), "h", "c");
}

RnnCellGraph gru_like_cell() {
  std::vector<RnnNode> n;
  gate_input(n, "z", "h1_prev");
  gate_input(n, "r_pre", "h1_prev");
  n.push_back(node("r", RnnOp::sigmoid_act, {"r_pre"}));
  n.push_back(node("n_x", RnnOp::linear, {"x_t"}));
  n.push_back(node("n_h", RnnOp::linear, {"h1_prev"}));
  n.push_back(node("n_rh", RnnOp::elementwise_product, {"r", "n_h"}));
  n.push_back(node("n_pre", RnnOp::elementwise_sum, {"n_x", "n_rh"}));
  n.push_back(node("n", RnnOp::tanh_act, {"n_pre"}));
  // blend(z, h, n) = sigmoid(z) h + (1 - sigmoid(z)) n
  n.push_back(node("h", RnnOp::blend, {"z", "h1_prev", "n"}));
  return RnnCellGraph("gru_like", std::move(n), "h", "h");
}

RnnCellGraph feedforward_cell() {
  std::vector<RnnNode> n{node("a", RnnOp::linear, {"x_t"}), node("h", RnnOp::tanh_act, {"a"})};
  return RnnCellGraph("feedforward", std::move(n), "h", "h2_prev");
}

RnnCellGraph random_cell(std::string name, std::uint64_t seed, std::size_t num_nodes) {
  if (num_nodes < 2) throw ConfigError("random cells need at least 2 nodes");
  static constexpr RnnOp kPool[] = {RnnOp::linear,          RnnOp::blend,
                                    RnnOp::elementwise_product, RnnOp::elementwise_sum,
                                    RnnOp::tanh_act,        RnnOp::leaky_relu_act};
  Rng rng(derive_seed(seed, "random-cell"));
  for (;;) {
    std::vector<std::string> pool{"x_t", "h1_prev", "h2_prev"};
    std::vector<RnnNode> nodes;
    std::size_t linear = 0;
    for (std::size_t i = 0; i < num_nodes; ++i) {
      const RnnOp op = kPool[rng.below(std::size(kPool))];
      linear += op == RnnOp::linear;
      std::vector<std::string> inputs;
      for (std::size_t k = 0; k < space::arity(op); ++k) {
        inputs.push_back(pool[rng.below(pool.size())]);
      }
      nodes.push_back(node("n" + std::to_string(i), op, std::move(inputs)));
      pool.push_back(nodes.back().name);
    }
    const std::string h1 = nodes.back().name;
    const std::string h2 = nodes[rng.below(num_nodes - 1)].name;
    RnnCellGraph cell(name, std::move(nodes), h1, h2);
    const bool recurrent = cell.depends_on(h1, kH1Source) || cell.depends_on(h1, kH2Source);
    if (linear >= 2 && cell.depends_on(h1, kInputSource) && recurrent) return cell;
  }
}

CellBank default_cell_bank() {
  return {lstm_like_cell(), gru_like_cell(), feedforward_cell(), random_cell("random_a", 1, 6),
          random_cell("random_b", 2, 8)};
}

}  // namespace emonas::rnn
