#include "emonas/darts/network.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "emonas/errors.hpp"

namespace emonas::darts {

Tensor edge_weights(const Tensor& theta) {
  if (theta.rank() == 0) throw ShapeError("edge_weights of an empty tensor");
  const std::size_t k = theta.shape().back();
  Tensor out(theta.shape());
  for (std::size_t r = 0; r < theta.numel() / k; ++r) {
    const real* t = theta.raw() + r * k;
    real* o = out.raw() + r * k;
    const real m = *std::max_element(t, t + k);
    real z = 0;
    for (std::size_t i = 0; i < k; ++i) z += (o[i] = std::exp(t[i] - m));
    for (std::size_t i = 0; i < k; ++i) o[i] /= z;
  }
  return out;
}

MixedEdge::MixedEdge(const std::vector<space::CnnOp>& ops, std::size_t channels,
                     std::size_t stride, ad::ParameterStore& store, Rng& rng,
                     const std::string& prefix)
    : channels_(channels), stride_(stride) {
  for (auto op : ops) {
    candidates_.push_back(space::make_cnn_op_params(op, channels, stride, store, rng, prefix));
  }
}

std::vector<ad::ParamId> MixedEdge::weights() const {
  std::vector<ad::ParamId> out;
  for (const auto& c : candidates_) out.insert(out.end(), c.weights.begin(), c.weights.end());
  return out;
}

ad::Var mixed_op_forward(const MixedEdge& edge, ad::Var x, ad::Var alpha) {
  const std::size_t k = edge.candidates().size();
  if (alpha.value().numel() != k) {
    throw ShapeError("mixing weights " + shape_str(alpha.shape()) + " for " +
                     std::to_string(k) + " candidates");
  }
  ad::Var row = alpha.shape().size() == 1 ? alpha : ad::reshape(alpha, {k});
  std::optional<ad::Var> total;
  for (std::size_t o = 0; o < k; ++o) {
    const auto& cand = edge.candidates()[o];
    // none contributes exactly zero; its weight still enters the softmax
    if (cand.kind == space::CnnOp::none) continue;
    ad::Var term = ad::mul(space::cnn_op_apply(cand.kind, x, edge.stride(), cand),
                           ad::slice(row, 0, o, 1));
    total = total ? ad::add(*total, term) : term;
  }
  if (!total) return space::cnn_op_apply(space::CnnOp::none, x, edge.stride(), {});
  return *total;
}

SearchCell::SearchCell(CellType type, std::size_t num_nodes, std::size_t channels,
                       const std::vector<space::CnnOp>& ops, ad::ParameterStore& store,
                       Rng& rng, const std::string& prefix)
    : type_(type), num_nodes_(num_nodes), channels_(channels) {
  for (std::size_t j = 0; j < num_nodes; ++j) {
    for (std::size_t s = 0; s < j + 2; ++s) {
      const std::size_t stride = (type == CellType::reduction && s < 2) ? 2 : 1;
      edges_.emplace_back(ops, channels, stride, store, rng,
                          prefix + ".e" + std::to_string(first_edge(j) + s));
    }
  }
}

std::vector<ad::Var> SearchCell::nodes(ad::Var s0, ad::Var s1, ad::Var alpha) const {
  if (s0.shape() != s1.shape() || s0.shape().size() != 4 || s0.shape()[1] != channels_) {
    throw ShapeError("cell inputs " + shape_str(s0.shape()) + " and " + shape_str(s1.shape()) +
                     " do not match a " + std::to_string(channels_) + "-channel cell");
  }
  const std::size_t k = edges_.front().candidates().size();
  if (alpha.shape() != Shape{edges_.size(), k}) {
    throw ShapeError("cell mixing weights " + shape_str(alpha.shape()) + ", expected [" +
                     std::to_string(edges_.size()) + "," + std::to_string(k) + "]");
  }
  std::vector<ad::Var> states{s0, s1};
  std::vector<ad::Var> out;
  for (std::size_t j = 0; j < num_nodes_; ++j) {
    std::optional<ad::Var> acc;
    for (std::size_t s = 0; s < j + 2; ++s) {
      const std::size_t e = first_edge(j) + s;
      ad::Var y = mixed_op_forward(edges_[e], states[s], ad::slice(alpha, 0, e, 1));
      acc = acc ? ad::add(*acc, y) : y;
    }
    states.push_back(*acc);
    out.push_back(*acc);
  }
  return out;
}

ad::Var SearchCell::forward(ad::Var s0, ad::Var s1, ad::Var alpha) const {
  const auto n = nodes(s0, s1, alpha);
  return n.size() == 1 ? n.front() : ad::concat(n, 1);
}

namespace {

ad::Var conv1x1(ad::Var x, ad::ParamId w) {
  return ad::conv2d(ad::leaky_relu(x), x.tape().param(w), {});
}

}  // namespace

Skeleton::Skeleton(const NetworkConfig& config, ad::ParameterStore& store, std::uint64_t seed)
    : config_(config), geometry_(cell_geometry(config)) {
  Rng rng(derive_seed(seed, "skeleton"));
  const std::size_t c = config.channels;
  stem_ = store.add_uniform("stem", {c, 1, 1, 1}, 1, rng);
  for (std::size_t k = 0; k < geometry_.size(); ++k) {
    const auto& g = geometry_[k];
    const std::string p = "cell" + std::to_string(k);
    if (g.reduce_prev_prev) {
      pre0_.push_back(space::make_factorized_reduce_params(g.prev_prev_in, g.channels, store,
                                                           rng, p + ".pre0"));
    } else {
      pre0_.push_back({store.add_uniform(p + ".pre0", {g.channels, g.prev_prev_in, 1, 1},
                                         g.prev_prev_in, rng)});
    }
    pre1_.push_back(
        store.add_uniform(p + ".pre1", {g.channels, g.prev_in, 1, 1}, g.prev_in, rng));
  }
  const std::size_t last = config.num_nodes * geometry_.back().channels;
  head_w_ = store.add_uniform("head.w", {config.num_classes, last}, last, rng);
  head_b_ = store.add_uniform("head.b", {config.num_classes}, last, rng);
}

std::vector<ad::ParamId> Skeleton::weights() const {
  std::vector<ad::ParamId> out{stem_};
  for (std::size_t k = 0; k < pre0_.size(); ++k) {
    out.insert(out.end(), pre0_[k].begin(), pre0_[k].end());
    out.push_back(pre1_[k]);
  }
  out.push_back(head_w_);
  out.push_back(head_b_);
  return out;
}

ad::Var Skeleton::stem(ad::Tape& tape, const Tensor& input) const {
  const Shape& s = input.shape();
  if (s.size() != 4 || s[1] != 1 || s[2] != config_.input_height ||
      s[3] != config_.input_width) {
    throw ShapeError("input " + shape_str(s) + " does not match the configured [B,1," +
                     std::to_string(config_.input_height) + "," +
                     std::to_string(config_.input_width) + "]");
  }
  ad::Var x = tape.input("spectrogram", input);
  if (config_.input_pool > 1) {
    const std::size_t p = config_.input_pool;
    x = ad::avg_pool2d(x, {.kernel = p, .stride = p, .padding = 0});
  }
  return ad::conv2d(x, tape.param(stem_), {});
}

std::pair<ad::Var, ad::Var> Skeleton::preprocess(std::size_t cell, ad::Var s0,
                                                 ad::Var s1) const {
  ad::Var p0 = geometry_.at(cell).reduce_prev_prev ? space::factorized_reduce(s0, pre0_[cell])
                                                   : conv1x1(s0, pre0_[cell].front());
  return {p0, conv1x1(s1, pre1_[cell])};
}

ad::Var Skeleton::head(ad::Var last) const {
  const Shape& s = last.shape();
  ad::Var pooled = ad::mean(ad::reshape(last, {s[0], s[1], s[2] * s[3]}), 2);
  ad::Tape& t = last.tape();
  return ad::affine(pooled, t.param(head_w_), t.param(head_b_));
}

SearchNetwork::SearchNetwork(const NetworkConfig& config, std::uint64_t seed)
    : skeleton_(config, store_, seed) {
  Rng rng(derive_seed(seed, "cells"));
  const auto& geo = skeleton_.geometry();
  for (std::size_t k = 0; k < geo.size(); ++k) {
    cells_.emplace_back(geo[k].type, config.num_nodes, geo[k].channels, config.ops, store_, rng,
                        "cell" + std::to_string(k));
  }
  weights_ = skeleton_.weights();
  for (const auto& cell : cells_) {
    for (const auto& e : cell.edges()) {
      const auto w = e.weights();
      weights_.insert(weights_.end(), w.begin(), w.end());
    }
  }
  const Shape theta_shape{edge_count(config.num_nodes), config.ops.size()};
  theta_normal_ = store_.add_zeros("theta.normal", theta_shape);
  theta_reduce_ = store_.add_zeros("theta.reduction", theta_shape);
}

ad::Var SearchNetwork::forward(ad::Tape& tape, const Tensor& input) const {
  ad::Var s0 = skeleton_.stem(tape, input);
  ad::Var s1 = s0;
  std::optional<ad::Var> alpha[2];
  for (std::size_t k = 0; k < cells_.size(); ++k) {
    const auto type = cells_[k].type();
    auto& a = alpha[type == CellType::normal ? 0 : 1];
    if (!a) a = ad::softmax(tape.param(theta(type)));
    auto [p0, p1] = skeleton_.preprocess(k, s0, s1);
    ad::Var out = cells_[k].forward(p0, p1, *a);
    s0 = s1;
    s1 = out;
  }
  return skeleton_.head(s1);
}

Genotype SearchNetwork::derive() const {
  const auto& cfg = config();
  Genotype g;
  g.normal = derive_cell(store_.value(theta_normal_), cfg.ops, cfg.num_nodes);
  g.reduction = derive_cell(store_.value(theta_reduce_), cfg.ops, cfg.num_nodes);
  g.num_cells = cfg.num_cells;
  g.reduction_positions = cfg.reduction_positions;
  return g;
}

namespace {

const Genotype& checked(const Genotype& genotype, const NetworkConfig& config) {
  config.validate();
  genotype.validate();
  if (genotype.num_nodes() != config.num_nodes) {
    throw ConfigError("genotype has " + std::to_string(genotype.num_nodes()) +
                      " nodes per cell, config expects " + std::to_string(config.num_nodes));
  }
  if (genotype.num_cells != config.num_cells) {
    throw ConfigError("genotype was searched with " + std::to_string(genotype.num_cells) +
                      " cells, config has " + std::to_string(config.num_cells));
  }
  if (genotype.reduction_positions != config.reduction_positions) {
    throw ConfigError("genotype reduction positions differ from the config");
  }
  return genotype;
}

}  // namespace

DerivedNetwork::DerivedNetwork(const Genotype& genotype, const NetworkConfig& config,
                               std::uint64_t seed)
    : genotype_(checked(genotype, config)), skeleton_(config, store_, seed) {
  Rng rng(derive_seed(seed, "cells"));
  const auto& geo = skeleton_.geometry();
  weights_ = skeleton_.weights();
  for (std::size_t k = 0; k < geo.size(); ++k) {
    Cell cell{geo[k].type, {}};
    const auto& gc = genotype.cell(geo[k].type);
    for (std::size_t j = 0; j < gc.nodes.size(); ++j) {
      std::array<space::CnnOpParams, 2> pair;
      for (std::size_t i = 0; i < 2; ++i) {
        const auto& e = gc.nodes[j][i];
        const std::size_t stride = (geo[k].type == CellType::reduction && e.source < 2) ? 2 : 1;
        pair[i] = space::make_cnn_op_params(
            e.op, geo[k].channels, stride, store_, rng,
            "cell" + std::to_string(k) + ".n" + std::to_string(j) + "." + std::to_string(i));
        weights_.insert(weights_.end(), pair[i].weights.begin(), pair[i].weights.end());
      }
      cell.ops.push_back(std::move(pair));
    }
    cells_.push_back(std::move(cell));
  }
}

ad::Var derived_cell_forward(const GenotypeCell& cell,
                             const std::vector<std::array<space::CnnOpParams, 2>>& ops,
                             ad::Var s0, ad::Var s1) {
  if (ops.size() != cell.nodes.size()) throw ShapeError("cell weights do not match genotype");
  if (s0.shape() != s1.shape()) {
    throw ShapeError("cell inputs " + shape_str(s0.shape()) + " and " + shape_str(s1.shape()) +
                     " differ");
  }
  std::vector<ad::Var> states{s0, s1};
  std::vector<ad::Var> nodes;
  for (std::size_t j = 0; j < cell.nodes.size(); ++j) {
    std::optional<ad::Var> acc;
    for (std::size_t i = 0; i < 2; ++i) {
      const auto& p = ops[j][i];
      ad::Var y = space::cnn_op_apply(p.kind, states.at(cell.nodes[j][i].source), p.stride, p);
      acc = acc ? ad::add(*acc, y) : y;
    }
    states.push_back(*acc);
    nodes.push_back(*acc);
  }
  return nodes.size() == 1 ? nodes.front() : ad::concat(nodes, 1);
}

ad::Var DerivedNetwork::forward(ad::Tape& tape, const Tensor& input) const {
  ad::Var s0 = skeleton_.stem(tape, input);
  ad::Var s1 = s0;
  for (std::size_t k = 0; k < cells_.size(); ++k) {
    auto [p0, p1] = skeleton_.preprocess(k, s0, s1);
    ad::Var out = derived_cell_forward(genotype_.cell(cells_[k].type), cells_[k].ops, p0, p1);
    s0 = s1;
    s1 = out;
  }
  return skeleton_.head(s1);
}

}  // namespace emonas::darts
