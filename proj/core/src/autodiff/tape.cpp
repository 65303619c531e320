#include "emonas/autodiff/tape.hpp"

#include <algorithm>

#include "emonas/errors.hpp"

namespace emonas::ad {

std::string_view op_name(OpKind kind) noexcept {
  switch (kind) {
    case OpKind::input: return "input";
    case OpKind::constant: return "constant";
    case OpKind::parameter: return "parameter";
    case OpKind::matmul: return "matmul";
    case OpKind::affine: return "affine";
    case OpKind::conv2d: return "conv2d";
    case OpKind::avg_pool2d: return "avg_pool2d";
    case OpKind::max_pool2d: return "max_pool2d";
    case OpKind::add: return "elementwise_add";
    case OpKind::mul: return "elementwise_mul";
    case OpKind::concat: return "concat";
    case OpKind::softmax: return "softmax";
    case OpKind::sigmoid: return "sigmoid";
    case OpKind::tanh: return "tanh";
    case OpKind::leaky_relu: return "leaky_relu";
    case OpKind::mean: return "mean";
    case OpKind::cross_entropy: return "cross_entropy";
    case OpKind::reshape: return "reshape";
    case OpKind::slice: return "slice";
    case OpKind::scale: return "scale";
  }
  return "unknown";
}

Tape& Var::tape() const {
  if (!tape_) throw StateError("use of an unbound Var");
  return *tape_;
}

const Tensor& Var::value() const { return tape().value(index_); }
const Shape& Var::shape() const { return value().shape(); }

Var Tape::push(Node node) {
  if (consumed_) throw StateError("tape already ran backward; record a new tape");
  const auto index = static_cast<std::uint32_t>(nodes_.size());
  nodes_.push_back(std::move(node));
  return Var(this, index);
}

Var Tape::input(std::string name, Tensor value) {
  Node n{OpKind::input, std::move(value), {}, {}, false, std::nullopt, std::move(name)};
  return push(std::move(n));
}

Var Tape::constant(Tensor value) {
  return push(Node{OpKind::constant, std::move(value), {}, {}, false, std::nullopt, {}});
}

Var Tape::param(ParamId id) {
  if (!params_) throw StateError("tape has no parameter store");
  if (auto it = param_nodes_.find(id.index); it != param_nodes_.end()) {
    return Var(this, it->second);
  }
  const Tensor& v = params_->value(id);
  Var var = push(Node{OpKind::parameter, v, {}, {}, grad_enabled_, id, params_->name(id)});
  param_nodes_.emplace(id.index, var.index());
  return var;
}

Var Tape::record(OpKind kind, Tensor value, std::span<const Var> inputs, BackwardFn backward) {
  const auto bad = value.first_non_finite();
  if (bad != value.numel()) {
    throw NumericError("node " + std::to_string(nodes_.size()) + " (" +
                       std::string(op_name(kind)) + "): non-finite value at index " +
                       std::to_string(bad));
  }
  Node n{kind, std::move(value), {}, {}, false, std::nullopt, {}};
  n.inputs.reserve(inputs.size());
  for (const Var& in : inputs) {
    if (&in.tape() != this) throw StateError("input Var belongs to a different tape");
    n.inputs.push_back(in.index());
    n.needs_grad = n.needs_grad || nodes_[in.index()].needs_grad;
  }
  n.needs_grad = n.needs_grad && grad_enabled_;
  if (n.needs_grad) n.backward = std::move(backward);
  return push(std::move(n));
}

std::optional<Var> Tape::find_input(std::string_view name) {
  for (std::uint32_t i = 0; i < nodes_.size(); ++i) {
    if (nodes_[i].kind == OpKind::input && nodes_[i].name == name) return Var(this, i);
  }
  return std::nullopt;
}

Tensor& Tape::grad(std::uint32_t node) {
  if (grads_.size() < nodes_.size()) grads_.resize(nodes_.size());
  Tensor& g = grads_[node];
  if (g.empty()) g = Tensor(nodes_[node].value.shape(), 0.0);
  return g;
}

void Tape::accumulate(std::uint32_t node, const Tensor& g) {
  if (!nodes_[node].needs_grad) return;
  Tensor& dst = grad(node);
  if (dst.numel() != g.numel()) {
    throw ShapeError("gradient of size " + std::to_string(g.numel()) + " for node " +
                     std::to_string(node) + " of shape " + shape_str(dst.shape()));
  }
  auto d = dst.data();
  auto s = g.data();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] += s[i];
}

void Tape::mix_kink(std::uint64_t h) noexcept {
  kink_ ^= h + 0x9e3779b97f4a7c15ULL + (kink_ << 6) + (kink_ >> 2);
}

GradientMap Tape::backward(Var loss) {
  if (nodes_.empty()) throw StateError("backward before forward: tape is empty");
  if (consumed_) throw StateError("backward already ran on this tape");
  if (&loss.tape() != this) throw StateError("loss belongs to a different tape");
  if (loss.value().numel() != 1) {
    throw ShapeError("backward needs a scalar loss, got shape " + shape_str(loss.shape()));
  }
  consumed_ = true;
  grads_.resize(nodes_.size());
  if (nodes_[loss.index()].needs_grad) {
    grad(loss.index())[0] = 1.0;
    for (std::uint32_t i = loss.index() + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.backward || grads_[i].empty()) continue;
      n.backward(*this, i);
    }
  }
  GradientMap out;
  for (const auto& [pidx, node] : param_nodes_) {
    const ParamId id{pidx};
    Tensor g = grads_[node].empty() ? Tensor(nodes_[node].value.shape(), 0.0) : grads_[node];
    if (params_) {
      Tensor& acc = params_->grad(id);
      auto a = acc.data();
      auto s = g.data();
      for (std::size_t k = 0; k < a.size(); ++k) a[k] += s[k];
    }
    out.emplace(id, std::move(g));
  }
  // intermediate buffers are no longer needed
  grads_.clear();
  return out;
}

std::map<std::string, Tensor> forward(Tape& tape, const Program& program,
                                      const std::map<std::string, Tensor>& inputs) {
  std::map<std::string, Var> bound;
  for (const auto& [name, value] : inputs) bound.emplace(name, tape.input(name, value));
  const auto outputs = program(tape, bound);
  std::map<std::string, Tensor> result;
  for (const auto& [name, var] : outputs) result.emplace(name, var.value());
  return result;
}

}  // namespace emonas::ad
