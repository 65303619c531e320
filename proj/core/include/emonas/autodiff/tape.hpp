#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "emonas/autodiff/parameters.hpp"
#include "emonas/autodiff/tensor.hpp"

namespace emonas::ad {

enum class OpKind : std::uint8_t {
  input,
  constant,
  parameter,
  matmul,
  affine,
  conv2d,
  avg_pool2d,
  max_pool2d,
  add,
  mul,
  concat,
  softmax,
  sigmoid,
  tanh,
  leaky_relu,
  mean,
  cross_entropy,
  // structural helpers: pure data movement or scaling
  reshape,
  slice,
  scale,
};

std::string_view op_name(OpKind kind) noexcept;

class Tape;

/// Lightweight handle to a node on a Tape.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::uint32_t index) : tape_(tape), index_(index) {}

  bool valid() const noexcept { return tape_ != nullptr; }
  Tape& tape() const;
  std::uint32_t index() const noexcept { return index_; }
  const Tensor& value() const;
  const Shape& shape() const;

 private:
  Tape* tape_ = nullptr;
  std::uint32_t index_ = 0;
};

using GradientMap = std::map<ParamId, Tensor>;

/// Append-only record of primitive applications (define-by-run). Every node's
/// inputs precede it, so reverse index order is a valid backward schedule.
/// One backward pass per tape; gradients are added into the ParameterStore.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::uint32_t self)>;

  explicit Tape(ParameterStore* params = nullptr) : params_(params) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var input(std::string name, Tensor value);
  Var constant(Tensor value);
  /// Leaf bound to a stored parameter; repeated calls return the same node.
  Var param(ParamId id);

  /// Appends a primitive node. Throws NumericError if `value` holds NaN/Inf.
  Var record(OpKind kind, Tensor value, std::span<const Var> inputs, BackwardFn backward);

  std::size_t size() const noexcept { return nodes_.size(); }
  OpKind kind(std::uint32_t node) const { return nodes_.at(node).kind; }
  const Tensor& value(std::uint32_t node) const { return nodes_.at(node).value; }
  std::span<const std::uint32_t> inputs(std::uint32_t node) const { return nodes_.at(node).inputs; }
  bool needs_grad(std::uint32_t node) const { return nodes_.at(node).needs_grad; }
  std::optional<Var> find_input(std::string_view name);

  /// Gradient buffer of a node, zero-initialised on first access.
  Tensor& grad(std::uint32_t node);
  /// grad(node) += g, skipped when the node does not need a gradient.
  void accumulate(std::uint32_t node, const Tensor& g);

  /// Reverse pass from a scalar loss. Returns this pass's gradient for every
  /// parameter bound on the tape (zeros when unreached) and adds it into the
  /// store's gradient accumulators.
  GradientMap backward(Var loss);
  bool consumed() const noexcept { return consumed_; }

  /// Hash of the branch pattern taken by non-smooth primitives (max_pool
  /// argmax routing, leaky_relu signs). Equal signatures mean the same
  /// smooth piece was evaluated.
  std::uint64_t kink_signature() const noexcept { return kink_; }
  void mix_kink(std::uint64_t h) noexcept;
  /// Set when a max_pool window held an exact tie.
  bool has_ties() const noexcept { return ties_; }
  void mark_tie() noexcept { ties_ = true; }

  /// When false, nodes are recorded without backward closures (inference).
  void set_grad_enabled(bool on) noexcept { grad_enabled_ = on; }
  bool grad_enabled() const noexcept { return grad_enabled_; }

  ParameterStore* parameters() const noexcept { return params_; }

 private:
  struct Node {
    OpKind kind;
    Tensor value;
    std::vector<std::uint32_t> inputs;
    BackwardFn backward;
    bool needs_grad = false;
    std::optional<ParamId> param;
    std::string name;
  };

  Var push(Node node);

  ParameterStore* params_;
  std::vector<Node> nodes_;
  std::vector<Tensor> grads_;
  std::unordered_map<std::uint32_t, std::uint32_t> param_nodes_;
  std::uint64_t kink_ = 0x9e3779b97f4a7c15ULL;
  bool ties_ = false;
  bool consumed_ = false;
  bool grad_enabled_ = true;
};

/// A model body: maps named input nodes to named output nodes.
using Program =
    std::function<std::map<std::string, Var>(Tape&, const std::map<std::string, Var>&)>;

/// Binds `inputs` on the tape, runs `program` and materialises its outputs.
std::map<std::string, Tensor> forward(Tape& tape, const Program& program,
                                      const std::map<std::string, Tensor>& inputs);

}  // namespace emonas::ad
