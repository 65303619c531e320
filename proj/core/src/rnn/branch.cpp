#include "emonas/rnn/branch.hpp"

#include <cmath>

#include "emonas/autodiff/ops.hpp"
#include "emonas/errors.hpp"

namespace emonas::rnn {

void RnnBranchConfig::validate() const {
  if (num_layers == 0) throw ConfigError("rnn num_layers must be at least 1");
  if (hidden == 0) throw ConfigError("rnn hidden size must be at least 1");
  if (num_classes < 2) throw ConfigError("rnn num_classes must be at least 2");
}

std::size_t RnnBranchConfig::effective_attention_width() const {
  if (attention_width > 0) return attention_width;
  return std::max<std::size_t>(1, hidden / 2);
}

CellParams make_cell_params(const RnnCellGraph& graph, std::size_t hidden,
                            ad::ParameterStore& store, Rng& rng, const std::string& prefix) {
  CellParams p;
  for (const auto& n : graph.nodes()) {
    p.nodes.push_back(space::make_rnn_op_params(n.op, hidden, store, rng, prefix + "." + n.name));
  }
  return p;
}

std::pair<ad::Var, ad::Var> rnn_cell_step(const RnnCellGraph& graph, const CellParams& params,
                                          ad::Var x, ad::Var h1, ad::Var h2) {
  if (params.nodes.size() != graph.nodes().size()) {
    throw ShapeError("cell '" + graph.name() + "' weights do not match its graph");
  }
  if (x.shape().size() != 2 || x.shape() != h1.shape() || x.shape() != h2.shape()) {
    throw ShapeError("cell '" + graph.name() + "' expects x, h1, h2 of one shape [B,h], got " +
                     shape_str(x.shape()) + ", " + shape_str(h1.shape()) + ", " +
                     shape_str(h2.shape()));
  }
  std::vector<ad::Var> values(graph.nodes().size());
  auto lookup = [&](const std::string& ref) -> ad::Var {
    if (ref == kInputSource) return x;
    if (ref == kH1Source) return h1;
    if (ref == kH2Source) return h2;
    return values[graph.find(ref)];
  };
  for (std::size_t i : graph.order()) {
    const auto& n = graph.nodes()[i];
    std::vector<ad::Var> operands;
    for (const auto& in : n.inputs) operands.push_back(lookup(in));
    values[i] = space::rnn_op_apply(n.op, operands, params.nodes[i]);
  }
  return {lookup(graph.h1_output()), lookup(graph.h2_output())};
}

namespace {

void check_mask(const Tensor& mask, std::size_t B, std::size_t T) {
  if (mask.shape() != Shape{B, T}) {
    throw ShapeError("mask " + shape_str(mask.shape()) + " does not match [" +
                     std::to_string(B) + "," + std::to_string(T) + "]");
  }
}

}  // namespace

ad::Var attention_weights(ad::Var frames, const AttentionPoolParams& params, const Tensor* mask) {
  const Shape s = frames.shape();
  if (s.size() != 3) throw ShapeError("attention expects frames [B,T,h], got " + shape_str(s));
  const std::size_t B = s[0], T = s[1], h = s[2];
  ad::Tape& t = frames.tape();
  if (mask) {
    check_mask(*mask, B, T);
    for (std::size_t b = 0; b < B; ++b) {
      bool any = false;
      for (std::size_t k = 0; k < T; ++k) any = any || (*mask)[b * T + k] != 0;
      if (!any) throw ShapeError("utterance " + std::to_string(b) + " has no unmasked frame");
    }
  }
  ad::Var u = ad::tanh(ad::matmul(ad::reshape(frames, {B * T, h}), t.param(params.projection)));
  ad::Var scores = ad::reshape(ad::matmul(u, t.param(params.context)), {B, T});
  return mask ? ad::masked_softmax(scores, *mask) : ad::softmax(scores);
}

ad::Var attention_pool(ad::Var frames, const AttentionPoolParams& params, const Tensor* mask) {
  const Shape s = frames.shape();
  ad::Var w = attention_weights(frames, params, mask);
  return ad::reshape(ad::matmul(ad::reshape(w, {s[0], 1, s[1]}), frames), {s[0], s[2]});
}

ad::Var classify(ad::Var pooled, ad::Var weight, ad::Var bias) {
  return ad::softmax(ad::affine(pooled, weight, bias));
}

RnnBranch::RnnBranch(RnnCellGraph cell, const RnnBranchConfig& config, std::size_t input_dim,
                     std::uint64_t seed)
    : cell_(std::move(cell)), config_(config), input_dim_(input_dim) {
  config_.validate();
  if (input_dim == 0) throw ConfigError("rnn input dimension must be positive");
  Rng rng(derive_seed(seed, "rnn-branch"));
  const std::size_t h = config_.hidden;
  for (std::size_t l = 0; l < config_.num_layers; ++l) {
    const std::string p = "layer" + std::to_string(l);
    const std::size_t in = l == 0 ? input_dim : h;
    Layer layer{store_.add_uniform(p + ".proj.W", {h, in}, in, rng),
                store_.add_uniform(p + ".proj.b", {h}, in, rng),
                make_cell_params(cell_, h, store_, rng, p)};
    layers_.push_back(std::move(layer));
  }
  const std::size_t a = config_.effective_attention_width();
  attention_.projection = store_.add_uniform("attention.W", {h, a}, h, rng);
  attention_.context = store_.add_uniform("attention.ctx", {a, 1}, a, rng);
  head_w_ = store_.add_uniform("head.w", {config_.num_classes, h}, h, rng);
  head_b_ = store_.add_uniform("head.b", {config_.num_classes}, h, rng);
  weights_ = store_.all();
}

ad::Var RnnBranch::unroll(ad::Var sequence, const Tensor* mask) const {
  const Shape s = sequence.shape();
  if (s.size() != 3) throw ShapeError("rnn expects a sequence [B,T,D], got " + shape_str(s));
  const std::size_t B = s[0], T = s[1], h = config_.hidden;
  if (T == 0) throw ShapeError("rnn sequence is empty");
  if (s[2] != input_dim_) {
    throw ShapeError("rnn expects " + std::to_string(input_dim_) + " features per frame, got " +
                     std::to_string(s[2]));
  }
  if (mask) check_mask(*mask, B, T);
  const bool masked = mask && config_.masking;
  ad::Tape& t = sequence.tape();

  // per-step keep/hold factors, only for steps where the batch is mixed
  std::vector<std::optional<std::pair<ad::Var, ad::Var>>> gates(T);
  std::vector<bool> all_padding(T, false);
  if (masked) {
    for (std::size_t k = 0; k < T; ++k) {
      Tensor keep({B, h}), hold({B, h});
      bool any = false, all = true;
      for (std::size_t b = 0; b < B; ++b) {
        const real m = (*mask)[b * T + k] != 0 ? 1.0 : 0.0;
        any = any || m != 0;
        all = all && m != 0;
        for (std::size_t j = 0; j < h; ++j) {
          keep[b * h + j] = m;
          hold[b * h + j] = 1.0 - m;
        }
      }
      all_padding[k] = !any;
      if (any && !all) gates[k] = std::make_pair(t.constant(keep), t.constant(hold));
    }
  }

  ad::Var current = sequence;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const Layer& layer = layers_[l];
    const std::size_t in = current.shape()[2];
    ad::Var projected =
        ad::reshape(ad::affine(ad::reshape(current, {B * T, in}), t.param(layer.proj_w),
                               t.param(layer.proj_b)),
                    {B, T, h});
    ad::Var h1 = t.constant(Tensor({B, h}, 0.0));
    ad::Var h2 = h1;
    std::vector<ad::Var> outputs;
    outputs.reserve(T);
    for (std::size_t k = 0; k < T; ++k) {
      if (!all_padding[k]) {
        ad::Var x = ad::reshape(ad::slice(projected, 1, k, 1), {B, h});
        auto [n1, n2] = rnn_cell_step(cell_, layer.cell, x, h1, h2);
        if (gates[k]) {
          const auto& [keep, hold] = *gates[k];
          n1 = ad::add(ad::mul(keep, n1), ad::mul(hold, h1));
          n2 = ad::add(ad::mul(keep, n2), ad::mul(hold, h2));
        }
        h1 = n1;
        h2 = n2;
      }
      outputs.push_back(ad::reshape(h1, {B, 1, h}));
    }
    current = T == 1 ? outputs.front() : ad::concat(outputs, 1);
  }
  return current;
}

ad::Var RnnBranch::forward(ad::Tape& tape, const train::Batch& batch) const {
  const Tensor* mask = (config_.masking && batch.mask) ? &*batch.mask : nullptr;
  ad::Var frames = unroll(tape.input("sequence", batch.inputs), mask);
  ad::Var pooled = attention_pool(frames, attention_, mask);
  return ad::affine(pooled, tape.param(head_w_), tape.param(head_b_));
}

}  // namespace emonas::rnn
