#include "emonas/search_space/ops.hpp"

#include <algorithm>

#include "emonas/errors.hpp"

namespace emonas::space {

std::string_view to_string(CnnOp op) noexcept {
  switch (op) {
    case CnnOp::max_pool_3x3: return "max_pool_3x3";
    case CnnOp::avg_pool_3x3: return "avg_pool_3x3";
    case CnnOp::skip_connect: return "skip_connect";
    case CnnOp::sep_conv_3x3: return "sep_conv_3x3";
    case CnnOp::sep_conv_5x5: return "sep_conv_5x5";
    case CnnOp::dil_conv_3x3: return "dil_conv_3x3";
    case CnnOp::dil_conv_5x5: return "dil_conv_5x5";
    case CnnOp::none: return "none";
  }
  return "?";
}

std::string_view to_string(RnnOp op) noexcept {
  switch (op) {
    case RnnOp::linear: return "linear";
    case RnnOp::blend: return "blend";
    case RnnOp::elementwise_product: return "elementwise_product";
    case RnnOp::elementwise_sum: return "elementwise_sum";
    case RnnOp::tanh_act: return "tanh_act";
    case RnnOp::sigmoid_act: return "sigmoid_act";
    case RnnOp::leaky_relu_act: return "leaky_relu_act";
  }
  return "?";
}

CnnOp parse_cnn_op(std::string_view name) {
  for (CnnOp op : kAllCnnOps)
    if (to_string(op) == name) return op;
  throw FormatError("unknown CNN operation '" + std::string(name) + "'");
}

RnnOp parse_rnn_op(std::string_view name) {
  for (RnnOp op : kAllRnnOps)
    if (to_string(op) == name) return op;
  throw FormatError("unknown RNN operation '" + std::string(name) + "'");
}

std::size_t index_of(CnnOp op) noexcept { return static_cast<std::size_t>(op); }

std::size_t arity(RnnOp op) noexcept {
  switch (op) {
    case RnnOp::blend: return 3;
    case RnnOp::elementwise_product:
    case RnnOp::elementwise_sum: return 2;
    default: return 1;
  }
}

namespace {

std::size_t kernel_of(CnnOp op) {
  switch (op) {
    case CnnOp::sep_conv_3x3:
    case CnnOp::dil_conv_3x3: return 3;
    case CnnOp::sep_conv_5x5:
    case CnnOp::dil_conv_5x5: return 5;
    default: return 0;
  }
}

void check_stride(std::size_t stride) {
  if (stride != 1 && stride != 2) {
    throw ConfigError("invalid stride " + std::to_string(stride) + " (expected 1 or 2)");
  }
}

ad::Var depthwise(ad::Var x, ad::ParamId w, std::size_t k, std::size_t stride,
                  std::size_t dilation) {
  const std::size_t c = x.shape()[1];
  return ad::conv2d(x, x.tape().param(w),
                    {.stride = stride, .dilation = dilation, .padding = dilation * (k - 1) / 2,
                     .groups = c});
}

ad::Var pointwise(ad::Var x, ad::ParamId w, std::size_t stride = 1, std::size_t padding = 0) {
  return ad::conv2d(x, x.tape().param(w), {.stride = stride, .padding = padding});
}

}  // namespace

CnnOpParams make_cnn_op_params(CnnOp kind, std::size_t channels, std::size_t stride,
                               ad::ParameterStore& store, Rng& rng, const std::string& prefix) {
  check_stride(stride);
  if (channels == 0) throw ConfigError("operation needs at least one channel");
  CnnOpParams p{kind, channels, stride, {}};
  const std::size_t c = channels;
  const std::string base = prefix + "." + std::string(to_string(kind));
  switch (kind) {
    case CnnOp::sep_conv_3x3:
    case CnnOp::sep_conv_5x5: {
      const std::size_t k = kernel_of(kind);
      for (int stack = 0; stack < 2; ++stack) {
        const std::string s = base + "." + std::to_string(stack);
        p.weights.push_back(store.add_uniform(s + ".dw", {c, 1, k, k}, k * k, rng));
        p.weights.push_back(store.add_uniform(s + ".pw", {c, c, 1, 1}, c, rng));
      }
      break;
    }
    case CnnOp::dil_conv_3x3:
    case CnnOp::dil_conv_5x5: {
      const std::size_t k = kernel_of(kind);
      p.weights.push_back(store.add_uniform(base + ".dw", {c, 1, k, k}, k * k, rng));
      p.weights.push_back(store.add_uniform(base + ".pw", {c, c, 1, 1}, c, rng));
      break;
    }
    case CnnOp::skip_connect:
      if (stride == 2) p.weights = make_factorized_reduce_params(c, c, store, rng, base);
      break;
    default:
      break;
  }
  return p;
}

Shape cnn_op_output_shape(const Shape& in, std::size_t stride) {
  check_stride(stride);
  if (in.size() != 4) throw ShapeError("expected [B,C,H,W], got " + shape_str(in));
  if (stride == 1) return in;
  return {in[0], in[1], (in[2] + 1) / 2, (in[3] + 1) / 2};
}

std::vector<ad::ParamId> make_factorized_reduce_params(std::size_t in_channels,
                                                       std::size_t out_channels,
                                                       ad::ParameterStore& store, Rng& rng,
                                                       const std::string& prefix) {
  if (in_channels == 0 || out_channels == 0) throw ConfigError("reduction needs channels");
  std::vector<ad::ParamId> w;
  const std::size_t half = out_channels / 2;
  if (half > 0) {
    w.push_back(store.add_uniform(prefix + ".even", {half, in_channels, 1, 1}, in_channels, rng));
  }
  w.push_back(
      store.add_uniform(prefix + ".odd", {out_channels - half, in_channels, 1, 1}, in_channels, rng));
  return w;
}

ad::Var factorized_reduce(ad::Var x, std::span<const ad::ParamId> weights) {
  if (weights.empty() || weights.size() > 2) {
    throw ConfigError("factorized reduction needs one or two weights");
  }
  const Shape out = cnn_op_output_shape(x.shape(), 2);
  ad::Var act = ad::leaky_relu(x);
  // odd phase: pad by one and drop the first row/column so output (i, j)
  // reads input (2i+1, 2j+1)
  ad::Var odd = pointwise(act, weights.back(), 2, 1);
  odd = ad::slice(ad::slice(odd, 2, 1, out[2]), 3, 1, out[3]);
  if (weights.size() == 1) return odd;
  ad::Var even = pointwise(act, weights.front(), 2, 0);
  const ad::Var parts[] = {even, odd};
  return ad::concat(parts, 1);
}

ad::Var cnn_op_apply(CnnOp kind, ad::Var x, std::size_t stride, const CnnOpParams& params) {
  check_stride(stride);
  const Shape& in = x.shape();
  if (in.size() != 4) throw ShapeError("CNN op expects [B,C,H,W], got " + shape_str(in));
  if (params.kind != kind || params.stride != stride) {
    throw ConfigError("parameters for " + std::string(to_string(params.kind)) + "/stride " +
                      std::to_string(params.stride) + " used as " + std::string(to_string(kind)) +
                      "/stride " + std::to_string(stride));
  }
  if (params.channels != in[1]) {
    throw ShapeError("channel mismatch: op built for " + std::to_string(params.channels) +
                     " channels, input " + shape_str(in));
  }
  const ad::Pool2dOptions pool{.kernel = 3, .stride = stride, .padding = 1};
  switch (kind) {
    case CnnOp::max_pool_3x3: return ad::max_pool2d(x, pool);
    case CnnOp::avg_pool_3x3: return ad::avg_pool2d(x, pool);
    case CnnOp::skip_connect:
      return stride == 1 ? x : factorized_reduce(x, params.weights);
    case CnnOp::sep_conv_3x3:
    case CnnOp::sep_conv_5x5: {
      const std::size_t k = kernel_of(kind);
      ad::Var h = depthwise(ad::leaky_relu(x), params.weights[0], k, stride, 1);
      h = pointwise(h, params.weights[1]);
      h = depthwise(ad::leaky_relu(h), params.weights[2], k, 1, 1);
      return pointwise(h, params.weights[3]);
    }
    case CnnOp::dil_conv_3x3:
    case CnnOp::dil_conv_5x5: {
      const std::size_t k = kernel_of(kind);
      ad::Var h = depthwise(ad::leaky_relu(x), params.weights[0], k, stride, kDilation);
      return pointwise(h, params.weights[1]);
    }
    case CnnOp::none:
      return x.tape().constant(Tensor(cnn_op_output_shape(in, stride), 0.0));
  }
  throw ConfigError("unhandled CNN op");
}

RnnOpParams make_rnn_op_params(RnnOp kind, std::size_t hidden, ad::ParameterStore& store, Rng& rng,
                               const std::string& prefix) {
  RnnOpParams p;
  if (kind == RnnOp::linear) {
    p.weight = store.add_uniform(prefix + ".W", {hidden, hidden}, hidden, rng);
    p.bias = store.add_uniform(prefix + ".b", {hidden}, hidden, rng);
  }
  return p;
}

ad::Var rnn_op_apply(RnnOp kind, std::span<const ad::Var> operands, const RnnOpParams& params) {
  if (operands.size() != arity(kind)) {
    throw ShapeError(std::string(to_string(kind)) + " takes " + std::to_string(arity(kind)) +
                     " operands, got " + std::to_string(operands.size()));
  }
  const Shape& s0 = operands[0].shape();
  for (const auto& v : operands) {
    if (v.shape().size() != 2 || v.shape() != s0) {
      throw ShapeError(std::string(to_string(kind)) + " operands must share shape [B,h], got " +
                       shape_str(v.shape()) + " and " + shape_str(s0));
    }
  }
  switch (kind) {
    case RnnOp::linear: {
      if (!params.weight || !params.bias) throw ConfigError("linear op without weights");
      ad::Tape& t = operands[0].tape();
      return ad::affine(operands[0], t.param(*params.weight), t.param(*params.bias));
    }
    case RnnOp::blend: {
      ad::Var gate = ad::sigmoid(operands[0]);
      ad::Var inv = ad::sigmoid(ad::scale(operands[0], -1.0));
      return ad::add(ad::mul(gate, operands[1]), ad::mul(inv, operands[2]));
    }
    case RnnOp::elementwise_product: return ad::mul(operands[0], operands[1]);
    case RnnOp::elementwise_sum: return ad::add(operands[0], operands[1]);
    case RnnOp::tanh_act: return ad::tanh(operands[0]);
    case RnnOp::sigmoid_act: return ad::sigmoid(operands[0]);
    case RnnOp::leaky_relu_act: return ad::leaky_relu(operands[0]);
  }
  throw ConfigError("unhandled RNN op");
}

}  // namespace emonas::space
