#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "emonas/autodiff/tape.hpp"

namespace emonas::ad {

struct Conv2dOptions {
  std::size_t stride = 1;
  std::size_t dilation = 1;
  std::size_t padding = 0;
  std::size_t groups = 1;
};

struct Pool2dOptions {
  std::size_t kernel = 3;
  std::size_t stride = 1;
  std::size_t padding = 1;
};

inline constexpr real kDefaultLeakySlope = 0.01;

/// Output extent of a strided, dilated, padded window sweep.
std::size_t conv_out_size(std::size_t in, std::size_t kernel, std::size_t stride,
                          std::size_t dilation, std::size_t padding);

/// [M,K]x[K,N] -> [M,N], or batched [B,M,K]x[B,K,N] -> [B,M,N].
Var matmul(Var a, Var b);
/// x[B,in], weight[out,in], bias[out] -> [B,out].
Var affine(Var x, Var weight, Var bias);
/// x[B,Cin,H,W], weight[Cout,Cin/groups,kh,kw]. No bias.
Var conv2d(Var x, Var weight, const Conv2dOptions& opt);
/// Average pooling; padded cells count toward the divisor.
Var avg_pool2d(Var x, const Pool2dOptions& opt);
/// Max pooling over valid cells; ties route to the first maximal index.
Var max_pool2d(Var x, const Pool2dOptions& opt);

Var add(Var a, Var b);
Var mul(Var a, Var b);
Var concat(std::span<const Var> parts, std::size_t axis);

/// Softmax along the last axis.
Var softmax(Var x);
/// Softmax along the last axis restricted to entries where mask != 0;
/// masked entries are exactly zero. `mask` has the shape of x.
Var masked_softmax(Var x, const Tensor& mask);

Var sigmoid(Var x);
Var tanh(Var x);
Var leaky_relu(Var x, real slope = kDefaultLeakySlope);

/// Mean over every entry -> shape [1].
Var mean(Var x);
/// Mean over one axis (removed from the shape).
Var mean(Var x, std::size_t axis);
/// Sum over every entry -> shape [1].
Var sum(Var x);
/// Sum over one axis (removed from the shape).
Var sum(Var x, std::size_t axis);

/// Mean cross-entropy of raw logits [B,K] against class indices.
Var cross_entropy(Var logits, std::span<const int> labels);

Var reshape(Var x, Shape shape);
/// Sub-range [start, start+length) along `axis`.
Var slice(Var x, std::size_t axis, std::size_t start, std::size_t length);
Var scale(Var x, real factor);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }

}  // namespace emonas::ad
