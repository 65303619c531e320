#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "emonas/autodiff/ops.hpp"
#include "emonas/autodiff/parameters.hpp"
#include "emonas/autodiff/random.hpp"

namespace emonas::space {

/// Candidate operations on a CNN cell edge. The enumerator order is the
/// canonical op index used for tie-breaking and serialisation.
enum class CnnOp : std::uint8_t {
  max_pool_3x3,
  avg_pool_3x3,
  skip_connect,
  sep_conv_3x3,
  sep_conv_5x5,
  dil_conv_3x3,
  dil_conv_5x5,
  none,
};

inline constexpr std::array<CnnOp, 8> kAllCnnOps = {
    CnnOp::max_pool_3x3, CnnOp::avg_pool_3x3, CnnOp::skip_connect, CnnOp::sep_conv_3x3,
    CnnOp::sep_conv_5x5, CnnOp::dil_conv_3x3, CnnOp::dil_conv_5x5, CnnOp::none,
};

/// Candidate operations inside a recurrent cell.
enum class RnnOp : std::uint8_t {
  linear,
  blend,
  elementwise_product,
  elementwise_sum,
  tanh_act,
  sigmoid_act,
  leaky_relu_act,
};

inline constexpr std::array<RnnOp, 7> kAllRnnOps = {
    RnnOp::linear,          RnnOp::blend,    RnnOp::elementwise_product, RnnOp::elementwise_sum,
    RnnOp::tanh_act,        RnnOp::sigmoid_act, RnnOp::leaky_relu_act,
};

/// Dilation rate of the dil_conv candidates.
inline constexpr std::size_t kDilation = 2;

std::string_view to_string(CnnOp op) noexcept;
std::string_view to_string(RnnOp op) noexcept;
/// Throws FormatError on an unknown name.
CnnOp parse_cnn_op(std::string_view name);
RnnOp parse_rnn_op(std::string_view name);

std::size_t index_of(CnnOp op) noexcept;
std::size_t arity(RnnOp op) noexcept;

/// Learned weights of one candidate op on one edge.
struct CnnOpParams {
  CnnOp kind = CnnOp::none;
  std::size_t channels = 0;
  std::size_t stride = 1;
  std::vector<ad::ParamId> weights;
};

CnnOpParams make_cnn_op_params(CnnOp kind, std::size_t channels, std::size_t stride,
                               ad::ParameterStore& store, Rng& rng, const std::string& prefix);

/// [B,C,H,W] -> [B,C,H,W] at stride 1, [B,C,ceil(H/2),ceil(W/2)] at stride 2.
Shape cnn_op_output_shape(const Shape& in, std::size_t stride);

/// Applies one candidate. `none` yields zeros of the output shape; skip at
/// stride 2 is a learned factorised reduction (two phase-shifted 1x1 convs).
ad::Var cnn_op_apply(CnnOp kind, ad::Var x, std::size_t stride, const CnnOpParams& params);

/// Stride-2 learned reduction: concat of a 1x1 conv on the even pixel grid
/// and one on the odd grid. Output channels are the sum of the weights' out
/// channels; spatial dims become ceil(dim/2).
ad::Var factorized_reduce(ad::Var x, std::span<const ad::ParamId> weights);
std::vector<ad::ParamId> make_factorized_reduce_params(std::size_t in_channels,
                                                       std::size_t out_channels,
                                                       ad::ParameterStore& store, Rng& rng,
                                                       const std::string& prefix);

struct RnnOpParams {
  std::optional<ad::ParamId> weight;
  std::optional<ad::ParamId> bias;
};

RnnOpParams make_rnn_op_params(RnnOp kind, std::size_t hidden, ad::ParameterStore& store,
                               Rng& rng, const std::string& prefix);

/// blend(z, a, b) = sigmoid(z)*a + (1 - sigmoid(z))*b; linear = affine h->h.
ad::Var rnn_op_apply(RnnOp kind, std::span<const ad::Var> operands, const RnnOpParams& params);

}  // namespace emonas::space
