#include "emonas/autodiff/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <string>

#include "emonas/errors.hpp"

namespace emonas::ad {

namespace {

using Index = std::ptrdiff_t;

[[noreturn]] void fail(const Tape& t, OpKind kind, const std::string& msg) {
  throw ShapeError("node " + std::to_string(t.size()) + " (" + std::string(op_name(kind)) +
                   "): " + msg);
}

Tape& common_tape(OpKind kind, Var a, Var b) {
  Tape& t = a.tape();
  if (&b.tape() != &t) fail(t, kind, "operands live on different tapes");
  return t;
}

// Output grad of `self` and input node ids, for backward closures.
struct Ctx {
  Tape& tape;
  std::uint32_t self;
  const Tensor& grad_out() const { return tape.grad(self); }
  std::uint32_t in(std::size_t k) const { return tape.inputs(self)[k]; }
  const Tensor& value(std::size_t k) const { return tape.value(in(k)); }
  bool wants(std::size_t k) const { return tape.needs_grad(in(k)); }
  Tensor& grad(std::size_t k) const { return tape.grad(in(k)); }
};

// Valid output range [lo, hi) such that out*stride + offset - pad lies in [0, extent).
std::pair<Index, Index> valid_range(Index out_extent, Index in_extent, Index stride, Index offset,
                                    Index pad) {
  const Index shift = offset - pad;  // input index = o*stride + shift
  Index lo = 0;
  if (shift < 0) lo = (-shift + stride - 1) / stride;
  Index hi = 0;
  if (in_extent - 1 - shift >= 0) hi = (in_extent - 1 - shift) / stride + 1;
  hi = std::min(hi, out_extent);
  return {lo, std::max(lo, hi)};
}

std::uint64_t mix64(std::uint64_t h, std::uint64_t v) {
  h ^= v + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
  return h;
}

}  // namespace

std::size_t conv_out_size(std::size_t in, std::size_t kernel, std::size_t stride,
                          std::size_t dilation, std::size_t padding) {
  const std::size_t extent = dilation * (kernel - 1) + 1;
  if (stride == 0 || kernel == 0 || dilation == 0) throw ShapeError("zero stride/kernel/dilation");
  if (in + 2 * padding < extent) {
    throw ShapeError("window extent " + std::to_string(extent) + " exceeds padded input " +
                     std::to_string(in + 2 * padding));
  }
  return (in + 2 * padding - extent) / stride + 1;
}

// ---------------------------------------------------------------------------
// matmul / affine

Var matmul(Var a, Var b) {
  Tape& t = common_tape(OpKind::matmul, a, b);
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  const bool batched = A.rank() == 3;
  if (A.rank() != B.rank() || (A.rank() != 2 && A.rank() != 3)) {
    fail(t, OpKind::matmul, "expected two rank-2 or two rank-3 operands, got " +
                                shape_str(A.shape()) + " and " + shape_str(B.shape()));
  }
  const std::size_t r = A.rank();
  const std::size_t nb = batched ? A.dim(0) : 1;
  const std::size_t M = A.dim(r - 2), K = A.dim(r - 1), N = B.dim(r - 1);
  if (B.dim(r - 2) != K || (batched && B.dim(0) != nb)) {
    fail(t, OpKind::matmul, "cannot multiply " + shape_str(A.shape()) + " by " +
                                shape_str(B.shape()));
  }
  Shape out_shape = batched ? Shape{nb, M, N} : Shape{M, N};
  Tensor C(out_shape);
  for (std::size_t s = 0; s < nb; ++s) {
    const real* pa = A.raw() + s * M * K;
    const real* pb = B.raw() + s * K * N;
    real* pc = C.raw() + s * M * N;
    for (std::size_t i = 0; i < M; ++i) {
      for (std::size_t k = 0; k < K; ++k) {
        const real aik = pa[i * K + k];
        const real* brow = pb + k * N;
        real* crow = pc + i * N;
        for (std::size_t j = 0; j < N; ++j) crow[j] += aik * brow[j];
      }
    }
  }
  const Var ins[] = {a, b};
  return t.record(OpKind::matmul, std::move(C), ins, [nb, M, K, N](Tape& tp, std::uint32_t self) {
    Ctx c{tp, self};
    const real* g = c.grad_out().raw();
    const real* pa = c.value(0).raw();
    const real* pb = c.value(1).raw();
    if (c.wants(0)) {
      real* ga = c.grad(0).raw();
      for (std::size_t s = 0; s < nb; ++s)
        for (std::size_t i = 0; i < M; ++i)
          for (std::size_t k = 0; k < K; ++k) {
            const real* grow = g + s * M * N + i * N;
            const real* brow = pb + s * K * N + k * N;
            real acc = 0;
            for (std::size_t j = 0; j < N; ++j) acc += grow[j] * brow[j];
            ga[s * M * K + i * K + k] += acc;
          }
    }
    if (c.wants(1)) {
      real* gb = c.grad(1).raw();
      for (std::size_t s = 0; s < nb; ++s)
        for (std::size_t i = 0; i < M; ++i)
          for (std::size_t k = 0; k < K; ++k) {
            const real aik = pa[s * M * K + i * K + k];
            const real* grow = g + s * M * N + i * N;
            real* gbrow = gb + s * K * N + k * N;
            for (std::size_t j = 0; j < N; ++j) gbrow[j] += aik * grow[j];
          }
    }
  });
}

Var affine(Var x, Var weight, Var bias) {
  Tape& t = common_tape(OpKind::affine, x, weight);
  const Tensor& X = x.value();
  const Tensor& W = weight.value();
  const Tensor& bv = bias.value();
  if (X.rank() != 2 || W.rank() != 2 || W.dim(1) != X.dim(1) || bv.rank() != 1 ||
      bv.dim(0) != W.dim(0)) {
    fail(t, OpKind::affine, "incompatible shapes x" + shape_str(X.shape()) + " W" +
                                shape_str(W.shape()) + " b" + shape_str(bv.shape()));
  }
  const std::size_t n = X.dim(0), in = X.dim(1), out = W.dim(0);
  Tensor Y({n, out});
  for (std::size_t r = 0; r < n; ++r) {
    const real* xr = X.raw() + r * in;
    for (std::size_t o = 0; o < out; ++o) {
      const real* wr = W.raw() + o * in;
      real acc = bv[o];
      for (std::size_t i = 0; i < in; ++i) acc += xr[i] * wr[i];
      Y[r * out + o] = acc;
    }
  }
  const Var ins[] = {x, weight, bias};
  return t.record(OpKind::affine, std::move(Y), ins, [n, in, out](Tape& tp, std::uint32_t self) {
    Ctx c{tp, self};
    const real* g = c.grad_out().raw();
    const real* px = c.value(0).raw();
    const real* pw = c.value(1).raw();
    if (c.wants(0)) {
      real* gx = c.grad(0).raw();
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t o = 0; o < out; ++o) {
          const real go = g[r * out + o];
          if (go == 0) continue;
          const real* wr = pw + o * in;
          real* gxr = gx + r * in;
          for (std::size_t i = 0; i < in; ++i) gxr[i] += go * wr[i];
        }
    }
    if (c.wants(1)) {
      real* gw = c.grad(1).raw();
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t o = 0; o < out; ++o) {
          const real go = g[r * out + o];
          if (go == 0) continue;
          const real* xr = px + r * in;
          real* gwr = gw + o * in;
          for (std::size_t i = 0; i < in; ++i) gwr[i] += go * xr[i];
        }
    }
    if (c.wants(2)) {
      real* gb = c.grad(2).raw();
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t o = 0; o < out; ++o) gb[o] += g[r * out + o];
    }
  });
}

// ---------------------------------------------------------------------------
// convolution and pooling

Var conv2d(Var x, Var weight, const Conv2dOptions& opt) {
  Tape& t = common_tape(OpKind::conv2d, x, weight);
  const Tensor& X = x.value();
  const Tensor& Wt = weight.value();
  if (X.rank() != 4 || Wt.rank() != 4) {
    fail(t, OpKind::conv2d, "expected x[B,C,H,W] and w[O,I,kh,kw], got " + shape_str(X.shape()) +
                                " and " + shape_str(Wt.shape()));
  }
  const std::size_t nb = X.dim(0), cin = X.dim(1), H = X.dim(2), W = X.dim(3);
  const std::size_t cout = Wt.dim(0), cin_g = Wt.dim(1), KH = Wt.dim(2), KW = Wt.dim(3);
  const std::size_t groups = opt.groups;
  if (groups == 0 || cin % groups != 0 || cout % groups != 0 || cin_g != cin / groups) {
    fail(t, OpKind::conv2d, "channel mismatch: input " + shape_str(X.shape()) + ", weight " +
                                shape_str(Wt.shape()) + ", groups " + std::to_string(groups));
  }
  std::size_t OH = 0, OW = 0;
  try {
    OH = conv_out_size(H, KH, opt.stride, opt.dilation, opt.padding);
    OW = conv_out_size(W, KW, opt.stride, opt.dilation, opt.padding);
  } catch (const ShapeError& e) {
    fail(t, OpKind::conv2d, e.what());
  }
  const std::size_t cout_g = cout / groups;
  const Index s = static_cast<Index>(opt.stride), d = static_cast<Index>(opt.dilation),
              p = static_cast<Index>(opt.padding);

  // Valid output ranges depend only on the kernel offset, so compute once.
  using Range = std::pair<Index, Index>;
  std::vector<Range> rows(KH), cols(KW);
  for (std::size_t kh = 0; kh < KH; ++kh) {
    rows[kh] = valid_range(static_cast<Index>(OH), static_cast<Index>(H), s,
                           static_cast<Index>(kh) * d, p);
  }
  for (std::size_t kw = 0; kw < KW; ++kw) {
    cols[kw] = valid_range(static_cast<Index>(OW), static_cast<Index>(W), s,
                           static_cast<Index>(kw) * d, p);
  }

  // Visits every (output row/col, input row/col, weight) triple of one
  // (batch, out-channel, in-channel) plane.
  auto sweep = [=](auto&& body) {
    for (std::size_t b = 0; b < nb; ++b)
      for (std::size_t oc = 0; oc < cout; ++oc) {
        const std::size_t grp = oc / cout_g;
        for (std::size_t icg = 0; icg < cin_g; ++icg) {
          const std::size_t ic = grp * cin_g + icg;
          const std::size_t in_off = (b * cin + ic) * H * W;
          const std::size_t out_off = (b * cout + oc) * OH * OW;
          const std::size_t w_off = (oc * cin_g + icg) * KH * KW;
          for (std::size_t kh = 0; kh < KH; ++kh) {
            const auto [oh_lo, oh_hi] = rows[kh];
            for (std::size_t kw = 0; kw < KW; ++kw) {
              const auto [ow_lo, ow_hi] = cols[kw];
              if (ow_lo >= ow_hi) continue;
              const std::size_t widx = w_off + kh * KW + kw;
              const Index iw0 = ow_lo * s + static_cast<Index>(kw) * d - p;
              if (s == 1 && iw0 == 0 && ow_lo == 0 && OW == W &&
                  ow_hi == static_cast<Index>(OW)) {
                // full rows on both sides: one contiguous run
                if (oh_lo < oh_hi) {
                  const Index ih0 = oh_lo + static_cast<Index>(kh) * d - p;
                  body(widx, out_off + static_cast<std::size_t>(oh_lo) * OW,
                       in_off + static_cast<std::size_t>(ih0) * W,
                       static_cast<std::size_t>(oh_hi - oh_lo) * OW);
                }
                continue;
              }
              for (Index oh = oh_lo; oh < oh_hi; ++oh) {
                const Index ih = oh * s + static_cast<Index>(kh) * d - p;
                const std::size_t out_row = out_off + static_cast<std::size_t>(oh) * OW;
                const std::size_t in_row = in_off + static_cast<std::size_t>(ih) * W;
                body(widx, out_row + static_cast<std::size_t>(ow_lo),
                     in_row + static_cast<std::size_t>(iw0),
                     static_cast<std::size_t>(ow_hi - ow_lo));
              }
            }
          }
        }
      }
  };

  Tensor Y({nb, cout, OH, OW});
  {
    real* py = Y.raw();
    const real* px = X.raw();
    const real* pw = Wt.raw();
    const std::size_t stride = opt.stride;
    sweep([&](std::size_t widx, std::size_t o0, std::size_t i0, std::size_t len) {
      const real wv = pw[widx];
      real* yo = py + o0;
      const real* xi = px + i0;
      if (stride == 1) {
        for (std::size_t k = 0; k < len; ++k) yo[k] += wv * xi[k];
      } else {
        for (std::size_t k = 0; k < len; ++k) yo[k] += wv * xi[k * stride];
      }
    });
  }
  const Var ins[] = {x, weight};
  return t.record(OpKind::conv2d, std::move(Y), ins,
                  [sweep, stride = opt.stride](Tape& tp, std::uint32_t self) {
                    Ctx c{tp, self};
                    const real* g = c.grad_out().raw();
                    const real* px = c.value(0).raw();
                    const real* pw = c.value(1).raw();
                    real* gx = c.wants(0) ? c.grad(0).raw() : nullptr;
                    real* gw = c.wants(1) ? c.grad(1).raw() : nullptr;
                    sweep([&](std::size_t widx, std::size_t o0, std::size_t i0, std::size_t len) {
                      const real* go = g + o0;
                      if (gx) {
                        const real wv = pw[widx];
                        real* gxi = gx + i0;
                        if (stride == 1) {
                          for (std::size_t k = 0; k < len; ++k) gxi[k] += wv * go[k];
                        } else {
                          for (std::size_t k = 0; k < len; ++k) gxi[k * stride] += wv * go[k];
                        }
                      }
                      if (gw) {
                        const real* xi = px + i0;
                        real acc[4] = {0, 0, 0, 0};
                        std::size_t k = 0;
                        if (stride == 1) {
                          for (; k + 4 <= len; k += 4) {
                            for (std::size_t u = 0; u < 4; ++u) acc[u] += go[k + u] * xi[k + u];
                          }
                        }
                        for (; k < len; ++k) acc[k & 3] += go[k] * xi[k * stride];
                        gw[widx] += (acc[0] + acc[1]) + (acc[2] + acc[3]);
                      }
                    });
                  });
}

namespace {

struct PoolGeometry {
  std::size_t nb, ch, H, W, OH, OW;
  Index k, s, p;
};

PoolGeometry pool_geometry(const Tape& t, OpKind kind, const Tensor& X, const Pool2dOptions& opt) {
  if (X.rank() != 4) fail(t, kind, "expected x[B,C,H,W], got " + shape_str(X.shape()));
  if (opt.padding * 2 > opt.kernel) fail(t, kind, "padding larger than half the kernel");
  PoolGeometry g{X.dim(0), X.dim(1), X.dim(2), X.dim(3), 0, 0, static_cast<Index>(opt.kernel),
                 static_cast<Index>(opt.stride), static_cast<Index>(opt.padding)};
  try {
    g.OH = conv_out_size(g.H, opt.kernel, opt.stride, 1, opt.padding);
    g.OW = conv_out_size(g.W, opt.kernel, opt.stride, 1, opt.padding);
  } catch (const ShapeError& e) {
    fail(t, kind, e.what());
  }
  return g;
}

}  // namespace

Var avg_pool2d(Var x, const Pool2dOptions& opt) {
  Tape& t = x.tape();
  const Tensor& X = x.value();
  const PoolGeometry g = pool_geometry(t, OpKind::avg_pool2d, X, opt);
  const real inv = 1.0 / static_cast<real>(g.k * g.k);
  auto windows = [g](auto&& body) {
    for (std::size_t plane = 0; plane < g.nb * g.ch; ++plane)
      for (std::size_t oh = 0; oh < g.OH; ++oh) {
        const Index h0 = static_cast<Index>(oh) * g.s - g.p;
        const Index hs = std::max<Index>(h0, 0), he = std::min<Index>(h0 + g.k, g.H);
        for (std::size_t ow = 0; ow < g.OW; ++ow) {
          const Index w0 = static_cast<Index>(ow) * g.s - g.p;
          const Index ws = std::max<Index>(w0, 0), we = std::min<Index>(w0 + g.k, g.W);
          body(plane * g.OH * g.OW + oh * g.OW + ow, plane * g.H * g.W, hs, he, ws, we);
        }
      }
  };
  Tensor Y({g.nb, g.ch, g.OH, g.OW});
  const real* px = X.raw();
  windows([&](std::size_t o, std::size_t base, Index hs, Index he, Index ws, Index we) {
    real acc = 0;
    for (Index h = hs; h < he; ++h)
      for (Index w = ws; w < we; ++w) acc += px[base + static_cast<std::size_t>(h) * g.W + w];
    Y[o] = acc * inv;
  });
  const Var ins[] = {x};
  return t.record(OpKind::avg_pool2d, std::move(Y), ins,
                  [windows, inv, W = g.W](Tape& tp, std::uint32_t self) {
                    Ctx c{tp, self};
                    const real* go = c.grad_out().raw();
                    real* gx = c.grad(0).raw();
                    windows([&](std::size_t o, std::size_t base, Index hs, Index he, Index ws,
                                Index we) {
                      const real v = go[o] * inv;
                      for (Index h = hs; h < he; ++h)
                        for (Index w = ws; w < we; ++w)
                          gx[base + static_cast<std::size_t>(h) * W + w] += v;
                    });
                  });
}

Var max_pool2d(Var x, const Pool2dOptions& opt) {
  Tape& t = x.tape();
  const Tensor& X = x.value();
  const PoolGeometry g = pool_geometry(t, OpKind::max_pool2d, X, opt);
  Tensor Y({g.nb, g.ch, g.OH, g.OW});
  auto argmax = std::make_shared<std::vector<std::uint32_t>>(Y.numel());
  const real* px = X.raw();
  bool tie = false;
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::size_t plane = 0; plane < g.nb * g.ch; ++plane) {
    const std::size_t base = plane * g.H * g.W;
    for (std::size_t oh = 0; oh < g.OH; ++oh) {
      const Index h0 = static_cast<Index>(oh) * g.s - g.p;
      const Index hs = std::max<Index>(h0, 0), he = std::min<Index>(h0 + g.k, g.H);
      for (std::size_t ow = 0; ow < g.OW; ++ow) {
        const Index w0 = static_cast<Index>(ow) * g.s - g.p;
        const Index ws = std::max<Index>(w0, 0), we = std::min<Index>(w0 + g.k, g.W);
        std::size_t best = base + static_cast<std::size_t>(hs) * g.W + ws;
        real best_v = px[best];
        bool window_tie = false;
        for (Index hh = hs; hh < he; ++hh)
          for (Index ww = ws; ww < we; ++ww) {
            const std::size_t idx = base + static_cast<std::size_t>(hh) * g.W + ww;
            if (idx == best) continue;
            if (px[idx] > best_v) {
              best_v = px[idx];
              best = idx;
              window_tie = false;
            } else if (px[idx] == best_v) {
              window_tie = true;
            }
          }
        const std::size_t o = plane * g.OH * g.OW + oh * g.OW + ow;
        Y[o] = best_v;
        (*argmax)[o] = static_cast<std::uint32_t>(best);
        tie = tie || window_tie;
        h = mix64(h, best);
      }
    }
  }
  if (tie) t.mark_tie();
  t.mix_kink(h);
  const Var ins[] = {x};
  return t.record(OpKind::max_pool2d, std::move(Y), ins, [argmax](Tape& tp, std::uint32_t self) {
    Ctx c{tp, self};
    const real* go = c.grad_out().raw();
    real* gx = c.grad(0).raw();
    for (std::size_t o = 0; o < argmax->size(); ++o) gx[(*argmax)[o]] += go[o];
  });
}

// ---------------------------------------------------------------------------
// elementwise

Var add(Var a, Var b) {
  Tape& t = common_tape(OpKind::add, a, b);
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  if (A.shape() != B.shape()) {
    fail(t, OpKind::add, "shape mismatch " + shape_str(A.shape()) + " vs " + shape_str(B.shape()));
  }
  Tensor Y(A.shape());
  for (std::size_t i = 0; i < Y.numel(); ++i) Y[i] = A[i] + B[i];
  const Var ins[] = {a, b};
  return t.record(OpKind::add, std::move(Y), ins, [](Tape& tp, std::uint32_t self) {
    Ctx c{tp, self};
    for (std::size_t k = 0; k < 2; ++k)
      if (c.wants(k)) tp.accumulate(c.in(k), c.grad_out());
  });
}

Var mul(Var a, Var b) {
  Tape& t = common_tape(OpKind::mul, a, b);
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  // one-element operands broadcast (scalar weighting)
  const bool a_scalar = A.numel() == 1 && B.numel() != 1;
  const bool b_scalar = B.numel() == 1 && A.numel() != 1;
  if (!a_scalar && !b_scalar && A.shape() != B.shape()) {
    fail(t, OpKind::mul, "shape mismatch " + shape_str(A.shape()) + " vs " + shape_str(B.shape()));
  }
  Tensor Y(a_scalar ? B.shape() : A.shape());
  for (std::size_t i = 0; i < Y.numel(); ++i) {
    Y[i] = A[a_scalar ? 0 : i] * B[b_scalar ? 0 : i];
  }
  const Var ins[] = {a, b};
  return t.record(OpKind::mul, std::move(Y), ins, [a_scalar, b_scalar](Tape& tp, std::uint32_t self) {
    Ctx c{tp, self};
    const Tensor& g = c.grad_out();
    const bool scalar[2] = {a_scalar, b_scalar};
    for (std::size_t k = 0; k < 2; ++k) {
      if (!c.wants(k)) continue;
      const Tensor& other = c.value(1 - k);
      const bool other_scalar = scalar[1 - k];
      real* gk = c.grad(k).raw();
      if (scalar[k]) {
        real acc = 0;
        for (std::size_t i = 0; i < g.numel(); ++i) acc += g[i] * other[i];
        gk[0] += acc;
      } else {
        for (std::size_t i = 0; i < g.numel(); ++i) gk[i] += g[i] * other[other_scalar ? 0 : i];
      }
    }
  });
}

namespace {

template <class Fn, class Deriv>
Var unary(Var x, OpKind kind, Fn fn, Deriv deriv) {
  Tape& t = x.tape();
  const Tensor& X = x.value();
  Tensor Y(X.shape());
  for (std::size_t i = 0; i < Y.numel(); ++i) Y[i] = fn(X[i]);
  const Var ins[] = {x};
  return t.record(kind, std::move(Y), ins, [deriv](Tape& tp, std::uint32_t self) {
    Ctx c{tp, self};
    const Tensor& g = c.grad_out();
    const Tensor& xv = c.value(0);
    const Tensor& yv = tp.value(self);
    real* gx = c.grad(0).raw();
    for (std::size_t i = 0; i < g.numel(); ++i) gx[i] += g[i] * deriv(xv[i], yv[i]);
  });
}

}  // namespace

Var sigmoid(Var x) {
  return unary(
      x, OpKind::sigmoid,
      [](real v) {
        if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
        const real e = std::exp(v);
        return e / (1.0 + e);
      },
      [](real, real y) { return y * (1.0 - y); });
}

Var tanh(Var x) {
  return unary(
      x, OpKind::tanh, [](real v) { return std::tanh(v); },
      [](real, real y) { return 1.0 - y * y; });
}

Var leaky_relu(Var x, real slope) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (real v : x.value().data()) h = mix64(h, v > 0 ? 1 : 0);
  x.tape().mix_kink(h);
  return unary(
      x, OpKind::leaky_relu, [slope](real v) { return v > 0 ? v : slope * v; },
      [slope](real v, real) { return v > 0 ? 1.0 : slope; });
}

Var scale(Var x, real factor) {
  return unary(
      x, OpKind::scale, [factor](real v) { return factor * v; },
      [factor](real, real) { return factor; });
}

// ---------------------------------------------------------------------------
// structural

Var concat(std::span<const Var> parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat of zero tensors");
  Tape& t = parts[0].tape();
  const Shape& first = parts[0].shape();
  if (axis >= first.size()) fail(t, OpKind::concat, "axis out of range");
  Shape out_shape = first;
  out_shape[axis] = 0;
  std::vector<std::size_t> widths;
  for (const Var& v : parts) {
    if (&v.tape() != &t) fail(t, OpKind::concat, "operands live on different tapes");
    const Shape& s = v.shape();
    if (s.size() != first.size()) fail(t, OpKind::concat, "rank mismatch");
    for (std::size_t d = 0; d < s.size(); ++d) {
      if (d != axis && s[d] != first[d]) {
        fail(t, OpKind::concat, "shape mismatch " + shape_str(s) + " vs " + shape_str(first));
      }
    }
    out_shape[axis] += s[axis];
    widths.push_back(s[axis]);
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= first[d];
  for (std::size_t d = axis + 1; d < first.size(); ++d) inner *= first[d];
  const std::size_t total = out_shape[axis];
  Tensor Y(out_shape);
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const real* src = parts[k].value().raw();
    const std::size_t block = widths[k] * inner;
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(src + o * block, block, Y.raw() + (o * total + offset) * inner);
    }
    offset += widths[k];
  }
  return t.record(OpKind::concat, std::move(Y), parts,
                  [widths, outer, inner, total](Tape& tp, std::uint32_t self) {
                    Ctx c{tp, self};
                    const real* g = c.grad_out().raw();
                    std::size_t off = 0;
                    for (std::size_t k = 0; k < widths.size(); ++k) {
                      const std::size_t block = widths[k] * inner;
                      if (c.wants(k)) {
                        real* gk = c.grad(k).raw();
                        for (std::size_t o = 0; o < outer; ++o) {
                          const real* src = g + (o * total + off) * inner;
                          real* dst = gk + o * block;
                          for (std::size_t i = 0; i < block; ++i) dst[i] += src[i];
                        }
                      }
                      off += widths[k];
                    }
                  });
}

Var slice(Var x, std::size_t axis, std::size_t start, std::size_t length) {
  Tape& t = x.tape();
  const Shape& s = x.shape();
  if (axis >= s.size() || length == 0 || start + length > s[axis]) {
    fail(t, OpKind::slice, "range [" + std::to_string(start) + ", +" + std::to_string(length) +
                               ") invalid on axis " + std::to_string(axis) + " of " +
                               shape_str(s));
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= s[d];
  for (std::size_t d = axis + 1; d < s.size(); ++d) inner *= s[d];
  const std::size_t full = s[axis];
  Shape out_shape = s;
  out_shape[axis] = length;
  Tensor Y(out_shape);
  const real* src = x.value().raw();
  for (std::size_t o = 0; o < outer; ++o) {
    std::copy_n(src + (o * full + start) * inner, length * inner, Y.raw() + o * length * inner);
  }
  const Var ins[] = {x};
  return t.record(OpKind::slice, std::move(Y), ins,
                  [outer, inner, full, start, length](Tape& tp, std::uint32_t self) {
                    Ctx c{tp, self};
                    const real* g = c.grad_out().raw();
                    real* gx = c.grad(0).raw();
                    for (std::size_t o = 0; o < outer; ++o) {
                      real* dst = gx + (o * full + start) * inner;
                      const real* src2 = g + o * length * inner;
                      for (std::size_t i = 0; i < length * inner; ++i) dst[i] += src2[i];
                    }
                  });
}

Var reshape(Var x, Shape shape) {
  Tape& t = x.tape();
  if (shape_numel(shape) != x.value().numel()) {
    fail(t, OpKind::reshape, "cannot reshape " + shape_str(x.shape()) + " to " + shape_str(shape));
  }
  const Var ins[] = {x};
  return t.record(OpKind::reshape, x.value().reshaped(std::move(shape)), ins,
                  [](Tape& tp, std::uint32_t self) {
                    Ctx c{tp, self};
                    tp.accumulate(c.in(0), c.grad_out());
                  });
}

// ---------------------------------------------------------------------------
// softmax family

namespace {

Var softmax_impl(Var x, const Tensor* mask) {
  Tape& t = x.tape();
  const Tensor& X = x.value();
  const std::size_t K = X.shape().back();
  const std::size_t rows = X.numel() / K;
  if (mask && mask->shape() != X.shape()) {
    fail(t, OpKind::softmax, "mask shape " + shape_str(mask->shape()) + " differs from input " +
                                 shape_str(X.shape()));
  }
  Tensor Y(X.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const real* xr = X.raw() + r * K;
    real* yr = Y.raw() + r * K;
    const real* mr = mask ? mask->raw() + r * K : nullptr;
    real mx = -INFINITY;
    for (std::size_t k = 0; k < K; ++k)
      if (!mr || mr[k] != 0) mx = std::max(mx, xr[k]);
    if (mx == -INFINITY) fail(t, OpKind::softmax, "row " + std::to_string(r) + " is fully masked");
    real z = 0;
    for (std::size_t k = 0; k < K; ++k) {
      yr[k] = (!mr || mr[k] != 0) ? std::exp(xr[k] - mx) : 0.0;
      z += yr[k];
    }
    for (std::size_t k = 0; k < K; ++k) yr[k] /= z;
  }
  const Var ins[] = {x};
  return t.record(OpKind::softmax, std::move(Y), ins, [K, rows](Tape& tp, std::uint32_t self) {
    Ctx c{tp, self};
    const real* g = c.grad_out().raw();
    const real* y = tp.value(self).raw();
    real* gx = c.grad(0).raw();
    for (std::size_t r = 0; r < rows; ++r) {
      real dot = 0;
      for (std::size_t k = 0; k < K; ++k) dot += g[r * K + k] * y[r * K + k];
      for (std::size_t k = 0; k < K; ++k) gx[r * K + k] += y[r * K + k] * (g[r * K + k] - dot);
    }
  });
}

Var reduce_all(Var x, bool average) {
  Tape& t = x.tape();
  const Tensor& X = x.value();
  real acc = 0;
  for (real v : X.data()) acc += v;
  const real factor = average ? 1.0 / static_cast<real>(X.numel()) : 1.0;
  const Var ins[] = {x};
  return t.record(OpKind::mean, Tensor::scalar(acc * factor), ins,
                  [factor](Tape& tp, std::uint32_t self) {
                    Ctx c{tp, self};
                    const real g = c.grad_out()[0] * factor;
                    for (real& v : c.grad(0).data()) v += g;
                  });
}

Var reduce_axis(Var x, std::size_t axis, bool average) {
  Tape& t = x.tape();
  const Shape& s = x.shape();
  if (axis >= s.size()) fail(t, OpKind::mean, "axis out of range for " + shape_str(s));
  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= s[d];
  for (std::size_t d = axis + 1; d < s.size(); ++d) inner *= s[d];
  const std::size_t n = s[axis];
  Shape out_shape;
  for (std::size_t d = 0; d < s.size(); ++d)
    if (d != axis) out_shape.push_back(s[d]);
  if (out_shape.empty()) out_shape = {1};
  const real factor = average ? 1.0 / static_cast<real>(n) : 1.0;
  Tensor Y(out_shape);
  const real* px = x.value().raw();
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t k = 0; k < n; ++k) {
      const real* src = px + (o * n + k) * inner;
      real* dst = Y.raw() + o * inner;
      for (std::size_t i = 0; i < inner; ++i) dst[i] += src[i];
    }
  for (real& v : Y.data()) v *= factor;
  const Var ins[] = {x};
  return t.record(OpKind::mean, std::move(Y), ins,
                  [outer, inner, n, factor](Tape& tp, std::uint32_t self) {
                    Ctx c{tp, self};
                    const real* g = c.grad_out().raw();
                    real* gx = c.grad(0).raw();
                    for (std::size_t o = 0; o < outer; ++o)
                      for (std::size_t k = 0; k < n; ++k) {
                        real* dst = gx + (o * n + k) * inner;
                        const real* src = g + o * inner;
                        for (std::size_t i = 0; i < inner; ++i) dst[i] += src[i] * factor;
                      }
                  });
}

}  // namespace

Var softmax(Var x) { return softmax_impl(x, nullptr); }
Var masked_softmax(Var x, const Tensor& mask) { return softmax_impl(x, &mask); }

Var mean(Var x) { return reduce_all(x, true); }
Var mean(Var x, std::size_t axis) { return reduce_axis(x, axis, true); }
Var sum(Var x) { return reduce_all(x, false); }
Var sum(Var x, std::size_t axis) { return reduce_axis(x, axis, false); }

Var cross_entropy(Var logits, std::span<const int> labels) {
  Tape& t = logits.tape();
  const Tensor& Z = logits.value();
  if (Z.rank() != 2 || Z.dim(0) != labels.size()) {
    fail(t, OpKind::cross_entropy, "logits " + shape_str(Z.shape()) + " vs " +
                                       std::to_string(labels.size()) + " labels");
  }
  const std::size_t n = Z.dim(0), K = Z.dim(1);
  auto probs = std::make_shared<std::vector<real>>(n * K);
  auto targets = std::make_shared<std::vector<int>>(labels.begin(), labels.end());
  real loss = 0;
  for (std::size_t r = 0; r < n; ++r) {
    const int y = labels[r];
    if (y < 0 || static_cast<std::size_t>(y) >= K) {
      fail(t, OpKind::cross_entropy, "label " + std::to_string(y) + " outside [0," +
                                         std::to_string(K) + ")");
    }
    const real* zr = Z.raw() + r * K;
    const real mx = *std::max_element(zr, zr + K);
    real se = 0;
    for (std::size_t k = 0; k < K; ++k) se += std::exp(zr[k] - mx);
    const real lse = mx + std::log(se);
    loss += lse - zr[y];
    for (std::size_t k = 0; k < K; ++k) (*probs)[r * K + k] = std::exp(zr[k] - lse);
  }
  loss /= static_cast<real>(n);
  const Var ins[] = {logits};
  return t.record(OpKind::cross_entropy, Tensor::scalar(loss), ins,
                  [probs, targets, n, K](Tape& tp, std::uint32_t self) {
                    Ctx c{tp, self};
                    const real g = c.grad_out()[0] / static_cast<real>(n);
                    real* gz = c.grad(0).raw();
                    for (std::size_t r = 0; r < n; ++r)
                      for (std::size_t k = 0; k < K; ++k) {
                        const real onehot = static_cast<int>(k) == (*targets)[r] ? 1.0 : 0.0;
                        gz[r * K + k] += g * ((*probs)[r * K + k] - onehot);
                      }
                  });
}

}  // namespace emonas::ad
