#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "orion/error.hpp"
#include "orion/layout.hpp"
#include "orion/packing.hpp"
#include "orion/tensor.hpp"

namespace orion {

struct ConvSpec {
  long c_i = 1, c_o = 1, h_i = 1, w_i = 1;
  long f_h = 1, f_w = 1;
  long s_h = 1, s_w = 1;
  long p_h = 0, p_w = 0;
  long d_h = 1, d_w = 1;
  long groups = 1;

  long h_o() const { return (h_i + 2 * p_h - d_h * (f_h - 1) - 1) / s_h + 1; }
  long w_o() const { return (w_i + 2 * p_w - d_w * (f_w - 1) - 1) / s_w + 1; }

  void check() const {
    for (long v : {c_i, c_o, h_i, w_i, f_h, f_w, s_h, s_w, d_h, d_w, groups})
      if (v <= 0) throw Error(Errc::ShapeMismatch, "conv: sizes, strides, dilations and groups must be positive");
    if (p_h < 0 || p_w < 0) throw Error(Errc::ShapeMismatch, "conv: negative padding");
    if (c_i % groups || c_o % groups) throw Error(Errc::ShapeMismatch, "conv: channels not divisible by groups");
    if (h_i + 2 * p_h - d_h * (f_h - 1) - 1 < 0 || w_i + 2 * p_w - d_w * (f_w - 1) - 1 < 0)
      throw Error(Errc::ShapeMismatch, "conv: filter larger than padded input");
  }
};

// Raster-order Toeplitz matrix: (c_o h_o w_o) x (c_i h_i w_i), one row per
// filter placement; taps that fall into the padding are simply omitted.
inline SparseMatrix toeplitz(const ConvSpec& s, const Tensor& weight) {
  s.check();
  const std::vector<long> want{s.c_o, s.c_i / s.groups, s.f_h, s.f_w};
  if (weight.shape != want)
    throw Error(Errc::ShapeMismatch, "conv weight shape " + shape_str(weight.shape) + ", expected " + shape_str(want));
  const long ho = s.h_o(), wo = s.w_o();
  const long cig = s.c_i / s.groups, cog = s.c_o / s.groups;
  SparseMatrix m(s.c_o * ho * wo, s.c_i * s.h_i * s.w_i);
  for (long oc = 0; oc < s.c_o; ++oc)
    for (long oy = 0; oy < ho; ++oy)
      for (long ox = 0; ox < wo; ++ox) {
        const long row = (oc * ho + oy) * wo + ox;
        for (long g = 0; g < cig; ++g) {
          const long ic = (oc / cog) * cig + g;
          for (long ky = 0; ky < s.f_h; ++ky) {
            const long iy = oy * s.s_h - s.p_h + ky * s.d_h;
            if (iy < 0 || iy >= s.h_i) continue;
            for (long kx = 0; kx < s.f_w; ++kx) {
              const long ix = ox * s.s_w - s.p_w + kx * s.d_w;
              if (ix < 0 || ix >= s.w_i) continue;
              const double v = weight.at4(oc, g, ky, kx);
              if (v != 0.0) m.add(row, (ic * s.h_i + iy) * s.w_i + ix, v);
            }
          }
        }
      }
  return m;
}

// Direct sliding-window convolution over raster-ordered data; used as the
// reference semantics.
inline std::vector<double> conv2d_direct(const ConvSpec& s, const Tensor& weight, const std::vector<double>& bias,
                                         const std::vector<double>& x) {
  s.check();
  const long ho = s.h_o(), wo = s.w_o();
  const long cig = s.c_i / s.groups, cog = s.c_o / s.groups;
  std::vector<double> y(static_cast<std::size_t>(s.c_o * ho * wo), 0.0);
  for (long oc = 0; oc < s.c_o; ++oc)
    for (long oy = 0; oy < ho; ++oy)
      for (long ox = 0; ox < wo; ++ox) {
        double acc = bias.empty() ? 0.0 : bias[static_cast<std::size_t>(oc)];
        for (long g = 0; g < cig; ++g) {
          const long ic = (oc / cog) * cig + g;
          for (long ky = 0; ky < s.f_h; ++ky)
            for (long kx = 0; kx < s.f_w; ++kx) {
              const long iy = oy * s.s_h - s.p_h + ky * s.d_h, ix = ox * s.s_w - s.p_w + kx * s.d_w;
              if (iy < 0 || iy >= s.h_i || ix < 0 || ix >= s.w_i) continue;
              acc += weight.at4(oc, g, ky, kx) * x[static_cast<std::size_t>((ic * s.h_i + iy) * s.w_i + ix)];
            }
        }
        y[static_cast<std::size_t>((oc * ho + oy) * wo + ox)] = acc;
      }
  return y;
}

inline long count_diagonals(const SparseMatrix& m) {
  const long width = pow2_ceil(std::max(m.rows, m.cols));
  return static_cast<long>(extract_diagonals(m, width, width, false).size());
}

// Nonzero generalized diagonals of the unpermuted strided Toeplitz matrix,
// zero-padded to a square power-of-two width.
inline long naive_strided_diag_count(const ConvSpec& s) {
  if (s.s_h < 2 && s.s_w < 2) throw Error(Errc::InvalidArgument, "naive strided count needs stride >= 2");
  Tensor w({s.c_o, s.c_i / s.groups, s.f_h, s.f_w});
  for (auto& v : w.data) v = 1.0;
  return count_diagonals(toeplitz(s, w));
}

// A linear layer expressed in slot coordinates.
struct LoweredLinear {
  SparseMatrix matrix;       // rows = out.span(), cols = in.span()
  std::vector<double> bias;  // indexed by output slot; empty when absent
  SlotLayout out;
};

// Output layout of a conv: the gap grows by the stride (equal strides only),
// the physical grid never shrinks.
inline SlotLayout conv_output_layout(const ConvSpec& s, const SlotLayout& in) {
  const long g_out = (s.s_h == s.s_w) ? in.gap * s.s_h : in.gap;
  const long gh = std::max(in.grid_h, s.h_o() * g_out);
  const long gw = std::max(in.grid_w, s.w_o() * g_out);
  return multiplexed_layout(s.c_o, s.h_o(), s.w_o(), g_out, gh, gw);
}

// Permutes rows and columns of a raster Toeplitz matrix into slot coordinates,
// fusing the multiplexing into the weights so the conv costs one level.
inline LoweredLinear multiplex(const SparseMatrix& raster, const SlotLayout& in, const ConvSpec& s) {
  if (in.flat || in.c != s.c_i || in.h != s.h_i || in.w != s.w_i)
    throw Error(Errc::ShapeMismatch, "conv input layout " + in.describe() + " does not match spec (" +
                                         std::to_string(s.c_i) + "," + std::to_string(s.h_i) + "," +
                                         std::to_string(s.w_i) + ")");
  if (raster.rows != s.c_o * s.h_o() * s.w_o() || raster.cols != s.c_i * s.h_i * s.w_i)
    throw Error(Errc::ShapeMismatch, "Toeplitz matrix does not match conv spec");
  LoweredLinear r;
  r.out = conv_output_layout(s, in);
  r.matrix = SparseMatrix(r.out.span(), in.span());
  r.matrix.entries.reserve(raster.entries.size());
  for (const auto& e : raster.entries)
    r.matrix.entries.push_back({r.out.slot_of[static_cast<std::size_t>(e.row)], in.slot_of[static_cast<std::size_t>(e.col)], e.value});
  return r;
}

inline std::vector<double> channel_bias_slots(const std::vector<double>& bias, const SlotLayout& out) {
  if (bias.empty()) return {};
  std::vector<double> b(static_cast<std::size_t>(out.span()), 0.0);
  const long per = out.h * out.w;
  for (long i = 0; i < out.size(); ++i) b[static_cast<std::size_t>(out.slot_of[static_cast<std::size_t>(i)])] = bias[static_cast<std::size_t>(out.flat ? i : i / per)];
  return b;
}

inline LoweredLinear lower_conv(const ConvSpec& s, const Tensor& weight, const std::vector<double>& bias,
                                const SlotLayout& in) {
  if (!bias.empty() && static_cast<long>(bias.size()) != s.c_o)
    throw Error(Errc::ShapeMismatch, "conv bias has " + std::to_string(bias.size()) + " entries, expected " +
                                         std::to_string(s.c_o));
  LoweredLinear r = multiplex(toeplitz(s, weight), in, s);
  r.bias = channel_bias_slots(bias, r.out);
  return r;
}

inline LoweredLinear lower_linear(const Tensor& weight, const std::vector<double>& bias, const SlotLayout& in) {
  if (weight.shape.size() != 2 || weight.shape[1] != in.size())
    throw Error(Errc::ShapeMismatch, "linear weight " + shape_str(weight.shape) + " does not accept " +
                                         std::to_string(in.size()) + " inputs");
  const long out = weight.shape[0];
  if (!bias.empty() && static_cast<long>(bias.size()) != out) throw Error(Errc::ShapeMismatch, "linear bias length");
  LoweredLinear r;
  r.out = flat_layout(out);
  r.matrix = SparseMatrix(out, in.span());
  for (long o = 0; o < out; ++o)
    for (long i = 0; i < in.size(); ++i) {
      const double v = weight.data[static_cast<std::size_t>(o * in.size() + i)];
      if (v != 0.0) r.matrix.add(o, in.slot_of[static_cast<std::size_t>(i)], v);
    }
  r.bias = bias;
  if (!r.bias.empty()) r.bias.resize(static_cast<std::size_t>(r.out.span()), 0.0);
  return r;
}

inline ConvSpec avgpool_spec(long channels, long h, long w, long k, long stride, long pad) {
  ConvSpec s;
  s.c_i = s.c_o = s.groups = channels;
  s.h_i = h;
  s.w_i = w;
  s.f_h = s.f_w = k;
  s.s_h = s.s_w = stride;
  s.p_h = s.p_w = pad;
  return s;
}

inline Tensor avgpool_weight(long channels, long k) {
  Tensor t({channels, 1, k, k});
  for (auto& v : t.data) v = 1.0 / static_cast<double>(k * k);
  return t;
}

// Average pooling is a depthwise conv with uniform weights 1/k^2.
inline LoweredLinear lower_avgpool(long k, long stride, long pad, const SlotLayout& in) {
  if (in.flat) throw Error(Errc::ShapeMismatch, "avgpool needs a spatial input");
  return lower_conv(avgpool_spec(in.c, in.h, in.w, k, stride, pad), avgpool_weight(in.c, k), {}, in);
}

struct BatchNormParams {
  std::vector<double> gamma, beta, mean, var;
  double eps = 1e-5;

  long channels() const { return static_cast<long>(gamma.size()); }
  double scale(long c) const { return gamma[static_cast<std::size_t>(c)] / std::sqrt(var[static_cast<std::size_t>(c)] + eps); }
  double shift(long c) const { return beta[static_cast<std::size_t>(c)] - mean[static_cast<std::size_t>(c)] * scale(c); }
  void check() const {
    if (beta.size() != gamma.size() || mean.size() != gamma.size() || var.size() != gamma.size())
      throw Error(Errc::ShapeMismatch, "batchnorm parameter lengths differ");
  }
};

// Folds y = bn(W x + b) into W' x + b'. Works for conv (4-D) and linear (2-D)
// weights: the first dimension indexes output channels.
inline void fold_batchnorm(const BatchNormParams& bn, Tensor& weight, std::vector<double>& bias) {
  bn.check();
  const long oc = weight.shape.at(0);
  if (oc != bn.channels()) throw Error(Errc::ShapeMismatch, "batchnorm channels do not match the folded layer");
  const long per = weight.numel() / oc;
  if (bias.empty()) bias.assign(static_cast<std::size_t>(oc), 0.0);
  for (long c = 0; c < oc; ++c) {
    const double sc = bn.scale(c);
    for (long i = 0; i < per; ++i) weight.data[static_cast<std::size_t>(c * per + i)] *= sc;
    bias[static_cast<std::size_t>(c)] = bias[static_cast<std::size_t>(c)] * sc + bn.shift(c);
  }
}

// Standalone batchnorm: a diagonal matrix plus a per-channel bias, layout unchanged.
inline LoweredLinear lower_batchnorm(const BatchNormParams& bn, const SlotLayout& in) {
  bn.check();
  const long chans = in.flat ? in.size() : in.c;
  if (chans != bn.channels()) throw Error(Errc::ShapeMismatch, "batchnorm channels do not match its input");
  LoweredLinear r;
  r.out = in;
  r.matrix = SparseMatrix(in.span(), in.span());
  std::vector<double> shifts(static_cast<std::size_t>(chans));
  const long per = in.flat ? 1 : in.h * in.w;
  for (long i = 0; i < in.size(); ++i) {
    const long s = in.slot_of[static_cast<std::size_t>(i)];
    r.matrix.add(s, s, bn.scale(i / per));
  }
  for (long c = 0; c < chans; ++c) shifts[static_cast<std::size_t>(c)] = bn.shift(c);
  r.bias = channel_bias_slots(shifts, r.out);
  return r;
}

}  // namespace orion
