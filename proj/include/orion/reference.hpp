#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "orion/netgraph.hpp"

namespace orion {

inline std::function<double(double)> activation_fn(const std::string& fn) {
  if (fn == "relu") return [](double x) { return x > 0 ? x : 0.0; };
  if (fn == "silu") return [](double x) { return x / (1.0 + std::exp(-x)); };
  if (fn == "sigmoid") return [](double x) { return 1.0 / (1.0 + std::exp(-x)); };
  if (fn == "tanh") return [](double x) { return std::tanh(x); };
  if (fn == "gelu") return [](double x) { return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0))); };
  if (fn == "square") return [](double x) { return x * x; };
  if (fn == "identity") return [](double x) { return x; };
  throw Error(Errc::UnknownKind, "unknown activation '" + fn + "'");
}

// Cleartext evaluation of every node; values are logical tensors in raster
// order. Activations are exact, Poly nodes use their polynomial.
inline std::vector<std::vector<double>> forward_all(const LayerGraph& g, const std::vector<double>& x) {
  std::vector<std::vector<double>> val(static_cast<std::size_t>(g.size()));
  for (int v = 0; v < g.size(); ++v) {
    const LayerNode& n = g[v];
    const auto arg = [&](std::size_t i) -> const std::vector<double>& { return val[static_cast<std::size_t>(n.inputs.at(i))]; };
    std::vector<double> out;
    switch (n.kind) {
      case LayerKind::Input:
        if (static_cast<long>(x.size()) != Tensor::numel_of(n.shape))
          throw Error(Errc::LengthMismatch, "input has " + std::to_string(x.size()) + " values, model expects " +
                                                shape_str(n.shape));
        out = x;
        break;
      case LayerKind::Conv2d:
      case LayerKind::AvgPool2d: out = conv2d_direct(n.conv, n.weight, n.bias, arg(0)); break;
      case LayerKind::Linear: {
        const long o = n.weight.shape[0], i = n.weight.shape[1];
        out.assign(static_cast<std::size_t>(o), 0.0);
        for (long r = 0; r < o; ++r) {
          double acc = n.bias.empty() ? 0.0 : n.bias[static_cast<std::size_t>(r)];
          for (long c = 0; c < i; ++c) acc += n.weight.data[static_cast<std::size_t>(r * i + c)] * arg(0)[static_cast<std::size_t>(c)];
          out[static_cast<std::size_t>(r)] = acc;
        }
        break;
      }
      case LayerKind::BatchNorm2d: {
        out = arg(0);
        const long per = static_cast<long>(out.size()) / n.bn.channels();
        for (std::size_t k = 0; k < out.size(); ++k) {
          const long c = static_cast<long>(k) / per;
          out[k] = out[k] * n.bn.scale(c) + n.bn.shift(c);
        }
        break;
      }
      case LayerKind::Add:
      case LayerKind::Mult:
        out = arg(0);
        for (std::size_t k = 0; k < out.size(); ++k)
          out[k] = n.kind == LayerKind::Add ? out[k] + arg(1)[k] : out[k] * arg(1)[k];
        break;
      case LayerKind::Activation: {
        const auto f = activation_fn(n.act);
        out = arg(0);
        for (double& t : out) t = f(t);
        break;
      }
      case LayerKind::Poly:
        out = arg(0);
        for (double& t : out) t = n.poly(t);
        break;
      case LayerKind::ScaleDown:
        out = arg(0);
        for (double& t : out) t *= n.factor;
        break;
      case LayerKind::Flatten:
      case LayerKind::Fork:
      case LayerKind::Bootstrap: out = arg(0); break;
    }
    val[static_cast<std::size_t>(v)] = std::move(out);
  }
  return val;
}

inline std::vector<double> forward(const LayerGraph& g, const std::vector<double>& x) {
  auto all = forward_all(g, x);
  return all[static_cast<std::size_t>(g.output())];
}

}  // namespace orion
