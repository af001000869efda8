#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "orion/chebyshev.hpp"
#include "orion/netgraph.hpp"
#include "orion/reference.hpp"

namespace orion {

struct RangeProfile {
  std::map<std::string, double> max_abs;  // per node output
  double margin = 1.0;

  double at(const std::string& node) const {
    auto it = max_abs.find(node);
    if (it == max_abs.end()) throw Error(Errc::Format, "range profile has no entry for '" + node + "'");
    return it->second;
  }
};

inline nlohmann::json to_json(const RangeProfile& r) { return {{"margin", r.margin}, {"max_abs", r.max_abs}}; }

inline RangeProfile range_from_json(const nlohmann::json& j) {
  try {
    RangeProfile r;
    r.margin = j.value("margin", 1.0);
    r.max_abs = j.at("max_abs").get<std::map<std::string, double>>();
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::Format, std::string("range profile: ") + e.what());
  }
}

// Folds every BatchNorm2d whose producer is a conv/linear layer consumed
// only by it; the producer takes the batchnorm's name. A user Bootstrap
// node is rejected: bootstraps are placed by the compiler.
inline LayerGraph fold_batchnorms(const LayerGraph& in) {
  LayerGraph g = in;
  for (const auto& n : g.nodes)
    if (n.kind == LayerKind::Bootstrap)
      throw Error(Errc::InvalidArgument, "layer " + n.name + ": Bootstrap nodes are inserted by the compiler");
  const auto cons = g.consumers();
  std::vector<int> drop_into(static_cast<std::size_t>(g.size()), -1);
  for (int v = 0; v < g.size(); ++v) {
    const LayerNode& n = g[v];
    if (n.kind != LayerKind::BatchNorm2d) continue;
    const int u = n.inputs[0];
    const LayerKind pk = g[u].kind;
    if ((pk != LayerKind::Conv2d && pk != LayerKind::Linear) || cons[static_cast<std::size_t>(u)].size() != 1) continue;
    fold_batchnorm(n.bn, g[u].weight, g[u].bias);
    g[u].name = n.name;
    drop_into[static_cast<std::size_t>(v)] = u;
  }
  LayerGraph out;
  std::vector<int> remap(static_cast<std::size_t>(g.size()), -1);
  for (int v = 0; v < g.size(); ++v) {
    if (drop_into[static_cast<std::size_t>(v)] >= 0) {
      remap[static_cast<std::size_t>(v)] = remap[static_cast<std::size_t>(drop_into[static_cast<std::size_t>(v)])];
      continue;
    }
    LayerNode n = g[v];
    for (int& u : n.inputs) u = remap[static_cast<std::size_t>(u)];
    remap[static_cast<std::size_t>(v)] = out.size();
    out.nodes.push_back(std::move(n));
  }
  return out;
}

inline RangeProfile profile_ranges(const LayerGraph& g, const std::vector<std::vector<double>>& samples,
                                   double margin = 1.0) {
  if (samples.empty()) throw Error(Errc::InvalidArgument, "calibration needs at least one sample");
  RangeProfile r;
  r.margin = margin;
  for (const auto& n : g.nodes) r.max_abs[n.name] = 0.0;
  for (const auto& x : samples) {
    const auto vals = forward_all(g, x);
    for (int v = 0; v < g.size(); ++v) {
      double& m = r.max_abs[g[v].name];
      for (double t : vals[static_cast<std::size_t>(v)]) {
        if (!std::isfinite(t)) throw Error(Errc::NonFinite, "layer " + g[v].name + " produced a non-finite value");
        m = std::max(m, std::abs(t));
      }
    }
  }
  return r;
}

struct CalibrateOptions {
  const SignComposite* composite = nullptr;  // default: builtin for each ReLU's degrees
  bool expand_relu = true;
};

namespace detail {

inline void scale_linear_output(LayerNode& n, double f) {
  if (n.kind == LayerKind::BatchNorm2d) {
    for (long c = 0; c < n.bn.channels(); ++c) {
      const double shift = n.bn.shift(c);
      n.bn.gamma[static_cast<std::size_t>(c)] *= f;
      n.bn.beta[static_cast<std::size_t>(c)] = shift * f + n.bn.mean[static_cast<std::size_t>(c)] * n.bn.scale(c);
    }
    return;
  }
  for (double& w : n.weight.data) w *= f;
  for (double& b : n.bias) b *= f;
}

}  // namespace detail

// Rewrites the graph so every wire carries values of magnitude <= 1 on the
// calibration data: logical value = carried * slot value. Linear layers
// absorb the rescaling into their weights, smooth activations are replaced
// by Chebyshev fits of t -> f(c_in t) / c_out, and Add operands are
// equalized (fused into a single-consumer linear producer, else a ScaleDown).
inline LayerGraph calibrate(const LayerGraph& folded, const RangeProfile& r, const CalibrateOptions& opt = {}) {
  LayerGraph g = folded;
  const double m = r.margin;
  auto bound = [&](const LayerNode& n) { return std::max(1.0, m * r.at(n.name)); };
  std::vector<std::pair<int, LayerNode>> inserts;  // (before operand index of node, new node)

  for (int v = 0; v < g.size(); ++v) {
    LayerNode& n = g[v];
    const double c_in = n.inputs.empty() ? 1.0 : g[n.inputs[0]].carried;
    switch (n.kind) {
      case LayerKind::Input: n.carried = bound(n); break;
      case LayerKind::Conv2d:
      case LayerKind::Linear:
      case LayerKind::AvgPool2d:
      case LayerKind::BatchNorm2d: {
        n.carried = bound(n);
        // W' = W c_in / c_out, b' = b / c_out
        if (n.kind == LayerKind::BatchNorm2d) {
          for (long c = 0; c < n.bn.channels(); ++c) {
            const double sc = n.bn.scale(c) * c_in / n.carried, sh = n.bn.shift(c) / n.carried;
            n.bn.gamma[static_cast<std::size_t>(c)] *= c_in / n.carried;
            n.bn.beta[static_cast<std::size_t>(c)] = sh + n.bn.mean[static_cast<std::size_t>(c)] * sc;
          }
        } else {
          for (double& w : n.weight.data) w *= c_in / n.carried;
          for (double& b : n.bias) b /= n.carried;
        }
        break;
      }
      case LayerKind::Flatten:
      case LayerKind::Fork:
      case LayerKind::Bootstrap: n.carried = c_in; break;
      case LayerKind::ScaleDown:
        n.carried = bound(n);
        n.factor *= c_in / n.carried;
        break;
      case LayerKind::Mult: n.carried = c_in * g[n.inputs[1]].carried; break;
      case LayerKind::Poly: n.carried = 1.0; break;
      case LayerKind::Activation: {
        if (n.act == "identity" || n.act == "relu") {
          n.carried = c_in;
          break;
        }
        if (n.act == "square") {
          n.carried = c_in * c_in;
          break;
        }
        if (r.at(g[n.inputs[0]].name) == 0.0)
          throw Error(Errc::ZeroRange, "layer " + n.name + ": input range is zero on the calibration data");
        n.carried = bound(n);
        const auto f = activation_fn(n.act);
        const double ci = c_in, co = n.carried;
        n.poly = chebyshev_fit([&](double t) { return f(ci * t) / co; }, n.degree);
        n.kind = LayerKind::Poly;
        break;
      }
      case LayerKind::Add: {
        const double c_out = std::max({g[n.inputs[0]].carried, g[n.inputs[1]].carried, m * r.at(n.name), 1.0});
        const auto cons = g.consumers();
        for (std::size_t i = 0; i < 2; ++i) {
          const int u = n.inputs[i];
          const double cu = g[u].carried;
          if (cu == c_out) continue;
          const double f = cu / c_out;
          std::set<int> distinct(cons[static_cast<std::size_t>(u)].begin(), cons[static_cast<std::size_t>(u)].end());
          if (is_linear_kind(g[u].kind) && distinct.size() == 1) {
            detail::scale_linear_output(g[u], f);
            g[u].carried = c_out;
          } else {
            LayerNode sd;
            sd.name = n.name + ".eq" + std::to_string(i);
            sd.kind = LayerKind::ScaleDown;
            sd.factor = f;
            sd.carried = c_out;
            sd.inputs = {u};
            inserts.emplace_back(v * 2 + static_cast<int>(i), std::move(sd));
          }
        }
        n.carried = c_out;
        break;
      }
    }
  }
  for (auto& [slot, sd] : inserts) {
    const int v = slot / 2;
    g.nodes.push_back(std::move(sd));
    g[v].inputs[static_cast<std::size_t>(slot % 2)] = g.size() - 1;
  }
  if (!inserts.empty()) g.sort();
  if (opt.expand_relu) g = expand_relu(g, opt.composite);
  for (int v = 0; v < g.size(); ++v) infer_node(g, v, {});
  return g;
}

struct FitResult {
  RangeProfile profile;
  LayerGraph graph;  // calibrated, ReLUs expanded
};

inline FitResult fit(const LayerGraph& g, const std::vector<std::vector<double>>& samples, double margin = 1.0,
                     const CalibrateOptions& opt = {}) {
  FitResult r;
  const LayerGraph folded = fold_batchnorms(g);
  r.profile = profile_ranges(folded, samples, margin);
  r.graph = calibrate(folded, r.profile, opt);
  return r;
}

// Logical input -> slot values, and slot outputs -> logical.
inline std::vector<double> scale_input(const LayerGraph& calibrated, std::vector<double> x) {
  const double c = calibrated[calibrated.input()].carried;
  for (double& t : x) t /= c;
  return x;
}

inline std::vector<double> unscale_output(const LayerGraph& calibrated, std::vector<double> y) {
  const double c = calibrated[calibrated.output()].carried;
  for (double& t : y) t *= c;
  return y;
}

// Calibration samples from a tensor file (first tensor, or one named
// "input"/"data"; leading batch dimension optional) or CSV, one sample per line.
inline std::vector<std::vector<double>> load_samples(const std::string& path, long sample_size) {
  std::vector<std::vector<double>> out;
  if (path.size() >= 4 && path.substr(path.size() - 4) == ".csv") {
    std::ifstream is(path);
    if (!is) throw Error(Errc::Io, "cannot open " + path);
    std::string line;
    while (std::getline(is, line)) {
      if (line.empty()) continue;
      std::vector<double> s;
      std::stringstream ss(line);
      std::string cell;
      while (std::getline(ss, cell, ',')) {
        try {
          s.push_back(std::stod(cell));
        } catch (const std::exception&) {
          throw Error(Errc::Format, path + ": bad number '" + cell + "'");
        }
      }
      if (static_cast<long>(s.size()) != sample_size)
        throw Error(Errc::ShapeMismatch, path + ": sample has " + std::to_string(s.size()) + " values, expected " +
                                             std::to_string(sample_size));
      out.push_back(std::move(s));
    }
  } else {
    const TensorMap m = load_tensors(path);
    if (m.empty()) throw Error(Errc::Format, path + ": no tensors");
    const Tensor* t = &m.begin()->second;
    for (const char* key : {"input", "data"})
      if (m.count(key)) t = &m.at(key);
    if (t->numel() % sample_size != 0)
      throw Error(Errc::ShapeMismatch, path + ": tensor " + shape_str(t->shape) + " is not a batch of " +
                                           std::to_string(sample_size) + "-value samples");
    for (long b = 0; b < t->numel() / sample_size; ++b)
      out.emplace_back(t->data.begin() + b * sample_size, t->data.begin() + (b + 1) * sample_size);
  }
  if (out.empty()) throw Error(Errc::InvalidArgument, path + ": no samples");
  return out;
}

}  // namespace orion
