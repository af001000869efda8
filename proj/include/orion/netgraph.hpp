#pragma once

#include <algorithm>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "orion/chebyshev.hpp"
#include "orion/conv_lowering.hpp"
#include "orion/error.hpp"
#include "orion/sese.hpp"
#include "orion/tensor.hpp"

namespace orion {

// Fork, Poly and Mult are produced by ReLU expansion; Bootstrap is reserved
// for compiler-inserted nodes.
enum class LayerKind { Input, Conv2d, Linear, BatchNorm2d, AvgPool2d, Flatten, Add, Activation, ScaleDown, Bootstrap, Fork, Poly, Mult };

inline const char* kind_name(LayerKind k) {
  switch (k) {
    case LayerKind::Input: return "Input";
    case LayerKind::Conv2d: return "Conv2d";
    case LayerKind::Linear: return "Linear";
    case LayerKind::BatchNorm2d: return "BatchNorm2d";
    case LayerKind::AvgPool2d: return "AvgPool2d";
    case LayerKind::Flatten: return "Flatten";
    case LayerKind::Add: return "Add";
    case LayerKind::Activation: return "Activation";
    case LayerKind::ScaleDown: return "ScaleDown";
    case LayerKind::Bootstrap: return "Bootstrap";
    case LayerKind::Fork: return "Fork";
    case LayerKind::Poly: return "Poly";
    case LayerKind::Mult: return "Mult";
  }
  return "?";
}

inline LayerKind parse_kind(const std::string& s) {
  for (int i = 0; i <= static_cast<int>(LayerKind::Mult); ++i)
    if (s == kind_name(static_cast<LayerKind>(i))) return static_cast<LayerKind>(i);
  throw Error(Errc::UnknownKind, "unknown layer kind '" + s + "'");
}

inline bool is_linear_kind(LayerKind k) {
  return k == LayerKind::Conv2d || k == LayerKind::Linear || k == LayerKind::BatchNorm2d || k == LayerKind::AvgPool2d;
}

struct LayerNode {
  std::string name;
  LayerKind kind = LayerKind::Input;
  std::vector<int> inputs;
  std::vector<long> shape;  // output: {c, h, w} or {features}
  int depth = 0;

  ConvSpec conv;  // Conv2d, AvgPool2d (weights 1/k^2)
  Tensor weight;  // Conv2d, AvgPool2d, Linear
  std::vector<double> bias;
  BatchNormParams bn;
  std::string act;           // Activation: relu, silu, square, sigmoid, tanh, gelu, identity
  int degree = 0;            // fitted degree for smooth activations
  std::vector<int> degrees;  // relu sign composite
  double factor = 1.0;       // ScaleDown
  ChebPoly poly;             // Poly
  int sign_stage = 0;        // Poly from a ReLU: 1..k, the last one feeds the Mult
  bool last_sign_stage = false;
  double carried = 1.0;      // logical value = carried * slot value
  nlohmann::json params;
};

class LayerGraph {
 public:
  std::vector<LayerNode> nodes;

  int size() const { return static_cast<int>(nodes.size()); }
  const LayerNode& operator[](int i) const { return nodes.at(static_cast<std::size_t>(i)); }
  LayerNode& operator[](int i) { return nodes.at(static_cast<std::size_t>(i)); }

  int find(const std::string& name) const {
    for (int i = 0; i < size(); ++i)
      if (nodes[static_cast<std::size_t>(i)].name == name) return i;
    return -1;
  }

  Dag dag() const {
    Dag g;
    g.parents.resize(nodes.size());
    g.children.resize(nodes.size());
    for (int v = 0; v < size(); ++v)
      for (int u : nodes[static_cast<std::size_t>(v)].inputs) {
        g.parents[static_cast<std::size_t>(v)].push_back(u);
        g.children[static_cast<std::size_t>(u)].push_back(v);
      }
    return g;
  }

  std::vector<std::vector<int>> consumers() const { return dag().children; }

  std::vector<std::string> names() const {
    std::vector<std::string> r;
    for (const auto& n : nodes) r.push_back(n.name);
    return r;
  }

  int input() const {
    for (int i = 0; i < size(); ++i)
      if (nodes[static_cast<std::size_t>(i)].kind == LayerKind::Input) return i;
    throw Error(Errc::ShapeMismatch, "graph has no Input layer");
  }

  int output() const {
    const auto ch = consumers();
    int out = -1;
    for (int i = 0; i < size(); ++i)
      if (ch[static_cast<std::size_t>(i)].empty()) {
        if (out >= 0) throw Error(Errc::UnsupportedTopology, "graph has more than one output");
        out = i;
      }
    return out;
  }

  // Reorders nodes topologically (stable for already-sorted graphs).
  void sort() {
    const auto order = topo_order(dag());
    std::vector<int> pos(nodes.size());
    for (std::size_t i = 0; i < order.size(); ++i) pos[static_cast<std::size_t>(order[i])] = static_cast<int>(i);
    std::vector<LayerNode> sorted;
    sorted.reserve(nodes.size());
    for (int v : order) sorted.push_back(std::move(nodes[static_cast<std::size_t>(v)]));
    for (auto& n : sorted)
      for (int& u : n.inputs) u = pos[static_cast<std::size_t>(u)];
    nodes = std::move(sorted);
  }

  // Sum of node depths along the deepest path.
  int total_depth() const {
    std::vector<int> acc(nodes.size(), 0);
    int best = 0;
    for (const int v : topo_order(dag())) {
      int in = 0;
      for (int u : nodes[static_cast<std::size_t>(v)].inputs) in = std::max(in, acc[static_cast<std::size_t>(u)]);
      acc[static_cast<std::size_t>(v)] = in + nodes[static_cast<std::size_t>(v)].depth;
      best = std::max(best, acc[static_cast<std::size_t>(v)]);
    }
    return best;
  }
};

inline std::vector<int> default_relu_degrees() { return {15, 15, 27}; }

inline int default_activation_degree(const std::string& fn) {
  if (fn == "square" || fn == "identity") return 2;
  return 127;
}

inline int node_depth(const LayerNode& n) {
  switch (n.kind) {
    case LayerKind::Conv2d:
    case LayerKind::Linear:
    case LayerKind::BatchNorm2d:
    case LayerKind::AvgPool2d:
    case LayerKind::ScaleDown:
    case LayerKind::Mult:
      return 1;
    case LayerKind::Poly: return poly_depth(n.poly.degree());
    case LayerKind::Activation:
      if (n.act == "identity") return 0;
      if (n.act == "square") return 1;
      if (n.act == "relu") {
        int d = 1;
        for (int k : n.degrees) d += poly_depth(k);
        return d;
      }
      return poly_depth(n.degree);
    default: return 0;
  }
}

namespace detail {

inline std::pair<long, long> pair_param(const nlohmann::json& p, const char* key, long dflt) {
  if (!p.contains(key)) return {dflt, dflt};
  const auto& v = p.at(key);
  if (v.is_array()) return {v.at(0).get<long>(), v.at(1).get<long>()};
  return {v.get<long>(), v.get<long>()};
}

inline const Tensor& need_tensor(const TensorMap& w, const std::string& name, const std::string& layer) {
  auto it = w.find(name);
  if (it == w.end()) throw Error(Errc::Format, "layer " + layer + ": missing weight tensor '" + name + "'");
  return it->second;
}

inline std::string shape_of(const LayerNode& n) { return shape_str(n.shape); }

}  // namespace detail

// Fills shape, depth and per-kind payloads from params and the weight map.
inline void infer_node(LayerGraph& g, int v, const TensorMap& weights) {
  LayerNode& n = g[v];
  auto fail = [&](const std::string& why) { throw Error(Errc::ShapeMismatch, "layer " + n.name + ": " + why); };
  auto want_inputs = [&](std::size_t k) {
    if (n.inputs.size() != k)
      fail(std::string(kind_name(n.kind)) + " expects " + std::to_string(k) + " input(s), got " +
           std::to_string(n.inputs.size()));
  };
  const nlohmann::json& p = n.params;
  const std::vector<long> in = n.inputs.empty() ? std::vector<long>{} : g[n.inputs[0]].shape;
  try {
    switch (n.kind) {
      case LayerKind::Input:
        want_inputs(0);
        n.shape = p.at("shape").get<std::vector<long>>();
        if (n.shape.size() != 1 && n.shape.size() != 3) fail("input shape must be [c,h,w] or [features]");
        for (long d : n.shape)
          if (d <= 0) fail("input dimensions must be positive");
        break;
      case LayerKind::Conv2d:
      case LayerKind::AvgPool2d: {
        want_inputs(1);
        if (in.size() != 3) fail("expects a [c,h,w] input, got " + shape_str(in));
        ConvSpec s;
        s.c_i = in[0];
        s.h_i = in[1];
        s.w_i = in[2];
        const auto k = detail::pair_param(p, "kernel_size", 1);
        s.f_h = k.first;
        s.f_w = k.second;
        const auto st = detail::pair_param(p, "stride", n.kind == LayerKind::AvgPool2d ? k.first : 1);
        s.s_h = st.first;
        s.s_w = st.second;
        const auto pd = detail::pair_param(p, "padding", 0);
        s.p_h = pd.first;
        s.p_w = pd.second;
        if (n.kind == LayerKind::Conv2d) {
          const auto dl = detail::pair_param(p, "dilation", 1);
          s.d_h = dl.first;
          s.d_w = dl.second;
          s.groups = p.value("groups", 1L);
          s.c_o = p.at("out_channels").get<long>();
          if (n.weight.data.empty()) n.weight = detail::need_tensor(weights, p.value("weight", n.name + ".weight"), n.name);
          const std::vector<long> ws{s.c_o, s.c_i / std::max(1L, s.groups), s.f_h, s.f_w};
          if (n.weight.shape != ws) fail("weight shape " + shape_str(n.weight.shape) + ", expected " + shape_str(ws));
          const std::string bname = p.value("bias_name", n.name + ".bias");
          if (n.bias.empty() && p.value("bias", true) && weights.count(bname)) n.bias = weights.at(bname).data;
          if (!n.bias.empty() && static_cast<long>(n.bias.size()) != s.c_o) fail("bias length");
        } else {
          if (k.first != k.second) fail("pooling kernels must be square");
          s.c_o = s.groups = s.c_i;
          n.weight = avgpool_weight(s.c_i, k.first);
        }
        s.check();
        n.conv = s;
        n.shape = {s.c_o, s.h_o(), s.w_o()};
        break;
      }
      case LayerKind::Linear: {
        want_inputs(1);
        if (in.size() != 1) fail("expects a flat input (insert Flatten), got " + shape_str(in));
        if (n.weight.data.empty()) n.weight = detail::need_tensor(weights, p.value("weight", n.name + ".weight"), n.name);
        if (n.weight.shape.size() != 2 || n.weight.shape[1] != in[0])
          fail("weight shape " + shape_str(n.weight.shape) + " does not accept " + std::to_string(in[0]) + " features");
        if (p.contains("out_features") && p.at("out_features").get<long>() != n.weight.shape[0])
          fail("out_features disagrees with the weight");
        const std::string bname = p.value("bias_name", n.name + ".bias");
        if (n.bias.empty() && p.value("bias", true) && weights.count(bname)) n.bias = weights.at(bname).data;
        if (!n.bias.empty() && static_cast<long>(n.bias.size()) != n.weight.shape[0]) fail("bias length");
        n.shape = {n.weight.shape[0]};
        break;
      }
      case LayerKind::BatchNorm2d: {
        want_inputs(1);
        if (n.bn.gamma.empty()) {
          n.bn.gamma = detail::need_tensor(weights, n.name + ".weight", n.name).data;
          n.bn.beta = detail::need_tensor(weights, n.name + ".bias", n.name).data;
          n.bn.mean = detail::need_tensor(weights, n.name + ".running_mean", n.name).data;
          n.bn.var = detail::need_tensor(weights, n.name + ".running_var", n.name).data;
          n.bn.eps = p.value("eps", 1e-5);
        }
        n.bn.check();
        if (n.bn.channels() != in.at(0)) fail("batchnorm has " + std::to_string(n.bn.channels()) + " channels, input " + shape_str(in));
        n.shape = in;
        break;
      }
      case LayerKind::Flatten:
        want_inputs(1);
        n.shape = {Tensor::numel_of(in)};
        break;
      case LayerKind::Add:
        want_inputs(2);
        if (g[n.inputs[1]].shape != in)
          fail("operands have shapes " + shape_str(in) + " and " + shape_str(g[n.inputs[1]].shape));
        n.shape = in;
        break;
      case LayerKind::Mult:
        want_inputs(2);
        n.shape = in;
        break;
      case LayerKind::Activation:
        want_inputs(1);
        if (n.act.empty()) n.act = p.value("fn", std::string("relu"));
        if (n.act != "relu" && n.act != "silu" && n.act != "square" && n.act != "sigmoid" && n.act != "tanh" &&
            n.act != "gelu" && n.act != "identity")
          throw Error(Errc::UnknownKind, "layer " + n.name + ": unknown activation '" + n.act + "'");
        if (n.act == "relu" && n.degrees.empty())
          n.degrees = p.value("degrees", default_relu_degrees());
        if (n.act == "relu") check_odd_degrees(n.degrees);
        if (n.degree == 0) n.degree = p.value("degree", default_activation_degree(n.act));
        if (n.degree < 1) fail("activation degree must be positive");
        n.shape = in;
        break;
      case LayerKind::ScaleDown:
        want_inputs(1);
        if (p.contains("factor")) n.factor = p.at("factor").get<double>();
        n.shape = in;
        break;
      case LayerKind::Bootstrap:
      case LayerKind::Fork:
      case LayerKind::Poly:
        want_inputs(1);
        n.shape = in;
        break;
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::Format, "layer " + n.name + ": " + e.what());
  }
  n.depth = node_depth(n);
}

inline void infer_shapes(LayerGraph& g, const TensorMap& weights) {
  g.sort();
  for (int v = 0; v < g.size(); ++v) infer_node(g, v, weights);
}

// {"layers": [{"name", "kind", "params"}], "edges": [[src, dst], ...]}.
// Without "edges" the layers form a chain in listed order.
inline LayerGraph load_model(const nlohmann::json& j, const TensorMap& weights) {
  LayerGraph g;
  try {
    if (!j.contains("layers") || !j.at("layers").is_array() || j.at("layers").empty())
      throw Error(Errc::Format, "model has no layers");
    std::map<std::string, int> index;
    for (const auto& l : j.at("layers")) {
      LayerNode n;
      n.name = l.at("name").get<std::string>();
      n.kind = parse_kind(l.at("kind").get<std::string>());
      n.params = l.value("params", nlohmann::json::object());
      if (!index.emplace(n.name, g.size()).second) throw Error(Errc::Format, "duplicate layer name '" + n.name + "'");
      g.nodes.push_back(std::move(n));
    }
    if (j.contains("edges")) {
      for (const auto& e : j.at("edges")) {
        const auto src = e.at(0).get<std::string>(), dst = e.at(1).get<std::string>();
        if (!index.count(src) || !index.count(dst))
          throw Error(Errc::Format, "edge " + src + " -> " + dst + " names an unknown layer");
        g[index.at(dst)].inputs.push_back(index.at(src));
      }
    } else {
      for (int i = 1; i < g.size(); ++i) g[i].inputs.push_back(i - 1);
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::Format, std::string("model: ") + e.what());
  }
  int inputs = 0;
  for (const auto& n : g.nodes) inputs += n.kind == LayerKind::Input;
  if (inputs != 1) throw Error(Errc::Format, "model must have exactly one Input layer");
  infer_shapes(g, weights);
  return g;
}

inline nlohmann::json read_json_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw Error(Errc::Io, "cannot open " + path);
  try {
    return nlohmann::json::parse(is);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(Errc::Format, path + ": " + e.what());
  }
}

inline LayerGraph load_model_file(const std::string& path, const TensorMap& weights) {
  return load_model(read_json_file(path), weights);
}

// ------------------------------------------------------------- regions

struct SeseRegion {
  int entry = -1, exit = -1;
  std::vector<std::vector<int>> branches;  // interior nodes per branch
  int parent = -1;                         // enclosing region index
};

namespace detail {

inline void collect_nodes(const std::vector<Step>& chain, std::vector<int>& out) {
  for (const auto& s : chain) {
    if (!s.is_region()) {
      out.push_back(s.node);
      continue;
    }
    for (const auto& b : s.branches) collect_nodes(b, out);
    out.push_back(s.join);
  }
}

inline void collect_regions(const std::vector<Step>& chain, std::vector<SeseRegion>& out, std::vector<int>& here) {
  for (const auto& s : chain) {
    if (!s.is_region()) continue;
    std::vector<int> kids;
    for (const auto& b : s.branches) collect_regions(b, out, kids);
    SeseRegion r;
    r.entry = s.fork;
    r.exit = s.join;
    for (const auto& b : s.branches) {
      r.branches.emplace_back();
      collect_nodes(b, r.branches.back());
    }
    out.push_back(std::move(r));
    const int self = static_cast<int>(out.size()) - 1;
    for (int k : kids) out[static_cast<std::size_t>(k)].parent = self;
    here.push_back(self);
  }
}

}  // namespace detail

// All fork/join regions, innermost first; parent indexes refer to this list.
inline std::vector<SeseRegion> find_sese_regions(const LayerGraph& g) {
  std::vector<SeseRegion> out;
  std::vector<int> top;
  detail::collect_regions(decompose(g.dag(), g.names()), out, top);
  return out;
}

// ReLU(x) = x * (1 + sign(x)) / 2 with sign a composite of odd polynomials:
// a Fork, the chained sign stages (the last one folded with (1+p)/2), and a
// Mult join. The Mult keeps the ReLU's name so consumers are unchanged.
inline LayerGraph expand_relu(const LayerGraph& g, const SignComposite* composite = nullptr) {
  LayerGraph out;
  std::vector<int> remap(static_cast<std::size_t>(g.size()));
  std::map<std::vector<int>, SignComposite> cache;
  for (int v = 0; v < g.size(); ++v) {
    LayerNode n = g[v];
    for (int& u : n.inputs) u = remap[static_cast<std::size_t>(u)];
    if (n.kind != LayerKind::Activation || n.act != "relu") {
      remap[static_cast<std::size_t>(v)] = out.size();
      out.nodes.push_back(std::move(n));
      continue;
    }
    const SignComposite* comp = composite;
    if (!comp) {
      auto it = cache.find(n.degrees);
      if (it == cache.end()) it = cache.emplace(n.degrees, sign_composite(n.degrees)).first;
      comp = &it->second;
    }
    LayerNode fork;
    fork.name = n.name + ".fork";
    fork.kind = LayerKind::Fork;
    fork.inputs = n.inputs;
    fork.shape = n.shape;
    fork.carried = out[n.inputs[0]].carried;
    const int fork_id = out.size();
    out.nodes.push_back(fork);
    int prev = fork_id;
    for (std::size_t s = 0; s < comp->stages.size(); ++s) {
      LayerNode p;
      p.name = n.name + ".sign" + std::to_string(s + 1);
      p.kind = LayerKind::Poly;
      p.inputs = {prev};
      p.shape = n.shape;
      p.poly = comp->stages[s];
      p.sign_stage = static_cast<int>(s + 1);
      p.carried = 1.0;
      if (s + 1 == comp->stages.size()) {
        for (auto& c : p.poly.coeffs) c *= 0.5;
        p.poly.coeffs[0] += 0.5;
        p.last_sign_stage = true;
      }
      p.depth = node_depth(p);
      prev = out.size();
      out.nodes.push_back(std::move(p));
    }
    LayerNode m;
    m.name = n.name;
    m.kind = LayerKind::Mult;
    m.inputs = {fork_id, prev};
    m.shape = n.shape;
    m.depth = 1;
    m.carried = n.carried;
    remap[static_cast<std::size_t>(v)] = out.size();
    out.nodes.push_back(std::move(m));
  }
  return out;
}

}  // namespace orion
