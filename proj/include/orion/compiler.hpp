#pragma once

#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "orion/builder.hpp"
#include "orion/calibrate.hpp"
#include "orion/config.hpp"
#include "orion/conv_lowering.hpp"
#include "orion/cost_model.hpp"
#include "orion/hash.hpp"
#include "orion/layout.hpp"
#include "orion/netgraph.hpp"
#include "orion/packing.hpp"
#include "orion/placer.hpp"
#include "orion/poly_eval.hpp"
#include "orion/scale_manager.hpp"
#include "orion/vm.hpp"

namespace orion {

struct CompileOptions {
  bool symbolic = false;  // metadata-only constants: counts and costs, no numerics
};

// Client-side view of one end of the program.
struct PortSpec {
  std::string name;
  std::vector<long> shape;
  double carried = 1.0;  // logical = carried * slot value
  SlotLayout layout;
  std::vector<std::string> ports;  // one per ciphertext block
  int level = 0;
};

struct IoSpec {
  std::int64_t slots = 0;
  PortSpec input, output;
};

struct Compiled {
  CkksParams params;
  CostModel cost;
  LayerGraph graph;  // calibrated, ReLUs expanded
  std::vector<SlotLayout> layouts;
  std::vector<char> pending;  // Square nodes whose output stays at D^2/q
  PlacementGraph placement;
  LevelAssignment plan;
  FheProgram program;
  PlaintextStore store;
  ScaleReport scales;
  IoSpec io;

  int total_depth() const {
    std::vector<int> acc(static_cast<std::size_t>(placement.size()), 0);
    int best = 0;
    for (int v = 0; v < placement.size(); ++v) {
      int in = 0;
      for (int u : placement.parents[static_cast<std::size_t>(v)]) in = std::max(in, acc[static_cast<std::size_t>(u)]);
      acc[static_cast<std::size_t>(v)] = in + placement.depth[static_cast<std::size_t>(v)];
      best = std::max(best, acc[static_cast<std::size_t>(v)]);
    }
    return best;
  }
};

namespace detail {

inline bool absorbs_pending(const LayerNode& n) {
  return is_linear_kind(n.kind) || n.kind == LayerKind::ScaleDown || n.kind == LayerKind::Poly;
}

class Lowering {
 public:
  Lowering(const CkksParams& p, const CostModel& cost, const LayerGraph& g, CompileOptions opt)
      : p_(p), cost_(cost), g_(g), opt_(opt) {
    cons_ = g_.consumers();
    layouts_.resize(static_cast<std::size_t>(g_.size()));
    packs_.resize(static_cast<std::size_t>(g_.size()));
    period_.assign(static_cast<std::size_t>(g_.size()), 0);
    pending_.assign(static_cast<std::size_t>(g_.size()), 0);
    depth_.resize(static_cast<std::size_t>(g_.size()));
  }

  const std::vector<SlotLayout>& layouts() const { return layouts_; }
  const std::vector<char>& pending() const { return pending_; }

  void lower() {
    const long n = p_.slots;
    for (int v = 0; v < g_.size(); ++v) {
      const LayerNode& nd = g_[v];
      auto in = [&](std::size_t i) -> const SlotLayout& { return layouts_[static_cast<std::size_t>(nd.inputs.at(i))]; };
      std::optional<LoweredLinear> lin;
      long& period = period_[static_cast<std::size_t>(v)];
      if (!nd.inputs.empty()) period = period_[static_cast<std::size_t>(nd.inputs[0])];
      switch (nd.kind) {
        case LayerKind::Input:
          layouts_[static_cast<std::size_t>(v)] =
              nd.shape.size() == 3 ? raster_layout(nd.shape[0], nd.shape[1], nd.shape[2]) : flat_layout(nd.shape[0]);
          period = layouts_[static_cast<std::size_t>(v)].num_ciphertexts(n) == 1 ? layouts_[static_cast<std::size_t>(v)].period(n) : 0;
          break;
        case LayerKind::Conv2d:
        case LayerKind::AvgPool2d: lin = lower_conv(nd.conv, nd.weight, nd.bias, in(0)); break;
        case LayerKind::Linear: lin = lower_linear(nd.weight, nd.bias, in(0)); break;
        case LayerKind::BatchNorm2d: lin = lower_batchnorm(nd.bn, in(0)); break;
        case LayerKind::Flatten: layouts_[static_cast<std::size_t>(v)] = flattened(in(0)); break;
        case LayerKind::Add:
        case LayerKind::Mult:
          if (!(in(0).slot_of == in(1).slot_of))
            throw Error(Errc::ShapeMismatch, "layer " + nd.name + ": operand layouts differ (" + in(0).describe() +
                                                 " vs " + in(1).describe() + ")");
          layouts_[static_cast<std::size_t>(v)] = in(0);
          // a period-P replication also repeats with any multiple of P; 0 means no replication
          if (const long p2 = period_[static_cast<std::size_t>(nd.inputs[1])]; period == 0 || p2 == 0) period = 0;
          else period = std::max(period, p2);
          break;
        case LayerKind::Activation:
          if (nd.act != "square" && nd.act != "identity")
            throw Error(Errc::UnknownKind, "layer " + nd.name + ": activation '" + nd.act + "' was not calibrated");
          layouts_[static_cast<std::size_t>(v)] = in(0);
          break;
        case LayerKind::Bootstrap:
          throw Error(Errc::InvalidArgument, "layer " + nd.name + ": Bootstrap nodes are inserted by the compiler");
        default: layouts_[static_cast<std::size_t>(v)] = in(0); break;
      }
      if (lin) {
        packs_[static_cast<std::size_t>(v)] = pack_linear(lin->matrix, lin->bias, period, n, !opt_.symbolic);
        layouts_[static_cast<std::size_t>(v)] = lin->out;
        const auto& pk = *packs_[static_cast<std::size_t>(v)];
        period = pk.out_blocks == 1 ? pk.out_period : 0;
        if (pk.out_blocks != lin->out.num_ciphertexts(n) || (period > 0 && period < lin->out.span()))
          throw Error(Errc::ShapeMismatch, "layer " + nd.name + ": packed output (" + std::to_string(pk.out_blocks) +
                                               " blocks, period " + std::to_string(pk.out_period) +
                                               ") does not hold layout " + lin->out.describe());
      }
    }
    // A Square hands its D^2/q_l result on when its only consumer (through
    // Flatten) starts with a free plaintext scale; otherwise it corrects.
    for (int v = 0; v < g_.size(); ++v) {
      const LayerNode& nd = g_[v];
      if (nd.kind == LayerKind::Activation && nd.act == "square") {
        int u = v;
        std::vector<std::pair<int, int>> edges;
        while (cons_[static_cast<std::size_t>(u)].size() == 1) {
          const int c = cons_[static_cast<std::size_t>(u)][0];
          edges.emplace_back(u, c);
          if (g_[c].kind != LayerKind::Flatten) break;
          u = c;
        }
        if (!edges.empty() && cons_[static_cast<std::size_t>(edges.back().first)].size() == 1 &&
            absorbs_pending(g_[edges.back().second])) {
          pending_[static_cast<std::size_t>(v)] = 1;
          for (auto e : edges) no_boot_.insert(e);
        }
      }
      if (nd.kind == LayerKind::Poly && nd.last_sign_stage)
        for (int c : cons_[static_cast<std::size_t>(v)]) no_boot_.insert({v, c});
      depth_[static_cast<std::size_t>(v)] = nd.depth;
      if (nd.kind == LayerKind::Activation && nd.act == "square") depth_[static_cast<std::size_t>(v)] = pending_[static_cast<std::size_t>(v)] ? 1 : 2;
    }
  }

  using Block = std::vector<Value>;

  // Emits node v running at `level` on the given operands.
  Block emit(ProgramBuilder& b, int v, int level, const std::vector<Block>& ops,
             const ScaleDescriptor& poly_target = ScaleDescriptor::delta()) const {
    const LayerNode& nd = g_[v];
    b.set_layer(nd.name);
    const ScaleDescriptor delta = ScaleDescriptor::delta();
    Block out;
    switch (nd.kind) {
      case LayerKind::Conv2d:
      case LayerKind::AvgPool2d:
      case LayerKind::Linear:
      case LayerKind::BatchNorm2d: return emit_linear(b, *packs_[static_cast<std::size_t>(v)], ops[0], delta);
      case LayerKind::Add:
        for (std::size_t i = 0; i < ops[0].size(); ++i) out.push_back(b.hadd(ops[0][i], ops[1][i]));
        return out;
      case LayerKind::Mult:
        for (std::size_t i = 0; i < ops[0].size(); ++i) out.push_back(b.rescale(b.hmult(ops[0][i], ops[1][i])));
        return out;
      case LayerKind::ScaleDown:
        for (const Value& x : ops[0])
          out.push_back(b.rescale(b.pmult(x, b.encode_const(nd.factor, rescale_target_scale(delta, x.level, x.scale), x.level))));
        return out;
      case LayerKind::Activation:
        if (nd.act == "identity") return ops[0];
        for (const Value& x : ops[0]) {
          Value y = b.rescale(b.hmult(x, x));
          if (!pending_[static_cast<std::size_t>(v)])
            y = b.rescale(b.pmult(y, b.encode_const(1.0, rescale_target_scale(delta, y.level, y.scale), y.level)));
          out.push_back(y);
        }
        return out;
      case LayerKind::Poly:
        for (const Value& x : ops[0]) out.push_back(emit_chebyshev(b, x, nd.poly, level - depth_[static_cast<std::size_t>(v)], poly_target));
        return out;
      default: return ops[0];
    }
  }

  // Latency of node v at every level, from a symbolic dry run.
  std::vector<double> cost_table(int v) const {
    const int L = p_.eff_level, d = depth_[static_cast<std::size_t>(v)];
    std::vector<double> t(static_cast<std::size_t>(L + 1), std::numeric_limits<double>::infinity());
    const LayerNode& nd = g_[v];
    for (int l = d; l <= L; ++l) {
      if (nd.kind == LayerKind::Input || nd.kind == LayerKind::Flatten || nd.kind == LayerKind::Fork) {
        t[static_cast<std::size_t>(l)] = 0.0;
        continue;
      }
      ProgramBuilder b(p_, true);
      std::vector<Block> ops;
      for (std::size_t i = 0; i < nd.inputs.size(); ++i) {
        Block blk;
        const int blocks = layouts_[static_cast<std::size_t>(nd.inputs[i])].num_ciphertexts(p_.slots);
        for (int k = 0; k < blocks; ++k) blk.push_back(b.input("in" + std::to_string(i) + "." + std::to_string(k), l));
        ops.push_back(std::move(blk));
      }
      ScaleDescriptor target = ScaleDescriptor::delta();
      if (nd.kind == LayerKind::Mult) {
        // the sign operand arrives at q_l
        for (auto& x : ops[1]) x.scale = ScaleDescriptor::prime(l);
      }
      if (nd.kind == LayerKind::Poly && nd.last_sign_stage) target = ScaleDescriptor::prime(std::max(0, l - d));
      auto outs = emit(b, v, l, ops, target);
      for (std::size_t k = 0; k < outs.size(); ++k) b.output("o" + std::to_string(k), outs[k]);
      Vm vm(p_, cost_, VmOptions{{}, 0.0, 0, true});
      t[static_cast<std::size_t>(l)] = vm.execute(b.program(), b.store(), {}).metrics.estimated_latency;
    }
    return t;
  }

  PlacementGraph placement_graph() const {
    PlacementGraph pg;
    pg.eff_level = p_.eff_level;
    pg.bootstrap_cost = cost_.bootstrap();
    pg.no_boot = no_boot_;
    for (int v = 0; v < g_.size(); ++v)
      pg.add_node(g_[v].name, depth_[static_cast<std::size_t>(v)], cost_table(v), g_[v].inputs);
    return pg;
  }

 private:
  const CkksParams& p_;
  const CostModel& cost_;
  const LayerGraph& g_;
  CompileOptions opt_;
  std::vector<std::vector<int>> cons_;
  std::vector<SlotLayout> layouts_;
  std::vector<std::optional<LinearPacking>> packs_;
  std::vector<long> period_;  // slot replication period of each output, 0 = full blocks
  std::vector<char> pending_;
  std::vector<int> depth_;
  std::set<std::pair<int, int>> no_boot_;
};

inline std::vector<std::string> port_names(const std::string& base, int blocks) {
  std::vector<std::string> r;
  for (int i = 0; i < blocks; ++i) r.push_back(base + "." + std::to_string(i));
  return r;
}

}  // namespace detail

// Lowers, places and emits a calibrated graph.
inline Compiled compile_graph(const LayerGraph& calibrated, const CkksParams& params, const CostModel& cost,
                              const CompileOptions& opt = {}) {
  validate(params);
  cost.check();
  Compiled c;
  c.params = params;
  c.cost = cost;
  c.graph = calibrated;
  const LayerGraph& g = c.graph;
  detail::Lowering low(params, cost, g, opt);
  low.lower();
  c.layouts = low.layouts();
  c.pending = low.pending();
  c.placement = low.placement_graph();
  c.plan = place(c.placement);

  ProgramBuilder b(params, opt.symbolic);
  std::vector<detail::Lowering::Block> vals(static_cast<std::size_t>(g.size()));
  std::map<int, detail::Lowering::Block> booted;
  std::set<std::pair<int, int>> boot_edges(c.plan.boots.begin(), c.plan.boots.end());
  const auto cons = g.consumers();
  const int in_id = g.input(), out_id = g.output();
  const long n = params.slots;

  for (int v = 0; v < g.size(); ++v) {
    const LayerNode& nd = g[v];
    const int level = c.plan.level[static_cast<std::size_t>(v)];
    if (v == in_id) {
      b.set_layer(nd.name);
      const int blocks = c.layouts[static_cast<std::size_t>(v)].num_ciphertexts(n);
      for (const auto& port : detail::port_names(nd.name, blocks)) vals[static_cast<std::size_t>(v)].push_back(b.input(port, level));
      continue;
    }
    std::vector<detail::Lowering::Block> ops;
    for (int u : nd.inputs) {
      b.set_layer(nd.name);
      detail::Lowering::Block src = vals[static_cast<std::size_t>(u)];
      if (boot_edges.count({u, v})) {
        auto it = booted.find(u);
        if (it == booted.end()) {
          b.set_layer(g[u].name + ".boot");
          detail::Lowering::Block bb;
          for (const Value& x : src) bb.push_back(b.bootstrap(x));
          b.mark_boundary();
          it = booted.emplace(u, std::move(bb)).first;
        }
        src = it->second;
      }
      for (Value& x : src) x = b.moddown(x, level);
      ops.push_back(std::move(src));
    }
    ScaleDescriptor target = ScaleDescriptor::delta();
    if (nd.kind == LayerKind::Poly && nd.last_sign_stage) {
      const int join = cons[static_cast<std::size_t>(v)].at(0);
      target = ScaleDescriptor::prime(c.plan.level[static_cast<std::size_t>(join)]);
    }
    const std::size_t before = b.size();
    vals[static_cast<std::size_t>(v)] = low.emit(b, v, level, ops, target);
    const bool at_delta = !c.pending[static_cast<std::size_t>(v)] && !(nd.kind == LayerKind::Poly && nd.last_sign_stage);
    if (at_delta && b.size() > before) b.mark_boundary();
  }
  b.set_layer(g[out_id].name);
  const int out_blocks = c.layouts[static_cast<std::size_t>(out_id)].num_ciphertexts(n);
  const auto out_ports = detail::port_names(g[out_id].name, out_blocks);
  for (int i = 0; i < out_blocks; ++i) b.output(out_ports[static_cast<std::size_t>(i)], vals[static_cast<std::size_t>(out_id)][static_cast<std::size_t>(i)]);

  c.program = b.take_program();
  c.store = b.take_store();
  c.scales = verify_scale_invariant(c.program, c.store, params);

  c.io.slots = n;
  c.io.input = {g[in_id].name, g[in_id].shape, g[in_id].carried, c.layouts[static_cast<std::size_t>(in_id)],
                detail::port_names(g[in_id].name, c.layouts[static_cast<std::size_t>(in_id)].num_ciphertexts(n)),
                c.plan.level[static_cast<std::size_t>(in_id)]};
  c.io.output = {g[out_id].name, g[out_id].shape, g[out_id].carried, c.layouts[static_cast<std::size_t>(out_id)],
                 out_ports, c.plan.level[static_cast<std::size_t>(out_id)] - c.placement.depth[static_cast<std::size_t>(out_id)]};
  return c;
}

// Fit on calibration samples, then compile.
inline Compiled compile_model(const LayerGraph& model, const std::vector<std::vector<double>>& samples,
                              const CkksParams& params, const CostModel& cost, double margin = 1.0,
                              const CompileOptions& opt = {}, const CalibrateOptions& copt = {}) {
  return compile_graph(fit(model, samples, margin, copt).graph, params, cost, opt);
}

// ------------------------------------------------------------ client side

inline std::map<std::string, std::vector<double>> encode_input(const IoSpec& io, const std::vector<double>& x) {
  std::vector<double> scaled = x;
  for (double& t : scaled) t /= io.input.carried;
  const auto cts = io.input.layout.place(scaled, io.slots);
  std::map<std::string, std::vector<double>> feed;
  for (std::size_t i = 0; i < cts.size(); ++i) feed[io.input.ports.at(i)] = cts[i];
  return feed;
}

inline std::vector<double> decode_output(const IoSpec& io, const std::map<std::string, SimCiphertext>& outs) {
  std::vector<std::vector<double>> cts;
  for (const auto& port : io.output.ports) cts.push_back(outs.at(port).slots);
  auto y = io.output.layout.gather(cts, io.slots);
  for (double& t : y) t *= io.output.carried;
  return y;
}

struct RunResult {
  std::vector<double> output;
  MetricsReport metrics;
};

inline RunResult run_program(const FheProgram& prog, const PlaintextStore& store, const IoSpec& io,
                             const CkksParams& params, const CostModel& cost, const std::vector<double>& x,
                             VmOptions vopt = {}) {
  Vm vm(params, cost, vopt);
  if (vopt.symbolic) return {{}, vm.execute(prog, store, {}).metrics};
  auto res = vm.execute(prog, store, encode_input(io, x));
  return {decode_output(io, res.outputs), res.metrics};
}

inline RunResult run_compiled(const Compiled& c, const std::vector<double>& x, VmOptions vopt = {}) {
  return run_program(c.program, c.store, c.io, c.params, c.cost, x, vopt);
}

// Exact cleartext evaluation of the calibrated graph on logical values.
inline std::vector<double> calibrated_reference(const LayerGraph& calibrated, const std::vector<double>& x) {
  return unscale_output(calibrated, forward(calibrated, scale_input(calibrated, x)));
}

// ------------------------------------------------------------- artifacts

inline nlohmann::json to_json(const SlotLayout& l) {
  return {{"c", l.c},           {"h", l.h},           {"w", l.w},      {"flat", l.flat},
          {"gap", l.gap},       {"grid_h", l.grid_h}, {"grid_w", l.grid_w}, {"slot_of", l.slot_of}};
}

inline SlotLayout layout_from_json(const nlohmann::json& j) {
  SlotLayout l;
  l.c = j.at("c");
  l.h = j.at("h");
  l.w = j.at("w");
  l.flat = j.at("flat");
  l.gap = j.at("gap");
  l.grid_h = j.at("grid_h");
  l.grid_w = j.at("grid_w");
  l.slot_of = j.at("slot_of").get<std::vector<long>>();
  return l;
}

inline nlohmann::json to_json(const PortSpec& p) {
  return {{"name", p.name}, {"shape", p.shape}, {"carried", p.carried}, {"layout", to_json(p.layout)},
          {"ports", p.ports}, {"level", p.level}};
}

inline PortSpec port_from_json(const nlohmann::json& j) {
  PortSpec p;
  p.name = j.at("name");
  p.shape = j.at("shape").get<std::vector<long>>();
  p.carried = j.at("carried");
  p.layout = layout_from_json(j.at("layout"));
  p.ports = j.at("ports").get<std::vector<std::string>>();
  p.level = j.at("level");
  return p;
}

inline nlohmann::json to_json(const IoSpec& io) {
  return {{"slots", io.slots}, {"input", to_json(io.input)}, {"output", to_json(io.output)}};
}

inline IoSpec io_from_json(const nlohmann::json& j) {
  try {
    IoSpec io;
    io.slots = j.at("slots");
    io.input = port_from_json(j.at("input"));
    io.output = port_from_json(j.at("output"));
    return io;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::Format, std::string("io spec: ") + e.what());
  }
}

inline nlohmann::json plan_json(const Compiled& c) {
  nlohmann::json j = to_json(c.plan, c.placement);
  j["total_depth"] = c.total_depth();
  nlohmann::json nodes = nlohmann::json::array();
  for (int v = 0; v < c.graph.size(); ++v) {
    const auto& n = c.graph[v];
    nlohmann::json e = {{"name", n.name},
                        {"kind", kind_name(n.kind)},
                        {"depth", c.placement.depth[static_cast<std::size_t>(v)]},
                        {"level", c.plan.level[static_cast<std::size_t>(v)]},
                        {"carried", n.carried},
                        {"layout", c.layouts[static_cast<std::size_t>(v)].describe()}};
    if (n.kind == LayerKind::Poly) e["degree"] = n.poly.degree();
    if (c.pending[static_cast<std::size_t>(v)]) e["pending_scale"] = true;
    nodes.push_back(e);
  }
  j["nodes"] = nodes;
  j["scale_violations"] = c.scales.violations.size();
  return j;
}

inline std::string read_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(Errc::Io, "cannot open " + path);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

inline void write_file(const std::string& path, const std::string& data) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(Errc::Io, "cannot write " + path);
  os << data;
}

// program.ir, constants.bin, plan.json, io.json, params.json, cost.json and
// a manifest with content hashes of each.
inline void write_artifacts(const Compiled& c, const std::string& dir) {
  std::filesystem::create_directories(dir);
  const auto path = [&](const char* f) { return (std::filesystem::path(dir) / f).string(); };
  save_ir(path("program.ir"), c.program);
  save_store(path("constants.bin"), c.store);
  write_file(path("plan.json"), plan_json(c).dump(2) + "\n");
  write_file(path("io.json"), to_json(c.io).dump() + "\n");
  write_file(path("params.json"), params_to_json(c.params).dump(2) + "\n");
  nlohmann::json cj = {{"pmult", c.cost.pmult},   {"padd", c.cost.padd},       {"hadd", c.cost.hadd},
                       {"hmult", c.cost.hmult},   {"hrot", c.cost.hrot},       {"hrot_hoisted", c.cost.hrot_hoisted},
                       {"rescale", c.cost.rescale}, {"moddown", c.cost.moddown}, {"bootstrap", c.cost.bootstrap()}};
  write_file(path("cost.json"), cj.dump(2) + "\n");
  nlohmann::json files = nlohmann::json::object();
  Fnv1a all;
  for (const char* f : {"program.ir", "constants.bin", "plan.json", "io.json", "params.json", "cost.json"}) {
    Fnv1a h;
    const std::string data = read_file(path(f));
    h.str(data);
    all.str(f).u64(h.value());
    files[f] = h.hex();
  }
  write_file(path("manifest.json"), nlohmann::json{{"files", files}, {"content_hash", all.hex()}}.dump(2) + "\n");
}

}  // namespace orion
