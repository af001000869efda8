#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"
#include "orion/cost_model.hpp"
#include "orion/error.hpp"
#include "orion/ir.hpp"
#include "orion/params.hpp"

namespace orion {

struct SimCiphertext {
  std::vector<double> slots;  // empty when the VM runs metadata-only
  ScaleDescriptor scale;
  int level = 0;
};

// ------------------------------------------------------------ single ops
//
// These implement the scheme's ideal functionality on metadata: slot values
// are stored unscaled, scales are tracked exactly, levels are integers.

inline SimPlaintext encode(const CkksParams& p, std::vector<double> values, const ScaleDescriptor& scale, int level) {
  if (static_cast<std::int64_t>(values.size()) != p.slots)
    throw Error(Errc::LengthMismatch, "encode: expected " + std::to_string(p.slots) + " values, got " +
                                          std::to_string(values.size()));
  if (level < 0 || level > p.max_level) throw Error(Errc::LevelUnderflow, "encode: level out of range");
  return SimPlaintext{std::move(values), scale, level};
}

inline std::vector<double> decode(const SimPlaintext& pt) { return pt.slots; }

inline SimCiphertext encrypt(const SimPlaintext& pt) { return SimCiphertext{pt.slots, pt.scale, pt.level}; }

namespace detail {

inline void require_same_level(int a, int b, const char* op) {
  if (a != b)
    throw Error(Errc::LevelMismatch,
                std::string(op) + ": operand levels differ (" + std::to_string(a) + " vs " + std::to_string(b) + ")");
}

inline void require_same_scale(const ScaleDescriptor& a, const ScaleDescriptor& b, const char* op) {
  if (!(a == b)) throw Error(Errc::ScaleMismatch, std::string(op) + ": scales differ (" + a.str() + " vs " + b.str() + ")");
}

inline void require_len(const std::vector<double>& a, const std::vector<double>& b, const char* op) {
  if (!a.empty() && !b.empty() && a.size() != b.size())
    throw Error(Errc::LengthMismatch, std::string(op) + ": slot vectors differ in length");
}

template <class F>
std::vector<double> zip(const std::vector<double>& a, const std::vector<double>& b, F f) {
  if (a.empty() || b.empty()) return {};
  std::vector<double> r(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) r[i] = f(a[i], b[i]);
  return r;
}

}  // namespace detail

inline SimCiphertext pmult(const SimCiphertext& ct, const SimPlaintext& pt) {
  detail::require_same_level(ct.level, pt.level, "PMULT");
  detail::require_len(ct.slots, pt.slots, "PMULT");
  return {detail::zip(ct.slots, pt.slots, std::multiplies<>()), scale_mul(ct.scale, pt.scale), ct.level};
}

inline SimCiphertext hmult(const SimCiphertext& a, const SimCiphertext& b) {
  detail::require_same_level(a.level, b.level, "HMULT");
  detail::require_len(a.slots, b.slots, "HMULT");
  return {detail::zip(a.slots, b.slots, std::multiplies<>()), scale_mul(a.scale, b.scale), a.level};
}

inline SimCiphertext hadd(const SimCiphertext& a, const SimCiphertext& b) {
  detail::require_same_level(a.level, b.level, "HADD");
  detail::require_same_scale(a.scale, b.scale, "HADD");
  detail::require_len(a.slots, b.slots, "HADD");
  return {detail::zip(a.slots, b.slots, std::plus<>()), a.scale, a.level};
}

inline SimCiphertext padd(const SimCiphertext& ct, const SimPlaintext& pt) {
  detail::require_same_level(ct.level, pt.level, "PADD");
  detail::require_same_scale(ct.scale, pt.scale, "PADD");
  detail::require_len(ct.slots, pt.slots, "PADD");
  return {detail::zip(ct.slots, pt.slots, std::plus<>()), ct.scale, ct.level};
}

// "Up" rotation: out[i] = in[(i + k) mod n].
inline SimCiphertext hrot(const SimCiphertext& ct, int k, std::int64_t n) {
  if (k < 0 || k >= n)
    throw Error(Errc::RotationOutOfRange, "HROT: k=" + std::to_string(k) + " outside [0," + std::to_string(n) + ")");
  SimCiphertext r{{}, ct.scale, ct.level};
  if (!ct.slots.empty()) {
    r.slots.resize(ct.slots.size());
    std::rotate_copy(ct.slots.begin(), ct.slots.begin() + k, ct.slots.end(), r.slots.begin());
  }
  return r;
}

inline SimCiphertext rescale(const SimCiphertext& ct) {
  if (ct.level < 1) throw Error(Errc::LevelUnderflow, "RESCALE at level 0");
  return {ct.slots, scale_div_prime(ct.scale, ct.level), ct.level - 1};
}

inline SimCiphertext moddown(const SimCiphertext& ct, int to_level) {
  if (to_level > ct.level || to_level < 0)
    throw Error(Errc::LevelUnderflow, "MODDOWN from level " + std::to_string(ct.level) + " to " +
                                          std::to_string(to_level));
  return {ct.slots, ct.scale, to_level};
}

struct BootstrapOptions {
  double range_tol = 0.01;
  bool range_as_warning = false;
};

// Returns the result and, when range violations are downgraded, a warning.
inline SimCiphertext bootstrap(const CkksParams& p, const SimCiphertext& ct, const BootstrapOptions& opt = {},
                               std::string* warning = nullptr) {
  if (!ct.scale.is_delta()) throw Error(Errc::ScaleMismatch, "BOOTSTRAP requires scale D, got " + ct.scale.str());
  double worst = 0.0;
  for (double v : ct.slots) worst = std::max(worst, std::abs(v));
  if (worst > 1.0 + opt.range_tol) {
    const std::string msg = "BOOTSTRAP input max |slot| = " + std::to_string(worst) + " exceeds 1 + " +
                            std::to_string(opt.range_tol);
    if (!opt.range_as_warning) throw Error(Errc::RangeViolation, msg);
    if (warning) *warning = msg;
  }
  return {ct.slots, ct.scale, p.eff_level};
}

// ---------------------------------------------------------------- metrics

struct MetricsReport {
  long rotation_count = 0;
  long rotation_count_incl_trivial = 0;
  long bootstrap_count = 0;
  long instruction_count = 0;
  // opcode name -> level -> count
  std::map<std::string, std::map<int, long>> histogram;
  double estimated_latency = 0.0;
  std::optional<double> output_precision_bits;
  std::vector<std::string> warnings;

  friend bool operator==(const MetricsReport&, const MetricsReport&) = default;
};

inline nlohmann::json to_json(const MetricsReport& m) {
  nlohmann::json j;
  j["rotation_count"] = m.rotation_count;
  j["rotation_count_incl_trivial"] = m.rotation_count_incl_trivial;
  j["bootstrap_count"] = m.bootstrap_count;
  j["instruction_count"] = m.instruction_count;
  nlohmann::json h = nlohmann::json::object();
  for (const auto& [op, per] : m.histogram) {
    nlohmann::json lv = nlohmann::json::object();
    for (auto [l, c] : per) lv[std::to_string(l)] = c;
    h[op] = lv;
  }
  j["histogram"] = h;
  j["estimated_latency"] = m.estimated_latency;
  j["output_precision_bits"] = m.output_precision_bits ? nlohmann::json(*m.output_precision_bits) : nlohmann::json();
  j["warnings"] = m.warnings;
  return j;
}

inline MetricsReport metrics_from_json(const nlohmann::json& j) {
  MetricsReport m;
  m.rotation_count = j.value("rotation_count", 0L);
  m.rotation_count_incl_trivial = j.value("rotation_count_incl_trivial", 0L);
  m.bootstrap_count = j.value("bootstrap_count", 0L);
  m.instruction_count = j.value("instruction_count", 0L);
  if (j.contains("histogram"))
    for (const auto& [op, per] : j["histogram"].items())
      for (const auto& [l, c] : per.items()) m.histogram[op][std::stoi(l)] = c.get<long>();
  m.estimated_latency = j.value("estimated_latency", 0.0);
  if (j.contains("output_precision_bits") && j["output_precision_bits"].is_number())
    m.output_precision_bits = j["output_precision_bits"].get<double>();
  if (j.contains("warnings")) m.warnings = j["warnings"].get<std::vector<std::string>>();
  return m;
}

// -log2 of the mean absolute difference; +inf for an exact match.
inline double precision_bits(const std::vector<double>& got, const std::vector<double>& want) {
  if (got.size() != want.size() || got.empty())
    throw Error(Errc::LengthMismatch, "precision_bits: output and reference differ in length");
  double acc = 0.0;
  for (std::size_t i = 0; i < got.size(); ++i) acc += std::abs(got[i] - want[i]);
  acc /= static_cast<double>(got.size());
  return acc == 0.0 ? std::numeric_limits<double>::infinity() : -std::log2(acc);
}

// Latency charged for one instruction under the hoisting rule: the first
// nontrivial rotation of a hoist group pays a full rotation, later ones the
// hoisted price. `started` tracks which groups have paid already.
inline double instruction_cost(const Instruction& ins, int level, const CostModel& cost, std::set<int>& started) {
  switch (ins.op) {
    case Opcode::PADD: return cost.padd_at(level);
    case Opcode::HADD: return cost.hadd_at(level);
    case Opcode::PMULT: return cost.pmult_at(level);
    case Opcode::HMULT: return cost.hmult_at(level);
    case Opcode::RESCALE: return cost.rescale_at(level);
    case Opcode::MODDOWN: return cost.moddown_at(level);
    case Opcode::BOOTSTRAP: return cost.bootstrap();
    case Opcode::HROT:
      if (ins.k == 0) return 0.0;
      if (ins.group >= 0 && !started.insert(ins.group).second) return cost.hrot_hoisted_at(level);
      return cost.hrot_at(level);
  }
  return 0.0;
}

// ---------------------------------------------------------------- the VM

struct VmOptions {
  BootstrapOptions boot;
  double noise_sigma = 0.0;
  std::uint64_t seed = 0;
  bool symbolic = false;  // track levels/scales only, no slot arithmetic
  bool trace = false;     // record (level, scale) of every instruction result
};

struct ExecResult {
  std::map<std::string, SimCiphertext> outputs;
  MetricsReport metrics;
  std::vector<std::pair<int, ScaleDescriptor>> trace;
};

class Vm {
 public:
  Vm(CkksParams params, CostModel cost, VmOptions opt = {})
      : params_(std::move(params)), cost_(std::move(cost)), opt_(opt) {}

  const CkksParams& params() const { return params_; }

  // Inputs are fresh encryptions at the level declared by each input port and scale D.
  ExecResult execute(const FheProgram& prog, const PlaintextStore& store,
                     const std::map<std::string, std::vector<double>>& inputs) const {
    std::map<std::string, SimCiphertext> cts;
    for (const auto& port : prog.inputs) {
      SimCiphertext ct{{}, ScaleDescriptor::delta(), port.level};
      if (!opt_.symbolic) {
        auto it = inputs.find(port.name);
        if (it == inputs.end()) throw Error(Errc::UndefinedHandle, "missing input '" + port.name + "'");
        if (static_cast<std::int64_t>(it->second.size()) != params_.slots)
          throw Error(Errc::LengthMismatch, "input '" + port.name + "' has " + std::to_string(it->second.size()) +
                                                " values, expected " + std::to_string(params_.slots));
        ct.slots = it->second;
      }
      cts.emplace(port.name, std::move(ct));
    }
    return execute_cts(prog, store, cts);
  }

  ExecResult execute_cts(const FheProgram& prog, const PlaintextStore& store,
                         const std::map<std::string, SimCiphertext>& inputs) const {
    ExecResult res;
    MetricsReport& m = res.metrics;
    std::unordered_map<int, SimCiphertext> regs;
    std::set<int> started;
    std::mt19937_64 rng(opt_.seed);
    std::normal_distribution<double> noise(0.0, opt_.noise_sigma > 0 ? opt_.noise_sigma : 1.0);

    for (const auto& port : prog.inputs) {
      auto it = inputs.find(port.name);
      if (it == inputs.end()) throw Error(Errc::UndefinedHandle, "missing input '" + port.name + "'");
      if (it->second.level != port.level)
        throw Error(Errc::LevelMismatch, "input '" + port.name + "' expected at level " + std::to_string(port.level));
      if (!regs.emplace(port.handle, it->second).second)
        throw Error(Errc::RedefinedHandle, "input handle %h" + std::to_string(port.handle) + " declared twice");
    }

    auto get = [&](int h) -> const SimCiphertext& {
      auto it = regs.find(h);
      if (it == regs.end()) throw Error(Errc::UndefinedHandle, "%h" + std::to_string(h) + " is not defined");
      return it->second;
    };
    auto pt_for = [&](int id) -> const SimPlaintext& {
      const SimPlaintext& pt = store.at(id);
      if (!opt_.symbolic && pt.slots.empty())
        throw Error(Errc::Format, "@pt" + std::to_string(id) + " has no slot data (metadata-only store)");
      return pt;
    };

    for (std::size_t idx = 0; idx < prog.code.size(); ++idx) {
      const Instruction& ins = prog.code[idx];
      try {
        if (regs.count(ins.dst)) throw Error(Errc::RedefinedHandle, "%h" + std::to_string(ins.dst) + " assigned twice");
        const SimCiphertext& a = get(ins.a);
        const int level = a.level;
        SimCiphertext out;
        switch (ins.op) {
          case Opcode::PADD: out = padd(a, pt_for(ins.b)); break;
          case Opcode::PMULT: out = pmult(a, pt_for(ins.b)); break;
          case Opcode::HADD: out = hadd(a, get(ins.b)); break;
          case Opcode::HMULT: out = hmult(a, get(ins.b)); break;
          case Opcode::HROT:
            out = hrot(a, ins.k, params_.slots);
            ++m.rotation_count_incl_trivial;
            if (ins.k != 0) ++m.rotation_count;
            break;
          case Opcode::RESCALE: out = rescale(a); break;
          case Opcode::MODDOWN: out = moddown(a, ins.k); break;
          case Opcode::BOOTSTRAP: {
            std::string warn;
            out = bootstrap(params_, a, opt_.boot, &warn);
            if (!warn.empty()) m.warnings.push_back("instruction " + std::to_string(idx) + ": " + warn);
            ++m.bootstrap_count;
            break;
          }
        }
        if (opt_.noise_sigma > 0 && ins.op != Opcode::MODDOWN)
          for (double& v : out.slots) v += noise(rng);
        m.estimated_latency += instruction_cost(ins, level, cost_, started);
        ++m.histogram[opcode_name(ins.op)][level];
        ++m.instruction_count;
        if (opt_.trace) res.trace.emplace_back(out.level, out.scale);
        regs.emplace(ins.dst, std::move(out));
      } catch (const Error& e) {
        std::string where = "instruction " + std::to_string(idx);
        if (!ins.layer.empty()) where += " (layer " + ins.layer + ")";
        throw Error(e.code(), where + ": " + std::string(e.what()));
      }
    }
    for (const auto& port : prog.outputs) res.outputs[port.name] = get(port.handle);
    return res;
  }

 private:
  CkksParams params_;
  CostModel cost_;
  VmOptions opt_;
};

}  // namespace orion
