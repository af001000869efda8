#pragma once

#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "orion/ir.hpp"
#include "orion/params.hpp"

namespace orion {

// Plaintext scale for a PMULT that should land on `target` after the RESCALE
// at `level`: target * q_level / have.
inline ScaleDescriptor rescale_target_scale(const ScaleDescriptor& target, int level, const ScaleDescriptor& have) {
  return scale_solve(scale_mul(target, ScaleDescriptor::prime(level)), have);
}

struct ScaleViolation {
  std::size_t index = 0;  // instruction index, or code size for outputs
  std::string layer;
  std::string message;
};

struct ScaleReport {
  std::vector<ScaleViolation> violations;
  std::vector<std::pair<int, ScaleDescriptor>> predicted;  // per instruction
  int boundaries = 0;

  bool ok() const { return violations.empty(); }
};

// Static walk over the instruction stream: recomputes every level and scale
// descriptor, checks operand agreement, and requires exactly D at every
// boundary-marked result, at every bootstrap input and at every output.
inline ScaleReport verify_scale_invariant(const FheProgram& prog, const PlaintextStore& store, const CkksParams& p) {
  ScaleReport rep;
  std::unordered_map<int, std::pair<int, ScaleDescriptor>> regs;
  const ScaleDescriptor delta = ScaleDescriptor::delta();
  for (const auto& in : prog.inputs) regs[in.handle] = {in.level, delta};
  auto flag = [&](std::size_t i, const std::string& layer, const std::string& msg) {
    rep.violations.push_back({i, layer, msg});
  };
  for (std::size_t i = 0; i < prog.code.size(); ++i) {
    const Instruction& ins = prog.code[i];
    auto it = regs.find(ins.a);
    if (it == regs.end()) {
      flag(i, ins.layer, "undefined operand %h" + std::to_string(ins.a));
      continue;
    }
    auto [level, scale] = it->second;
    auto other_ct = [&]() -> std::pair<int, ScaleDescriptor> {
      auto jt = regs.find(ins.b);
      if (jt == regs.end()) {
        flag(i, ins.layer, "undefined operand %h" + std::to_string(ins.b));
        return {level, scale};
      }
      return jt->second;
    };
    auto other_pt = [&]() -> std::pair<int, ScaleDescriptor> {
      if (ins.b < 0 || static_cast<std::size_t>(ins.b) >= store.items.size()) {
        flag(i, ins.layer, "undefined plaintext @pt" + std::to_string(ins.b));
        return {level, scale};
      }
      const auto& pt = store.items[static_cast<std::size_t>(ins.b)];
      return {pt.level, pt.scale};
    };
    switch (ins.op) {
      case Opcode::PADD:
      case Opcode::HADD: {
        const auto [l2, s2] = ins.op == Opcode::PADD ? other_pt() : other_ct();
        if (l2 != level) flag(i, ins.layer, std::string(opcode_name(ins.op)) + " level mismatch");
        if (!(s2 == scale)) flag(i, ins.layer, std::string(opcode_name(ins.op)) + " scales " + scale.str() + " vs " + s2.str());
        break;
      }
      case Opcode::PMULT:
      case Opcode::HMULT: {
        const auto [l2, s2] = ins.op == Opcode::PMULT ? other_pt() : other_ct();
        if (l2 != level) flag(i, ins.layer, std::string(opcode_name(ins.op)) + " level mismatch");
        scale = scale_mul(scale, s2);
        break;
      }
      case Opcode::HROT: break;
      case Opcode::RESCALE:
        if (level < 1) flag(i, ins.layer, "RESCALE at level 0");
        scale = scale_div_prime(scale, level);
        --level;
        break;
      case Opcode::MODDOWN:
        if (ins.k > level) flag(i, ins.layer, "MODDOWN raises the level");
        level = ins.k;
        break;
      case Opcode::BOOTSTRAP:
        if (!(scale == delta)) flag(i, ins.layer, "bootstrap input scale " + scale.str());
        level = p.eff_level;
        break;
    }
    if (ins.boundary) {
      ++rep.boundaries;
      if (!(scale == delta)) flag(i, ins.layer, "layer boundary scale " + scale.str() + ", expected D");
    }
    regs[ins.dst] = {level, scale};
    rep.predicted.emplace_back(level, scale);
  }
  for (const auto& out : prog.outputs) {
    auto it = regs.find(out.handle);
    if (it == regs.end()) flag(prog.code.size(), "", "output '" + out.name + "' is undefined");
    else if (!(it->second.second == delta)) flag(prog.code.size(), "", "output '" + out.name + "' scale " + it->second.second.str());
  }
  return rep;
}

}  // namespace orion
