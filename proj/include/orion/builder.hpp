#pragma once

#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "orion/error.hpp"
#include "orion/hash.hpp"
#include "orion/ir.hpp"
#include "orion/params.hpp"

namespace orion {

// A ciphertext handle together with the level and scale it will have at run
// time. The builder checks every operation against these shadows, so a
// compiler bug surfaces at emission time instead of inside the VM.
struct Value {
  int handle = -1;
  int level = 0;
  ScaleDescriptor scale;
};

class ProgramBuilder {
 public:
  // In symbolic mode plaintext slot data is never materialized; emitters
  // should check symbolic() and pass empty vectors.
  explicit ProgramBuilder(CkksParams params, bool symbolic = false)
      : params_(std::move(params)), symbolic_(symbolic) {
    prog_.slots = params_.slots;
    store_.slots = params_.slots;
  }

  const CkksParams& params() const { return params_; }
  bool symbolic() const { return symbolic_; }
  std::int64_t slots() const { return params_.slots; }

  void set_layer(std::string name) { layer_ = std::move(name); }
  const std::string& layer() const { return layer_; }
  int new_group() { return next_group_++; }

  Value input(const std::string& name, int level) {
    Value v{next_handle_++, level, ScaleDescriptor::delta()};
    prog_.inputs.push_back({name, v.handle, level});
    return v;
  }
  void output(const std::string& name, const Value& v) { prog_.outputs.push_back({name, v.handle}); }

  int encode(std::vector<double> slots, const ScaleDescriptor& scale, int level) {
    if (level < 0 || level > params_.max_level) throw Error(Errc::LevelUnderflow, "encode: level out of range");
    if (symbolic_) slots.clear();
    if (!slots.empty() && static_cast<std::int64_t>(slots.size()) != params_.slots)
      throw Error(Errc::LengthMismatch, "encode: expected " + std::to_string(params_.slots) + " values");
    if (slots.empty()) {
      store_.items.push_back({{}, scale, level});
      return static_cast<int>(store_.items.size()) - 1;
    }
    Fnv1a h;
    h.doubles(slots).i64(level).i64(scale.delta_exp());
    for (auto [l, e] : scale.prime_exps()) h.i64(l).i64(e);
    auto [lo, hi] = dedup_.equal_range(h.value());
    for (auto it = lo; it != hi; ++it) {
      const auto& pt = store_.items[static_cast<std::size_t>(it->second)];
      if (pt.level == level && pt.scale == scale && pt.slots == slots) return it->second;
    }
    store_.items.push_back({std::move(slots), scale, level});
    const int id = static_cast<int>(store_.items.size()) - 1;
    dedup_.emplace(h.value(), id);
    return id;
  }

  // A plaintext holding the same constant in every slot.
  int encode_const(double c, const ScaleDescriptor& scale, int level) {
    return encode(symbolic_ ? std::vector<double>{} : std::vector<double>(static_cast<std::size_t>(params_.slots), c),
                  scale, level);
  }

  const SimPlaintext& plaintext(int id) const { return store_.at(id); }

  Value pmult(const Value& a, int pt) {
    const auto& p = store_.at(pt);
    check_level(a.level, p.level, "PMULT");
    return emit(Opcode::PMULT, a, pt, 0, -1, a.level, scale_mul(a.scale, p.scale));
  }
  Value padd(const Value& a, int pt) {
    const auto& p = store_.at(pt);
    check_level(a.level, p.level, "PADD");
    check_scale(a.scale, p.scale, "PADD");
    return emit(Opcode::PADD, a, pt, 0, -1, a.level, a.scale);
  }
  Value hadd(const Value& a, const Value& b) {
    check_level(a.level, b.level, "HADD");
    check_scale(a.scale, b.scale, "HADD");
    return emit(Opcode::HADD, a, b.handle, 0, -1, a.level, a.scale);
  }
  Value hmult(const Value& a, const Value& b) {
    check_level(a.level, b.level, "HMULT");
    return emit(Opcode::HMULT, a, b.handle, 0, -1, a.level, scale_mul(a.scale, b.scale));
  }
  Value hrot(const Value& a, int k, int group = -1) {
    if (k < 0 || k >= params_.slots) throw Error(Errc::RotationOutOfRange, "HROT amount " + std::to_string(k));
    return emit(Opcode::HROT, a, -1, k, group, a.level, a.scale);
  }
  Value rescale(const Value& a) {
    if (a.level < 1) throw Error(Errc::LevelUnderflow, "RESCALE at level 0 in layer " + layer_);
    return emit(Opcode::RESCALE, a, -1, 0, -1, a.level - 1, scale_div_prime(a.scale, a.level));
  }
  // No instruction is emitted when the value already sits at the target level.
  Value moddown(const Value& a, int level) {
    if (level == a.level) return a;
    if (level > a.level || level < 0)
      throw Error(Errc::LevelUnderflow, "MODDOWN " + std::to_string(a.level) + " -> " + std::to_string(level));
    return emit(Opcode::MODDOWN, a, -1, level, -1, level, a.scale);
  }
  Value bootstrap(const Value& a) {
    if (!a.scale.is_delta())
      throw Error(Errc::ScaleMismatch, "bootstrap input in layer " + layer_ + " has scale " + a.scale.str());
    return emit(Opcode::BOOTSTRAP, a, -1, 0, -1, params_.eff_level, a.scale);
  }

  void mark_boundary() {
    if (!prog_.code.empty()) prog_.code.back().boundary = true;
  }

  const FheProgram& program() const { return prog_; }
  const PlaintextStore& store() const { return store_; }
  FheProgram take_program() { return std::move(prog_); }
  PlaintextStore take_store() { return std::move(store_); }
  std::size_t size() const { return prog_.code.size(); }

 private:
  void check_level(int a, int b, const char* op) const {
    if (a != b)
      throw Error(Errc::LevelMismatch, std::string(op) + " in layer " + layer_ + ": levels " + std::to_string(a) +
                                           " and " + std::to_string(b));
  }
  void check_scale(const ScaleDescriptor& a, const ScaleDescriptor& b, const char* op) const {
    if (!(a == b))
      throw Error(Errc::ScaleMismatch, std::string(op) + " in layer " + layer_ + ": scales " + a.str() + " and " +
                                           b.str());
  }

  Value emit(Opcode op, const Value& a, int b, int k, int group, int out_level, ScaleDescriptor out_scale) {
    Instruction ins;
    ins.op = op;
    ins.dst = next_handle_++;
    ins.a = a.handle;
    ins.b = b;
    ins.k = k;
    ins.group = group;
    ins.layer = layer_;
    prog_.code.push_back(std::move(ins));
    return Value{prog_.code.back().dst, out_level, std::move(out_scale)};
  }

  CkksParams params_;
  bool symbolic_;
  FheProgram prog_;
  PlaintextStore store_;
  std::unordered_multimap<std::uint64_t, int> dedup_;
  std::string layer_;
  int next_handle_ = 0;
  int next_group_ = 0;
};

}  // namespace orion
