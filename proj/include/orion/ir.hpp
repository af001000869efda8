#pragma once

#include <array>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <type_traits>
#include <vector>

#include "orion/error.hpp"
#include "orion/params.hpp"

namespace orion {

enum class Opcode { PADD, HADD, PMULT, HMULT, HROT, RESCALE, MODDOWN, BOOTSTRAP };

inline constexpr std::array<Opcode, 8> kAllOpcodes = {Opcode::PADD,    Opcode::HADD,    Opcode::PMULT,
                                                      Opcode::HMULT,   Opcode::HROT,    Opcode::RESCALE,
                                                      Opcode::MODDOWN, Opcode::BOOTSTRAP};

inline const char* opcode_name(Opcode op) {
  switch (op) {
    case Opcode::PADD: return "PADD";
    case Opcode::HADD: return "HADD";
    case Opcode::PMULT: return "PMULT";
    case Opcode::HMULT: return "HMULT";
    case Opcode::HROT: return "HROT";
    case Opcode::RESCALE: return "RESCALE";
    case Opcode::MODDOWN: return "MODDOWN";
    case Opcode::BOOTSTRAP: return "BOOTSTRAP";
  }
  return "?";
}

inline Opcode parse_opcode(const std::string& s) {
  for (Opcode op : kAllOpcodes)
    if (s == opcode_name(op)) return op;
  throw Error(Errc::Format, "unknown opcode '" + s + "'");
}

// Operand b is a ciphertext handle for HADD/HMULT and a plaintext id for
// PADD/PMULT. k is the rotation amount for HROT and the target level for MODDOWN.
struct Instruction {
  Opcode op = Opcode::HADD;
  int dst = -1;
  int a = -1;
  int b = -1;
  int k = 0;
  int group = -1;
  std::string layer;
  bool boundary = false;

  bool uses_plaintext() const { return op == Opcode::PADD || op == Opcode::PMULT; }
  bool binary_ct() const { return op == Opcode::HADD || op == Opcode::HMULT; }
};

struct InputPort {
  std::string name;
  int handle = -1;
  int level = 0;
};

struct OutputPort {
  std::string name;
  int handle = -1;
};

struct FheProgram {
  std::int64_t slots = 0;
  std::vector<InputPort> inputs;
  std::vector<OutputPort> outputs;
  std::vector<Instruction> code;
};

struct SimPlaintext {
  std::vector<double> slots;  // empty in metadata-only stores
  ScaleDescriptor scale;
  int level = 0;
};

struct PlaintextStore {
  std::int64_t slots = 0;
  std::vector<SimPlaintext> items;

  const SimPlaintext& at(int id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= items.size())
      throw Error(Errc::UndefinedHandle, "plaintext @pt" + std::to_string(id) + " is not in the store");
    return items[static_cast<std::size_t>(id)];
  }
  bool metadata_only() const {
    for (const auto& p : items)
      if (p.slots.empty()) return true;
    return false;
  }
};

// ---------------------------------------------------------------- text IR

inline void write_ir(std::ostream& os, const FheProgram& p) {
  os << "orion-ir 1\n";
  os << "slots " << p.slots << "\n";
  for (const auto& in : p.inputs) os << "input %h" << in.handle << ' ' << in.name << " level=" << in.level << "\n";
  for (const auto& ins : p.code) {
    os << "%h" << ins.dst << " = " << opcode_name(ins.op) << " %h" << ins.a;
    if (ins.uses_plaintext())
      os << ", @pt" << ins.b;
    else if (ins.binary_ct())
      os << ", %h" << ins.b;
    else if (ins.op == Opcode::HROT || ins.op == Opcode::MODDOWN)
      os << ", " << ins.k;
    if (!ins.layer.empty() || ins.group >= 0 || ins.boundary) {
      os << " ;";
      if (!ins.layer.empty()) os << " layer=" << ins.layer;
      if (ins.group >= 0) os << " group=g" << ins.group;
      if (ins.boundary) os << " boundary";
    }
    os << "\n";
  }
  for (const auto& out : p.outputs) os << "output %h" << out.handle << ' ' << out.name << "\n";
}

inline std::string to_ir_text(const FheProgram& p) {
  std::ostringstream os;
  write_ir(os, p);
  return os.str();
}

namespace detail {

inline int parse_ref(const std::string& tok, const char* prefix, std::size_t line_no) {
  const std::size_t n = std::strlen(prefix);
  if (tok.size() <= n || tok.compare(0, n, prefix) != 0)
    throw Error(Errc::Format, "line " + std::to_string(line_no) + ": expected " + prefix + "<n>, got '" + tok + "'");
  try {
    std::size_t used = 0;
    int v = std::stoi(tok.substr(n), &used);
    if (used != tok.size() - n || v < 0) throw std::invalid_argument("x");
    return v;
  } catch (const std::exception&) {
    throw Error(Errc::Format, "line " + std::to_string(line_no) + ": bad reference '" + tok + "'");
  }
}

inline std::string strip_comma(std::string s) {
  if (!s.empty() && s.back() == ',') s.pop_back();
  return s;
}

}  // namespace detail

inline FheProgram read_ir(std::istream& is) {
  FheProgram p;
  std::string line;
  std::size_t line_no = 0;
  bool header = false;
  while (std::getline(is, line)) {
    ++line_no;
    std::string code = line, comment;
    if (auto semi = line.find(';'); semi != std::string::npos) {
      code = line.substr(0, semi);
      comment = line.substr(semi + 1);
    }
    std::istringstream ls(code);
    std::vector<std::string> toks;
    for (std::string t; ls >> t;) toks.push_back(t);
    if (toks.empty()) continue;
    if (!header) {
      if (toks.size() != 2 || toks[0] != "orion-ir" || toks[1] != "1")
        throw Error(Errc::Format, "missing 'orion-ir 1' header");
      header = true;
      continue;
    }
    if (toks[0] == "slots") {
      if (toks.size() != 2) throw Error(Errc::Format, "line " + std::to_string(line_no) + ": bad slots line");
      p.slots = std::stoll(toks[1]);
      continue;
    }
    if (toks[0] == "input") {
      if (toks.size() != 4 || toks[3].rfind("level=", 0) != 0)
        throw Error(Errc::Format, "line " + std::to_string(line_no) + ": bad input line");
      p.inputs.push_back({toks[2], detail::parse_ref(toks[1], "%h", line_no), std::stoi(toks[3].substr(6))});
      continue;
    }
    if (toks[0] == "output") {
      if (toks.size() != 3) throw Error(Errc::Format, "line " + std::to_string(line_no) + ": bad output line");
      p.outputs.push_back({toks[2], detail::parse_ref(toks[1], "%h", line_no)});
      continue;
    }
    if (toks.size() < 4 || toks[1] != "=")
      throw Error(Errc::Format, "line " + std::to_string(line_no) + ": malformed instruction");
    Instruction ins;
    ins.dst = detail::parse_ref(toks[0], "%h", line_no);
    ins.op = parse_opcode(toks[2]);
    ins.a = detail::parse_ref(detail::strip_comma(toks[3]), "%h", line_no);
    const bool has_second = ins.uses_plaintext() || ins.binary_ct() || ins.op == Opcode::HROT ||
                            ins.op == Opcode::MODDOWN;
    if (has_second != (toks.size() == 5))
      throw Error(Errc::Format, "line " + std::to_string(line_no) + ": wrong operand count for " + toks[2]);
    if (ins.uses_plaintext())
      ins.b = detail::parse_ref(toks[4], "@pt", line_no);
    else if (ins.binary_ct())
      ins.b = detail::parse_ref(toks[4], "%h", line_no);
    else if (has_second)
      ins.k = std::stoi(toks[4]);
    std::istringstream cs(comment);
    for (std::string t; cs >> t;) {
      if (t.rfind("layer=", 0) == 0)
        ins.layer = t.substr(6);
      else if (t.rfind("group=g", 0) == 0)
        ins.group = std::stoi(t.substr(7));
      else if (t == "boundary")
        ins.boundary = true;
    }
    p.code.push_back(std::move(ins));
  }
  if (!header) throw Error(Errc::Format, "empty program text");
  return p;
}

inline FheProgram from_ir_text(const std::string& text) {
  std::istringstream is(text);
  return read_ir(is);
}

// ------------------------------------------------------ plaintext store I/O
//
// Layout: "ORIONPT1", u64 count, u64 slots, then per plaintext
//   i32 level, i32 delta_exp, u32 #prime terms, (i32 level, i32 exp)*,
//   u8 has_slots, f64[slots] if has_slots.
// Everything little-endian.

namespace detail {

template <class T>
void put_le(std::ostream& os, T v) {
  static_assert(std::is_trivially_copyable_v<T>);
  std::uint64_t bits = 0;
  std::memcpy(&bits, &v, sizeof(T));
  char buf[sizeof(T)];
  for (std::size_t i = 0; i < sizeof(T); ++i) buf[i] = static_cast<char>((bits >> (8 * i)) & 0xff);
  os.write(buf, sizeof(T));
}

template <class T>
T get_le(std::istream& is) {
  char buf[sizeof(T)];
  if (!is.read(buf, sizeof(T))) throw Error(Errc::Format, "truncated binary stream");
  std::uint64_t bits = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[i])) << (8 * i);
  T v;
  std::memcpy(&v, &bits, sizeof(T));
  return v;
}

}  // namespace detail

inline void write_store(std::ostream& os, const PlaintextStore& s) {
  os.write("ORIONPT1", 8);
  detail::put_le<std::uint64_t>(os, s.items.size());
  detail::put_le<std::uint64_t>(os, static_cast<std::uint64_t>(s.slots));
  for (const auto& pt : s.items) {
    detail::put_le<std::int32_t>(os, pt.level);
    detail::put_le<std::int32_t>(os, pt.scale.delta_exp());
    detail::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(pt.scale.prime_exps().size()));
    for (auto [lvl, e] : pt.scale.prime_exps()) {
      detail::put_le<std::int32_t>(os, lvl);
      detail::put_le<std::int32_t>(os, e);
    }
    detail::put_le<std::uint8_t>(os, pt.slots.empty() ? 0 : 1);
    for (double v : pt.slots) detail::put_le<double>(os, v);
  }
}

inline PlaintextStore read_store(std::istream& is) {
  char magic[8];
  if (!is.read(magic, 8) || std::string(magic, 8) != "ORIONPT1")
    throw Error(Errc::Format, "plaintext store: bad header (expected ORIONPT1)");
  PlaintextStore s;
  const auto count = detail::get_le<std::uint64_t>(is);
  s.slots = static_cast<std::int64_t>(detail::get_le<std::uint64_t>(is));
  s.items.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    SimPlaintext pt;
    pt.level = detail::get_le<std::int32_t>(is);
    pt.scale.add_delta(detail::get_le<std::int32_t>(is));
    const auto terms = detail::get_le<std::uint32_t>(is);
    for (std::uint32_t t = 0; t < terms; ++t) {
      const int lvl = detail::get_le<std::int32_t>(is);
      const int e = detail::get_le<std::int32_t>(is);
      pt.scale.add_prime(lvl, e);
    }
    if (detail::get_le<std::uint8_t>(is)) {
      pt.slots.resize(static_cast<std::size_t>(s.slots));
      for (auto& v : pt.slots) v = detail::get_le<double>(is);
    }
    s.items.push_back(std::move(pt));
  }
  return s;
}

inline void save_store(const std::string& path, const PlaintextStore& s) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(Errc::Io, "cannot write " + path);
  write_store(os, s);
}

inline PlaintextStore load_store(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(Errc::Io, "cannot open " + path);
  return read_store(is);
}

inline void save_ir(const std::string& path, const FheProgram& p) {
  std::ofstream os(path);
  if (!os) throw Error(Errc::Io, "cannot write " + path);
  write_ir(os, p);
}

inline FheProgram load_ir(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw Error(Errc::Io, "cannot open " + path);
  return read_ir(is);
}

}  // namespace orion
