#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <vector>

#include "orion/builder.hpp"
#include "orion/error.hpp"

namespace orion {

struct MatrixEntry {
  long row = 0;
  long col = 0;
  double value = 0.0;
};

struct SparseMatrix {
  long rows = 0;
  long cols = 0;
  std::vector<MatrixEntry> entries;

  SparseMatrix() = default;
  SparseMatrix(long r, long c) : rows(r), cols(c) {}

  void add(long r, long c, double v) {
    if (r < 0 || r >= rows || c < 0 || c >= cols)
      throw Error(Errc::ShapeMismatch, "matrix entry (" + std::to_string(r) + "," + std::to_string(c) +
                                           ") outside " + std::to_string(rows) + "x" + std::to_string(cols));
    entries.push_back({r, c, v});
  }

  static SparseMatrix from_dense(const std::vector<std::vector<double>>& d) {
    SparseMatrix m(static_cast<long>(d.size()), d.empty() ? 0 : static_cast<long>(d[0].size()));
    for (long r = 0; r < m.rows; ++r)
      for (long c = 0; c < m.cols; ++c)
        if (d[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)] != 0.0)
          m.add(r, c, d[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)]);
    return m;
  }

  std::vector<std::vector<double>> dense() const {
    std::vector<std::vector<double>> d(static_cast<std::size_t>(rows), std::vector<double>(static_cast<std::size_t>(cols)));
    for (const auto& e : entries) d[static_cast<std::size_t>(e.row)][static_cast<std::size_t>(e.col)] += e.value;
    return d;
  }

  std::vector<double> apply(const std::vector<double>& x) const {
    if (static_cast<long>(x.size()) != cols) throw Error(Errc::LengthMismatch, "matvec: vector length");
    std::vector<double> y(static_cast<std::size_t>(rows), 0.0);
    for (const auto& e : entries) y[static_cast<std::size_t>(e.row)] += e.value * x[static_cast<std::size_t>(e.col)];
    return y;
  }

  // Rejects duplicate coordinates.
  void check_unique() const {
    std::set<std::pair<long, long>> seen;
    for (const auto& e : entries)
      if (!seen.insert({e.row, e.col}).second)
        throw Error(Errc::InvalidArgument, "duplicate matrix entry at (" + std::to_string(e.row) + "," +
                                               std::to_string(e.col) + ")");
  }
};

inline long pow2_ceil(long v) {
  long p = 1;
  while (p < v) p <<= 1;
  return p;
}

// diags[k][i] = M[i, (k + i) mod width]; only nonzero diagonals are stored.
// With values == false the vectors are left empty and only offsets are kept.
struct DiagonalSet {
  long width = 0;
  std::map<long, std::vector<double>> diags;

  std::set<long> offsets() const {
    std::set<long> s;
    for (const auto& [k, v] : diags) s.insert(k);
    return s;
  }
  std::size_t size() const { return diags.size(); }
};

inline DiagonalSet extract_diagonals(const SparseMatrix& m, long width, long slots, bool values = true) {
  if (width > slots)
    throw Error(Errc::InvalidArgument, "diagonal width " + std::to_string(width) + " exceeds slot count " +
                                           std::to_string(slots));
  if (m.rows > width || m.cols > width)
    throw Error(Errc::ShapeMismatch, "matrix " + std::to_string(m.rows) + "x" + std::to_string(m.cols) +
                                         " does not fit width " + std::to_string(width));
  if (width <= 0 || slots % width != 0)
    throw Error(Errc::InvalidArgument, "diagonal width must divide the slot count");
  DiagonalSet d;
  d.width = width;
  for (const auto& e : m.entries) {
    if (e.value == 0.0) continue;
    const long k = ((e.col - e.row) % width + width) % width;
    auto& v = d.diags[k];
    if (values) {
      if (v.empty()) v.assign(static_cast<std::size_t>(width), 0.0);
      v[static_cast<std::size_t>(e.row)] += e.value;
    }
  }
  return d;
}

inline SparseMatrix diagonals_to_matrix(const DiagonalSet& d) {
  SparseMatrix m(d.width, d.width);
  for (const auto& [k, v] : d.diags)
    for (long i = 0; i < d.width; ++i)
      if (v[static_cast<std::size_t>(i)] != 0.0) m.add(i, (k + i) % d.width, v[static_cast<std::size_t>(i)]);
  return m;
}

// ------------------------------------------------------------ BSGS plans

struct BsgsPlan {
  long n1 = 1;
  long n2 = 1;
  std::map<long, std::vector<long>> groups;  // j -> offsets k = j*n1 + i
  std::set<long> baby_set;                   // i
  std::set<long> giant_set;                  // j*n1

  // Giant step 0 is a real (trivial) rotation only when other giants exist.
  long giant_rotations() const {
    if (giant_set.size() > 1) return static_cast<long>(giant_set.size());
    return (giant_set.size() == 1 && *giant_set.begin() != 0) ? 1 : 0;
  }
  long rotations() const { return static_cast<long>(baby_set.size()) + giant_rotations(); }
};

inline BsgsPlan plan_for(const std::set<long>& offsets, long width, long n1) {
  BsgsPlan p;
  p.n1 = n1;
  p.n2 = (width + n1 - 1) / n1;
  for (long k : offsets) {
    const long j = k / n1;
    p.groups[j].push_back(k);
    p.baby_set.insert(k % n1);
    p.giant_set.insert(j * n1);
  }
  return p;
}

// The plain diagonal method: every diagonal is its own baby rotation.
inline BsgsPlan plain_diagonal_plan(const DiagonalSet& d) { return plan_for(d.offsets(), d.width, d.width); }

inline std::vector<long> bsgs_candidates(long width) {
  std::set<long> c;
  for (long a = 1; a <= width; ++a)
    if (width % a == 0) c.insert(a);
  // Every n1 up to 2*sqrt(w), not only powers of two: for w = 128 the best
  // dense split is 11 x 12.
  const long lim = static_cast<long>(std::ceil(2.0 * std::sqrt(static_cast<double>(width))));
  for (long a = 1; a <= std::min(width, lim); ++a) c.insert(a);
  return {c.begin(), c.end()};
}

// Picks n1 minimising the emitted rotation count; ties go to n1 >= n2, then
// to the larger n1 (baby rotations are hoisted and therefore cheaper).
template <class Objective>
BsgsPlan search_plan(const std::set<long>& offsets, long width, Objective objective) {
  if (offsets.empty()) throw Error(Errc::InvalidArgument, "BSGS plan requested for an empty diagonal set");
  BsgsPlan best;
  long best_cost = -1;
  for (long n1 : bsgs_candidates(width)) {
    BsgsPlan p = plan_for(offsets, width, n1);
    const long c = objective(p);
    auto better = [&] {
      if (best_cost < 0 || c < best_cost) return true;
      if (c > best_cost) return false;
      const bool sq = p.n1 >= p.n2, best_sq = best.n1 >= best.n2;
      if (sq != best_sq) return sq;
      return p.n1 > best.n1;
    };
    if (better()) {
      best = std::move(p);
      best_cost = c;
    }
  }
  return best;
}

inline BsgsPlan plan_bsgs(const DiagonalSet& d) {
  return search_plan(d.offsets(), d.width, [](const BsgsPlan& p) { return p.rotations(); });
}

// ------------------------------------------------------------ emission

namespace detail {

// diag~ = Rot_{-shift}(diag), tiled over the full slot vector.
inline std::vector<double> prerotate_tile(const std::vector<double>& d, long width, long shift, long slots) {
  std::vector<double> out(static_cast<std::size_t>(slots));
  for (long t = 0; t < slots; ++t) {
    const long i = t % width;
    out[static_cast<std::size_t>(t)] = d[static_cast<std::size_t>(((i - shift) % width + width) % width)];
  }
  return out;
}

}  // namespace detail

// One output block's worth of diagonals, one DiagonalSet per input block.
using TileRow = std::vector<const DiagonalSet*>;

// Core BSGS sum; returns values at the pre-rescale scale target*q_l.
inline std::vector<Value> emit_bsgs_sums(ProgramBuilder& b, const std::vector<Value>& in, const std::vector<TileRow>& rows,
                                         const BsgsPlan& plan, long width, const ScaleDescriptor& target) {
  const long n = b.slots();
  const Value& x0 = in.at(0);
  for (const auto& v : in)
    if (v.level != x0.level || !(v.scale == x0.scale))
      throw Error(Errc::LevelMismatch, "matvec input blocks disagree on level or scale");
  if (x0.level < 1) throw Error(Errc::LevelUnderflow, "matvec needs an input level of at least 1");
  const int level = x0.level;
  const ScaleDescriptor pt_scale = scale_solve(scale_mul(target, ScaleDescriptor::prime(level)), x0.scale);

  // Baby rotations: one hoist group per input block.
  std::vector<std::map<long, Value>> babies(in.size());
  for (std::size_t ib = 0; ib < in.size(); ++ib) {
    const int g = b.new_group();
    for (long i : plan.baby_set) babies[ib].emplace(i, b.hrot(in[ib], static_cast<int>(i), g));
  }

  std::vector<Value> out;
  for (const auto& row : rows) {
    std::set<long> giants;
    for (const auto* t : row)
      if (t)
        for (const auto& [k, v] : t->diags) giants.insert((k / plan.n1) * plan.n1);
    std::optional<Value> outer;
    for (long s : giants) {
      std::optional<Value> inner;
      for (std::size_t ib = 0; ib < row.size(); ++ib) {
        const DiagonalSet* t = row[ib];
        if (!t) continue;
        for (long i : plan.baby_set) {
          auto it = t->diags.find(s + i);
          if (it == t->diags.end()) continue;
          std::vector<double> pt_vals;
          if (!b.symbolic()) pt_vals = detail::prerotate_tile(it->second, width, s, n);
          const int pt = b.encode(std::move(pt_vals), pt_scale, level);
          Value term = b.pmult(babies[ib].at(i), pt);
          inner = inner ? b.hadd(*inner, term) : term;
        }
      }
      Value g = *inner;
      if (giants.size() > 1 || s != 0) g = b.hrot(g, static_cast<int>(s % n));
      outer = outer ? b.hadd(*outer, g) : g;
    }
    if (!outer) {
      // Empty block row: multiply by an all-zero plaintext to get a well-typed zero.
      const int pt = b.encode(b.symbolic() ? std::vector<double>{} : std::vector<double>(static_cast<std::size_t>(n), 0.0),
                              pt_scale, level);
      outer = b.pmult(in[0], pt);
    }
    out.push_back(*outer);
  }
  return out;
}

// Square single-ciphertext product: output = M x in one level.
inline Value emit_matvec(ProgramBuilder& b, const DiagonalSet& d, const BsgsPlan& plan, const Value& in,
                         const ScaleDescriptor& target = ScaleDescriptor::delta()) {
  auto sums = emit_bsgs_sums(b, {in}, {TileRow{&d}}, plan, d.width, target);
  return b.rescale(sums[0]);
}

// ------------------------------------------------------- packed linear maps

enum class MatvecMode { Square, Squat, Blocked };

inline const char* matvec_mode_name(MatvecMode m) {
  switch (m) {
    case MatvecMode::Square: return "square";
    case MatvecMode::Squat: return "squat";
    case MatvecMode::Blocked: return "blocked";
  }
  return "?";
}

// A linear map in slot coordinates, ready to emit.
//
// Single-ciphertext inputs are replicated with period in_period (a power of
// two dividing the slot count). Square mode works on width max(R, in_period),
// squat mode (R < in_period) uses the hybrid diagonals
// d_k[i] = M[i mod R, (i + k) mod C] followed by log2(C/R) rotate-and-add
// folds, and blocked mode tiles the matrix into slots x slots blocks.
struct LinearPacking {
  MatvecMode mode = MatvecMode::Square;
  long slots = 0;
  long width = 0;
  long rows_period = 0;
  long out_period = 0;
  int in_blocks = 1;
  int out_blocks = 1;
  std::vector<std::vector<DiagonalSet>> tiles;  // [out block][in block]
  BsgsPlan plan;
  std::vector<std::vector<double>> bias;  // per out block, tiled; empty when absent

  long diagonal_count() const {
    long c = 0;
    for (const auto& r : tiles)
      for (const auto& t : r) c += static_cast<long>(t.size());
    return c;
  }
};

namespace detail {

inline DiagonalSet squat_diagonals(const SparseMatrix& m, long R, long C, bool values) {
  DiagonalSet d;
  d.width = C;
  for (const auto& e : m.entries) {
    if (e.value == 0.0) continue;
    const long k = ((e.col - e.row) % R + R) % R;
    const long t = (((e.col - e.row - k) % C + C) % C) / R;
    const long i = e.row + t * R;
    auto& v = d.diags[k];
    if (values) {
      if (v.empty()) v.assign(static_cast<std::size_t>(C), 0.0);
      v[static_cast<std::size_t>(i)] += e.value;
    }
  }
  return d;
}

inline std::vector<double> tile_vector(const std::vector<double>& v, long offset, long period, long slots) {
  std::vector<double> out(static_cast<std::size_t>(slots), 0.0);
  for (long t = 0; t < slots; ++t) {
    const long src = offset + (t % period);
    if (src < static_cast<long>(v.size())) out[static_cast<std::size_t>(t)] = v[static_cast<std::size_t>(src)];
  }
  return out;
}

}  // namespace detail

// in_period == 0 means the input already spans ceil(cols / slots) full blocks.
inline LinearPacking pack_linear(const SparseMatrix& m, const std::vector<double>& bias, long in_period, long slots,
                                 bool values = true) {
  if (!bias.empty() && static_cast<long>(bias.size()) != m.rows)
    throw Error(Errc::ShapeMismatch, "bias length does not match matrix rows");
  LinearPacking p;
  p.slots = slots;
  const bool single_in = in_period > 0 && m.cols <= slots;
  if (single_in && (in_period > slots || slots % in_period != 0 || in_period < m.cols))
    throw Error(Errc::InvalidArgument, "input period " + std::to_string(in_period) + " incompatible with " +
                                           std::to_string(m.cols) + " columns and " + std::to_string(slots) + " slots");
  if (single_in && m.rows <= slots) {
    const long R = std::max(1L, pow2_ceil(m.rows));
    const long C = in_period;
    if (R < C) {
      p.mode = MatvecMode::Squat;
      p.width = C;
      p.rows_period = R;
      p.out_period = R;
      p.tiles = {{detail::squat_diagonals(m, R, C, values)}};
    } else {
      p.mode = MatvecMode::Square;
      p.width = std::max(R, C);
      p.rows_period = p.width;
      p.out_period = p.width;
      p.tiles = {{extract_diagonals(m, p.width, slots, values)}};
    }
    p.plan = search_plan(p.tiles[0][0].offsets().empty() ? std::set<long>{0} : p.tiles[0][0].offsets(), p.width,
                         [](const BsgsPlan& pl) { return pl.rotations(); });
    if (!bias.empty()) p.bias = {detail::tile_vector(bias, 0, p.out_period, slots)};
    return p;
  }

  p.mode = MatvecMode::Blocked;
  p.width = slots;
  p.rows_period = slots;
  p.out_period = slots;
  p.in_blocks = static_cast<int>(single_in ? 1 : (m.cols + slots - 1) / slots);
  p.out_blocks = static_cast<int>((m.rows + slots - 1) / slots);
  std::vector<std::vector<SparseMatrix>> parts(static_cast<std::size_t>(p.out_blocks),
                                               std::vector<SparseMatrix>(static_cast<std::size_t>(p.in_blocks),
                                                                         SparseMatrix(slots, slots)));
  for (const auto& e : m.entries)
    parts[static_cast<std::size_t>(e.row / slots)][static_cast<std::size_t>(e.col / slots)].add(e.row % slots,
                                                                                               e.col % slots, e.value);
  std::set<long> all;
  p.tiles.resize(static_cast<std::size_t>(p.out_blocks));
  for (std::size_t ob = 0; ob < parts.size(); ++ob)
    for (const auto& part : parts[ob]) {
      p.tiles[ob].push_back(extract_diagonals(part, slots, slots, values));
      for (long k : p.tiles[ob].back().offsets()) all.insert(k);
    }
  if (all.empty()) all.insert(0);
  const int in_blocks = p.in_blocks;
  const auto& tiles = p.tiles;
  p.plan = search_plan(all, slots, [&](const BsgsPlan& pl) {
    long c = in_blocks * static_cast<long>(pl.baby_set.size());
    for (const auto& row : tiles) {
      std::set<long> g;
      for (const auto& t : row)
        for (const auto& [k, v] : t.diags) g.insert(k / pl.n1);
      c += g.size() > 1 ? static_cast<long>(g.size()) : (g.size() == 1 && *g.begin() != 0 ? 1 : 0);
    }
    return c;
  });
  if (!bias.empty())
    for (int ob = 0; ob < p.out_blocks; ++ob) p.bias.push_back(detail::tile_vector(bias, ob * slots, slots, slots));
  return p;
}

// Emits the whole linear map: BSGS sums, one rescale per output block, the
// squat folds and the bias. Consumes exactly one level.
inline std::vector<Value> emit_linear(ProgramBuilder& b, const LinearPacking& p, const std::vector<Value>& in,
                                      const ScaleDescriptor& target = ScaleDescriptor::delta()) {
  if (static_cast<int>(in.size()) != p.in_blocks)
    throw Error(Errc::ShapeMismatch, "linear map expects " + std::to_string(p.in_blocks) + " input ciphertexts, got " +
                                         std::to_string(in.size()));
  std::vector<TileRow> rows;
  for (const auto& r : p.tiles) {
    TileRow row;
    for (const auto& t : r) row.push_back(t.diags.empty() ? nullptr : &t);
    rows.push_back(row);
  }
  auto sums = emit_bsgs_sums(b, in, rows, p.plan, p.width, target);
  std::vector<Value> out;
  for (std::size_t ob = 0; ob < sums.size(); ++ob) {
    Value v = b.rescale(sums[ob]);
    if (p.mode == MatvecMode::Squat)
      for (long s = p.width / 2; s >= p.rows_period; s /= 2) v = b.hadd(v, b.hrot(v, static_cast<int>(s)));
    if (!p.bias.empty()) {
      std::vector<double> bv;
      if (!b.symbolic()) bv = p.bias[ob];
      v = b.padd(v, b.encode(std::move(bv), v.scale, v.level));
    }
    out.push_back(v);
  }
  return out;
}

inline Value emit_squat_matvec(ProgramBuilder& b, const SparseMatrix& m, long in_period, const Value& in) {
  auto p = pack_linear(m, {}, in_period, b.slots(), !b.symbolic());
  return emit_linear(b, p, {in}).at(0);
}

inline std::vector<Value> emit_blocked_matvec(ProgramBuilder& b, const SparseMatrix& m, const std::vector<Value>& in) {
  const long expected = (m.cols + b.slots() - 1) / b.slots();
  if (static_cast<long>(in.size()) != expected)
    throw Error(Errc::ShapeMismatch, "blocked matvec expects " + std::to_string(expected) + " input ciphertexts");
  auto p = pack_linear(m, {}, 0, b.slots(), !b.symbolic());
  return emit_linear(b, p, in);
}

}  // namespace orion
