#pragma once

#include <map>
#include <vector>

#include "orion/builder.hpp"
#include "orion/chebyshev.hpp"
#include "orion/error.hpp"

namespace orion {

// Evaluates a Chebyshev series on one ciphertext so that the result lands
// at an exact requested scale and level. p = q T_{2^k} + r is split
// recursively; every split and every leaf ends in one RESCALE, and the free
// plaintext scales are solved so both HADD operands agree exactly.
class ChebyshevEmitter {
 public:
  ChebyshevEmitter(ProgramBuilder& b, Value x) : b_(b) { powers_.emplace(1, x); }

  const Value& x() const { return powers_.at(1); }

  // T_{2k} = 2 T_k^2 - 1
  const Value& power(int k) {
    auto it = powers_.find(k);
    if (it != powers_.end()) return it->second;
    const Value h = power(k / 2);
    Value sq = b_.hmult(h, h);
    sq = b_.hadd(sq, sq);
    sq = b_.padd(sq, b_.encode_const(-1.0, sq.scale, sq.level));
    return powers_.emplace(k, b_.rescale(sq)).first->second;
  }

  Value eval(std::vector<double> c, int out_level, const ScaleDescriptor& target) {
    while (c.size() > 2 && c.back() == 0.0) c.pop_back();
    if (c.size() < 2) c.resize(2, 0.0);
    const int deg = static_cast<int>(c.size()) - 1;
    const int up = out_level + 1;
    const ScaleDescriptor at_up = scale_mul(target, ScaleDescriptor::prime(up));
    if (deg <= 1) {
      const Value xin = b_.moddown(x(), up);
      Value y = b_.pmult(xin, b_.encode_const(c[1], scale_solve(at_up, xin.scale), up));
      y = b_.padd(y, b_.encode_const(c[0], at_up, up));
      return b_.rescale(y);
    }
    int m = 1;
    while (2 * m <= deg) m *= 2;
    // T_{m+j} = 2 T_m T_j - T_{m-j}
    std::vector<double> q(static_cast<std::size_t>(deg - m + 1), 0.0), r(c.begin(), c.begin() + m);
    q[0] = c[static_cast<std::size_t>(m)];
    for (int j = 1; j <= deg - m; ++j) {
      q[static_cast<std::size_t>(j)] = 2.0 * c[static_cast<std::size_t>(m + j)];
      r[static_cast<std::size_t>(m - j)] -= c[static_cast<std::size_t>(m + j)];
    }
    const Value tm = b_.moddown(power(m), up);
    const ScaleDescriptor q_scale = scale_solve(at_up, tm.scale);
    Value qv = eval(q, up, q_scale);
    Value acc = b_.hmult(qv, tm);
    bool r_zero = true;
    for (double v : r) r_zero = r_zero && v == 0.0;
    if (!r_zero) acc = b_.hadd(acc, eval(r, up, at_up));
    return b_.rescale(acc);
  }

 private:
  ProgramBuilder& b_;
  std::map<int, Value> powers_;
};

inline Value emit_chebyshev(ProgramBuilder& b, const Value& x, const ChebPoly& p, int out_level,
                            const ScaleDescriptor& target = ScaleDescriptor::delta()) {
  if (x.level - out_level < poly_depth(p.degree()))
    throw Error(Errc::LevelUnderflow, "polynomial of degree " + std::to_string(p.degree()) + " needs " +
                                          std::to_string(poly_depth(p.degree())) + " levels, input at " +
                                          std::to_string(x.level));
  ChebyshevEmitter e(b, x);
  return e.eval(p.coeffs, out_level, target);
}

}  // namespace orion
