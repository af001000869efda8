#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "orion/error.hpp"

namespace orion {

/// Scheme parameters shared by every stage of the compiler and the VM.
///
/// Prime moduli are described only by their log2 magnitudes; no modular
/// arithmetic is ever performed, so only relative scale sizes matter.
struct CkksParams {
  std::int64_t ring_degree = 1 << 16;
  std::int64_t slots = 1 << 15;
  int max_level = 25;
  int boot_depth = 15;
  int eff_level = 10;
  double base_scale_log2 = 40.0;
  std::vector<double> prime_log2s = std::vector<double>(26, 40.0);

  double prime_log2(int level) const { return prime_log2s.at(static_cast<std::size_t>(level)); }
};

namespace detail {
inline bool is_pow2(std::int64_t v) { return v > 0 && (v & (v - 1)) == 0; }
}  // namespace detail

/// Builds a parameter set with every q_i at base_scale_log2 bits.
inline CkksParams make_params(std::int64_t ring_degree, std::int64_t slots, int max_level, int boot_depth,
                              double base_scale_log2 = 40.0) {
  CkksParams p;
  p.ring_degree = ring_degree;
  p.slots = slots;
  p.max_level = max_level;
  p.boot_depth = boot_depth;
  p.eff_level = max_level - boot_depth;
  p.base_scale_log2 = base_scale_log2;
  p.prime_log2s.assign(static_cast<std::size_t>(max_level + 1), base_scale_log2);
  return p;
}

/// N = 2^16, n = 2^15, Delta = 2^40, L = 25, L_boot = 15, L_eff = 10.
inline CkksParams default_params() { return make_params(1 << 16, 1 << 15, 25, 15, 40.0); }

/// Throws Errc::InvalidParams naming the first violated invariant.
inline void validate(const CkksParams& p) {
  auto fail = [](const std::string& name, const std::string& why) {
    throw Error(Errc::InvalidParams, name + ": " + why);
  };
  if (!detail::is_pow2(p.ring_degree))
    fail("ring_degree_power_of_two", "ring degree " + std::to_string(p.ring_degree) + " is not a power of two");
  if (p.slots != p.ring_degree && p.slots != p.ring_degree / 2)
    fail("slots", "slot count must be N/2 or N (got " + std::to_string(p.slots) + ")");
  if (p.max_level < 0) fail("max_level", "must be non-negative");
  if (p.boot_depth < 0) fail("boot_depth", "must be non-negative");
  if (p.eff_level != p.max_level - p.boot_depth)
    fail("eff_level", "L_eff must equal L - L_boot");
  if (p.eff_level < 1) fail("eff_level_positive", "L_eff must be at least 1");
  if (p.prime_log2s.size() != static_cast<std::size_t>(p.max_level + 1))
    fail("prime_count", "expected L+1 prime sizes");
  for (std::size_t i = 0; i < p.prime_log2s.size(); ++i) {
    if (std::abs(p.prime_log2s[i] - p.base_scale_log2) > 1.0)
      fail("prime_near_scale", "q_" + std::to_string(i) + " is more than one bit away from Delta");
  }
}

/// Exact scale as an exponent vector over the basis {Delta, q_0, ..., q_L}.
///
/// Zero exponents are never stored, so structural equality is value equality.
class ScaleDescriptor {
 public:
  ScaleDescriptor() = default;

  static ScaleDescriptor unit() { return {}; }
  static ScaleDescriptor delta(int exp = 1) {
    ScaleDescriptor s;
    s.delta_exp_ = exp;
    return s;
  }
  static ScaleDescriptor prime(int level, int exp = 1) {
    ScaleDescriptor s;
    s.add_prime(level, exp);
    return s;
  }

  int delta_exp() const { return delta_exp_; }
  const std::map<int, int>& prime_exps() const { return prime_exps_; }
  int prime_exp(int level) const {
    auto it = prime_exps_.find(level);
    return it == prime_exps_.end() ? 0 : it->second;
  }

  void add_delta(int e) { delta_exp_ += e; }
  void add_prime(int level, int e) {
    if (e == 0) return;
    int& v = prime_exps_[level];
    v += e;
    if (v == 0) prime_exps_.erase(level);
  }

  bool is_delta() const { return delta_exp_ == 1 && prime_exps_.empty(); }

  /// log2 of the numeric scale value under the given parameter set.
  double log2_value(const CkksParams& p) const {
    double acc = delta_exp_ * p.base_scale_log2;
    for (auto [lvl, e] : prime_exps_) acc += e * p.prime_log2(lvl);
    return acc;
  }
  double value(const CkksParams& p) const { return std::exp2(log2_value(p)); }

  friend bool operator==(const ScaleDescriptor&, const ScaleDescriptor&) = default;

  std::string str() const {
    std::ostringstream os;
    os << *this;
    return os.str();
  }

  friend std::ostream& operator<<(std::ostream& os, const ScaleDescriptor& s) {
    bool first = true;
    auto term = [&](const std::string& base, int e) {
      if (!first) os << '*';
      first = false;
      os << base;
      if (e != 1) os << '^' << e;
    };
    if (s.delta_exp_ != 0) term("D", s.delta_exp_);
    for (auto [lvl, e] : s.prime_exps_) term("q" + std::to_string(lvl), e);
    if (first) os << '1';
    return os;
  }

 private:
  int delta_exp_ = 0;
  std::map<int, int> prime_exps_;
};

inline ScaleDescriptor scale_mul(const ScaleDescriptor& a, const ScaleDescriptor& b) {
  ScaleDescriptor r = a;
  r.add_delta(b.delta_exp());
  for (auto [lvl, e] : b.prime_exps()) r.add_prime(lvl, e);
  return r;
}

inline ScaleDescriptor scale_inverse(const ScaleDescriptor& a) {
  ScaleDescriptor r;
  r.add_delta(-a.delta_exp());
  for (auto [lvl, e] : a.prime_exps()) r.add_prime(lvl, -e);
  return r;
}

/// Division by q_level, as performed by a rescale at that level.
inline ScaleDescriptor scale_div_prime(const ScaleDescriptor& s, int level) {
  ScaleDescriptor r = s;
  r.add_prime(level, -1);
  return r;
}

/// The s with scale_mul(have, s) == target.
inline ScaleDescriptor scale_solve(const ScaleDescriptor& target, const ScaleDescriptor& have) {
  return scale_mul(target, scale_inverse(have));
}

}  // namespace orion
