#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "orion/error.hpp"

namespace orion {

/// Per-operation latency tables indexed by ciphertext level (arbitrary units).
///
/// The defaults are linear in the number of live limbs: pmult = hadd = a(l+1),
/// hrot = hmult = b(l+1), hoisted rotations a third of a full rotation, and a
/// constant bootstrap. Any table may be replaced wholesale.
struct CostModel {
  std::vector<double> pmult, padd, hadd, hmult, hrot, hrot_hoisted, rescale, moddown;
  double bootstrap_cost = 3000.0;

  static CostModel linear(int max_level, double a = 1.0, double b = 8.0, double beta = 3000.0) {
    CostModel m;
    const auto n = static_cast<std::size_t>(max_level + 1);
    for (auto* t : {&m.pmult, &m.padd, &m.hadd, &m.hmult, &m.hrot, &m.hrot_hoisted, &m.rescale, &m.moddown})
      t->assign(n, 0.0);
    for (std::size_t l = 0; l < n; ++l) {
      const double limbs = static_cast<double>(l + 1);
      m.pmult[l] = a * limbs;
      m.padd[l] = a * limbs;
      m.hadd[l] = a * limbs;
      m.rescale[l] = a * limbs;
      m.hmult[l] = b * limbs;
      m.hrot[l] = b * limbs;
      m.hrot_hoisted[l] = b * limbs / 3.0;
    }
    m.bootstrap_cost = beta;
    return m;
  }

  int max_level() const { return static_cast<int>(pmult.size()) - 1; }

  static double at(const std::vector<double>& t, int level) {
    if (t.empty()) return 0.0;
    const auto i = static_cast<std::size_t>(std::clamp(level, 0, static_cast<int>(t.size()) - 1));
    return t[i];
  }

  double pmult_at(int l) const { return at(pmult, l); }
  double padd_at(int l) const { return at(padd, l); }
  double hadd_at(int l) const { return at(hadd, l); }
  double hmult_at(int l) const { return at(hmult, l); }
  double hrot_at(int l) const { return at(hrot, l); }
  double hrot_hoisted_at(int l) const { return at(hrot_hoisted, l); }
  double rescale_at(int l) const { return at(rescale, l); }
  double moddown_at(int l) const { return at(moddown, l); }
  double bootstrap() const { return bootstrap_cost; }

  void check() const {
    for (const auto* t : {&pmult, &padd, &hadd, &hmult, &hrot, &hrot_hoisted, &rescale, &moddown})
      for (double v : *t)
        if (v < 0) throw Error(Errc::InvalidArgument, "cost model latencies must be non-negative");
    if (bootstrap_cost < 0) throw Error(Errc::InvalidArgument, "bootstrap cost must be non-negative");
    if (!std::is_sorted(pmult.begin(), pmult.end()))
      throw Error(Errc::InvalidArgument, "pmult latency must be non-decreasing in level");
    if (!std::is_sorted(hrot.begin(), hrot.end()))
      throw Error(Errc::InvalidArgument, "hrot latency must be non-decreasing in level");
  }
};

}  // namespace orion
