#pragma once

#include <string>

#include "json.hpp"
#include "orion/cost_model.hpp"
#include "orion/error.hpp"
#include "orion/params.hpp"

namespace orion {

// Keys: ring_degree, slots, max_level, boot_depth, base_scale_log2,
// prime_log2s (optional, defaults to base_scale_log2 repeated).
inline CkksParams params_from_json(const nlohmann::json& j) {
  try {
    const auto N = j.value("ring_degree", std::int64_t{1} << 16);
    const auto n = j.value("slots", N / 2);
    const int L = j.value("max_level", 25);
    const int Lb = j.value("boot_depth", 15);
    CkksParams p = make_params(N, n, L, Lb, j.value("base_scale_log2", 40.0));
    if (j.contains("prime_log2s")) p.prime_log2s = j.at("prime_log2s").get<std::vector<double>>();
    validate(p);
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::Format, std::string("params: ") + e.what());
  }
}

inline nlohmann::json params_to_json(const CkksParams& p) {
  return {{"ring_degree", p.ring_degree}, {"slots", p.slots},       {"max_level", p.max_level},
          {"boot_depth", p.boot_depth},   {"eff_level", p.eff_level}, {"base_scale_log2", p.base_scale_log2},
          {"prime_log2s", p.prime_log2s}};
}

// Either {"a":..,"b":..,"beta":..} for the linear model, or explicit tables
// (any subset of pmult/padd/hadd/hmult/hrot/hrot_hoisted/rescale/moddown,
// each a list indexed by level) plus "bootstrap".
inline CostModel cost_model_from_json(const nlohmann::json& j, int max_level) {
  try {
    CostModel m = CostModel::linear(max_level, j.value("a", 1.0), j.value("b", 8.0), j.value("beta", 3000.0));
    auto table = [&](const char* key, std::vector<double>& t) {
      if (j.contains(key)) t = j.at(key).get<std::vector<double>>();
    };
    table("pmult", m.pmult);
    table("padd", m.padd);
    table("hadd", m.hadd);
    table("hmult", m.hmult);
    table("hrot", m.hrot);
    table("hrot_hoisted", m.hrot_hoisted);
    table("rescale", m.rescale);
    table("moddown", m.moddown);
    if (j.contains("bootstrap")) m.bootstrap_cost = j.at("bootstrap").get<double>();
    m.check();
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::Format, std::string("cost model: ") + e.what());
  }
}

}  // namespace orion
