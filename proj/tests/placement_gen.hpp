#pragma once

#include <functional>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "orion/placer.hpp"

namespace orion::test {

// Random placement problems: chains with (possibly nested) two-branch
// regions, random depths, random per-level costs, some edges barred from
// bootstrapping.
struct PlacementGen {
  std::mt19937_64 rng;
  int max_nodes = 8;
  int max_depth = 3;

  explicit PlacementGen(std::uint64_t seed) : rng(seed) {}

  int uni(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }
  double unif(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

  std::vector<double> costs(int L) {
    std::vector<double> c(static_cast<std::size_t>(L + 1));
    const double base = unif(0.5, 4.0);
    for (int l = 0; l <= L; ++l) c[static_cast<std::size_t>(l)] = base * (l + 1) + unif(0.0, 3.0);
    return c;
  }

  int add(PlacementGraph& g, std::vector<int> parents, int depth) {
    const int v = g.add_node("n" + std::to_string(g.size()), depth, costs(g.eff_level), parents);
    for (int u : parents)
      if (unif(0, 1) < 0.15) g.no_boot.insert({u, v});
    return v;
  }

  // Appends a chain after `prev`, at most `budget` nodes; returns the last node.
  int chain(PlacementGraph& g, int prev, int budget, int nesting) {
    while (budget > 0) {
      if (budget >= 2 && nesting < 2 && unif(0, 1) < 0.4) {
        const int left_budget = uni(0, std::min(2, budget - 1));
        const int a = left_budget ? chain(g, add(g, {prev}, uni(0, max_depth)), left_budget - 1, nesting + 1) : prev;
        budget -= left_budget;
        const int right_budget = uni(0, std::min(2, budget - 1));
        const int b = right_budget ? chain(g, add(g, {prev}, uni(0, max_depth)), right_budget - 1, nesting + 1) : prev;
        budget -= right_budget;
        prev = add(g, {a, b}, uni(0, 1));
        budget -= 1;
      } else {
        prev = add(g, {prev}, uni(0, max_depth));
        budget -= 1;
      }
    }
    return prev;
  }

  PlacementGraph make() {
    PlacementGraph g;
    g.eff_level = uni(1, 4);
    max_depth = std::min(3, g.eff_level);
    g.bootstrap_cost = unif(5.0, 60.0);
    const int input = g.add_node("in", 0, costs(g.eff_level));
    chain(g, input, uni(1, max_nodes - 1), 0);
    return g;
  }
};

// Exhaustive search over all level assignments (nodes are in topological
// order), pruned by the running cost. Returns +inf when infeasible.
inline double brute_force_cost(const PlacementGraph& g) {
  double best = std::numeric_limits<double>::infinity();
  std::vector<int> level(static_cast<std::size_t>(g.size()), 0);
  std::function<void(int, double)> dfs = [&](int v, double acc) {
    if (acc >= best) return;
    if (v == g.size()) {
      best = acc;
      return;
    }
    for (int l = 0; l <= g.eff_level; ++l) {
      if (!g.valid(v, l)) continue;
      double c = acc + g.node_cost(v, l);
      bool ok = true;
      for (int u : g.parents[static_cast<std::size_t>(v)]) {
        const int k = g.edge_kind(u, level[static_cast<std::size_t>(u)], v, l);
        if (k < 0) {
          ok = false;
          break;
        }
        c += k * g.bootstrap_cost;
      }
      if (!ok) continue;
      level[static_cast<std::size_t>(v)] = l;
      dfs(v + 1, c);
    }
  };
  dfs(0, 0.0);
  return best;
}

}  // namespace orion::test
