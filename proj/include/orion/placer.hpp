#pragma once

#include <cmath>
#include <limits>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "orion/error.hpp"
#include "orion/sese.hpp"

namespace orion {

// What placement needs to know about a network: per-node depth and latency
// at each level, the edges, and which edges may carry a bootstrap.
struct PlacementGraph {
  int eff_level = 10;
  double bootstrap_cost = 3000.0;
  std::vector<std::string> names;
  std::vector<int> depth;
  std::vector<std::vector<double>> cost;  // [node][level 0..eff_level]
  std::vector<std::vector<int>> parents;
  std::set<std::pair<int, int>> no_boot;  // edges (u, v) that must not bootstrap

  int size() const { return static_cast<int>(depth.size()); }

  int add_node(const std::string& name, int d, std::vector<double> c, std::vector<int> ps = {}) {
    names.push_back(name);
    depth.push_back(d);
    cost.push_back(std::move(c));
    parents.push_back(std::move(ps));
    return size() - 1;
  }

  Dag dag() const {
    Dag g;
    g.parents = parents;
    g.children.resize(parents.size());
    for (int v = 0; v < size(); ++v)
      for (int u : parents[static_cast<std::size_t>(v)]) g.children[static_cast<std::size_t>(u)].push_back(v);
    return g;
  }

  bool valid(int v, int l) const {
    return l >= depth[static_cast<std::size_t>(v)] && l <= eff_level && std::isfinite(node_cost(v, l));
  }
  double node_cost(int v, int l) const {
    const auto& c = cost[static_cast<std::size_t>(v)];
    return static_cast<std::size_t>(l) < c.size() ? c[static_cast<std::size_t>(l)] : 0.0;
  }
  // 0 = free level drop, 1 = bootstrap, -1 = impossible
  int edge_kind(int u, int lu, int v, int lv) const {
    if (lv <= lu - depth[static_cast<std::size_t>(u)]) return 0;
    return no_boot.count({u, v}) ? -1 : 1;
  }
};

struct LevelAssignment {
  std::vector<int> level;                 // input level of each node
  std::vector<std::pair<int, int>> boots;  // bootstrapped edges (u, v)
  double cost = 0.0;
  int bootstrap_count() const { return static_cast<int>(boots.size()); }
};

// Total modeled cost of a full assignment, +inf when infeasible.
inline double assignment_cost(const PlacementGraph& g, const std::vector<int>& level, int* boots = nullptr) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  double total = 0.0;
  int nb = 0;
  for (int v = 0; v < g.size(); ++v) {
    const int l = level[static_cast<std::size_t>(v)];
    if (!g.valid(v, l)) return inf;
    total += g.node_cost(v, l);
    for (int u : g.parents[static_cast<std::size_t>(v)]) {
      const int k = g.edge_kind(u, level[static_cast<std::size_t>(u)], v, l);
      if (k < 0) return inf;
      nb += k;
    }
  }
  if (boots) *boots = nb;
  return total + nb * g.bootstrap_cost;
}

namespace detail {

// Lexicographic: modeled cost (relative tolerance), fewer bootstraps, then
// higher levels.
struct PathCost {
  double cost = std::numeric_limits<double>::infinity();
  int boots = 0;
  long levels = 0;

  bool finite() const { return std::isfinite(cost); }
  PathCost operator+(const PathCost& o) const { return {cost + o.cost, boots + o.boots, levels + o.levels}; }
  bool better(const PathCost& o) const {
    if (!finite()) return false;
    if (!o.finite()) return true;
    const double tol = 1e-9 * std::max({1.0, std::abs(cost), std::abs(o.cost)});
    if (std::abs(cost - o.cost) > tol) return cost < o.cost;
    if (boots != o.boots) return boots < o.boots;
    return levels > o.levels;
  }
};

using Row = std::vector<PathCost>;
using Table = std::vector<Row>;  // [entry level][exit level]

class Placer {
 public:
  explicit Placer(const PlacementGraph& g) : g_(g), L_(g.eff_level) {}

  PathCost node(int v, int l) const {
    if (!g_.valid(v, l)) return {};
    return {g_.node_cost(v, l), 0, l};
  }
  PathCost edge(int u, int lu, int v, int lv) const {
    const int k = g_.edge_kind(u, lu, v, lv);
    if (k < 0) return {};
    return {k * g_.bootstrap_cost, k, 0};
  }

  // Runs a chain after `prev` (-1 for the very first node). back[i][l] is
  // the predecessor level chosen for step i ending at level l.
  Row run(const std::vector<Step>& chain, int prev, Row state, std::vector<std::vector<int>>* back) {
    for (const auto& s : chain) {
      Row next(static_cast<std::size_t>(L_ + 1));
      std::vector<int> arg(static_cast<std::size_t>(L_ + 1), -1);
      if (!s.is_region()) {
        for (int lv = 0; lv <= L_; ++lv) {
          const PathCost nc = node(s.node, lv);
          if (!nc.finite()) continue;
          if (prev < 0) {
            next[static_cast<std::size_t>(lv)] = nc;
            continue;
          }
          for (int lu = 0; lu <= L_; ++lu) {
            if (!state[static_cast<std::size_t>(lu)].finite()) continue;
            const PathCost c = state[static_cast<std::size_t>(lu)] + edge(prev, lu, s.node, lv) + nc;
            if (c.better(next[static_cast<std::size_t>(lv)])) {
              next[static_cast<std::size_t>(lv)] = c;
              arg[static_cast<std::size_t>(lv)] = lu;
            }
          }
        }
        prev = s.node;
      } else {
        const Table& t = table(s);
        for (int lf = 0; lf <= L_; ++lf) {
          if (!state[static_cast<std::size_t>(lf)].finite()) continue;
          for (int lj = 0; lj <= L_; ++lj) {
            const PathCost c = state[static_cast<std::size_t>(lf)] + t[static_cast<std::size_t>(lf)][static_cast<std::size_t>(lj)];
            if (c.better(next[static_cast<std::size_t>(lj)])) {
              next[static_cast<std::size_t>(lj)] = c;
              arg[static_cast<std::size_t>(lj)] = lf;
            }
          }
        }
        prev = s.join;
      }
      if (back) back->push_back(std::move(arg));
      state = std::move(next);
    }
    return state;
  }

  // Aggregate edge table of a region: branch shortest paths summed, join
  // cost counted once, fork cost excluded (it belongs to the step before).
  const Table& table(const Step& s) {
    auto it = tables_.find(&s);
    if (it != tables_.end()) return it->second;
    Table t(static_cast<std::size_t>(L_ + 1), Row(static_cast<std::size_t>(L_ + 1)));
    for (int lf = 0; lf <= L_; ++lf) {
      std::vector<Row> ends;
      for (const auto& b : s.branches) ends.push_back(branch_row(s, b, lf));
      for (int lj = 0; lj <= L_; ++lj) {
        PathCost c = node(s.join, lj);
        for (const auto& e : ends) c = c + e[static_cast<std::size_t>(lj)];
        t[static_cast<std::size_t>(lf)][static_cast<std::size_t>(lj)] = c;
      }
    }
    return tables_.emplace(&s, std::move(t)).first->second;
  }

  // Cost of one branch from the fork at lf to the join at every level.
  Row branch_row(const Step& s, const std::vector<Step>& b, int lf, std::vector<std::vector<int>>* back = nullptr,
                 std::vector<int>* last_level = nullptr) {
    Row out(static_cast<std::size_t>(L_ + 1));
    if (last_level) last_level->assign(static_cast<std::size_t>(L_ + 1), -1);
    if (b.empty()) {
      for (int lj = 0; lj <= L_; ++lj) out[static_cast<std::size_t>(lj)] = edge(s.fork, lf, s.join, lj);
      return out;
    }
    Row start(static_cast<std::size_t>(L_ + 1));
    start[static_cast<std::size_t>(lf)] = PathCost{0.0, 0, 0};
    const Row end = run(b, s.fork, start, back);
    const int last = exit_node(b.back());
    for (int lj = 0; lj <= L_; ++lj)
      for (int ll = 0; ll <= L_; ++ll) {
        if (!end[static_cast<std::size_t>(ll)].finite()) continue;
        const PathCost c = end[static_cast<std::size_t>(ll)] + edge(last, ll, s.join, lj);
        if (c.better(out[static_cast<std::size_t>(lj)])) {
          out[static_cast<std::size_t>(lj)] = c;
          if (last_level) (*last_level)[static_cast<std::size_t>(lj)] = ll;
        }
      }
    return out;
  }

  static int exit_node(const Step& s) { return s.is_region() ? s.join : s.node; }

  // Writes levels for a chain whose last step ends at `final_level`.
  void recover(const std::vector<Step>& chain, const std::vector<std::vector<int>>& back, int final_level,
               std::vector<int>& level) {
    int l = final_level;
    for (std::size_t i = chain.size(); i-- > 0;) {
      const Step& s = chain[i];
      const int prev_level = back[i][static_cast<std::size_t>(l)];
      if (!s.is_region()) {
        level[static_cast<std::size_t>(s.node)] = l;
      } else {
        level[static_cast<std::size_t>(s.join)] = l;
        recover_region(s, prev_level, l, level);
      }
      l = prev_level;
    }
  }

  void recover_region(const Step& s, int lf, int lj, std::vector<int>& level) {
    for (const auto& b : s.branches) {
      if (b.empty()) continue;
      std::vector<std::vector<int>> back;
      std::vector<int> last;
      branch_row(s, b, lf, &back, &last);
      recover(b, back, last[static_cast<std::size_t>(lj)], level);
    }
  }

 private:
  const PlacementGraph& g_;
  int L_;
  std::map<const Step*, Table> tables_;
};

}  // namespace detail

// Minimum-cost level assignment with bootstraps on edges. Fork/join regions
// are collapsed innermost-first into aggregate tables; the remaining chain
// is a DAG shortest path over (node, level) pairs.
inline LevelAssignment place(const PlacementGraph& g) {
  if (g.size() == 0) throw Error(Errc::InvalidArgument, "nothing to place");
  for (int v = 0; v < g.size(); ++v) {
    bool any = false;
    for (int l = 0; l <= g.eff_level && !any; ++l) any = g.valid(v, l);
    if (!any)
      throw Error(Errc::Infeasible, "layer " + g.names[static_cast<std::size_t>(v)] + " has depth " +
                                        std::to_string(g.depth[static_cast<std::size_t>(v)]) +
                                        " but only " + std::to_string(g.eff_level) + " levels are usable");
  }
  const auto chain = decompose(g.dag(), g.names);
  detail::Placer p(g);
  std::vector<std::vector<int>> back;
  const auto end = p.run(chain, -1, detail::Row(static_cast<std::size_t>(g.eff_level + 1)), &back);
  int best = -1;
  for (int l = 0; l <= g.eff_level; ++l)
    if (best < 0 ? end[static_cast<std::size_t>(l)].finite() : end[static_cast<std::size_t>(l)].better(end[static_cast<std::size_t>(best)])) best = l;
  if (best < 0) throw Error(Errc::Infeasible, "no feasible level assignment (every path needs a forbidden bootstrap)");

  LevelAssignment a;
  a.level.assign(static_cast<std::size_t>(g.size()), -1);
  p.recover(chain, back, best, a.level);
  for (int v = 0; v < g.size(); ++v)
    for (int u : g.parents[static_cast<std::size_t>(v)])
      if (g.edge_kind(u, a.level[static_cast<std::size_t>(u)], v, a.level[static_cast<std::size_t>(v)]) == 1)
        a.boots.emplace_back(u, v);
  a.cost = assignment_cost(g, a.level);
  return a;
}

inline nlohmann::json to_json(const LevelAssignment& a, const PlacementGraph& g) {
  nlohmann::json levels = nlohmann::json::object(), boots = nlohmann::json::array();
  for (int v = 0; v < g.size(); ++v) levels[g.names[static_cast<std::size_t>(v)]] = a.level[static_cast<std::size_t>(v)];
  for (auto [u, v] : a.boots) boots.push_back({g.names[static_cast<std::size_t>(u)], g.names[static_cast<std::size_t>(v)]});
  return {{"levels", levels},
          {"bootstraps", boots},
          {"bootstrap_count", a.bootstrap_count()},
          {"modeled_cost", a.cost},
          {"eff_level", g.eff_level}};
}

}  // namespace orion
