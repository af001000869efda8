#pragma once

#include <string>
#include <vector>

#include "orion/error.hpp"

namespace orion {

struct Dag {
  std::vector<std::vector<int>> parents, children;

  int size() const { return static_cast<int>(children.size()); }
};

// Kahn order; throws CycleDetected.
inline std::vector<int> topo_order(const Dag& g) {
  std::vector<int> indeg(static_cast<std::size_t>(g.size())), order, ready;
  for (int v = 0; v < g.size(); ++v) indeg[static_cast<std::size_t>(v)] = static_cast<int>(g.parents[static_cast<std::size_t>(v)].size());
  for (int v = g.size() - 1; v >= 0; --v)
    if (indeg[static_cast<std::size_t>(v)] == 0) ready.push_back(v);
  while (!ready.empty()) {
    const int v = ready.back();
    ready.pop_back();
    order.push_back(v);
    const auto& ch = g.children[static_cast<std::size_t>(v)];
    for (auto it = ch.rbegin(); it != ch.rend(); ++it)
      if (--indeg[static_cast<std::size_t>(*it)] == 0) ready.push_back(*it);
  }
  if (static_cast<int>(order.size()) != g.size()) throw Error(Errc::CycleDetected, "graph contains a cycle");
  return order;
}

// Immediate post-dominators over a virtual exit (index g.size()) joined to
// every sink. Children are visited before parents, so one reverse
// topological sweep with the usual two-finger intersection suffices.
inline std::vector<int> immediate_postdominators(const Dag& g) {
  const int exit = g.size();
  std::vector<int> ipdom(static_cast<std::size_t>(exit + 1), -1), depth(static_cast<std::size_t>(exit + 1), 0);
  ipdom[static_cast<std::size_t>(exit)] = exit;
  const auto order = topo_order(g);
  auto intersect = [&](int a, int b) {
    while (a != b) {
      if (depth[static_cast<std::size_t>(a)] > depth[static_cast<std::size_t>(b)]) a = ipdom[static_cast<std::size_t>(a)];
      else b = ipdom[static_cast<std::size_t>(b)];
    }
    return a;
  };
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    const int v = *it;
    const auto& ch = g.children[static_cast<std::size_t>(v)];
    int p = ch.empty() ? exit : ch[0];
    for (std::size_t i = 1; i < ch.size(); ++i) p = intersect(p, ch[i]);
    ipdom[static_cast<std::size_t>(v)] = p;
    depth[static_cast<std::size_t>(v)] = depth[static_cast<std::size_t>(p)] + 1;
  }
  return ipdom;
}

// A chain element: either one node, or a fork/join region whose branches are
// chains themselves. The fork belongs to the step before the region; the
// join belongs to the region.
struct Step {
  int node = -1;
  int fork = -1, join = -1;
  std::vector<std::vector<Step>> branches;

  bool is_region() const { return join >= 0; }
};

namespace detail {

inline std::vector<Step> parse_chain(const Dag& g, const std::vector<int>& ipdom, int u, int stop, int& visited,
                                     const std::vector<std::string>& names) {
  auto nm = [&](int v) { return names.empty() ? "#" + std::to_string(v) : names[static_cast<std::size_t>(v)]; };
  auto unsupported = [&](const std::string& why) { throw Error(Errc::UnsupportedTopology, why); };
  std::vector<Step> steps;
  steps.push_back(Step{u});
  ++visited;
  while (true) {
    const auto& ch = g.children[static_cast<std::size_t>(u)];
    if (ch.empty()) {
      if (stop >= 0) unsupported("branch through " + nm(u) + " never reaches join " + nm(stop));
      return steps;
    }
    if (ch.size() == 1) {
      const int v = ch[0];
      if (v == stop) return steps;
      if (g.parents[static_cast<std::size_t>(v)].size() != 1)
        unsupported("node " + nm(v) + " joins paths that do not share a single-entry region");
      steps.push_back(Step{v});
      ++visited;
      u = v;
      continue;
    }
    const int join = ipdom[static_cast<std::size_t>(u)];
    if (join == g.size()) unsupported("branches leaving " + nm(u) + " never rejoin");
    if (join == stop) unsupported("skip connections overlap at " + nm(join));
    Step r;
    r.fork = u;
    r.join = join;
    for (int c : ch) {
      if (c == join) {
        r.branches.emplace_back();
        continue;
      }
      if (g.parents[static_cast<std::size_t>(c)].size() != 1)
        unsupported("node " + nm(c) + " is entered from outside the region of " + nm(u));
      r.branches.push_back(parse_chain(g, ipdom, c, join, visited, names));
    }
    if (g.parents[static_cast<std::size_t>(join)].size() != ch.size())
      unsupported("join " + nm(join) + " is not a single-exit region for " + nm(u));
    ++visited;
    steps.push_back(std::move(r));
    u = join;
  }
}

}  // namespace detail

// Structural decomposition from the unique source. Throws
// UnsupportedTopology for overlapping skips or anything not properly nested.
inline std::vector<Step> decompose(const Dag& g, const std::vector<std::string>& names = {}) {
  int source = -1;
  for (int v = 0; v < g.size(); ++v)
    if (g.parents[static_cast<std::size_t>(v)].empty()) {
      if (source >= 0) throw Error(Errc::UnsupportedTopology, "graph has more than one source");
      source = v;
    }
  if (source < 0) throw Error(Errc::CycleDetected, "graph has no source");
  const auto ipdom = immediate_postdominators(g);
  int visited = 0;
  auto steps = detail::parse_chain(g, ipdom, source, -1, visited, names);
  if (visited != g.size()) throw Error(Errc::UnsupportedTopology, "graph is not a single chain of nested regions");
  return steps;
}

}  // namespace orion
