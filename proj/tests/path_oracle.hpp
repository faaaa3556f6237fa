#pragma once

// Brute-force reference for the path engine: enumerate every simple path in
// a small graph and keep the ones that avoid sanitizers.

#include "taintlens/engine.hpp"
#include "test_support.hpp"

#include <algorithm>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

namespace tl_test {

struct SmallDag {
  int n = 0;
  std::vector<std::tuple<int, int, taintlens::EdgeKind>> edges;
  std::set<int> sources, sinks, sanitizers;
};

inline SmallDag random_dag(std::mt19937 &rng, int max_nodes = 12) {
  auto pick = [&](int k) { return static_cast<int>(rng() % static_cast<unsigned>(k)); };
  SmallDag d;
  d.n = 2 + pick(max_nodes - 1);
  int density = 15 + pick(40); // percent
  for (int i = 0; i < d.n; ++i)
    for (int j = i + 1; j < d.n; ++j)
      if (pick(100) < density) {
        int k = pick(10);
        auto kind = k < 7   ? taintlens::EdgeKind::Data
                    : k < 9 ? taintlens::EdgeKind::Exceptional
                            : taintlens::EdgeKind::Control;
        d.edges.emplace_back(i, j, kind);
      }
  int ns = 1 + pick(3), nk = 1 + pick(2), nz = pick(3);
  for (int i = 0; i < ns; ++i)
    d.sources.insert(pick(d.n));
  for (int i = 0; i < nk; ++i)
    d.sinks.insert(pick(d.n));
  for (int i = 0; i < nz; ++i)
    d.sanitizers.insert(pick(d.n));
  return d;
}

inline taintlens::DataflowGraph dag_graph(const SmallDag &d) {
  taintlens::GraphBuilder b;
  for (int i = 0; i < d.n; ++i)
    b.add_node(make_node(taintlens::NodeKind::LocalDef, i + 1, "p.A.f",
                         "v" + std::to_string(i)));
  for (auto [s, t, k] : d.edges)
    b.add_edge(taintlens::NodeId{static_cast<std::uint64_t>(s + 1)},
               taintlens::NodeId{static_cast<std::uint64_t>(t + 1)}, k);
  return std::move(b).build();
}

inline taintlens::ResolvedEndpoints dag_endpoints(const SmallDag &d) {
  taintlens::ResolvedEndpoints ep;
  auto id = [](int i) { return taintlens::NodeId{static_cast<std::uint64_t>(i + 1)}; };
  for (int s : d.sources)
    ep.sources.insert(id(s));
  for (int s : d.sinks)
    ep.sinks.insert(id(s));
  for (int s : d.sanitizers)
    ep.sanitizers.insert(id(s));
  return ep;
}

/// Every simple path s -> t over followed edges whose nodes after the first
/// are not sanitizers, sorted by (length, node sequence).
inline std::vector<std::vector<int>> oracle_paths(const SmallDag &d, int s, int t,
                                                  bool exceptional) {
  std::vector<std::vector<int>> out;
  std::vector<int> path{s};
  std::vector<bool> on(static_cast<std::size_t>(d.n), false);
  on[static_cast<std::size_t>(s)] = true;
  auto dfs = [&](auto &&self, int at) -> void {
    for (auto [a, b, k] : d.edges) {
      if (a != at || on[static_cast<std::size_t>(b)])
        continue;
      if (k == taintlens::EdgeKind::Control ||
          (k == taintlens::EdgeKind::Exceptional && !exceptional))
        continue;
      if (d.sanitizers.count(b))
        continue;
      path.push_back(b);
      on[static_cast<std::size_t>(b)] = true;
      if (b == t)
        out.push_back(path);
      self(self, b);
      on[static_cast<std::size_t>(b)] = false;
      path.pop_back();
    }
  };
  if (s != t)
    dfs(dfs, s);
  std::sort(out.begin(), out.end(), [](const auto &a, const auto &b) {
    return a.size() != b.size() ? a.size() < b.size() : a < b;
  });
  return out;
}

/// Empty when the engine agrees with the oracle for `k` paths per pair;
/// otherwise a description of the first disagreement.
inline std::string compare_engine(const SmallDag &d, int k, bool exceptional = true) {
  taintlens::EngineOptions opts;
  opts.limits.max_paths_per_pair = k;
  opts.limits.max_total_paths = 1000000;
  opts.exceptional_edges = exceptional;
  auto g = dag_graph(d);
  auto res = taintlens::unsanitized_paths(g, dag_endpoints(d), taintlens::Cwe::Cwe22, opts);

  std::vector<std::vector<int>> expected;
  for (int s : d.sources)
    for (int t : d.sinks) {
      auto all = oracle_paths(d, s, t, exceptional);
      if (static_cast<int>(all.size()) > k)
        all.resize(static_cast<std::size_t>(k));
      expected.insert(expected.end(), all.begin(), all.end());
    }
  std::vector<std::vector<int>> got;
  for (const auto &p : res.paths) {
    std::vector<int> v;
    for (auto id : p.nodes)
      v.push_back(static_cast<int>(id.value) - 1);
    got.push_back(std::move(v));
  }
  if (res.truncated)
    return "engine reported truncation";
  if (got == expected)
    return {};
  auto show = [](const std::vector<std::vector<int>> &ps) {
    std::ostringstream o;
    for (const auto &p : ps) {
      o << '[';
      for (int x : p)
        o << x << ' ';
      o << ']';
    }
    return o.str();
  };
  return "expected " + show(expected) + " got " + show(got);
}

} // namespace tl_test
