#include "taintlens/engine.hpp"

#include <algorithm>
#include <deque>
#include <unordered_map>
#include <unordered_set>

namespace taintlens {

namespace {

TaintSpec sanitizer(std::string pkg, std::string cls, std::string method,
                    std::vector<std::string> sig, Cwe cwe) {
  TaintSpec s;
  s.node_type = SpecNodeType::ReturnValue;
  s.api = ApiSignature{std::move(pkg), std::move(cls), std::move(method),
                       std::move(sig), std::nullopt, true};
  s.role = Role::Sanitizer;
  s.cwe = cwe;
  return s;
}

} // namespace

std::vector<TaintSpec> builtin_sanitizers(Cwe cwe) {
  std::vector<TaintSpec> out;
  switch (cwe) {
  case Cwe::Cwe22:
    out.push_back(sanitizer("org.apache.commons.io", "FilenameUtils", "getName",
                            {"String"}, cwe));
    out.push_back(sanitizer("org.apache.commons.io", "FilenameUtils",
                            "getBaseName", {"String"}, cwe));
    break;
  case Cwe::Cwe78:
    out.push_back(sanitizer("org.apache.commons.exec", "CommandLine",
                            "quoteArgument", {"String"}, cwe));
    break;
  case Cwe::Cwe79:
    out.push_back(sanitizer("org.apache.commons.text", "StringEscapeUtils",
                            "escapeHtml4", {"String"}, cwe));
    out.push_back(sanitizer("org.owasp.encoder", "Encode", "forHtml",
                            {"String"}, cwe));
    out.push_back(sanitizer("org.springframework.web.util", "HtmlUtils",
                            "htmlEscape", {"String"}, cwe));
    break;
  case Cwe::Cwe94:
    out.push_back(sanitizer("org.apache.commons.text", "StringEscapeUtils",
                            "escapeJava", {"String"}, cwe));
    break;
  }
  sort_specs(out);
  return out;
}

ResolvedEndpoints resolve_specs(const DataflowGraph &g,
                                const std::vector<TaintSpec> &specs) {
  std::vector<TaintSpec> sorted = specs;
  sort_specs(sorted);

  ResolvedEndpoints ep;
  std::set<std::pair<std::uint64_t, std::uint64_t>> prop_seen;
  for (const auto &spec : sorted) {
    if (spec.role == Role::TaintPropagator) {
      for (const auto &call : g.calls()) {
        if (!call.result_node || !call.callee.same_api(spec.api))
          continue;
        for (const auto &[pos, arg] : call.arg_nodes)
          if (prop_seen.emplace(arg.value, call.result_node->value).second)
            ep.propagator_edges.push_back(
                DfgEdge{arg, *call.result_node, EdgeKind::Data});
      }
      continue;
    }
    for (const auto &node : g.nodes()) {
      if (!match_spec(spec, node, g))
        continue;
      switch (spec.role) {
      case Role::Source:
        ep.sources.insert(node.id);
        ep.source_spec.emplace(node.id, spec);
        break;
      case Role::Sink:
        ep.sinks.insert(node.id);
        ep.sink_spec.emplace(node.id, spec);
        break;
      case Role::Sanitizer:
        ep.sanitizers.insert(node.id);
        break;
      case Role::TaintPropagator:
        break;
      }
    }
  }
  std::sort(ep.propagator_edges.begin(), ep.propagator_edges.end(),
            [](const DfgEdge &a, const DfgEdge &b) {
              return std::tie(a.src, a.dst) < std::tie(b.src, b.dst);
            });
  return ep;
}

namespace {

using Adjacency = std::unordered_map<std::uint64_t, std::vector<NodeId>>;

Adjacency taint_steps(const DataflowGraph &g, const ResolvedEndpoints &ep,
                      bool exceptional) {
  Adjacency adj;
  auto add = [&](const DfgEdge &e) { adj[e.src.value].push_back(e.dst); };
  for (const auto &e : g.edges())
    if (e.kind == EdgeKind::Data ||
        (exceptional && e.kind == EdgeKind::Exceptional))
      add(e);
  for (const auto &e : ep.propagator_edges)
    add(e);
  for (auto &[src, next] : adj) {
    std::sort(next.begin(), next.end());
    next.erase(std::unique(next.begin(), next.end()), next.end());
  }
  return adj;
}

const std::vector<NodeId> &successors(const Adjacency &adj, NodeId n) {
  static const std::vector<NodeId> none;
  auto it = adj.find(n.value);
  return it == adj.end() ? none : it->second;
}

TaintPath make_path(std::vector<NodeId> nodes, const ResolvedEndpoints &ep,
                    Cwe cwe) {
  TaintPath p;
  p.cwe = cwe;
  if (auto it = ep.source_spec.find(nodes.front()); it != ep.source_spec.end())
    p.source_spec = it->second;
  if (auto it = ep.sink_spec.find(nodes.back()); it != ep.sink_spec.end())
    p.sink_spec = it->second;
  p.source_spec.cwe = p.sink_spec.cwe = cwe;
  p.nodes = std::move(nodes);
  return p;
}

// Shortest path per reachable sink; neighbours are visited in id order so
// ties break toward lower ids.
void shortest_from(NodeId src, const Adjacency &adj, const ResolvedEndpoints &ep,
                   const PathLimits &limits,
                   std::map<NodeId, std::vector<std::vector<NodeId>>> &found,
                   bool &truncated) {
  std::unordered_map<std::uint64_t, NodeId> parent;
  std::unordered_map<std::uint64_t, int> depth;
  std::deque<NodeId> queue{src};
  depth[src.value] = 1;
  while (!queue.empty()) {
    auto cur = queue.front();
    queue.pop_front();
    int d = depth[cur.value];
    for (auto next : successors(adj, cur)) {
      if (next == src || depth.count(next.value) ||
          ep.sanitizers.count(next))
        continue;
      if (d + 1 > limits.max_length) {
        truncated = true;
        continue;
      }
      depth[next.value] = d + 1;
      parent[next.value] = cur;
      queue.push_back(next);
      if (ep.sinks.count(next)) {
        std::vector<NodeId> path{next};
        for (auto at = next; at != src;) {
          at = parent.at(at.value);
          path.push_back(at);
        }
        std::reverse(path.begin(), path.end());
        found[next].push_back(std::move(path));
      }
    }
  }
}

// Breadth-first enumeration of simple paths, up to k per sink.
void k_paths_from(NodeId src, const Adjacency &adj, const ResolvedEndpoints &ep,
                  const PathLimits &limits,
                  std::map<NodeId, std::vector<std::vector<NodeId>>> &found,
                  bool &truncated) {
  constexpr std::size_t kExpansionBudget = 1'000'000;
  std::size_t expansions = 0;
  std::size_t saturated = 0;
  std::size_t reachable_sinks = ep.sinks.size() - (ep.sinks.count(src) ? 1 : 0);
  const auto k = static_cast<std::size_t>(limits.max_paths_per_pair);

  std::deque<std::vector<NodeId>> queue{{src}};
  while (!queue.empty() && saturated < reachable_sinks) {
    auto path = std::move(queue.front());
    queue.pop_front();
    for (auto next : successors(adj, path.back())) {
      if (ep.sanitizers.count(next) ||
          std::find(path.begin(), path.end(), next) != path.end())
        continue;
      if (static_cast<int>(path.size()) + 1 > limits.max_length) {
        truncated = true;
        continue;
      }
      if (++expansions > kExpansionBudget) {
        truncated = true;
        return;
      }
      auto extended = path;
      extended.push_back(next);
      if (ep.sinks.count(next)) {
        auto &bucket = found[next];
        if (bucket.size() < k) {
          bucket.push_back(extended);
          if (bucket.size() == k)
            ++saturated;
        }
      }
      queue.push_back(std::move(extended));
    }
  }
}

} // namespace

PathResult unsanitized_paths(const DataflowGraph &g, const ResolvedEndpoints &ep,
                             Cwe cwe, const EngineOptions &opts) {
  const auto &limits = opts.limits;
  if (limits.max_paths_per_pair < 1 || limits.max_total_paths < 1 ||
      limits.max_length < 2)
    throw std::invalid_argument("path limits must be positive");

  auto adj = taint_steps(g, ep, opts.exceptional_edges);
  PathResult out;
  for (auto src : ep.sources) {
    std::map<NodeId, std::vector<std::vector<NodeId>>> found;
    // A node that is both source and sink forms a path only via a self edge.
    if (ep.sinks.count(src)) {
      const auto &next = successors(adj, src);
      if (std::binary_search(next.begin(), next.end(), src))
        found[src].push_back({src, src});
    }
    if (limits.max_paths_per_pair == 1)
      shortest_from(src, adj, ep, limits, found, out.truncated);
    else
      k_paths_from(src, adj, ep, limits, found, out.truncated);

    for (auto &[sink, paths] : found) {
      std::stable_sort(paths.begin(), paths.end(),
                       [](const auto &a, const auto &b) {
                         return a.size() != b.size() ? a.size() < b.size() : a < b;
                       });
      for (auto &p : paths) {
        if (static_cast<int>(out.paths.size()) >= limits.max_total_paths) {
          out.truncated = true;
          return out;
        }
        out.paths.push_back(make_path(std::move(p), ep, cwe));
      }
    }
  }
  return out;
}

std::vector<Alert> make_alerts(std::string_view project,
                               const std::vector<TaintPath> &paths,
                               const DataflowGraph &g) {
  std::vector<Alert> out;
  out.reserve(paths.size());
  for (const auto &p : paths)
    out.push_back(make_alert(project, p, g));
  return out;
}

} // namespace taintlens
