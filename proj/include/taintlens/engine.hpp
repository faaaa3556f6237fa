#pragma once

#include "taintlens/graph.hpp"

#include <map>
#include <set>
#include <vector>

namespace taintlens {

struct ResolvedEndpoints {
  std::set<NodeId> sources;
  std::set<NodeId> sinks;
  std::set<NodeId> sanitizers;
  std::vector<DfgEdge> propagator_edges;
  /// The canonically-first spec matching each endpoint.
  std::map<NodeId, TaintSpec> source_spec;
  std::map<NodeId, TaintSpec> sink_spec;
};

struct PathLimits {
  int max_paths_per_pair = 1;
  int max_total_paths = 1000;
  /// Maximum number of nodes on a path.
  int max_length = 80;
};

struct EngineOptions {
  PathLimits limits;
  /// Follow throw -> catch edges.
  bool exceptional_edges = true;
};

struct PathResult {
  std::vector<TaintPath> paths;
  bool truncated = false;
};

/// Sanitizers applied regardless of inferred specs.
std::vector<TaintSpec> builtin_sanitizers(Cwe cwe);

/// Maps specs to node sets by role. Propagator specs contribute edges from
/// each argument of a matching call to its result.
ResolvedEndpoints resolve_specs(const DataflowGraph &g,
                                const std::vector<TaintSpec> &specs);

/// Source-to-sink paths over Data, propagator and (optionally) Exceptional
/// edges that avoid every sanitizer except the source itself. Shortest
/// paths first; ordered by (source, sink, length).
PathResult unsanitized_paths(const DataflowGraph &g, const ResolvedEndpoints &ep,
                             Cwe cwe, const EngineOptions &opts = {});

std::vector<Alert> make_alerts(std::string_view project,
                               const std::vector<TaintPath> &paths,
                               const DataflowGraph &g);

} // namespace taintlens
