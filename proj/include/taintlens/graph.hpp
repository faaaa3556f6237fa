#pragma once

#include <compare>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <tuple>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace taintlens {

/// Vulnerability classes the toolkit analyzes.
enum class Cwe { Cwe22, Cwe78, Cwe79, Cwe94 };

std::string_view to_string(Cwe cwe);
std::optional<Cwe> parse_cwe(std::string_view text);
/// Short human-readable name, e.g. "Path Traversal".
std::string_view cwe_name(Cwe cwe);
/// One-paragraph description embedded in prompts.
std::string_view cwe_description(Cwe cwe);
inline constexpr Cwe kAllCwes[] = {Cwe::Cwe22, Cwe::Cwe78, Cwe::Cwe79, Cwe::Cwe94};

struct NodeId {
  std::uint64_t value = 0;
  auto operator<=>(const NodeId &) const = default;
};

using CallId = std::uint64_t;

enum class NodeKind {
  CallResult,
  Argument,
  Parameter,
  LocalDef,
  Literal,
  VarUse,
  Concat,
  Return,
  CatchParam,
  ThrowValue,
};

std::string_view to_string(NodeKind kind);
std::optional<NodeKind> parse_node_kind(std::string_view text);

/// A program point. `position` is meaningful for Argument (-1 is the
/// receiver) and Parameter nodes; `call_id` for Argument nodes;
/// `function_id` for Parameter nodes.
struct DfgNode {
  NodeId id;
  NodeKind kind = NodeKind::LocalDef;
  int position = 0;
  std::optional<CallId> call_id;
  std::string function_id;
  std::string file;
  int line = 1;
  int column = 1;
  std::string enclosing_function;
  std::string code_text;

  bool operator==(const DfgNode &) const = default;
};

enum class EdgeKind { Data, Control, Exceptional };

std::string_view to_string(EdgeKind kind);
std::optional<EdgeKind> parse_edge_kind(std::string_view text);

struct DfgEdge {
  NodeId src;
  NodeId dst;
  EdgeKind kind = EdgeKind::Data;

  bool operator==(const DfgEdge &) const = default;
};

/// The F-tuple identifying an API: package, class, method, parameter
/// types, and optionally an argument/parameter position.
struct ApiSignature {
  std::string package;
  std::string class_name;
  std::string method;
  std::vector<std::string> signature;
  std::optional<int> position;
  bool is_external = true;

  /// Equality on package/class/method/signature only.
  bool same_api(const ApiSignature &other) const;
  /// "package.Class.method"
  std::string qualified_name() const;
  /// "(T1, T2)"
  std::string signature_text() const;

  bool operator==(const ApiSignature &) const = default;
};

enum class SpecNodeType { ReturnValue, Argument, Parameter };
enum class Role { Source, Sink, TaintPropagator, Sanitizer };

std::string_view to_string(SpecNodeType type);
std::optional<SpecNodeType> parse_spec_node_type(std::string_view text);
std::string_view to_string(Role role);
std::optional<Role> parse_role(std::string_view text);

struct TaintSpec {
  SpecNodeType node_type = SpecNodeType::ReturnValue;
  ApiSignature api;
  Role role = Role::Source;
  Cwe cwe = Cwe::Cwe22;

  bool operator==(const TaintSpec &) const = default;
  /// Human-readable identity, e.g. "Argument java.lang.Runtime.exec(String[])#0".
  std::string display() const;
};

/// Throws std::invalid_argument when the node_type/position pairing is wrong.
void check_spec(const TaintSpec &spec);

/// Total order used for every canonical spec listing:
/// (package, class, method, node_type, position, signature, role, cwe).
bool spec_less(const TaintSpec &a, const TaintSpec &b);
/// Identity ignoring role and cwe; two specs with the same key match the
/// same nodes.
std::string spec_match_key(const TaintSpec &spec);
void sort_specs(std::vector<TaintSpec> &specs);

struct CallRecord {
  CallId call_id = 0;
  ApiSignature callee;
  std::map<int, NodeId> arg_nodes;
  std::optional<NodeId> result_node;
  /// Qualified name of the calling function.
  std::string caller;
  std::string file;
  int line = 1;

  bool operator==(const CallRecord &) const = default;
};

enum class Visibility { Public, Private };

struct FunctionInfo {
  std::string qualified_name;
  ApiSignature api;
  Visibility visibility = Visibility::Public;
  std::vector<NodeId> param_nodes;
  std::vector<std::string> param_names;
  std::string defined_in_file;
  std::optional<std::string> doc;

  bool operator==(const FunctionInfo &) const = default;
};

/// Interprocedural dataflow graph. Immutable once built; use GraphBuilder
/// to assemble one.
class DataflowGraph {
public:
  DataflowGraph() = default;
  DataflowGraph(std::vector<DfgNode> nodes, std::vector<DfgEdge> edges,
                std::vector<CallRecord> calls,
                std::vector<FunctionInfo> functions);

  const std::vector<DfgNode> &nodes() const { return nodes_; }
  const std::vector<DfgEdge> &edges() const { return edges_; }
  const std::vector<CallRecord> &calls() const { return calls_; }
  const std::vector<FunctionInfo> &functions() const { return functions_; }

  const DfgNode *find_node(NodeId id) const;
  const CallRecord *find_call(CallId id) const;
  const FunctionInfo *find_function(std::string_view qualified_name) const;
  /// The call whose result node is `id`, if any.
  const CallRecord *call_with_result(NodeId id) const;

  bool operator==(const DataflowGraph &other) const;

private:
  std::vector<DfgNode> nodes_;
  std::vector<DfgEdge> edges_;
  std::vector<CallRecord> calls_;
  std::vector<FunctionInfo> functions_;

  std::unordered_map<std::uint64_t, std::size_t> node_index_;
  std::unordered_map<CallId, std::size_t> call_index_;
  std::unordered_map<std::uint64_t, std::size_t> result_index_;
  std::map<std::string, std::size_t, std::less<>> function_index_;
};

/// Incremental construction of a DataflowGraph. Ids are assigned
/// sequentially from 1.
class GraphBuilder {
public:
  NodeId add_node(DfgNode node);
  void add_edge(NodeId src, NodeId dst, EdgeKind kind = EdgeKind::Data);
  CallId add_call(CallRecord call);
  void add_function(FunctionInfo fn);

  CallRecord &call(CallId id);
  DfgNode &node(NodeId id);
  std::size_t node_count() const { return nodes_.size(); }

  DataflowGraph build() &&;

private:
  std::vector<DfgNode> nodes_;
  std::vector<DfgEdge> edges_;
  std::vector<CallRecord> calls_;
  std::vector<FunctionInfo> functions_;
  std::set<std::tuple<std::uint64_t, std::uint64_t, EdgeKind>> edge_set_;
  std::uint64_t next_node_ = 1;
  CallId next_call_ = 1;
};

struct Violation {
  std::string kind;
  std::string detail;
};

/// Every DataflowGraph invariant that does not hold, one entry per
/// offending id. Empty means the graph is valid.
std::vector<Violation> validate_graph(const DataflowGraph &g);

bool match_spec(const TaintSpec &spec, const DfgNode &node,
                const DataflowGraph &g);

/// One node of a reported path with its location resolved, so alerts can
/// be consumed without the graph.
struct PathStep {
  NodeId id;
  NodeKind kind = NodeKind::LocalDef;
  std::string file;
  int line = 1;
  int column = 1;
  std::string function;
  std::string code;

  bool operator==(const PathStep &) const = default;
};

struct TaintPath {
  std::vector<NodeId> nodes;
  TaintSpec source_spec;
  TaintSpec sink_spec;
  Cwe cwe = Cwe::Cwe22;

  bool operator==(const TaintPath &) const = default;
};

struct Snippet {
  std::string lines;
  int start_line = 1;
  int marked_line = 1;

  bool operator==(const Snippet &) const = default;
};

struct IntermediateStep {
  std::string file;
  int line = 1;
  std::string code_text;

  bool operator==(const IntermediateStep &) const = default;
};

struct SnippetContext {
  Snippet source_snippet;
  Snippet sink_snippet;
  std::string source_function;
  std::string source_class;
  std::string sink_function;
  std::string sink_class;
  std::vector<IntermediateStep> intermediate;

  bool operator==(const SnippetContext &) const = default;
};

struct Verdict {
  std::string explanation;
  bool verdict = true;
  bool source_is_fp = false;
  bool sink_is_fp = false;
  /// Set when the response could not be parsed and the conservative
  /// fallback was used.
  std::optional<std::string> annotation;

  bool operator==(const Verdict &) const = default;
};

enum class Triage { Unreviewed, TruePositive, FalsePositive };

std::string_view to_string(Triage t);
std::optional<Triage> parse_triage(std::string_view text);

struct Alert {
  std::string id;
  std::string project;
  TaintPath path;
  std::vector<PathStep> steps;
  SnippetContext snippets;
  std::optional<Verdict> verdict;
  Triage triage = Triage::Unreviewed;

  const PathStep &source() const { return steps.front(); }
  const PathStep &sink() const { return steps.back(); }

  bool operator==(const Alert &) const = default;
};

/// Hex SHA-256 over a canonical encoding of (project, cwe, source, sink,
/// node list).
std::string alert_id(std::string_view project, Cwe cwe,
                     std::span<const NodeId> nodes);

/// Builds an Alert (id, resolved steps) for a path; snippets stay empty.
Alert make_alert(std::string_view project, const TaintPath &path,
                 const DataflowGraph &g);

/// Keys used to decide when two alerts share an endpoint.
std::string source_key(const Alert &alert);
std::string sink_key(const Alert &alert);

} // namespace taintlens

template <> struct std::hash<taintlens::NodeId> {
  std::size_t operator()(const taintlens::NodeId &id) const noexcept {
    return std::hash<std::uint64_t>{}(id.value);
  }
};
