#include "taintlens/graph.hpp"
#include "taintlens/util.hpp"

#include <algorithm>
#include <set>
#include <sstream>
#include <tuple>

namespace taintlens {

namespace {

template <typename E, std::size_t N>
std::optional<E> lookup(const std::pair<E, std::string_view> (&table)[N],
                        std::string_view text) {
  for (const auto &[value, name] : table)
    if (name == text)
      return value;
  return std::nullopt;
}

template <typename E, std::size_t N>
std::string_view name_of(const std::pair<E, std::string_view> (&table)[N],
                         E value) {
  for (const auto &[v, name] : table)
    if (v == value)
      return name;
  return "?";
}

constexpr std::pair<Cwe, std::string_view> kCweNames[] = {
    {Cwe::Cwe22, "CWE-22"},
    {Cwe::Cwe78, "CWE-78"},
    {Cwe::Cwe79, "CWE-79"},
    {Cwe::Cwe94, "CWE-94"},
};

constexpr std::pair<NodeKind, std::string_view> kNodeKinds[] = {
    {NodeKind::CallResult, "CallResult"}, {NodeKind::Argument, "Argument"},
    {NodeKind::Parameter, "Parameter"},   {NodeKind::LocalDef, "LocalDef"},
    {NodeKind::Literal, "Literal"},       {NodeKind::VarUse, "VarUse"},
    {NodeKind::Concat, "Concat"},         {NodeKind::Return, "Return"},
    {NodeKind::CatchParam, "CatchParam"}, {NodeKind::ThrowValue, "ThrowValue"},
};

constexpr std::pair<EdgeKind, std::string_view> kEdgeKinds[] = {
    {EdgeKind::Data, "Data"},
    {EdgeKind::Control, "Control"},
    {EdgeKind::Exceptional, "Exceptional"},
};

constexpr std::pair<SpecNodeType, std::string_view> kSpecNodeTypes[] = {
    {SpecNodeType::ReturnValue, "ReturnValue"},
    {SpecNodeType::Argument, "Argument"},
    {SpecNodeType::Parameter, "Parameter"},
};

constexpr std::pair<Role, std::string_view> kRoles[] = {
    {Role::Source, "Source"},
    {Role::Sink, "Sink"},
    {Role::TaintPropagator, "TaintPropagator"},
    {Role::Sanitizer, "Sanitizer"},
};

constexpr std::pair<Triage, std::string_view> kTriage[] = {
    {Triage::Unreviewed, "Unreviewed"},
    {Triage::TruePositive, "TruePositive"},
    {Triage::FalsePositive, "FalsePositive"},
};

} // namespace

std::string_view to_string(Cwe cwe) { return name_of(kCweNames, cwe); }
std::optional<Cwe> parse_cwe(std::string_view text) {
  return lookup(kCweNames, text);
}

std::string_view cwe_name(Cwe cwe) {
  switch (cwe) {
  case Cwe::Cwe22:
    return "Path Traversal";
  case Cwe::Cwe78:
    return "OS Command Injection";
  case Cwe::Cwe79:
    return "Cross-site Scripting";
  case Cwe::Cwe94:
    return "Code Injection";
  }
  return "?";
}

std::string_view cwe_description(Cwe cwe) {
  switch (cwe) {
  case Cwe::Cwe22:
    return "Improper Limitation of a Pathname to a Restricted Directory. The "
           "product uses external input to construct a pathname that is "
           "intended to identify a file or directory located underneath a "
           "restricted parent directory, but does not neutralize special "
           "elements such as \"..\" that can resolve to a location outside "
           "of that directory.";
  case Cwe::Cwe78:
    return "Improper Neutralization of Special Elements used in an OS "
           "Command. The product constructs all or part of an OS command "
           "using externally-influenced input, but does not neutralize "
           "special elements that could modify the intended command when it "
           "is sent to a downstream component.";
  case Cwe::Cwe79:
    return "Improper Neutralization of Input During Web Page Generation. The "
           "product does not neutralize or incorrectly neutralizes "
           "user-controllable input before it is placed in output that is "
           "used as a web page served to other users.";
  case Cwe::Cwe94:
    return "Improper Control of Generation of Code. The product constructs "
           "all or part of a code segment using externally-influenced input, "
           "but does not neutralize special elements that could modify the "
           "syntax or behavior of the intended code segment, for example "
           "expression-language or script evaluation.";
  }
  return "";
}

std::string_view to_string(NodeKind kind) { return name_of(kNodeKinds, kind); }
std::optional<NodeKind> parse_node_kind(std::string_view text) {
  return lookup(kNodeKinds, text);
}
std::string_view to_string(EdgeKind kind) { return name_of(kEdgeKinds, kind); }
std::optional<EdgeKind> parse_edge_kind(std::string_view text) {
  return lookup(kEdgeKinds, text);
}
std::string_view to_string(SpecNodeType type) {
  return name_of(kSpecNodeTypes, type);
}
std::optional<SpecNodeType> parse_spec_node_type(std::string_view text) {
  return lookup(kSpecNodeTypes, text);
}
std::string_view to_string(Role role) { return name_of(kRoles, role); }
std::optional<Role> parse_role(std::string_view text) {
  if (text == "Taint-Propagator")
    return Role::TaintPropagator;
  return lookup(kRoles, text);
}
std::string_view to_string(Triage t) { return name_of(kTriage, t); }
std::optional<Triage> parse_triage(std::string_view text) {
  return lookup(kTriage, text);
}

bool ApiSignature::same_api(const ApiSignature &other) const {
  return package == other.package && class_name == other.class_name &&
         method == other.method && signature == other.signature;
}

std::string ApiSignature::qualified_name() const {
  std::string out;
  if (!package.empty())
    out = package + ".";
  out += class_name + "." + method;
  return out;
}

std::string ApiSignature::signature_text() const {
  std::string out = "(";
  for (std::size_t i = 0; i < signature.size(); ++i) {
    if (i)
      out += ", ";
    out += signature[i];
  }
  return out + ")";
}

std::string TaintSpec::display() const {
  std::string out = std::string(to_string(node_type)) + " " +
                    api.qualified_name() + api.signature_text();
  if (api.position)
    out += "#" + std::to_string(*api.position);
  return out;
}

void check_spec(const TaintSpec &spec) {
  const auto &api = spec.api;
  if (api.package.empty() || api.class_name.empty() || api.method.empty())
    throw std::invalid_argument("spec F-tuple has an empty component: " +
                                spec.display());
  for (const auto &t : api.signature)
    if (t.empty())
      throw std::invalid_argument("spec signature has an empty entry: " +
                                  spec.display());
  bool positional = spec.node_type != SpecNodeType::ReturnValue;
  if (positional != api.position.has_value())
    throw std::invalid_argument(
        std::string(positional ? "Argument/Parameter spec needs a position: "
                               : "ReturnValue spec must not carry a position: ") +
        spec.display());
}

namespace {
auto spec_tuple(const TaintSpec &s) {
  return std::tie(s.api.package, s.api.class_name, s.api.method, s.node_type,
                  s.api.position, s.api.signature, s.role, s.cwe);
}
} // namespace

bool spec_less(const TaintSpec &a, const TaintSpec &b) {
  return spec_tuple(a) < spec_tuple(b);
}

std::string spec_match_key(const TaintSpec &spec) { return spec.display(); }

void sort_specs(std::vector<TaintSpec> &specs) {
  std::sort(specs.begin(), specs.end(), spec_less);
  specs.erase(std::unique(specs.begin(), specs.end()), specs.end());
}

DataflowGraph::DataflowGraph(std::vector<DfgNode> nodes,
                             std::vector<DfgEdge> edges,
                             std::vector<CallRecord> calls,
                             std::vector<FunctionInfo> functions)
    : nodes_(std::move(nodes)), edges_(std::move(edges)),
      calls_(std::move(calls)), functions_(std::move(functions)) {
  // First occurrence wins; duplicates are reported by validate_graph.
  for (std::size_t i = 0; i < nodes_.size(); ++i)
    node_index_.try_emplace(nodes_[i].id.value, i);
  for (std::size_t i = 0; i < calls_.size(); ++i) {
    call_index_.try_emplace(calls_[i].call_id, i);
    if (calls_[i].result_node)
      result_index_.try_emplace(calls_[i].result_node->value, i);
  }
  for (std::size_t i = 0; i < functions_.size(); ++i)
    function_index_.try_emplace(functions_[i].qualified_name, i);
}

const DfgNode *DataflowGraph::find_node(NodeId id) const {
  auto it = node_index_.find(id.value);
  return it == node_index_.end() ? nullptr : &nodes_[it->second];
}

const CallRecord *DataflowGraph::find_call(CallId id) const {
  auto it = call_index_.find(id);
  return it == call_index_.end() ? nullptr : &calls_[it->second];
}

const FunctionInfo *
DataflowGraph::find_function(std::string_view qualified_name) const {
  auto it = function_index_.find(qualified_name);
  return it == function_index_.end() ? nullptr : &functions_[it->second];
}

const CallRecord *DataflowGraph::call_with_result(NodeId id) const {
  auto it = result_index_.find(id.value);
  return it == result_index_.end() ? nullptr : &calls_[it->second];
}

bool DataflowGraph::operator==(const DataflowGraph &other) const {
  return nodes_ == other.nodes_ && edges_ == other.edges_ &&
         calls_ == other.calls_ && functions_ == other.functions_;
}

NodeId GraphBuilder::add_node(DfgNode node) {
  node.id = NodeId{next_node_++};
  nodes_.push_back(std::move(node));
  return nodes_.back().id;
}

void GraphBuilder::add_edge(NodeId src, NodeId dst, EdgeKind kind) {
  if (edge_set_.emplace(src.value, dst.value, kind).second)
    edges_.push_back(DfgEdge{src, dst, kind});
}

CallId GraphBuilder::add_call(CallRecord call) {
  call.call_id = next_call_++;
  calls_.push_back(std::move(call));
  return calls_.back().call_id;
}

void GraphBuilder::add_function(FunctionInfo fn) {
  functions_.push_back(std::move(fn));
}

CallRecord &GraphBuilder::call(CallId id) { return calls_.at(id - 1); }
DfgNode &GraphBuilder::node(NodeId id) { return nodes_.at(id.value - 1); }

DataflowGraph GraphBuilder::build() && {
  return DataflowGraph(std::move(nodes_), std::move(edges_), std::move(calls_),
                       std::move(functions_));
}

std::vector<Violation> validate_graph(const DataflowGraph &g) {
  std::vector<Violation> out;
  auto id_text = [](NodeId id) { return std::to_string(id.value); };

  std::set<std::uint64_t> seen;
  for (const auto &n : g.nodes()) {
    if (!seen.insert(n.id.value).second)
      out.push_back({"duplicate node id", id_text(n.id)});
    if (n.line < 1)
      out.push_back({"invalid line", id_text(n.id)});
    if (n.column < 1)
      out.push_back({"invalid column", id_text(n.id)});
    if (n.kind == NodeKind::Argument) {
      if (n.position < -1)
        out.push_back({"invalid argument position", id_text(n.id)});
      if (!n.call_id || !g.find_call(*n.call_id))
        out.push_back({"argument without call", id_text(n.id)});
    }
    if (n.kind == NodeKind::Parameter && n.position < 0)
      out.push_back({"invalid parameter position", id_text(n.id)});
    if (n.enclosing_function.empty())
      out.push_back({"missing enclosing function", id_text(n.id)});
  }

  for (const auto &e : g.edges()) {
    if (!g.find_node(e.src) || !g.find_node(e.dst))
      out.push_back({"dangling edge",
                     id_text(e.src) + " -> " + id_text(e.dst)});
    if (e.kind == EdgeKind::Data && e.src == e.dst)
      out.push_back({"data self-loop", id_text(e.src)});
  }

  std::set<CallId> call_ids;
  for (const auto &c : g.calls()) {
    auto cid = "call " + std::to_string(c.call_id);
    if (!call_ids.insert(c.call_id).second)
      out.push_back({"duplicate call id", cid});
    for (const auto &[pos, id] : c.arg_nodes)
      if (!g.find_node(id))
        out.push_back({"dangling call argument", cid + " arg " +
                                                     std::to_string(pos)});
    if (c.result_node && !g.find_node(*c.result_node))
      out.push_back({"dangling call result", cid});
    if (c.callee.method.empty() || c.callee.class_name.empty())
      out.push_back({"incomplete callee", cid});
  }

  for (const auto &f : g.functions())
    for (auto id : f.param_nodes)
      if (!g.find_node(id))
        out.push_back({"dangling parameter",
                       f.qualified_name + " " + id_text(id)});
  return out;
}

bool match_spec(const TaintSpec &spec, const DfgNode &node,
                const DataflowGraph &g) {
  switch (spec.node_type) {
  case SpecNodeType::ReturnValue: {
    if (node.kind != NodeKind::CallResult)
      return false;
    const auto *call = g.call_with_result(node.id);
    return call && call->callee.same_api(spec.api);
  }
  case SpecNodeType::Argument: {
    if (node.kind != NodeKind::Argument || !node.call_id ||
        !spec.api.position || node.position != *spec.api.position)
      return false;
    const auto *call = g.find_call(*node.call_id);
    return call && call->callee.same_api(spec.api);
  }
  case SpecNodeType::Parameter: {
    if (node.kind != NodeKind::Parameter || !spec.api.position ||
        node.position != *spec.api.position)
      return false;
    const auto *fn = g.find_function(node.function_id);
    return fn && !fn->api.is_external && fn->api.same_api(spec.api);
  }
  }
  return false;
}

std::string alert_id(std::string_view project, Cwe cwe,
                     std::span<const NodeId> nodes) {
  // Length-prefixed fields keep the encoding unambiguous.
  std::ostringstream enc;
  auto field = [&](std::string_view s) { enc << s.size() << ':' << s << ';'; };
  field(project);
  field(to_string(cwe));
  field(nodes.empty() ? "" : std::to_string(nodes.front().value));
  field(nodes.empty() ? "" : std::to_string(nodes.back().value));
  enc << nodes.size() << ':';
  for (auto id : nodes)
    enc << id.value << ',';
  return sha256_hex(enc.str());
}

Alert make_alert(std::string_view project, const TaintPath &path,
                 const DataflowGraph &g) {
  Alert a;
  a.project = std::string(project);
  a.path = path;
  a.id = alert_id(project, path.cwe, path.nodes);
  for (auto id : path.nodes) {
    const auto *n = g.find_node(id);
    if (!n)
      throw std::invalid_argument("path references unknown node " +
                                  std::to_string(id.value));
    a.steps.push_back(PathStep{n->id, n->kind, n->file, n->line, n->column,
                               n->enclosing_function, n->code_text});
  }
  return a;
}

namespace {
std::string endpoint_key(const TaintSpec &spec, const PathStep &step) {
  return spec_match_key(spec) + "@" + step.file + ":" +
         std::to_string(step.line);
}
} // namespace

std::string source_key(const Alert &alert) {
  return endpoint_key(alert.path.source_spec, alert.source());
}

std::string sink_key(const Alert &alert) {
  return endpoint_key(alert.path.sink_spec, alert.sink());
}

} // namespace taintlens
