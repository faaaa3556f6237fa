#include "taintlens/json_io.hpp"

#include <sstream>

namespace taintlens {

namespace {

std::string join_violations(const std::vector<Violation> &vs) {
  std::string out = "graph validation failed:";
  for (const auto &v : vs)
    out += " [" + v.kind + ": " + v.detail + "]";
  return out;
}

template <typename T, typename F>
T parse_enum(const json &j, const char *key, F parse) {
  auto text = j.at(key).get<std::string>();
  auto v = parse(text);
  if (!v)
    throw FormatError(std::string("unknown ") + key + " '" + text + "'");
  return *v;
}

std::string opt_string(const json &j, const char *key) {
  auto it = j.find(key);
  return it == j.end() || it->is_null() ? std::string() : it->get<std::string>();
}

} // namespace

ValidationError::ValidationError(std::vector<Violation> violations)
    : std::runtime_error(join_violations(violations)),
      violations_(std::move(violations)) {}

json api_to_json(const ApiSignature &api) {
  json j = {{"package", api.package},
            {"class", api.class_name},
            {"method", api.method},
            {"signature", api.signature},
            {"is_external", api.is_external}};
  if (api.position)
    j["position"] = *api.position;
  return j;
}

ApiSignature api_from_json(const json &j) {
  ApiSignature api;
  api.package = j.at("package").get<std::string>();
  api.class_name = j.at("class").get<std::string>();
  api.method = j.at("method").get<std::string>();
  api.signature = j.at("signature").get<std::vector<std::string>>();
  if (auto it = j.find("position"); it != j.end() && !it->is_null())
    api.position = it->get<int>();
  api.is_external = j.value("is_external", true);
  return api;
}

std::string serialize_graph_jsonl(const DataflowGraph &g) {
  std::ostringstream out;
  for (const auto &n : g.nodes()) {
    json j = {{"rec", "node"},
              {"id", n.id.value},
              {"kind", to_string(n.kind)},
              {"file", n.file},
              {"line", n.line},
              {"column", n.column},
              {"enclosing_function", n.enclosing_function},
              {"code_text", n.code_text}};
    if (n.kind == NodeKind::Argument || n.kind == NodeKind::Parameter)
      j["position"] = n.position;
    if (n.call_id)
      j["call_id"] = *n.call_id;
    if (!n.function_id.empty())
      j["function_id"] = n.function_id;
    out << j.dump() << '\n';
  }
  for (const auto &e : g.edges()) {
    json j = {{"rec", "edge"},
              {"src", e.src.value},
              {"dst", e.dst.value},
              {"kind", to_string(e.kind)}};
    out << j.dump() << '\n';
  }
  for (const auto &c : g.calls()) {
    json args = json::array();
    for (const auto &[pos, id] : c.arg_nodes)
      args.push_back({pos, id.value});
    json j = {{"rec", "call"},         {"call_id", c.call_id},
              {"callee", api_to_json(c.callee)}, {"args", args},
              {"caller", c.caller},    {"file", c.file},
              {"line", c.line}};
    if (c.result_node)
      j["result"] = c.result_node->value;
    out << j.dump() << '\n';
  }
  for (const auto &f : g.functions()) {
    json params = json::array();
    for (auto id : f.param_nodes)
      params.push_back(id.value);
    json j = {{"rec", "function"},
              {"name", f.qualified_name},
              {"api", api_to_json(f.api)},
              {"visibility",
               f.visibility == Visibility::Public ? "Public" : "Private"},
              {"params", params},
              {"param_names", f.param_names},
              {"file", f.defined_in_file}};
    if (f.doc)
      j["doc"] = *f.doc;
    out << j.dump() << '\n';
  }
  return out.str();
}

DataflowGraph load_graph_jsonl(std::istream &in) {
  std::vector<DfgNode> nodes;
  std::vector<DfgEdge> edges;
  std::vector<CallRecord> calls;
  std::vector<FunctionInfo> functions;

  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos)
      continue;
    try {
      auto j = json::parse(line);
      auto rec = j.at("rec").get<std::string>();
      if (rec == "node") {
        DfgNode n;
        n.id = NodeId{j.at("id").get<std::uint64_t>()};
        n.kind = parse_enum<NodeKind>(j, "kind", parse_node_kind);
        n.position = j.value("position", 0);
        if (auto it = j.find("call_id"); it != j.end())
          n.call_id = it->get<CallId>();
        n.function_id = opt_string(j, "function_id");
        n.file = opt_string(j, "file");
        n.line = j.value("line", 1);
        n.column = j.value("column", 1);
        n.enclosing_function = opt_string(j, "enclosing_function");
        n.code_text = opt_string(j, "code_text");
        nodes.push_back(std::move(n));
      } else if (rec == "edge") {
        edges.push_back({NodeId{j.at("src").get<std::uint64_t>()},
                         NodeId{j.at("dst").get<std::uint64_t>()},
                         parse_enum<EdgeKind>(j, "kind", parse_edge_kind)});
      } else if (rec == "call") {
        CallRecord c;
        c.call_id = j.at("call_id").get<CallId>();
        c.callee = api_from_json(j.at("callee"));
        for (const auto &a : j.at("args"))
          c.arg_nodes.emplace(a.at(0).get<int>(),
                              NodeId{a.at(1).get<std::uint64_t>()});
        if (auto it = j.find("result"); it != j.end() && !it->is_null())
          c.result_node = NodeId{it->get<std::uint64_t>()};
        c.caller = opt_string(j, "caller");
        c.file = opt_string(j, "file");
        c.line = j.value("line", 1);
        calls.push_back(std::move(c));
      } else if (rec == "function") {
        FunctionInfo f;
        f.qualified_name = j.at("name").get<std::string>();
        f.api = api_from_json(j.at("api"));
        auto vis = j.value("visibility", std::string("Public"));
        if (vis != "Public" && vis != "Private")
          throw FormatError("unknown visibility '" + vis + "'");
        f.visibility = vis == "Public" ? Visibility::Public : Visibility::Private;
        for (const auto &p : j.at("params"))
          f.param_nodes.push_back(NodeId{p.get<std::uint64_t>()});
        f.param_names =
            j.value("param_names", std::vector<std::string>{});
        f.defined_in_file = opt_string(j, "file");
        if (auto it = j.find("doc"); it != j.end() && !it->is_null())
          f.doc = it->get<std::string>();
        functions.push_back(std::move(f));
      } else {
        throw FormatError("unknown record type '" + rec + "'");
      }
    } catch (const FormatError &e) {
      throw FormatError(e.what(), lineno);
    } catch (const json::exception &e) {
      throw FormatError(e.what(), lineno);
    }
  }

  DataflowGraph g(std::move(nodes), std::move(edges), std::move(calls),
                  std::move(functions));
  if (auto violations = validate_graph(g); !violations.empty())
    throw ValidationError(std::move(violations));
  return g;
}

json spec_to_json(const TaintSpec &spec) {
  json j = {{"node_type", to_string(spec.node_type)},
            {"package", spec.api.package},
            {"class", spec.api.class_name},
            {"method", spec.api.method},
            {"signature", spec.api.signature},
            {"role", to_string(spec.role)},
            {"cwe", to_string(spec.cwe)}};
  if (spec.api.position)
    j["position"] = *spec.api.position;
  return j;
}

TaintSpec spec_from_json(const json &j) {
  TaintSpec s;
  try {
    s.node_type = parse_enum<SpecNodeType>(j, "node_type", parse_spec_node_type);
    s.api.package = j.at("package").get<std::string>();
    s.api.class_name = j.at("class").get<std::string>();
    s.api.method = j.at("method").get<std::string>();
    s.api.signature = j.at("signature").get<std::vector<std::string>>();
    if (auto it = j.find("position"); it != j.end() && !it->is_null())
      s.api.position = it->get<int>();
    s.api.is_external = s.node_type != SpecNodeType::Parameter;
    s.role = parse_enum<Role>(j, "role", parse_role);
    s.cwe = parse_enum<Cwe>(j, "cwe", parse_cwe);
  } catch (const json::exception &e) {
    throw FormatError(std::string("bad spec: ") + e.what());
  }
  try {
    check_spec(s);
  } catch (const std::invalid_argument &e) {
    throw FormatError(e.what());
  }
  return s;
}

std::string specs_to_text(std::vector<TaintSpec> specs) {
  sort_specs(specs);
  json arr = json::array();
  for (const auto &s : specs)
    arr.push_back(spec_to_json(s));
  return arr.dump(2) + "\n";
}

std::vector<TaintSpec> parse_specs(std::string_view text) {
  json arr;
  try {
    arr = json::parse(text);
  } catch (const json::exception &e) {
    throw FormatError(std::string("spec file: ") + e.what());
  }
  if (!arr.is_array())
    throw FormatError("spec file must be a JSON array");
  std::vector<TaintSpec> specs;
  for (const auto &j : arr)
    specs.push_back(spec_from_json(j));
  return specs;
}

json verdict_to_json(const Verdict &v) {
  json j = {{"explanation", v.explanation},
            {"verdict", v.verdict},
            {"source_is_fp", v.source_is_fp},
            {"sink_is_fp", v.sink_is_fp}};
  if (v.annotation)
    j["annotation"] = *v.annotation;
  return j;
}

Verdict verdict_from_json(const json &j) {
  Verdict v;
  v.explanation = j.value("explanation", std::string());
  v.verdict = j.value("verdict", true);
  v.source_is_fp = j.value("source_is_fp", false);
  v.sink_is_fp = j.value("sink_is_fp", false);
  if (auto it = j.find("annotation"); it != j.end() && !it->is_null())
    v.annotation = it->get<std::string>();
  return v;
}

namespace {

json snippet_to_json(const Snippet &s) {
  return {{"lines", s.lines},
          {"start_line", s.start_line},
          {"marked_line", s.marked_line}};
}

Snippet snippet_from_json(const json &j) {
  return Snippet{j.value("lines", std::string()), j.value("start_line", 1),
                 j.value("marked_line", 1)};
}

} // namespace

json alert_to_json(const Alert &alert) {
  json steps = json::array();
  for (const auto &s : alert.steps)
    steps.push_back({{"id", s.id.value},
                     {"kind", to_string(s.kind)},
                     {"file", s.file},
                     {"line", s.line},
                     {"column", s.column},
                     {"function", s.function},
                     {"code", s.code}});
  json intermediate = json::array();
  for (const auto &i : alert.snippets.intermediate)
    intermediate.push_back(
        {{"file", i.file}, {"line", i.line}, {"code_text", i.code_text}});
  const auto &sn = alert.snippets;
  return {
      {"id", alert.id},
      {"project", alert.project},
      {"cwe", to_string(alert.path.cwe)},
      {"source_spec", spec_to_json(alert.path.source_spec)},
      {"sink_spec", spec_to_json(alert.path.sink_spec)},
      {"path", steps},
      {"snippets",
       {{"source", snippet_to_json(sn.source_snippet)},
        {"sink", snippet_to_json(sn.sink_snippet)},
        {"source_function", sn.source_function},
        {"source_class", sn.source_class},
        {"sink_function", sn.sink_function},
        {"sink_class", sn.sink_class},
        {"intermediate", intermediate}}},
      {"verdict", alert.verdict ? verdict_to_json(*alert.verdict) : json()},
      {"triage", to_string(alert.triage)},
  };
}

Alert alert_from_json(const json &j) {
  try {
    Alert a;
    a.id = j.at("id").get<std::string>();
    a.project = j.value("project", std::string());
    a.path.cwe = parse_enum<Cwe>(j, "cwe", parse_cwe);
    a.path.source_spec = spec_from_json(j.at("source_spec"));
    a.path.sink_spec = spec_from_json(j.at("sink_spec"));
    for (const auto &s : j.at("path")) {
      PathStep step;
      step.id = NodeId{s.at("id").get<std::uint64_t>()};
      step.kind = parse_enum<NodeKind>(s, "kind", parse_node_kind);
      step.file = s.value("file", std::string());
      step.line = s.value("line", 1);
      step.column = s.value("column", 1);
      step.function = s.value("function", std::string());
      step.code = s.value("code", std::string());
      a.path.nodes.push_back(step.id);
      a.steps.push_back(std::move(step));
    }
    if (a.steps.size() < 2)
      throw FormatError("alert " + a.id + " has fewer than 2 path nodes");
    if (auto it = j.find("snippets"); it != j.end() && it->is_object()) {
      const auto &sj = *it;
      auto &sn = a.snippets;
      sn.source_snippet = snippet_from_json(sj.value("source", json::object()));
      sn.sink_snippet = snippet_from_json(sj.value("sink", json::object()));
      sn.source_function = sj.value("source_function", std::string());
      sn.source_class = sj.value("source_class", std::string());
      sn.sink_function = sj.value("sink_function", std::string());
      sn.sink_class = sj.value("sink_class", std::string());
      for (const auto &i : sj.value("intermediate", json::array()))
        sn.intermediate.push_back({i.value("file", std::string()),
                                   i.value("line", 1),
                                   i.value("code_text", std::string())});
    }
    if (auto it = j.find("verdict"); it != j.end() && it->is_object())
      a.verdict = verdict_from_json(*it);
    a.triage = parse_enum<Triage>(j, "triage", parse_triage);
    return a;
  } catch (const json::exception &e) {
    throw FormatError(std::string("bad alert: ") + e.what());
  }
}

std::string alerts_file_to_text(const AlertsFile &file) {
  json alerts = json::array();
  for (const auto &a : file.alerts)
    alerts.push_back(alert_to_json(a));
  json j = {{"metadata",
             {{"project", file.project},
              {"cwe", to_string(file.cwe)},
              {"truncated", file.truncated},
              {"spec_counts", file.spec_counts}}},
            {"alerts", alerts}};
  return j.dump(2) + "\n";
}

AlertsFile parse_alerts_file(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception &e) {
    throw FormatError(std::string("alerts file: ") + e.what());
  }
  AlertsFile f;
  try {
    const auto &meta = j.at("metadata");
    f.project = meta.value("project", std::string());
    f.cwe = parse_enum<Cwe>(meta, "cwe", parse_cwe);
    f.truncated = meta.value("truncated", false);
    f.spec_counts = meta.value("spec_counts", std::map<std::string, int>{});
    for (const auto &a : j.at("alerts"))
      f.alerts.push_back(alert_from_json(a));
  } catch (const json::exception &e) {
    throw FormatError(std::string("alerts file: ") + e.what());
  }
  return f;
}

} // namespace taintlens
