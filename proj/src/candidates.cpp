#include "taintlens/candidates.hpp"
#include "taintlens/json_io.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <tuple>

namespace taintlens {

bool package_matches(std::string_view package, std::string_view prefix) {
  if (prefix.empty() || package.size() < prefix.size() ||
      package.compare(0, prefix.size(), prefix) != 0)
    return false;
  return package.size() == prefix.size() || package[prefix.size()] == '.';
}

namespace {

using ApiKey = std::tuple<std::string, std::string, std::string,
                          std::vector<std::string>>;

ApiKey key_of(const ApiSignature &api) {
  return {api.package, api.class_name, api.method, api.signature};
}

} // namespace

std::vector<ExternalCandidate> extract_external(const DataflowGraph &g,
                                                const FilterConfig &cfg) {
  std::map<ApiKey, ExternalCandidate> by_api;
  std::map<ApiKey, std::set<int>> positions;
  for (const auto &call : g.calls()) {
    const auto &api = call.callee;
    if (!api.is_external)
      continue;
    bool skipped = std::any_of(
        cfg.skip_packages.begin(), cfg.skip_packages.end(),
        [&](const std::string &p) { return package_matches(api.package, p); });
    if (skipped)
      continue;
    auto key = key_of(api);
    auto &cand = by_api[key];
    if (cand.occurrence_count == 0) {
      cand.api = api;
      cand.api.position.reset();
    }
    ++cand.occurrence_count;
    cand.may_be_source = cand.may_be_source || call.result_node.has_value();
    for (const auto &[pos, node] : call.arg_nodes)
      positions[key].insert(pos);
  }
  std::vector<ExternalCandidate> out;
  out.reserve(by_api.size());
  for (auto &[key, cand] : by_api) {
    const auto &ps = positions[key];
    cand.sink_positions.assign(ps.begin(), ps.end());
    out.push_back(std::move(cand));
  }
  return out;
}

std::vector<InternalParamCandidate>
extract_internal(const DataflowGraph &g, const FilterConfig &cfg) {
  auto from_test = [&](const CallRecord &call) {
    if (const auto *caller = g.find_function(call.caller))
      return caller->defined_in_file.find(cfg.test_path_marker) !=
             std::string::npos;
    return call.file.find(cfg.test_path_marker) != std::string::npos;
  };

  std::set<ApiKey> tested;
  for (const auto &call : g.calls())
    if (!call.callee.is_external && from_test(call))
      tested.insert(key_of(call.callee));

  std::vector<InternalParamCandidate> out;
  for (const auto &fn : g.functions()) {
    if (fn.visibility != Visibility::Public || !tested.count(key_of(fn.api)))
      continue;
    for (std::size_t i = 0; i < fn.param_nodes.size(); ++i) {
      InternalParamCandidate c;
      c.function = fn.qualified_name;
      c.api = fn.api;
      c.api.position.reset();
      c.position = static_cast<int>(i);
      if (i < fn.param_names.size())
        c.param_name = fn.param_names[i];
      else if (const auto *n = g.find_node(fn.param_nodes[i]))
        c.param_name = n->code_text;
      c.doc = fn.doc;
      out.push_back(std::move(c));
    }
  }
  std::sort(out.begin(), out.end(), [](const auto &a, const auto &b) {
    return std::tie(a.function, a.position) < std::tie(b.function, b.position);
  });
  return out;
}

nlohmann::json
candidates_to_json(const std::vector<ExternalCandidate> &ext,
                   const std::vector<InternalParamCandidate> &in) {
  auto e = nlohmann::json::array();
  for (const auto &c : ext)
    e.push_back({{"api", api_to_json(c.api)},
                 {"may_be_source", c.may_be_source},
                 {"sink_positions", c.sink_positions},
                 {"occurrence_count", c.occurrence_count}});
  auto i = nlohmann::json::array();
  for (const auto &c : in) {
    nlohmann::json j = {{"function", c.function},
                        {"api", api_to_json(c.api)},
                        {"position", c.position},
                        {"param_name", c.param_name}};
    if (c.doc)
      j["doc"] = *c.doc;
    i.push_back(std::move(j));
  }
  return {{"external", e}, {"internal", i}};
}

} // namespace taintlens
