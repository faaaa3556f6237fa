#include "taintlens/sarif.hpp"

#include <set>

namespace taintlens {

using json = nlohmann::json;

namespace {

json location(const PathStep &s, const std::string &alert_id) {
  if (s.file.empty() || s.line < 1)
    throw MissingLocation("alert " + alert_id + ": node " +
                          std::to_string(s.id.value) + " has no location");
  return {{"physicalLocation",
           {{"artifactLocation", {{"uri", s.file}}},
            {"region", {{"startLine", s.line}, {"startColumn", s.column}}}}},
          {"message", {{"text", s.code}}}};
}

} // namespace

json emit_sarif(const std::vector<Alert> &alerts) {
  std::set<Cwe> cwes;
  json results = json::array();
  for (const auto &a : alerts) {
    if (a.steps.empty())
      throw MissingLocation("alert " + a.id + " has an empty path");
    cwes.insert(a.path.cwe);
    json flow = json::array();
    for (const auto &s : a.steps)
      flow.push_back({{"location", location(s, a.id)}});
    json sink = location(a.sink(), a.id);
    sink.erase("message");
    std::string msg = "Unsanitized data from " +
                      a.path.source_spec.api.qualified_name() + " reaches " +
                      a.path.sink_spec.api.qualified_name() + ".";
    json r = {{"ruleId", to_string(a.path.cwe)},
              {"level", "error"},
              {"message", {{"text", msg}}},
              {"locations", json::array({sink})},
              {"partialFingerprints", {{"alertId/v1", a.id}}},
              {"codeFlows",
               json::array({{{"threadFlows",
                              json::array({{{"locations", flow}}})}}})}};
    if (a.verdict && !a.verdict->explanation.empty())
      r["properties"] = {{"explanation", a.verdict->explanation}};
    results.push_back(std::move(r));
  }
  json rules = json::array();
  for (auto c : cwes)
    rules.push_back({{"id", to_string(c)},
                     {"name", cwe_name(c)},
                     {"shortDescription", {{"text", cwe_name(c)}}},
                     {"fullDescription", {{"text", cwe_description(c)}}}});
  return {{"$schema", "https://json.schemastore.org/sarif-2.1.0.json"},
          {"version", "2.1.0"},
          {"runs",
           json::array({{{"tool",
                          {{"driver",
                            {{"name", "taintlens"},
                             {"version", "0.1.0"},
                             {"rules", rules}}}}},
                         {"results", results}}})}};
}

} // namespace taintlens
