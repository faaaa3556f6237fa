#include "taintlens/mock_llm.hpp"
#include "taintlens/json_io.hpp"
#include "taintlens/spec_infer.hpp"
#include "taintlens/util.hpp"

#include <algorithm>
#include <regex>

namespace taintlens {

MockRules mock_rules_from_json(const json &j) {
  MockRules r;
  for (const auto &e : j.value("labels", json::array())) {
    MockRules::ApiRule a;
    a.package = e.at("package").get<std::string>();
    a.class_name = e.at("class").get<std::string>();
    a.method = e.at("method").get<std::string>();
    a.label = e.at("label").get<std::string>();
    a.sink_args = e.value("sink_args", std::vector<int>{});
    if (auto it = e.find("cwe"); it != e.end()) {
      if (it->is_string())
        a.cwes.push_back(it->get<std::string>());
      else
        a.cwes = it->get<std::vector<std::string>>();
    }
    r.labels.push_back(std::move(a));
  }
  for (const auto &e : j.value("internal", json::array()))
    r.internal.push_back({e.at("function").get<std::string>(),
                          e.value("position", 0),
                          e.at("label").get<std::string>()});
  for (const auto &e : j.value("verdicts", json::array())) {
    MockRules::VerdictRule v;
    v.source = e.value("source", "");
    v.sink = e.value("sink", "");
    v.reply = {{"explanation", e.value("explanation", "scripted verdict")},
               {"verdict", e.value("verdict", true)},
               {"source_is_fp", e.value("source_is_fp", false)},
               {"sink_is_fp", e.value("sink_is_fp", false)}};
    r.verdicts.push_back(std::move(v));
  }
  if (auto it = j.find("default_verdict"); it != j.end())
    r.default_verdict = *it;
  return r;
}

MockRules load_mock_rules(const std::filesystem::path &path) {
  auto text = read_file(path);
  if (!text)
    throw FormatError("cannot read mock rules " + path.string());
  auto j = json::parse(*text, nullptr, false);
  if (j.is_discarded() || !j.is_object())
    throw FormatError("mock rules " + path.string() + " is not a JSON object");
  try {
    return mock_rules_from_json(j);
  } catch (const json::exception &e) {
    throw FormatError("mock rules " + path.string() + ": " + e.what());
  }
}

TransportResponse MockLabeler::post(const json &payload) {
  return {200, completion_body(reply(payload_user_text(payload))), ""};
}

namespace {

// CSV rows following `header`, up to the first blank line.
std::vector<std::vector<std::string>> table_rows(const std::vector<std::string> &lines,
                                                 std::string_view header) {
  std::vector<std::vector<std::string>> rows;
  auto it = std::find(lines.begin(), lines.end(), header);
  if (it == lines.end())
    return rows;
  for (++it; it != lines.end() && !it->empty(); ++it)
    rows.push_back(csv_split(*it));
  return rows;
}

std::string line_with_prefix(const std::vector<std::string> &lines,
                             std::string_view prefix) {
  for (const auto &l : lines)
    if (l.rfind(prefix, 0) == 0)
      return l;
  return {};
}

} // namespace

std::string MockLabeler::reply(const std::string &user_text) const {
  auto lines = split_lines(user_text);

  if (std::find(lines.begin(), lines.end(), kInternalHeader) != lines.end()) {
    json out = json::array();
    for (const auto &row : table_rows(lines, kInternalHeader)) {
      if (row.size() < 7)
        continue;
      auto function = row[1] + "." + row[2] + "." + row[3];
      int position = std::stoi(row[5]);
      std::string label = "None";
      for (const auto &r : rules_.internal)
        if (r.function == function && r.position == position) {
          label = r.label;
          break;
        }
      out.push_back({{"api_index", std::stoi(row[0])}, {"label", label}});
    }
    return out.dump();
  }

  if (std::find(lines.begin(), lines.end(), kExternalHeader) != lines.end()) {
    std::string cwe;
    std::smatch m;
    static const std::regex cwe_re("CWE-[0-9]+");
    auto target = line_with_prefix(lines, "Target vulnerability:");
    if (std::regex_search(target, m, cwe_re))
      cwe = m.str();
    json out = json::array();
    for (const auto &row : table_rows(lines, kExternalHeader)) {
      if (row.size() < 5)
        continue;
      json entry = {{"api_index", std::stoi(row[0])}, {"label", "None"}};
      for (const auto &r : rules_.labels) {
        if (r.package != row[1] || r.class_name != row[2] || r.method != row[3])
          continue;
        if (!r.cwes.empty() &&
            std::find(r.cwes.begin(), r.cwes.end(), cwe) == r.cwes.end())
          continue;
        entry["label"] = r.label;
        if (!r.sink_args.empty())
          entry["sink_args"] = r.sink_args;
        break;
      }
      out.push_back(std::move(entry));
    }
    return "```json\n" + out.dump(2) + "\n```";
  }

  auto source = line_with_prefix(lines, "Source: ");
  auto sink = line_with_prefix(lines, "Sink: ");
  for (const auto &v : rules_.verdicts)
    if ((v.source.empty() || source.find(v.source) != std::string::npos) &&
        (v.sink.empty() || sink.find(v.sink) != std::string::npos))
      return v.reply.dump();
  return rules_.default_verdict.dump();
}

} // namespace taintlens
