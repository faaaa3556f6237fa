#pragma once

#include "taintlens/graph.hpp"

#include <nlohmann/json.hpp>

#include <istream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace taintlens {

using json = nlohmann::json;

/// Malformed input; `line` is 1-based when the input is line-oriented.
class FormatError : public std::runtime_error {
public:
  FormatError(const std::string &what, int line = 0)
      : std::runtime_error(line > 0 ? "line " + std::to_string(line) + ": " +
                                          what
                                    : what),
        line_(line) {}
  int line() const { return line_; }

private:
  int line_;
};

class ValidationError : public std::runtime_error {
public:
  explicit ValidationError(std::vector<Violation> violations);
  const std::vector<Violation> &violations() const { return violations_; }

private:
  std::vector<Violation> violations_;
};

// Graph interchange (dfg.jsonl): one record per line, tagged by "rec".
std::string serialize_graph_jsonl(const DataflowGraph &g);
/// Parses and validates. Throws FormatError or ValidationError.
DataflowGraph load_graph_jsonl(std::istream &in);

json api_to_json(const ApiSignature &api);
ApiSignature api_from_json(const json &j);

// Spec file: a JSON array in canonical order.
json spec_to_json(const TaintSpec &spec);
TaintSpec spec_from_json(const json &j);
std::string specs_to_text(std::vector<TaintSpec> specs);
std::vector<TaintSpec> parse_specs(std::string_view text);

json verdict_to_json(const Verdict &v);
Verdict verdict_from_json(const json &j);

json alert_to_json(const Alert &alert);
Alert alert_from_json(const json &j);

struct AlertsFile {
  std::string project;
  Cwe cwe = Cwe::Cwe22;
  bool truncated = false;
  std::map<std::string, int> spec_counts;
  std::vector<Alert> alerts;
};

std::string alerts_file_to_text(const AlertsFile &file);
AlertsFile parse_alerts_file(std::string_view text);

} // namespace taintlens
