#pragma once

#include "taintlens/llm.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace taintlens {

/// Rule table for the hermetic backend.
///
///   {"labels":   [{"package", "class", "method", "label", "sink_args"?, "cwe"?}],
///    "internal": [{"function", "position", "label"}],
///    "verdicts": [{"source"?, "sink"?, "verdict", "source_is_fp"?,
///                  "sink_is_fp"?, "explanation"?}],
///    "default_verdict": {...}}
///
/// "cwe" may be a string or a list; absent means every CWE. Verdict rules
/// match by substring against the prompt's Source:/Sink: lines; the first
/// matching rule wins.
struct MockRules {
  struct ApiRule {
    std::string package, class_name, method, label;
    std::vector<int> sink_args;
    std::vector<std::string> cwes;
  };
  struct ParamRule {
    std::string function;
    int position = 0;
    std::string label;
  };
  struct VerdictRule {
    std::string source, sink;
    nlohmann::json reply;
  };
  std::vector<ApiRule> labels;
  std::vector<ParamRule> internal;
  std::vector<VerdictRule> verdicts;
  nlohmann::json default_verdict = {{"explanation", "no rule matched"},
                                    {"verdict", true}};
};

MockRules mock_rules_from_json(const nlohmann::json &j);
MockRules load_mock_rules(const std::filesystem::path &path);

/// Answers labeling and contextual-analysis prompts from a rule table.
/// Stateless, so safe to share across threads.
class MockLabeler : public ChatTransport {
public:
  explicit MockLabeler(MockRules rules) : rules_(std::move(rules)) {}
  TransportResponse post(const nlohmann::json &payload) override;
  /// The reply text for a prompt's user content.
  std::string reply(const std::string &user_text) const;

private:
  MockRules rules_;
};

} // namespace taintlens
