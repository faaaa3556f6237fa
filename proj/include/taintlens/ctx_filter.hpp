#pragma once

#include "taintlens/graph.hpp"
#include "taintlens/llm.hpp"

#include <nlohmann/json.hpp>

#include <functional>
#include <map>
#include <string>
#include <vector>

namespace taintlens {

inline constexpr int kSnippetRadius = 5;
inline constexpr int kDefaultSegments = 10;

/// Relative path -> file contents, used to cut snippets.
using FileTexts = std::map<std::string, std::string, std::less<>>;

/// Lines [line-radius, line+radius] clipped to the file, with an inline
/// comment appended to `line`.
Snippet build_snippet(std::string_view file_text, int line,
                      std::string_view marker, int radius = kSnippetRadius);

/// Interior nodes to show the model: all of them when there are at most
/// `segments`, otherwise one per equal segment, preferring call nodes.
std::vector<NodeId> select_intermediate_steps(const std::vector<PathStep> &steps,
                                              int segments = kDefaultSegments);

SnippetContext build_snippet_context(const Alert &alert, const FileTexts &files,
                                     int segments = kDefaultSegments);

std::vector<ChatMessage> build_context_prompt(const Alert &alert, Cwe cwe,
                                              const SnippetContext &ctx);

/// Never throws; unparseable text yields a kept verdict with an annotation.
Verdict parse_verdict(std::string_view text);

enum class FilterAction { Kept, Dropped, Pruned, Unevaluated };
enum class FilterReason { Verdict, SourceFp, SinkFp, Error };

std::string_view to_string(FilterAction a);
std::string_view to_string(FilterReason r);

struct AuditRecord {
  std::string alert_id;
  FilterAction action = FilterAction::Kept;
  FilterReason by = FilterReason::Verdict;
  bool queried = false;
  std::string detail;

  bool operator==(const AuditRecord &) const = default;
};

nlohmann::json audit_to_json(const AuditRecord &r);
/// One JSON object per line.
std::string audit_to_jsonl(const std::vector<AuditRecord> &records);

struct FilterOptions {
  int segments = kDefaultSegments;
  /// Query every alert concurrently; disables pruning.
  bool parallel = false;
  int parallelism = 4;
};

struct FilterResult {
  /// Surviving alerts in processing (alert id) order, with snippets and
  /// verdicts attached.
  std::vector<Alert> kept;
  std::vector<AuditRecord> audit;
  int llm_calls = 0;
};

/// Pruning key for an endpoint: spec identity plus node id.
std::string prune_key(const TaintSpec &spec, NodeId node);

/// Contextual filtering of one (project, cwe) run. Alerts are queried in
/// id order; a flagged source or sink prunes later alerts sharing it.
/// Transport failures keep the alert as unevaluated; AuthError propagates.
FilterResult filter_paths(const std::vector<Alert> &alerts, ChatClient &llm,
                          Cwe cwe, const FileTexts &files,
                          const FilterOptions &opts = {});

} // namespace taintlens
