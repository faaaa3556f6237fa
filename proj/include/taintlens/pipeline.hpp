#pragma once

#include "taintlens/candidates.hpp"
#include "taintlens/ctx_filter.hpp"
#include "taintlens/engine.hpp"
#include "taintlens/eval.hpp"
#include "taintlens/llm.hpp"
#include "taintlens/spec_infer.hpp"

#include <filesystem>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace taintlens {

struct LlmBackend {
  LlmConfig cfg;
  /// Selects the rule-table backend when set.
  std::optional<std::filesystem::path> mock_rules;
  /// Takes precedence over everything else; used by tests.
  std::shared_ptr<ChatTransport> transport;
};

/// "mock:<rules-file>" or "http". Throws std::invalid_argument otherwise.
LlmBackend parse_llm_selector(std::string_view selector, LlmConfig cfg = {});
std::shared_ptr<ChatTransport> make_transport(const LlmBackend &backend);

struct RunConfig {
  std::filesystem::path project_root;
  /// Defaults to the project root's directory name.
  std::string project_id;
  Cwe cwe = Cwe::Cwe22;
  LlmBackend llm;
  EngineOptions engine;
  /// When set, specs come from these files and inference is skipped.
  std::optional<std::vector<std::filesystem::path>> spec_files;
  std::filesystem::path output_dir;
  bool skip_filter = false;
  FilterConfig candidate_filter;
  int parallelism = 1;
};

/// A pipeline stage failed. `validation` marks bad input (exit code 3)
/// as opposed to a runtime failure (exit code 2).
class StageError : public std::runtime_error {
public:
  StageError(std::string stage, const std::string &what, bool validation)
      : std::runtime_error(stage + ": " + what), stage_(std::move(stage)),
        validation_(validation) {}
  const std::string &stage() const { return stage_; }
  bool validation() const { return validation_; }

private:
  std::string stage_;
  bool validation_;
};

struct LoadedProject {
  DataflowGraph graph;
  FileTexts files;
  std::optional<std::string> readme;
};

/// Parses the project's `.ml` sources, or loads `dfg.jsonl` when there are
/// none.
LoadedProject load_project(const std::filesystem::path &root);

struct AnalyzeResult {
  std::string project_id;
  DataflowGraph graph;
  std::vector<ExternalCandidate> external;
  std::vector<InternalParamCandidate> internal;
  LabeledSpecs specs;
  std::vector<int> failed_batches;
  bool truncated = false;
  std::vector<Alert> alerts;
  std::vector<Alert> kept;
  std::vector<AuditRecord> audit;
  int label_calls = 0;
  int filter_calls = 0;
};

/// Extract -> infer -> analyze -> filter for one project and CWE. Writes
/// dfg.jsonl, candidates.json, specs.json, alerts.json,
/// filtered_alerts.json, filter_audit.jsonl and report.sarif into
/// cfg.output_dir. Artifacts of completed stages survive a later failure.
AnalyzeResult run_analyze(const RunConfig &cfg);

struct DatasetResult {
  std::vector<AnalyzeResult> projects;
  MetricsReport metrics;
};

/// Runs every manifest project (roots resolved against the manifest's
/// directory) into output_dir/<project_id>/ and writes metrics.json,
/// metrics.txt and spec_stats.json into output_dir.
DatasetResult run_dataset(const std::filesystem::path &manifest,
                          const RunConfig &base);

/// Metrics from previously written results: output_dir/<project_id>/
/// filtered_alerts.json, falling back to alerts.json.
MetricsReport evaluate_results(const DatasetManifest &manifest,
                               const std::filesystem::path &results_dir);

nlohmann::json spec_stats_to_json(const std::map<Cwe, SpecStats> &stats);

} // namespace taintlens
