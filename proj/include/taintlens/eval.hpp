#pragma once

#include "taintlens/graph.hpp"
#include "taintlens/spec_infer.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace taintlens {

struct FixLocation {
  std::string file;
  std::string function;
  /// Optional inclusive line range narrowing the match.
  std::optional<std::pair<int, int>> lines;

  bool operator==(const FixLocation &) const = default;
};

struct ProjectMetadata {
  std::optional<std::string> repo_url;
  std::optional<std::string> vulnerable_version;
  std::optional<std::string> fixed_version;

  bool operator==(const ProjectMetadata &) const = default;
};

struct ProjectLabel {
  std::string project_id;
  Cwe cwe = Cwe::Cwe22;
  std::optional<std::string> cve_id;
  std::vector<FixLocation> fix_locations;
  ProjectMetadata metadata;
  /// Project root relative to the manifest's directory.
  std::optional<std::string> path;
  /// A known-clean control project: no fix locations, kept out of the
  /// aggregate metrics, reported with its alert count.
  bool negative = false;

  bool operator==(const ProjectLabel &) const = default;
};

struct DatasetManifest {
  std::vector<ProjectLabel> projects;

  const ProjectLabel *find(std::string_view project_id) const;
};

/// Throws FormatError (bad JSON / shape) or ValidationError (duplicate ids,
/// empty fix locations on a labeled project).
DatasetManifest parse_manifest(std::string_view text);
DatasetManifest load_manifest(const std::filesystem::path &file);
nlohmann::json manifest_to_json(const DatasetManifest &m);

bool touches_fix_location(const Alert &alert, const ProjectLabel &label);
/// Alerts with at least one step inside a fixed (file, function).
int count_vul_paths(const std::vector<Alert> &alerts, const ProjectLabel &label);

struct ProjectMetrics {
  std::string project_id;
  Cwe cwe = Cwe::Cwe22;
  int n_paths = 0;
  int n_vul_paths = 0;
  int rec = 0;
  std::optional<double> prec;
  double f1 = 0;
  bool negative = false;
};

struct MetricsSummary {
  int projects = 0;
  int detected = 0;
  std::optional<double> avg_fdr;
  double avg_f1 = 0;
};

struct MetricsReport {
  std::vector<ProjectMetrics> per_project;
  int detected = 0;
  std::optional<double> avg_fdr;
  double avg_f1 = 0;
  std::map<Cwe, MetricsSummary> by_cwe;
};

struct ProjectRun {
  ProjectLabel label;
  std::vector<Alert> alerts;
};

/// Aggregates from per-project path counts; `n_vul_paths` must be set.
/// Negative projects are listed but excluded from every aggregate.
MetricsReport metrics_from_counts(std::vector<ProjectMetrics> projects);
MetricsReport compute_metrics(const std::vector<ProjectRun> &runs);

nlohmann::json metrics_to_json(const MetricsReport &r);
/// Fixed-width table: one row per CWE plus an overall row.
std::string metrics_table(const MetricsReport &r);

struct SpecStats {
  int unique_sources = 0;
  int unique_sinks = 0;
  int recurring_sources = 0;
  int recurring_sinks = 0;

  bool operator==(const SpecStats &) const = default;
};

/// Unique specs occur in exactly one project's set, recurring ones in two or
/// more.
std::map<Cwe, SpecStats>
spec_stats(const std::map<std::string, LabeledSpecs> &spec_sets);

} // namespace taintlens
