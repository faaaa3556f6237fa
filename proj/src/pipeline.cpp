#include "taintlens/pipeline.hpp"
#include "taintlens/json_io.hpp"
#include "taintlens/minilang.hpp"
#include "taintlens/mock_llm.hpp"
#include "taintlens/sarif.hpp"
#include "taintlens/util.hpp"

#include <fstream>
#include <set>
#include <sstream>

namespace fs = std::filesystem;

namespace taintlens {

LlmBackend parse_llm_selector(std::string_view selector, LlmConfig cfg) {
  LlmBackend b;
  b.cfg = std::move(cfg);
  if (selector.rfind("mock:", 0) == 0) {
    auto path = selector.substr(5);
    if (path.empty())
      throw std::invalid_argument("mock backend needs a rules file: mock:<file>");
    b.mock_rules = fs::path(std::string(path));
  } else if (selector != "http") {
    throw std::invalid_argument("unknown --llm backend '" +
                                std::string(selector) +
                                "'; use http or mock:<rules-file>");
  }
  return b;
}

std::shared_ptr<ChatTransport> make_transport(const LlmBackend &backend) {
  if (backend.transport)
    return backend.transport;
  if (backend.mock_rules)
    return std::make_shared<MockLabeler>(load_mock_rules(*backend.mock_rules));
  return make_http_transport(backend.cfg);
}

namespace {

template <class F> auto stage(const char *name, F &&f) -> decltype(f()) {
  try {
    return f();
  } catch (const StageError &) {
    throw;
  } catch (const minilang::FrontendError &e) {
    throw StageError(name, e.what(), true);
  } catch (const ValidationError &e) {
    throw StageError(name, e.what(), true);
  } catch (const FormatError &e) {
    throw StageError(name, e.what(), true);
  } catch (const std::exception &e) {
    throw StageError(name, e.what(), false);
  }
}

std::optional<std::string> find_readme(const fs::path &root) {
  for (const char *name : {"README.md", "README", "readme.md", "README.txt"})
    if (auto text = read_file(root / name))
      return text;
  return std::nullopt;
}

std::string project_name(const fs::path &root) {
  auto name = root.filename().string();
  if (name.empty() || name == ".")
    name = fs::weakly_canonical(root).filename().string();
  return name.empty() ? "project" : name;
}

} // namespace

LoadedProject load_project(const fs::path &root) {
  if (!fs::is_directory(root))
    throw FormatError("project root " + root.string() + " is not a directory");
  LoadedProject p;
  auto sources = minilang::load_sources(root);
  if (!sources.empty()) {
    auto program = minilang::parse(std::move(sources));
    p.graph = minilang::build_dfg(program);
    for (const auto &f : program.files)
      p.files.emplace(f.path, f.text);
  } else if (fs::exists(root / "dfg.jsonl")) {
    std::ifstream in(root / "dfg.jsonl");
    p.graph = load_graph_jsonl(in);
    for (const auto &n : p.graph.nodes())
      if (!p.files.count(n.file))
        if (auto text = read_file(root / n.file))
          p.files.emplace(n.file, *text);
  } else {
    throw FormatError("no .ml sources or dfg.jsonl under " + root.string());
  }
  p.readme = find_readme(root);
  return p;
}

AnalyzeResult run_analyze(const RunConfig &cfg) {
  AnalyzeResult r;
  r.project_id = cfg.project_id.empty() ? project_name(cfg.project_root)
                                        : cfg.project_id;
  const auto &out = cfg.output_dir;
  stage("setup", [&] { fs::create_directories(out); });

  auto project = stage("frontend", [&] { return load_project(cfg.project_root); });
  r.graph = project.graph;
  stage("frontend", [&] {
    write_file_atomic(out / "dfg.jsonl", serialize_graph_jsonl(r.graph));
  });

  stage("candidates", [&] {
    r.external = extract_external(r.graph, cfg.candidate_filter);
    r.internal = extract_internal(r.graph, cfg.candidate_filter);
    write_file_atomic(out / "candidates.json",
                      candidates_to_json(r.external, r.internal).dump(2) + "\n");
  });

  std::shared_ptr<ChatTransport> transport;
  auto client = [&]() -> ChatClient {
    if (!transport)
      transport = make_transport(cfg.llm);
    return ChatClient(cfg.llm.cfg, transport);
  };

  stage("label-specs", [&] {
    r.specs.cwe = cfg.cwe;
    if (cfg.spec_files) {
      for (const auto &file : *cfg.spec_files) {
        auto text = read_file(file);
        if (!text)
          throw FormatError("cannot read spec file " + file.string());
        for (auto &s : parse_specs(*text)) {
          if (s.cwe != cfg.cwe)
            continue;
          switch (s.role) {
          case Role::Source:
            r.specs.sources.push_back(s);
            break;
          case Role::Sink:
            r.specs.sinks.push_back(s);
            break;
          case Role::TaintPropagator:
            r.specs.propagators.push_back(s);
            break;
          case Role::Sanitizer:
            break;
          }
        }
      }
      sort_specs(r.specs.sources);
      sort_specs(r.specs.sinks);
      sort_specs(r.specs.propagators);
    } else {
      auto llm = client();
      LabelOptions opts;
      opts.readme = project.readme;
      opts.parallelism = cfg.parallelism;
      auto outcome = label_specs(r.external, r.internal, llm, cfg.cwe, opts);
      r.specs = std::move(outcome.specs);
      r.failed_batches = std::move(outcome.failed_batches);
      r.label_calls = llm.calls();
    }
    write_file_atomic(out / "specs.json", specs_to_text(r.specs.all()));
  });

  auto sanitizers = builtin_sanitizers(cfg.cwe);
  AlertsFile alerts_file;
  stage("analyze", [&] {
    auto specs = r.specs.all();
    specs.insert(specs.end(), sanitizers.begin(), sanitizers.end());
    auto ep = resolve_specs(r.graph, specs);
    auto paths = unsanitized_paths(r.graph, ep, cfg.cwe, cfg.engine);
    r.truncated = paths.truncated;
    r.alerts = make_alerts(r.project_id, paths.paths, r.graph);
    alerts_file.project = r.project_id;
    alerts_file.cwe = cfg.cwe;
    alerts_file.truncated = r.truncated;
    alerts_file.spec_counts = {
        {"sources", static_cast<int>(r.specs.sources.size())},
        {"sinks", static_cast<int>(r.specs.sinks.size())},
        {"propagators", static_cast<int>(r.specs.propagators.size())},
        {"sanitizers", static_cast<int>(sanitizers.size())},
        {"source_nodes", static_cast<int>(ep.sources.size())},
        {"sink_nodes", static_cast<int>(ep.sinks.size())}};
    alerts_file.alerts = r.alerts;
    write_file_atomic(out / "alerts.json", alerts_file_to_text(alerts_file));
  });

  stage("filter", [&] {
    // nothing to ask about, so no client (and no API key) is needed
    if (cfg.skip_filter || r.alerts.empty()) {
      for (auto a : r.alerts) {
        a.snippets = build_snippet_context(a, project.files);
        r.kept.push_back(std::move(a));
      }
    } else {
      auto llm = client();
      auto res = filter_paths(r.alerts, llm, cfg.cwe, project.files);
      r.kept = std::move(res.kept);
      r.audit = std::move(res.audit);
      r.filter_calls = res.llm_calls;
    }
    AlertsFile kept = alerts_file;
    kept.alerts = r.kept;
    write_file_atomic(out / "filtered_alerts.json", alerts_file_to_text(kept));
    write_file_atomic(out / "filter_audit.jsonl", audit_to_jsonl(r.audit));
  });

  stage("sarif", [&] {
    write_file_atomic(out / "report.sarif", emit_sarif(r.kept).dump(2) + "\n");
  });
  return r;
}

nlohmann::json spec_stats_to_json(const std::map<Cwe, SpecStats> &stats) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto &[cwe, s] : stats)
    j[std::string(to_string(cwe))] = {{"unique_sources", s.unique_sources},
                                      {"unique_sinks", s.unique_sinks},
                                      {"recurring_sources", s.recurring_sources},
                                      {"recurring_sinks", s.recurring_sinks}};
  return j;
}

DatasetResult run_dataset(const fs::path &manifest_path, const RunConfig &base) {
  auto manifest = stage("manifest", [&] { return load_manifest(manifest_path); });
  auto dir = manifest_path.parent_path();
  DatasetResult out;
  std::vector<ProjectRun> runs;
  std::map<std::string, LabeledSpecs> spec_sets;
  for (const auto &label : manifest.projects) {
    RunConfig cfg = base;
    cfg.project_id = label.project_id;
    cfg.cwe = label.cwe;
    cfg.project_root = dir / label.path.value_or(label.project_id);
    cfg.output_dir = base.output_dir / label.project_id;
    auto r = run_analyze(cfg);
    runs.push_back({label, r.kept});
    spec_sets[label.project_id] = r.specs;
    out.projects.push_back(std::move(r));
  }
  out.metrics = compute_metrics(runs);
  stage("evaluate", [&] {
    write_file_atomic(base.output_dir / "metrics.json",
                      metrics_to_json(out.metrics).dump(2) + "\n");
    write_file_atomic(base.output_dir / "metrics.txt", metrics_table(out.metrics));
    write_file_atomic(base.output_dir / "spec_stats.json",
                      spec_stats_to_json(spec_stats(spec_sets)).dump(2) + "\n");
  });
  return out;
}

MetricsReport evaluate_results(const DatasetManifest &manifest,
                               const fs::path &results_dir) {
  std::vector<ProjectRun> runs;
  for (const auto &label : manifest.projects) {
    ProjectRun run{label, {}};
    auto dir = results_dir / label.project_id;
    for (const char *name : {"filtered_alerts.json", "alerts.json"}) {
      if (auto text = read_file(dir / name)) {
        run.alerts = parse_alerts_file(*text).alerts;
        break;
      }
    }
    runs.push_back(std::move(run));
  }
  return compute_metrics(runs);
}

} // namespace taintlens
