#include "taintlens/json_io.hpp"
#include "taintlens/minilang.hpp"
#include "taintlens/pipeline.hpp"
#include "taintlens/sarif.hpp"
#include "taintlens/server.hpp"
#include "taintlens/util.hpp"

#include <CLI11.hpp>

#include <csignal>
#include <iostream>

namespace fs = std::filesystem;
using namespace taintlens;

namespace {

enum Exit { kOk = 0, kUsage = 1, kStage = 2, kValidation = 3 };

struct LlmFlags {
  std::string selector = "http";
  LlmConfig cfg;
  std::optional<long long> seed;

  void add(CLI::App *app) {
    app->add_option("--llm", selector,
                    "Backend: http, or mock:<rules-file> for the rule table")
        ->capture_default_str();
    app->add_option("--base-url", cfg.base_url, "Chat-completion endpoint base")
        ->capture_default_str();
    app->add_option("--model", cfg.model_id)->capture_default_str();
    app->add_option("--seed", seed);
    app->add_option("--api-key-env", cfg.api_key_env)->capture_default_str();
    app->add_option("--retries", cfg.retries)->capture_default_str();
    app->add_option("--backoff-ms", cfg.backoff_ms)->capture_default_str();
  }

  LlmBackend backend() {
    cfg.seed = seed;
    check_config(cfg);
    return parse_llm_selector(selector, cfg);
  }
};

Cwe cwe_arg(const std::string &text) {
  auto c = parse_cwe(text);
  if (!c)
    throw CLI::ValidationError("--cwe", "expected CWE-22, CWE-78, CWE-79 or CWE-94");
  return *c;
}

AlertsFile read_alerts(const fs::path &file) {
  auto text = read_file(file);
  if (!text)
    throw FormatError("cannot read " + file.string());
  return parse_alerts_file(*text);
}

int report(const std::exception &e, int code) {
  std::cerr << "taintlens: " << e.what() << '\n';
  return code;
}

TriageServer *g_server = nullptr;

} // namespace

int main(int argc, char **argv) {
  CLI::App app{"Taint analysis with inferred specifications and contextual "
               "alert filtering"};
  app.require_subcommand(1);

  // analyze
  auto *analyze = app.add_subcommand("analyze", "Run the full pipeline");
  fs::path project, manifest, out;
  std::string cwe_text = "CWE-22", project_id;
  std::vector<fs::path> spec_files;
  bool skip_filter = false, no_exc = false;
  PathLimits limits;
  int parallel = 1;
  LlmFlags llm;
  auto *project_opt =
      analyze->add_option("--project", project, "Project root")->check(CLI::ExistingDirectory);
  analyze->add_option("--manifest", manifest, "Dataset manifest; analyzes every project")
      ->check(CLI::ExistingFile)
      ->excludes(project_opt);
  analyze->add_option("--cwe", cwe_text)->capture_default_str();
  analyze->add_option("--project-id", project_id);
  analyze->add_option("--out", out, "Output directory")->required();
  analyze->add_option("--specs", spec_files, "Preset spec files; skips inference");
  analyze->add_flag("--skip-filter", skip_filter, "Keep every alert unfiltered");
  analyze->add_flag("--no-exceptional-edges", no_exc,
                    "Do not follow throw to catch edges");
  analyze->add_option("--max-paths-per-pair", limits.max_paths_per_pair)
      ->capture_default_str();
  analyze->add_option("--max-total-paths", limits.max_total_paths)->capture_default_str();
  analyze->add_option("--max-length", limits.max_length)->capture_default_str();
  analyze->add_option("--parallel", parallel, "Labeling batches in flight")
      ->capture_default_str();
  llm.add(analyze);

  // label-specs
  auto *label = app.add_subcommand("label-specs", "Extract candidates and infer specs");
  fs::path label_project, label_out;
  std::string label_cwe = "CWE-22";
  LlmFlags label_llm;
  label->add_option("--project", label_project)->required()->check(CLI::ExistingDirectory);
  label->add_option("--cwe", label_cwe)->capture_default_str();
  label->add_option("--out", label_out)->required();
  label_llm.add(label);

  // filter
  auto *filter = app.add_subcommand("filter", "Contextual filtering of an alerts file");
  fs::path filter_alerts, filter_project, filter_out;
  LlmFlags filter_llm;
  filter->add_option("--alerts", filter_alerts)->required()->check(CLI::ExistingFile);
  filter->add_option("--project", filter_project, "Project root, for snippets")
      ->required()
      ->check(CLI::ExistingDirectory);
  filter->add_option("--out", filter_out)->required();
  filter_llm.add(filter);

  // evaluate
  auto *evaluate = app.add_subcommand("evaluate", "Compute detection metrics");
  fs::path eval_manifest, eval_results, eval_out;
  evaluate->add_option("--manifest", eval_manifest)->required()->check(CLI::ExistingFile);
  evaluate->add_option("--results", eval_results, "Directory of per-project results")
      ->required()
      ->check(CLI::ExistingDirectory);
  evaluate->add_option("--out", eval_out, "metrics.json path (default: <results>/metrics.json)");

  // sarif
  auto *sarif = app.add_subcommand("sarif", "Convert an alerts file to SARIF 2.1.0");
  fs::path sarif_alerts, sarif_out = "report.sarif";
  sarif->add_option("--alerts", sarif_alerts)->required()->check(CLI::ExistingFile);
  sarif->add_option("--out", sarif_out)->capture_default_str();

  // serve
  auto *serve = app.add_subcommand("serve", "Serve the triage HTTP API");
  fs::path serve_results;
  std::optional<fs::path> serve_static;
  std::string bind = "127.0.0.1:8080";
  serve->add_option("--results", serve_results)->required()->check(CLI::ExistingDirectory);
  serve->add_option("--bind", bind)->capture_default_str();
  serve->add_option("--static", serve_static, "Directory of UI assets")
      ->check(CLI::ExistingDirectory);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError &e) {
    int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*analyze) {
      if (project.empty() && manifest.empty()) {
        std::cerr << "taintlens: analyze needs --project or --manifest\n";
        return kUsage;
      }
      RunConfig cfg;
      cfg.project_root = project;
      cfg.project_id = project_id;
      cfg.cwe = cwe_arg(cwe_text);
      cfg.llm = llm.backend();
      cfg.engine.limits = limits;
      cfg.engine.exceptional_edges = !no_exc;
      if (!spec_files.empty())
        cfg.spec_files = spec_files;
      cfg.output_dir = out;
      cfg.skip_filter = skip_filter;
      cfg.parallelism = parallel;
      if (!manifest.empty()) {
        auto res = run_dataset(manifest, cfg);
        std::cout << metrics_table(res.metrics);
      } else {
        auto res = run_analyze(cfg);
        std::cout << res.project_id << ": " << res.alerts.size() << " alerts, "
                  << res.kept.size() << " kept after filtering\n";
      }
      return kOk;
    }

    if (*label) {
      auto proj = load_project(label_project);
      auto ext = extract_external(proj.graph);
      auto in = extract_internal(proj.graph);
      fs::create_directories(label_out);
      write_file_atomic(label_out / "candidates.json",
                        candidates_to_json(ext, in).dump(2) + "\n");
      auto backend = label_llm.backend();
      ChatClient client(backend.cfg, make_transport(backend));
      LabelOptions opts;
      opts.readme = proj.readme;
      auto outcome = label_specs(ext, in, client, cwe_arg(label_cwe), opts);
      write_file_atomic(label_out / "specs.json", specs_to_text(outcome.specs.all()));
      std::cout << outcome.specs.sources.size() << " sources, "
                << outcome.specs.sinks.size() << " sinks, "
                << outcome.specs.propagators.size() << " propagators\n";
      if (outcome.partial()) {
        std::cerr << "taintlens: " << outcome.failed_batches.size() << " of "
                  << outcome.batches << " batches failed\n";
        return kStage;
      }
      return kOk;
    }

    if (*filter) {
      auto file = read_alerts(filter_alerts);
      auto proj = load_project(filter_project);
      auto backend = filter_llm.backend();
      ChatClient client(backend.cfg, make_transport(backend));
      auto res = filter_paths(file.alerts, client, file.cwe, proj.files);
      fs::create_directories(filter_out);
      file.alerts = res.kept;
      write_file_atomic(filter_out / "filtered_alerts.json", alerts_file_to_text(file));
      write_file_atomic(filter_out / "filter_audit.jsonl", audit_to_jsonl(res.audit));
      std::cout << res.kept.size() << " kept, " << res.llm_calls << " queries\n";
      return kOk;
    }

    if (*evaluate) {
      auto m = load_manifest(eval_manifest);
      auto report_ = evaluate_results(m, eval_results);
      auto dest = eval_out.empty() ? eval_results / "metrics.json" : eval_out;
      write_file_atomic(dest, metrics_to_json(report_).dump(2) + "\n");
      std::cout << metrics_table(report_);
      return kOk;
    }

    if (*sarif) {
      auto file = read_alerts(sarif_alerts);
      write_file_atomic(sarif_out, emit_sarif(file.alerts).dump(2) + "\n");
      return kOk;
    }

    if (*serve) {
      auto colon = bind.rfind(':');
      if (colon == std::string::npos) {
        std::cerr << "taintlens: --bind expects host:port\n";
        return kUsage;
      }
      auto host = bind.substr(0, colon);
      int port = std::stoi(bind.substr(colon + 1));
      TriageServer server(serve_results, serve_static);
      g_server = &server;
      std::signal(SIGINT, [](int) {
        if (g_server)
          g_server->stop();
      });
      std::cout << "serving " << server.store().size() << " alerts on http://"
                << bind << '\n'
                << std::flush;
      if (!server.listen(host, port)) {
        std::cerr << "taintlens: cannot bind " << bind << '\n';
        return kStage;
      }
      return kOk;
    }
  } catch (const StageError &e) {
    return report(e, e.validation() ? kValidation : kStage);
  } catch (const minilang::FrontendError &e) {
    return report(e, kValidation);
  } catch (const ValidationError &e) {
    return report(e, kValidation);
  } catch (const FormatError &e) {
    return report(e, kValidation);
  } catch (const CLI::ValidationError &e) {
    return report(e, kUsage);
  } catch (const std::invalid_argument &e) {
    return report(e, kUsage);
  } catch (const std::exception &e) {
    return report(e, kStage);
  }
  return kUsage;
}
