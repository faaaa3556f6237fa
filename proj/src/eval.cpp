#include "taintlens/eval.hpp"
#include "taintlens/json_io.hpp"
#include "taintlens/util.hpp"

#include <cstdio>
#include <set>
#include <sstream>

namespace taintlens {

const ProjectLabel *DatasetManifest::find(std::string_view project_id) const {
  for (const auto &p : projects)
    if (p.project_id == project_id)
      return &p;
  return nullptr;
}

namespace {

std::optional<std::string> opt_string(const json &j, const char *key) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null())
    return std::nullopt;
  return it->get<std::string>();
}

ProjectLabel label_from_json(const json &e) {
  ProjectLabel p;
  p.project_id = e.at("project_id").get<std::string>();
  auto cwe = parse_cwe(e.at("cwe").get<std::string>());
  if (!cwe)
    throw FormatError("unknown cwe " + e.at("cwe").dump() + " for " +
                      p.project_id);
  p.cwe = *cwe;
  p.cve_id = opt_string(e, "cve_id");
  for (const auto &f : e.at("fix_locations")) {
    FixLocation loc;
    loc.file = f.at("file").get<std::string>();
    loc.function = f.at("function").get<std::string>();
    if (auto it = f.find("lines"); it != f.end() && !it->is_null())
      loc.lines = std::pair{it->at(0).get<int>(), it->at(1).get<int>()};
    p.fix_locations.push_back(std::move(loc));
  }
  if (auto it = e.find("metadata"); it != e.end() && it->is_object()) {
    p.metadata.repo_url = opt_string(*it, "repo_url");
    p.metadata.vulnerable_version = opt_string(*it, "vulnerable_version");
    p.metadata.fixed_version = opt_string(*it, "fixed_version");
  }
  p.path = opt_string(e, "path");
  p.negative = e.value("negative", false);
  return p;
}

} // namespace

DatasetManifest parse_manifest(std::string_view text) {
  auto j = json::parse(text, nullptr, false);
  if (j.is_discarded())
    throw FormatError("manifest is not valid JSON");
  if (!j.is_object() || !j.contains("projects") || !j["projects"].is_array())
    throw FormatError("manifest must be an object with a \"projects\" array");
  DatasetManifest m;
  for (const auto &e : j["projects"]) {
    try {
      m.projects.push_back(label_from_json(e));
    } catch (const json::exception &ex) {
      throw FormatError(std::string("manifest entry: ") + ex.what());
    }
  }
  std::vector<Violation> bad;
  std::set<std::string> ids;
  for (const auto &p : m.projects) {
    if (!ids.insert(p.project_id).second)
      bad.push_back({"duplicate project_id", p.project_id});
    if (p.fix_locations.empty() && !p.negative)
      bad.push_back({"empty fix_locations", p.project_id});
  }
  if (!bad.empty())
    throw ValidationError(std::move(bad));
  return m;
}

DatasetManifest load_manifest(const std::filesystem::path &file) {
  auto text = read_file(file);
  if (!text)
    throw FormatError("cannot read manifest " + file.string());
  return parse_manifest(*text);
}

json manifest_to_json(const DatasetManifest &m) {
  json projects = json::array();
  for (const auto &p : m.projects) {
    json locs = json::array();
    for (const auto &l : p.fix_locations) {
      json f = {{"file", l.file}, {"function", l.function}};
      if (l.lines)
        f["lines"] = {l.lines->first, l.lines->second};
      locs.push_back(std::move(f));
    }
    json e = {{"project_id", p.project_id},
              {"cwe", to_string(p.cwe)},
              {"fix_locations", std::move(locs)}};
    if (p.cve_id)
      e["cve_id"] = *p.cve_id;
    json meta = json::object();
    if (p.metadata.repo_url)
      meta["repo_url"] = *p.metadata.repo_url;
    if (p.metadata.vulnerable_version)
      meta["vulnerable_version"] = *p.metadata.vulnerable_version;
    if (p.metadata.fixed_version)
      meta["fixed_version"] = *p.metadata.fixed_version;
    e["metadata"] = std::move(meta);
    if (p.path)
      e["path"] = *p.path;
    if (p.negative)
      e["negative"] = true;
    projects.push_back(std::move(e));
  }
  return {{"projects", std::move(projects)}};
}

bool touches_fix_location(const Alert &alert, const ProjectLabel &label) {
  for (const auto &step : alert.steps)
    for (const auto &loc : label.fix_locations) {
      if (step.file != loc.file || step.function != loc.function)
        continue;
      if (loc.lines &&
          (step.line < loc.lines->first || step.line > loc.lines->second))
        continue;
      return true;
    }
  return false;
}

int count_vul_paths(const std::vector<Alert> &alerts, const ProjectLabel &label) {
  int n = 0;
  for (const auto &a : alerts)
    n += touches_fix_location(a, label) ? 1 : 0;
  return n;
}

namespace {

MetricsSummary summarize(const std::vector<const ProjectMetrics *> &ps) {
  MetricsSummary s;
  s.projects = static_cast<int>(ps.size());
  double fdr_sum = 0, f1_sum = 0;
  int fdr_n = 0;
  for (const auto *p : ps) {
    s.detected += p->rec;
    f1_sum += p->f1;
    if (p->prec) {
      fdr_sum += 1.0 - *p->prec;
      ++fdr_n;
    }
  }
  if (fdr_n > 0)
    s.avg_fdr = fdr_sum / fdr_n;
  s.avg_f1 = ps.empty() ? 0.0 : f1_sum / static_cast<double>(ps.size());
  return s;
}

} // namespace

MetricsReport metrics_from_counts(std::vector<ProjectMetrics> projects) {
  MetricsReport r;
  for (auto &p : projects) {
    p.rec = p.n_vul_paths > 0 ? 1 : 0;
    p.prec.reset();
    if (p.n_paths > 0)
      p.prec = static_cast<double>(p.n_vul_paths) / p.n_paths;
    p.f1 = (p.rec && p.prec && *p.prec > 0)
               ? 2.0 * *p.prec * p.rec / (*p.prec + p.rec)
               : 0.0;
  }
  r.per_project = std::move(projects);

  std::vector<const ProjectMetrics *> all;
  std::map<Cwe, std::vector<const ProjectMetrics *>> groups;
  for (const auto &p : r.per_project) {
    if (p.negative)
      continue;
    all.push_back(&p);
    groups[p.cwe].push_back(&p);
  }
  auto total = summarize(all);
  r.detected = total.detected;
  r.avg_fdr = total.avg_fdr;
  r.avg_f1 = total.avg_f1;
  for (const auto &[cwe, ps] : groups)
    r.by_cwe[cwe] = summarize(ps);
  return r;
}

MetricsReport compute_metrics(const std::vector<ProjectRun> &runs) {
  std::vector<ProjectMetrics> counts;
  for (const auto &run : runs) {
    ProjectMetrics p;
    p.project_id = run.label.project_id;
    p.cwe = run.label.cwe;
    p.n_paths = static_cast<int>(run.alerts.size());
    p.n_vul_paths = count_vul_paths(run.alerts, run.label);
    p.negative = run.label.negative;
    counts.push_back(std::move(p));
  }
  return metrics_from_counts(std::move(counts));
}

namespace {

json summary_json(const MetricsSummary &s) {
  return {{"projects", s.projects},
          {"detected", s.detected},
          {"avg_fdr", s.avg_fdr ? json(*s.avg_fdr) : json()},
          {"avg_f1", s.avg_f1}};
}

std::string fmt_pct(std::optional<double> v) {
  if (!v)
    return "-";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f%%", *v * 100.0);
  return buf;
}

std::string fmt_fixed(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

} // namespace

json metrics_to_json(const MetricsReport &r) {
  json projects = json::array();
  for (const auto &p : r.per_project)
    projects.push_back({{"project_id", p.project_id},
                        {"cwe", to_string(p.cwe)},
                        {"n_paths", p.n_paths},
                        {"n_vul_paths", p.n_vul_paths},
                        {"rec", p.rec},
                        {"prec", p.prec ? json(*p.prec) : json()},
                        {"f1", p.f1},
                        {"negative", p.negative}});
  json by_cwe = json::object();
  for (const auto &[cwe, s] : r.by_cwe)
    by_cwe[std::string(to_string(cwe))] = summary_json(s);
  return {{"per_project", std::move(projects)},
          {"detected", r.detected},
          {"avg_fdr", r.avg_fdr ? json(*r.avg_fdr) : json()},
          {"avg_f1", r.avg_f1},
          {"by_cwe", std::move(by_cwe)}};
}

std::string metrics_table(const MetricsReport &r) {
  std::ostringstream out;
  char buf[128];
  std::snprintf(buf, sizeof buf, "%-8s %9s %10s %10s %8s\n", "CWE", "#Projects",
                "#Detected", "AvgFDR", "AvgF1");
  out << buf;
  auto row = [&](const std::string &name, const MetricsSummary &s) {
    std::snprintf(buf, sizeof buf, "%-8s %9d %10d %10s %8s\n", name.c_str(),
                  s.projects, s.detected, fmt_pct(s.avg_fdr).c_str(),
                  fmt_fixed(s.avg_f1).c_str());
    out << buf;
  };
  for (const auto &[cwe, s] : r.by_cwe)
    row(std::string(to_string(cwe)), s);
  int labeled = 0;
  for (const auto &p : r.per_project)
    labeled += p.negative ? 0 : 1;
  MetricsSummary total{labeled, r.detected, r.avg_fdr, r.avg_f1};
  row("Total", total);
  return out.str();
}

std::map<Cwe, SpecStats>
spec_stats(const std::map<std::string, LabeledSpecs> &spec_sets) {
  // cwe -> spec key -> projects containing it
  std::map<Cwe, std::map<std::string, std::set<std::string>>> sources, sinks;
  for (const auto &[project, specs] : spec_sets) {
    for (const auto &s : specs.sources)
      sources[s.cwe][spec_match_key(s)].insert(project);
    for (const auto &s : specs.sinks)
      sinks[s.cwe][spec_match_key(s)].insert(project);
  }
  std::map<Cwe, SpecStats> out;
  for (const auto &[project, specs] : spec_sets)
    out[specs.cwe];
  for (const auto &[cwe, keys] : sources)
    for (const auto &[key, projects] : keys)
      (projects.size() == 1 ? out[cwe].unique_sources
                            : out[cwe].recurring_sources)++;
  for (const auto &[cwe, keys] : sinks)
    for (const auto &[key, projects] : keys)
      (projects.size() == 1 ? out[cwe].unique_sinks : out[cwe].recurring_sinks)++;
  return out;
}

} // namespace taintlens
