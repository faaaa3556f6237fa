#include <doctest.h>

#include "taintlens/eval.hpp"
#include "taintlens/json_io.hpp"
#include "test_support.hpp"

#include <algorithm>
#include <cmath>
#include <random>

using namespace taintlens;
using json = nlohmann::json;

namespace {

const char *kFixFile = "src/main/p/Svc.ml";
const char *kFixFn = "p.Svc.handle";

ProjectLabel label(std::string id, Cwe cwe = Cwe::Cwe22) {
  ProjectLabel l;
  l.project_id = std::move(id);
  l.cwe = cwe;
  l.fix_locations.push_back({kFixFile, kFixFn, std::nullopt});
  return l;
}

Alert path_through(std::string file, std::string fn, int line = 5) {
  Alert a;
  for (std::uint64_t i = 1; i <= 3; ++i) {
    PathStep s;
    s.id = NodeId{i};
    s.file = i == 2 ? file : "src/main/p/Other.ml";
    s.function = i == 2 ? fn : "p.Other.run";
    s.line = i == 2 ? line : 1;
    a.steps.push_back(s);
    a.path.nodes.push_back(s.id);
  }
  return a;
}

Alert vul() { return path_through(kFixFile, kFixFn); }
Alert benign() { return path_through("src/main/p/Other.ml", "p.Other.run"); }

std::vector<Alert> alerts(int vulnerable, int benign_count) {
  std::vector<Alert> out;
  for (int i = 0; i < vulnerable; ++i)
    out.push_back(vul());
  for (int i = 0; i < benign_count; ++i)
    out.push_back(benign());
  return out;
}

// Independent reference for the per-project and aggregate numbers.
struct Ref {
  int detected = 0;
  std::optional<double> avg_fdr;
  double avg_f1 = 0;
};

Ref reference(const std::vector<std::pair<int, int>> &counts /* (paths, vul) */) {
  Ref r;
  double fdr = 0, f1 = 0;
  int with_paths = 0;
  for (auto [n, v] : counts) {
    int rec = v > 0;
    r.detected += rec;
    if (n > 0) {
      double prec = double(v) / n;
      fdr += 1 - prec;
      ++with_paths;
      if (rec)
        f1 += 2 * prec / (prec + 1);
    }
  }
  if (with_paths)
    r.avg_fdr = fdr / with_paths;
  r.avg_f1 = counts.empty() ? 0 : f1 / counts.size();
  return r;
}

} // namespace

TEST_CASE("manifest parsing") {
  auto m = parse_manifest(R"({"projects": [
    {"project_id": "a", "cwe": "CWE-78", "cve_id": "CVE-1",
     "fix_locations": [{"file": "f.ml", "function": "p.F.g", "lines": [3, 9]}],
     "metadata": {"repo_url": "https://example.invalid/a"}},
    {"project_id": "b", "cwe": "CWE-22", "negative": true, "fix_locations": []}
  ]})");
  REQUIRE(m.projects.size() == 2);
  const auto *a = m.find("a");
  REQUIRE(a);
  CHECK(a->cwe == Cwe::Cwe78);
  CHECK(a->cve_id == "CVE-1");
  REQUIRE(a->fix_locations[0].lines);
  CHECK(a->fix_locations[0].lines->second == 9);
  CHECK(a->metadata.repo_url == "https://example.invalid/a");
  CHECK(m.find("b")->negative);
  CHECK_FALSE(m.find("c"));

  auto back = parse_manifest(manifest_to_json(m).dump());
  CHECK(back.projects == m.projects);
}

TEST_CASE("manifest errors") {
  CHECK_THROWS_AS(parse_manifest("{"), FormatError);
  CHECK_THROWS_AS(parse_manifest(R"({"projects": 3})"), FormatError);
  CHECK_THROWS_AS(parse_manifest(R"({"projects": [{"project_id": "a", "cwe": "CWE-1",
    "fix_locations": [{"file": "f", "function": "g"}]}]})"),
                  FormatError);
  CHECK_THROWS_AS(parse_manifest(R"({"projects": [
    {"project_id": "a", "cwe": "CWE-22", "fix_locations": [{"file": "f", "function": "g"}]},
    {"project_id": "a", "cwe": "CWE-22", "fix_locations": [{"file": "f", "function": "g"}]}]})"),
                  ValidationError);
  try {
    parse_manifest(R"({"projects": [{"project_id": "a", "cwe": "CWE-22", "fix_locations": []}]})");
    FAIL("expected ValidationError");
  } catch (const ValidationError &e) {
    CHECK(e.violations().at(0).kind == "empty fix_locations");
  }
}

TEST_CASE("the bundled corpus manifest loads") {
  auto m = load_manifest(tl_test::corpus_dir() / "manifest.json");
  CHECK(m.projects.size() == 6);
}

TEST_CASE("fix location matching") {
  auto l = label("x");
  CHECK(touches_fix_location(vul(), l));
  CHECK_FALSE(touches_fix_location(benign(), l));
  // same function name in another file does not count
  CHECK_FALSE(touches_fix_location(path_through("src/main/q/Svc.ml", kFixFn), l));
  l.fix_locations[0].lines = std::pair{10, 20};
  CHECK_FALSE(touches_fix_location(path_through(kFixFile, kFixFn, 5), l));
  CHECK(touches_fix_location(path_through(kFixFile, kFixFn, 10), l));
  CHECK(touches_fix_location(path_through(kFixFile, kFixFn, 20), l));
  CHECK(count_vul_paths(alerts(2, 3), label("x")) == 2);
}

TEST_CASE("metrics on a hand-computed example") {
  // P1: three paths, one vulnerable. P2: two paths, none vulnerable.
  auto r = compute_metrics({{label("P1"), alerts(1, 2)}, {label("P2"), alerts(0, 2)}});
  CHECK(r.detected == 1);
  REQUIRE(r.avg_fdr);
  CHECK(*r.avg_fdr == doctest::Approx(5.0 / 6.0));
  CHECK(r.avg_f1 == doctest::Approx(0.25));
  REQUIRE(r.per_project.size() == 2);
  CHECK(r.per_project[0].rec == 1);
  CHECK(*r.per_project[0].prec == doctest::Approx(1.0 / 3.0));
  CHECK(r.per_project[0].f1 == doctest::Approx(0.5));
  CHECK(r.per_project[1].rec == 0);
  CHECK(r.per_project[1].f1 == 0);
}

TEST_CASE("projects without paths have no precision") {
  auto r = compute_metrics({{label("empty"), {}}});
  CHECK_FALSE(r.per_project[0].prec);
  CHECK(r.per_project[0].f1 == 0);
  CHECK_FALSE(r.avg_fdr);
  CHECK(r.detected == 0);

  auto perfect = compute_metrics({{label("p"), alerts(4, 0)}, {label("empty"), {}}});
  REQUIRE(perfect.avg_fdr);
  CHECK(*perfect.avg_fdr == doctest::Approx(0.0));
  CHECK(perfect.avg_f1 == doctest::Approx(0.5));
}

TEST_CASE("negative projects stay out of the aggregates") {
  auto neg = label("clean");
  neg.negative = true;
  neg.fix_locations.clear();
  auto r = compute_metrics({{label("P1"), alerts(1, 0)}, {neg, alerts(0, 5)}});
  CHECK(r.per_project.size() == 2);
  CHECK(r.per_project[1].n_paths == 5);
  CHECK(r.detected == 1);
  CHECK(*r.avg_fdr == doctest::Approx(0.0));
  CHECK(r.avg_f1 == doctest::Approx(1.0));
  CHECK(r.by_cwe.at(Cwe::Cwe22).projects == 1);
}

TEST_CASE("per-CWE summaries split the projects") {
  auto r = compute_metrics({{label("a", Cwe::Cwe22), alerts(1, 1)},
                            {label("b", Cwe::Cwe78), alerts(0, 1)},
                            {label("c", Cwe::Cwe78), alerts(2, 0)}});
  CHECK(r.by_cwe.size() == 2);
  CHECK(r.by_cwe.at(Cwe::Cwe78).projects == 2);
  CHECK(r.by_cwe.at(Cwe::Cwe78).detected == 1);
  CHECK(*r.by_cwe.at(Cwe::Cwe78).avg_fdr == doctest::Approx(0.5));
  auto table = metrics_table(r);
  for (auto col : {"CWE", "#Projects", "#Detected", "AvgFDR", "AvgF1", "CWE-78", "Total"})
    CHECK(table.find(col) != std::string::npos);
  auto j = metrics_to_json(r);
  CHECK(j["detected"] == 2);
  CHECK(j["per_project"].size() == 3);
}

TEST_CASE("metrics match an independent computation on random counts") {
  std::mt19937 rng(161);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<ProjectRun> runs;
    std::vector<std::pair<int, int>> counts;
    int n = 1 + static_cast<int>(rng() % 8);
    for (int i = 0; i < n; ++i) {
      int v = static_cast<int>(rng() % 4);
      int b = static_cast<int>(rng() % 5);
      runs.push_back({label("p" + std::to_string(i)), alerts(v, b)});
      counts.emplace_back(v + b, v);
    }
    auto r = compute_metrics(runs);
    auto ref = reference(counts);
    CHECK(r.detected == ref.detected);
    CHECK(r.avg_fdr.has_value() == ref.avg_fdr.has_value());
    if (r.avg_fdr && ref.avg_fdr)
      CHECK(*r.avg_fdr == doctest::Approx(*ref.avg_fdr));
    CHECK(r.avg_f1 == doctest::Approx(ref.avg_f1));

    // bounds
    CHECK(r.detected <= n);
    if (r.avg_fdr) {
      CHECK(*r.avg_fdr >= 0.0);
      CHECK(*r.avg_fdr <= 1.0);
    }
    CHECK(r.avg_f1 >= 0.0);
    CHECK(r.avg_f1 <= 1.0);

    // reordering alerts changes nothing
    auto shuffled = runs;
    for (auto &run : shuffled)
      std::shuffle(run.alerts.begin(), run.alerts.end(), rng);
    auto r2 = compute_metrics(shuffled);
    CHECK(r2.detected == r.detected);
    CHECK(r2.avg_f1 == r.avg_f1);

    // one more benign path never helps
    auto worse = runs;
    worse[rng() % worse.size()].alerts.push_back(benign());
    auto r3 = compute_metrics(worse);
    CHECK(r3.avg_f1 <= r.avg_f1 + 1e-12);
    REQUIRE(r3.avg_fdr);
    if (r.avg_fdr)
      CHECK(*r3.avg_fdr >= *r.avg_fdr - 1e-12);
    CHECK(r3.detected == r.detected);
  }
}

TEST_CASE("spec statistics count unique and recurring specs") {
  auto src = [](std::string m) {
    return TaintSpec{SpecNodeType::ReturnValue, tl_test::api("x", "Y", std::move(m)),
                     Role::Source, Cwe::Cwe78};
  };
  auto sink = [](std::string m) {
    auto api = tl_test::api("x", "Z", std::move(m));
    api.position = 0;
    return TaintSpec{SpecNodeType::Argument, api, Role::Sink, Cwe::Cwe78};
  };
  std::map<std::string, LabeledSpecs> sets;
  sets["a"] = {{src("getenv"), src("read")}, {sink("exec")}, {}, Cwe::Cwe78};
  sets["b"] = {{src("getenv")}, {sink("exec"), sink("start")}, {}, Cwe::Cwe78};
  sets["c"] = {{src("getenv")}, {}, {}, Cwe::Cwe78};
  auto stats = spec_stats(sets);
  REQUIRE(stats.count(Cwe::Cwe78));
  CHECK(stats[Cwe::Cwe78] == SpecStats{1, 1, 1, 1});
  CHECK(spec_stats({}).empty());
}
