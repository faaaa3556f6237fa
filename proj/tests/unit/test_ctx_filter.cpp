#include <doctest.h>

#include "taintlens/ctx_filter.hpp"
#include "taintlens/util.hpp"
#include "test_support.hpp"

#include <map>
#include <mutex>
#include <random>
#include <regex>
#include <set>

using namespace taintlens;
using json = nlohmann::json;

namespace {

std::string numbered_file(int n) {
  std::string out;
  for (int i = 1; i <= n; ++i)
    out += "line " + std::to_string(i) + "\n";
  return out;
}

PathStep step(std::uint64_t id, NodeKind kind, int line, std::string code = "c") {
  return PathStep{NodeId{id}, kind, "src/A.ml", line, 1, "pkg.Klass.fn", std::move(code)};
}

TaintSpec source_spec(int variant = 0) {
  return {SpecNodeType::ReturnValue,
          tl_test::api("a", "Src", "read" + std::to_string(variant), {}), Role::Source,
          Cwe::Cwe79};
}

TaintSpec sink_spec(int variant = 0) {
  auto api = tl_test::api("a", "Snk", "write" + std::to_string(variant));
  api.position = 0;
  return {SpecNodeType::Argument, api, Role::Sink, Cwe::Cwe79};
}

// An alert from a source node at `src_line` to a sink node at `sink_line`
// with `interior` LocalDef steps between.
Alert alert(int src_line, int sink_line, int interior = 1, int variant = 0) {
  Alert a;
  a.project = "demo";
  a.steps.push_back(step(static_cast<std::uint64_t>(src_line), NodeKind::CallResult, src_line));
  for (int i = 0; i < interior; ++i)
    a.steps.push_back(step(static_cast<std::uint64_t>(10000 + src_line * 100 + sink_line * 7 + i),
                           NodeKind::LocalDef, src_line + 1));
  a.steps.push_back(step(static_cast<std::uint64_t>(sink_line), NodeKind::Argument, sink_line));
  for (const auto &s : a.steps)
    a.path.nodes.push_back(s.id);
  a.path.cwe = Cwe::Cwe79;
  a.path.source_spec = source_spec(variant);
  a.path.sink_spec = sink_spec(variant);
  a.id = alert_id(a.project, a.path.cwe, a.path.nodes);
  return a;
}

std::pair<int, int> endpoints_of(const std::string &prompt) {
  static const std::regex src(R"(Source: .* at src/A\.ml:(\d+))");
  static const std::regex snk(R"(Sink: .* at src/A\.ml:(\d+))");
  std::smatch m1, m2;
  REQUIRE(std::regex_search(prompt, m1, src));
  REQUIRE(std::regex_search(prompt, m2, snk));
  return {std::stoi(m1[1]), std::stoi(m2[1])};
}

ChatClient client(std::function<std::string(const std::string &)> fn) {
  LlmConfig cfg;
  cfg.retries = 0;
  return ChatClient(cfg, std::make_shared<FunctionTransport>(std::move(fn)),
                    [](std::chrono::milliseconds) {});
}

std::string reply(bool verdict, bool src_fp = false, bool sink_fp = false) {
  return json{{"explanation", "reasoning"},
              {"verdict", verdict},
              {"source_is_fp", src_fp},
              {"sink_is_fp", sink_fp}}
      .dump();
}

} // namespace

TEST_CASE("snippets are clipped to the file") {
  auto text = numbered_file(4);
  auto s = build_snippet(text, 2, "source");
  CHECK(s.start_line == 1);
  CHECK(s.marked_line == 2);
  auto lines = split_lines(s.lines);
  REQUIRE(lines.size() == 4);
  CHECK(lines[0] == "line 1");
  CHECK(lines[1] == "line 2  // <-- source");
  CHECK(lines[3] == "line 4");

  auto big = numbered_file(40);
  auto mid = build_snippet(big, 20, "sink");
  auto mid_lines = split_lines(mid.lines);
  CHECK(mid_lines.size() == 11);
  CHECK(mid.start_line == 15);
  CHECK(mid_lines[5] == "line 20  // <-- sink");
  CHECK(mid_lines.back() == "line 25");

  auto end = build_snippet(big, 39, "sink");
  CHECK(split_lines(end.lines).size() == 7);
  CHECK(end.start_line == 34);
}

TEST_CASE("missing source text falls back to a placeholder") {
  auto s = build_snippet("", 3, "source");
  CHECK(s.lines.find("unavailable") != std::string::npos);
  auto past = build_snippet(numbered_file(2), 9, "sink");
  CHECK(past.lines.find("unavailable") != std::string::npos);
}

TEST_CASE("snippet size never exceeds the window") {
  for (int n = 1; n < 30; ++n) {
    auto text = numbered_file(n);
    for (int line = 1; line <= n; ++line) {
      auto s = build_snippet(text, line, "x");
      auto count = static_cast<int>(split_lines(s.lines).size());
      CHECK(count <= 2 * kSnippetRadius + 1);
      CHECK(count == std::min(n, line + 5) - std::max(1, line - 5) + 1);
      CHECK(s.lines.find("// <-- x") != std::string::npos);
    }
  }
}

TEST_CASE("short paths show every interior step") {
  std::vector<PathStep> steps;
  for (int i = 0; i < 9; ++i)
    steps.push_back(step(static_cast<std::uint64_t>(i + 1), NodeKind::LocalDef, i + 1));
  auto chosen = select_intermediate_steps(steps);
  REQUIRE(chosen.size() == 7);
  CHECK(chosen.front().value == 2);
  CHECK(chosen.back().value == 8);
  CHECK(select_intermediate_steps({steps[0], steps[1]}).empty());
}

TEST_CASE("long paths show one step per segment") {
  std::vector<PathStep> steps;
  for (int i = 0; i < 27; ++i)
    steps.push_back(step(static_cast<std::uint64_t>(i + 1), NodeKind::LocalDef, i + 1));
  auto chosen = select_intermediate_steps(steps);
  CHECK(chosen.size() == 10);
  // 25 interior nodes, segment j covers [j*25/10, (j+1)*25/10)
  for (std::size_t j = 0; j < chosen.size(); ++j)
    CHECK(chosen[j].value == 2 + j * 25 / 10);
}

TEST_CASE("segment picks prefer call nodes") {
  std::vector<PathStep> steps;
  steps.push_back(step(1, NodeKind::CallResult, 1));
  for (int i = 0; i < 30; ++i) {
    auto kind = i % 3 == 2 ? NodeKind::CallResult : NodeKind::LocalDef;
    steps.push_back(step(static_cast<std::uint64_t>(i + 2), kind, i + 2));
  }
  steps.push_back(step(99, NodeKind::Argument, 40));
  auto chosen = select_intermediate_steps(steps);
  REQUIRE(chosen.size() == 10);
  for (std::size_t j = 0; j < 10; ++j) {
    // segment j holds interior indices 3j..3j+2; index 3j+2 is the call
    CHECK(chosen[j].value == 2 + 3 * j + 2);
  }
  CHECK_THROWS_AS(select_intermediate_steps(steps, 0), std::invalid_argument);
}

TEST_CASE("step selection picks exactly one node inside each segment") {
  std::mt19937 rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    int len = 2 + static_cast<int>(rng() % 60);
    int segs = 1 + static_cast<int>(rng() % 12);
    std::vector<PathStep> steps;
    for (int i = 0; i < len; ++i)
      steps.push_back(step(static_cast<std::uint64_t>(i + 1),
                           rng() % 4 ? NodeKind::LocalDef : NodeKind::Argument, i + 1));
    auto chosen = select_intermediate_steps(steps, segs);
    std::size_t m = static_cast<std::size_t>(len - 2);
    auto S = static_cast<std::size_t>(segs);
    if (m <= S) {
      CHECK(chosen.size() == m);
      continue;
    }
    REQUIRE(chosen.size() == S);
    for (std::size_t j = 0; j < S; ++j) {
      std::size_t idx = chosen[j].value - 2; // interior index
      CHECK(idx >= j * m / S);
      CHECK(idx < (j + 1) * m / S);
      bool has_call = false;
      for (std::size_t i = j * m / S; i < (j + 1) * m / S; ++i)
        has_call |= steps[i + 1].kind == NodeKind::Argument;
      if (has_call)
        CHECK(steps[idx + 1].kind == NodeKind::Argument);
    }
  }
}

TEST_CASE("context prompt carries both endpoints and the schema") {
  auto a = alert(3, 30, 30);
  FileTexts files{{"src/A.ml", numbered_file(40)}};
  auto ctx = build_snippet_context(a, files);
  CHECK(ctx.source_function == "fn");
  CHECK(ctx.source_class == "Klass");
  CHECK(ctx.intermediate.size() == 10);
  auto msgs = build_context_prompt(a, Cwe::Cwe79, ctx);
  REQUIRE(msgs.size() == 2);
  const auto &text = msgs[1].content;
  CHECK(text.find("CWE-79") != std::string::npos);
  CHECK(text.find(std::string(cwe_description(Cwe::Cwe79))) != std::string::npos);
  CHECK(text.find("Source: " + a.path.source_spec.display() + " at src/A.ml:3") !=
        std::string::npos);
  CHECK(text.find("Sink: " + a.path.sink_spec.display() + " at src/A.ml:30") !=
        std::string::npos);
  CHECK(text.find("line 3  // <-- source") != std::string::npos);
  CHECK(text.find("line 30  // <-- sink") != std::string::npos);
  int bullets = 0;
  for (const auto &l : split_lines(text))
    if (l.rfind("- src/A.ml:", 0) == 0)
      ++bullets;
  CHECK(bullets == 10);
  auto expl = text.find("\"explanation\"");
  auto verdict = text.find("\"verdict\"");
  REQUIRE(expl != std::string::npos);
  REQUIRE(verdict != std::string::npos);
  CHECK(expl < verdict);
  CHECK(text.find("source_is_fp") != std::string::npos);
  CHECK(text.find("sink_is_fp") != std::string::npos);
}

TEST_CASE("verdict parsing") {
  auto v = parse_verdict(R"({"explanation": "flows", "verdict": true})");
  CHECK(v.verdict);
  CHECK(v.explanation == "flows");
  CHECK_FALSE(v.annotation);

  auto fenced = parse_verdict("```json\n" + reply(false, true) + "\n```");
  CHECK_FALSE(fenced.verdict);
  CHECK(fenced.source_is_fp);
  CHECK_FALSE(fenced.sink_is_fp);

  // flags only mean something on a negative verdict
  auto odd = parse_verdict(reply(true, true, true));
  CHECK(odd.verdict);
  CHECK_FALSE(odd.source_is_fp);
  CHECK_FALSE(odd.sink_is_fp);

  for (auto bad : {"", "no idea", R"({"verdict": "yes"})", R"({"explanation": "x"})", "{"}) {
    auto f = parse_verdict(bad);
    CHECK(f.verdict);
    CHECK(f.annotation);
  }
}

TEST_CASE("all-positive verdicts keep every alert") {
  std::vector<Alert> alerts{alert(1, 101), alert(2, 102), alert(3, 103)};
  auto llm = client([](const std::string &) { return reply(true); });
  auto res = filter_paths(alerts, llm, Cwe::Cwe79, {});
  CHECK(res.kept.size() == 3);
  CHECK(res.llm_calls == 3);
  for (const auto &a : res.kept) {
    REQUIRE(a.verdict);
    CHECK(a.verdict->verdict);
  }
  for (std::size_t i = 1; i < res.kept.size(); ++i)
    CHECK(res.kept[i - 1].id < res.kept[i].id);
}

TEST_CASE("a flagged sink prunes every alert that shares it") {
  std::vector<Alert> alerts{alert(1, 100), alert(2, 100), alert(3, 100), alert(4, 100)};
  auto llm = client([](const std::string &) { return reply(false, false, true); });
  auto res = filter_paths(alerts, llm, Cwe::Cwe79, {});
  CHECK(res.kept.empty());
  CHECK(res.llm_calls == 1);
  REQUIRE(res.audit.size() == 4);
  CHECK(res.audit[0].action == FilterAction::Dropped);
  CHECK(res.audit[0].queried);
  for (std::size_t i = 1; i < 4; ++i) {
    CHECK(res.audit[i].action == FilterAction::Pruned);
    CHECK(res.audit[i].by == FilterReason::SinkFp);
    CHECK_FALSE(res.audit[i].queried);
  }
}

TEST_CASE("same location under a different spec is not pruned") {
  std::vector<Alert> alerts{alert(1, 100, 1, 0), alert(1, 100, 2, 1)};
  auto llm = client([](const std::string &) { return reply(false, true, true); });
  auto res = filter_paths(alerts, llm, Cwe::Cwe79, {});
  CHECK(res.llm_calls == 2);
}

TEST_CASE("transport failures leave the alert unevaluated but kept") {
  std::vector<Alert> alerts{alert(1, 101), alert(2, 102)};
  LlmConfig cfg;
  cfg.retries = 0;
  class Down : public ChatTransport {
  public:
    TransportResponse post(const json &) override { return {503, "", ""}; }
  };
  ChatClient llm(cfg, std::make_shared<Down>(), [](std::chrono::milliseconds) {});
  auto res = filter_paths(alerts, llm, Cwe::Cwe79, {});
  CHECK(res.kept.size() == 2);
  for (const auto &r : res.audit) {
    CHECK(r.action == FilterAction::Unevaluated);
    CHECK(r.by == FilterReason::Error);
    CHECK_FALSE(r.detail.empty());
  }

  class Denied : public ChatTransport {
  public:
    TransportResponse post(const json &) override { return {401, "", ""}; }
  };
  ChatClient denied(cfg, std::make_shared<Denied>(), [](std::chrono::milliseconds) {});
  CHECK_THROWS_AS(filter_paths(alerts, denied, Cwe::Cwe79, {}), AuthError);
}

TEST_CASE("unparseable replies keep the alert with an annotation") {
  auto llm = client([](const std::string &) { return std::string("I am not sure."); });
  auto res = filter_paths({alert(1, 101)}, llm, Cwe::Cwe79, {});
  REQUIRE(res.kept.size() == 1);
  REQUIRE(res.kept[0].verdict);
  CHECK(res.kept[0].verdict->annotation);
}

TEST_CASE("pruning only removes alerts whose endpoint was judged a false positive") {
  std::mt19937 rng(8080);
  for (int trial = 0; trial < 150; ++trial) {
    // small pools so alerts share endpoints
    std::vector<Alert> alerts;
    std::set<std::pair<int, int>> used;
    int n = 1 + static_cast<int>(rng() % 12);
    for (int i = 0; i < n; ++i) {
      int s = 1 + static_cast<int>(rng() % 4);
      int k = 100 + static_cast<int>(rng() % 3);
      if (used.insert({s, k}).second)
        alerts.push_back(alert(s, k, 1 + static_cast<int>(rng() % 3)));
    }
    // fixed random opinion per (source, sink) pair
    std::map<std::pair<int, int>, std::string> opinion;
    for (auto [s, k] : used) {
      auto r = rng() % 4;
      opinion[{s, k}] = r == 0 ? reply(true) : reply(false, r == 1, r == 2);
    }
    std::mutex mu;
    std::vector<std::pair<int, int>> asked;
    auto llm = client([&](const std::string &p) {
      std::lock_guard lock(mu);
      auto ep = endpoints_of(p);
      asked.push_back(ep);
      return opinion.at(ep);
    });
    auto res = filter_paths(alerts, llm, Cwe::Cwe79, {});

    // Reference: walk in id order, remember flagged endpoints.
    auto ordered = alerts;
    std::sort(ordered.begin(), ordered.end(),
              [](const Alert &a, const Alert &b) { return a.id < b.id; });
    std::set<int> bad_src, bad_snk;
    std::vector<std::string> expect_kept;
    int expect_calls = 0;
    for (const auto &a : ordered) {
      int s = a.source().line, k = a.sink().line;
      if (bad_src.count(s) || bad_snk.count(k))
        continue;
      ++expect_calls;
      auto v = parse_verdict(opinion.at({s, k}));
      if (v.verdict) {
        expect_kept.push_back(a.id);
      } else {
        if (v.source_is_fp)
          bad_src.insert(s);
        if (v.sink_is_fp)
          bad_snk.insert(k);
      }
    }
    std::vector<std::string> got;
    for (const auto &a : res.kept)
      got.push_back(a.id);
    CHECK(got == expect_kept);
    CHECK(res.llm_calls == expect_calls);
    CHECK(static_cast<int>(asked.size()) == expect_calls);
    CHECK(res.audit.size() == alerts.size());

    // Every kept alert would also be kept when asked directly.
    for (const auto &a : res.kept)
      CHECK(parse_verdict(opinion.at({a.source().line, a.sink().line})).verdict);

    // Parallel mode asks everything and never prunes.
    auto llm2 = client([&](const std::string &p) { return opinion.at(endpoints_of(p)); });
    FilterOptions par;
    par.parallel = true;
    auto all = filter_paths(alerts, llm2, Cwe::Cwe79, {}, par);
    CHECK(all.llm_calls == static_cast<int>(alerts.size()));
    std::set<std::string> kept_par;
    for (const auto &a : all.kept)
      kept_par.insert(a.id);
    for (const auto &id : got)
      CHECK(kept_par.count(id));
  }
}

TEST_CASE("audit records serialize one per line") {
  std::vector<AuditRecord> recs{{"a1", FilterAction::Kept, FilterReason::Verdict, true, ""},
                                {"a2", FilterAction::Pruned, FilterReason::SourceFp, false, ""}};
  auto lines = split_lines(audit_to_jsonl(recs));
  REQUIRE(lines.size() == 2);
  auto j = json::parse(lines[1]);
  CHECK(j["action"] == "pruned");
  CHECK(j["by"] == "source_fp");
  CHECK(j["queried"] == false);
}
