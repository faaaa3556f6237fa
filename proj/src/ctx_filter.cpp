#include "taintlens/ctx_filter.hpp"
#include "taintlens/util.hpp"

#include <algorithm>
#include <atomic>
#include <set>
#include <sstream>
#include <thread>

namespace taintlens {

using json = nlohmann::json;

Snippet build_snippet(std::string_view file_text, int line,
                      std::string_view marker, int radius) {
  auto lines = split_lines(file_text);
  Snippet s;
  s.marked_line = line;
  int n = static_cast<int>(lines.size());
  if (n == 0 || line < 1 || line > n) {
    s.start_line = line;
    s.lines = "// " + std::string(marker) + " (source unavailable)";
    return s;
  }
  int lo = std::max(1, line - radius);
  int hi = std::min(n, line + radius);
  s.start_line = lo;
  for (int i = lo; i <= hi; ++i) {
    s.lines += lines[static_cast<std::size_t>(i - 1)];
    if (i == line)
      s.lines += "  // <-- " + std::string(marker);
    if (i < hi)
      s.lines += '\n';
  }
  return s;
}

std::vector<NodeId> select_intermediate_steps(const std::vector<PathStep> &steps,
                                              int segments) {
  if (segments < 1)
    throw std::invalid_argument("segments must be >= 1");
  std::vector<NodeId> out;
  if (steps.size() <= 2)
    return out;
  std::size_t m = steps.size() - 2;
  auto interior = [&](std::size_t i) -> const PathStep & { return steps[i + 1]; };
  auto S = static_cast<std::size_t>(segments);
  if (m <= S) {
    for (std::size_t i = 0; i < m; ++i)
      out.push_back(interior(i).id);
    return out;
  }
  for (std::size_t j = 0; j < S; ++j) {
    std::size_t lo = j * m / S, hi = (j + 1) * m / S;
    std::size_t pick = lo;
    for (std::size_t i = lo; i < hi; ++i) {
      auto k = interior(i).kind;
      if (k == NodeKind::CallResult || k == NodeKind::Argument) {
        pick = i;
        break;
      }
    }
    out.push_back(interior(pick).id);
  }
  return out;
}

namespace {

// "pkg.Class.fn" -> {"fn", "Class"}
std::pair<std::string, std::string> split_function(const std::string &q) {
  auto dot = q.rfind('.');
  if (dot == std::string::npos)
    return {q, ""};
  auto fn = q.substr(dot + 1);
  auto rest = q.substr(0, dot);
  auto dot2 = rest.rfind('.');
  return {fn, dot2 == std::string::npos ? rest : rest.substr(dot2 + 1)};
}

std::string_view file_text(const FileTexts &files, const std::string &path) {
  auto it = files.find(path);
  return it == files.end() ? std::string_view() : std::string_view(it->second);
}

} // namespace

SnippetContext build_snippet_context(const Alert &alert, const FileTexts &files,
                                     int segments) {
  SnippetContext ctx;
  const auto &src = alert.source();
  const auto &snk = alert.sink();
  ctx.source_snippet = build_snippet(file_text(files, src.file), src.line, "source");
  ctx.sink_snippet = build_snippet(file_text(files, snk.file), snk.line, "sink");
  std::tie(ctx.source_function, ctx.source_class) = split_function(src.function);
  std::tie(ctx.sink_function, ctx.sink_class) = split_function(snk.function);
  auto chosen = select_intermediate_steps(alert.steps, segments);
  std::set<NodeId> wanted(chosen.begin(), chosen.end());
  for (std::size_t i = 1; i + 1 < alert.steps.size(); ++i) {
    const auto &s = alert.steps[i];
    if (wanted.count(s.id))
      ctx.intermediate.push_back({s.file, s.line, s.code});
  }
  return ctx;
}

std::vector<ChatMessage> build_context_prompt(const Alert &alert, Cwe cwe,
                                              const SnippetContext &ctx) {
  const auto &src = alert.source();
  const auto &snk = alert.sink();
  std::ostringstream u;
  u << "Target vulnerability: " << to_string(cwe) << " (" << cwe_name(cwe)
    << ")\n"
    << cwe_description(cwe) << "\n\n"
    << "Static analysis reported a dataflow path from a taint source to a "
       "taint sink. Decide whether it is a real vulnerability.\n\n";
  u << "Source: " << alert.path.source_spec.display() << " at " << src.file
    << ':' << src.line << " in function " << ctx.source_function
    << " (class " << ctx.source_class << ")\n```\n"
    << ctx.source_snippet.lines << "\n```\n\n";
  u << "Sink: " << alert.path.sink_spec.display() << " at " << snk.file << ':'
    << snk.line << " in function " << ctx.sink_function << " (class "
    << ctx.sink_class << ")\n```\n"
    << ctx.sink_snippet.lines << "\n```\n\n";
  if (!ctx.intermediate.empty()) {
    u << "Intermediate steps:\n";
    for (const auto &s : ctx.intermediate)
      u << "- " << s.file << ':' << s.line << ": " << s.code_text << '\n';
    u << '\n';
  }
  u << "Respond in JSON with these fields in this order:\n"
       "{\"explanation\": \"<step-by-step reasoning>\", \"verdict\": "
       "true|false, \"source_is_fp\": true|false, \"sink_is_fp\": "
       "true|false}\n"
       "verdict is true when attacker-controlled data can reach the sink and "
       "cause the vulnerability. Set source_is_fp when the source can never "
       "carry attacker-controlled data, and sink_is_fp when the sink cannot "
       "lead to this vulnerability.\n";
  return {{ChatRole::System,
           "You are a security expert triaging static analysis alerts. Reply "
           "with a single JSON object and nothing else."},
          {ChatRole::User, u.str()}};
}

Verdict parse_verdict(std::string_view text) {
  Verdict fallback;
  fallback.annotation = "unparseable verdict response; alert kept";
  auto raw = extract_first_json(text, '{');
  if (!raw)
    return fallback;
  auto j = json::parse(*raw, nullptr, false);
  if (j.is_discarded() || !j.is_object() || !j.contains("verdict") ||
      !j["verdict"].is_boolean())
    return fallback;
  Verdict v;
  v.verdict = j["verdict"].get<bool>();
  if (auto it = j.find("explanation"); it != j.end() && it->is_string())
    v.explanation = it->get<std::string>();
  auto flag = [&](const char *key) {
    auto it = j.find(key);
    return it != j.end() && it->is_boolean() && it->get<bool>();
  };
  if (!v.verdict) {
    v.source_is_fp = flag("source_is_fp");
    v.sink_is_fp = flag("sink_is_fp");
  }
  return v;
}

std::string_view to_string(FilterAction a) {
  switch (a) {
  case FilterAction::Kept:
    return "kept";
  case FilterAction::Dropped:
    return "dropped";
  case FilterAction::Pruned:
    return "pruned";
  case FilterAction::Unevaluated:
    return "unevaluated";
  }
  return "kept";
}

std::string_view to_string(FilterReason r) {
  switch (r) {
  case FilterReason::Verdict:
    return "verdict";
  case FilterReason::SourceFp:
    return "source_fp";
  case FilterReason::SinkFp:
    return "sink_fp";
  case FilterReason::Error:
    return "error";
  }
  return "verdict";
}

json audit_to_json(const AuditRecord &r) {
  json j = {{"alert_id", r.alert_id},
            {"action", to_string(r.action)},
            {"by", to_string(r.by)},
            {"queried", r.queried}};
  if (!r.detail.empty())
    j["detail"] = r.detail;
  return j;
}

std::string audit_to_jsonl(const std::vector<AuditRecord> &records) {
  std::string out;
  for (const auto &r : records)
    out += audit_to_json(r).dump() + '\n';
  return out;
}

std::string prune_key(const TaintSpec &spec, NodeId node) {
  return spec_match_key(spec) + "#" + std::to_string(node.value);
}

namespace {

struct Query {
  std::optional<Verdict> verdict;
  std::string error;
};

Query ask(const Alert &alert, const SnippetContext &ctx, ChatClient &llm,
          Cwe cwe) {
  try {
    return {parse_verdict(llm.chat(build_context_prompt(alert, cwe, ctx))), ""};
  } catch (const AuthError &) {
    throw;
  } catch (const LlmError &e) {
    return {std::nullopt, e.what()};
  }
}

} // namespace

FilterResult filter_paths(const std::vector<Alert> &alerts, ChatClient &llm,
                          Cwe cwe, const FileTexts &files,
                          const FilterOptions &opts) {
  std::vector<const Alert *> order;
  for (const auto &a : alerts)
    order.push_back(&a);
  std::sort(order.begin(), order.end(),
            [](const Alert *a, const Alert *b) { return a->id < b->id; });

  std::vector<SnippetContext> ctx;
  ctx.reserve(order.size());
  for (const auto *a : order)
    ctx.push_back(build_snippet_context(*a, files, opts.segments));

  FilterResult out;
  auto settle = [&](std::size_t i, const Query &q) {
    const Alert &a = *order[i];
    AuditRecord rec{a.id, FilterAction::Kept, FilterReason::Verdict, true, ""};
    if (!q.verdict) {
      rec.action = FilterAction::Unevaluated;
      rec.by = FilterReason::Error;
      rec.detail = q.error;
      Alert kept = a;
      kept.snippets = ctx[i];
      out.kept.push_back(std::move(kept));
    } else if (q.verdict->verdict) {
      Alert kept = a;
      kept.snippets = ctx[i];
      kept.verdict = q.verdict;
      out.kept.push_back(std::move(kept));
    } else {
      rec.action = FilterAction::Dropped;
    }
    out.audit.push_back(std::move(rec));
  };

  if (opts.parallel) {
    std::vector<Query> answers(order.size());
    std::vector<std::exception_ptr> fatal(order.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
      for (std::size_t i; (i = next.fetch_add(1)) < order.size();) {
        try {
          answers[i] = ask(*order[i], ctx[i], llm, cwe);
        } catch (...) {
          fatal[i] = std::current_exception();
        }
      }
    };
    std::vector<std::thread> pool;
    auto n = std::max(1, opts.parallelism);
    for (int w = 0; w < n; ++w)
      pool.emplace_back(worker);
    for (auto &t : pool)
      t.join();
    for (const auto &f : fatal)
      if (f)
        std::rethrow_exception(f);
    for (std::size_t i = 0; i < order.size(); ++i)
      settle(i, answers[i]);
    out.llm_calls = static_cast<int>(order.size());
    return out;
  }

  std::set<std::string> bad_sources, bad_sinks;
  for (std::size_t i = 0; i < order.size(); ++i) {
    const Alert &a = *order[i];
    auto skey = prune_key(a.path.source_spec, a.source().id);
    auto kkey = prune_key(a.path.sink_spec, a.sink().id);
    if (bad_sources.count(skey) || bad_sinks.count(kkey)) {
      out.audit.push_back({a.id, FilterAction::Pruned,
                           bad_sources.count(skey) ? FilterReason::SourceFp
                                                   : FilterReason::SinkFp,
                           false, ""});
      continue;
    }
    auto q = ask(a, ctx[i], llm, cwe);
    ++out.llm_calls;
    if (q.verdict && !q.verdict->verdict) {
      if (q.verdict->source_is_fp)
        bad_sources.insert(skey);
      if (q.verdict->sink_is_fp)
        bad_sinks.insert(kkey);
    }
    settle(i, q);
  }
  return out;
}

} // namespace taintlens
