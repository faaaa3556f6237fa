#include "taintlens/spec_infer.hpp"
#include "taintlens/fewshot_data.hpp"
#include "taintlens/util.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <set>
#include <sstream>
#include <thread>

namespace taintlens {

using json = nlohmann::json;

std::string_view to_string(Label label) {
  switch (label) {
  case Label::Source:
    return "Source";
  case Label::Sink:
    return "Sink";
  case Label::TaintPropagator:
    return "TaintPropagator";
  case Label::None:
    return "None";
  }
  return "None";
}

std::optional<Label> parse_label(std::string_view text) {
  if (text == "Source")
    return Label::Source;
  if (text == "Sink")
    return Label::Sink;
  if (text == "TaintPropagator" || text == "Taint-Propagator" ||
      text == "Propagator")
    return Label::TaintPropagator;
  if (text == "None")
    return Label::None;
  return std::nullopt;
}

std::vector<Exemplar> exemplars_from_json(const json &table, Cwe cwe) {
  std::vector<Exemplar> out;
  auto it = table.find(std::string(to_string(cwe)));
  if (it == table.end())
    return out;
  for (const auto &e : *it) {
    Exemplar x;
    x.api.package = e.at("package").get<std::string>();
    x.api.class_name = e.at("class").get<std::string>();
    x.api.method = e.at("method").get<std::string>();
    x.api.signature = e.value("signature", std::vector<std::string>{});
    auto label = parse_label(e.at("label").get<std::string>());
    if (!label)
      throw std::invalid_argument("unknown exemplar label " +
                                  e.at("label").dump());
    x.label = *label;
    x.sink_args = e.value("sink_args", std::vector<int>{});
    x.explanation = e.value("explanation", "");
    out.push_back(std::move(x));
  }
  return out;
}

std::vector<Exemplar> default_exemplars(Cwe cwe) {
  static const json table = json::parse(data::kFewshotJson);
  return exemplars_from_json(table, cwe);
}

namespace {

constexpr std::string_view kLabelSystem =
    "You are a security expert reviewing Java APIs for taint analysis. "
    "Reply with a single JSON array and nothing else: no prose, no markdown.";

std::string exemplar_line(const Exemplar &x) {
  json j = {{"label", to_string(x.label)}};
  if (x.label == Label::Sink)
    j["sink_args"] = x.sink_args;
  j["explanation"] = x.explanation;
  return x.api.qualified_name() + x.api.signature_text() + " => " + j.dump();
}

} // namespace

std::vector<ChatMessage>
build_external_prompt(const std::vector<ExternalCandidate> &batch, Cwe cwe,
                      const std::vector<Exemplar> &fewshot) {
  if (batch.empty() || batch.size() > kExternalBatchSize)
    throw BatchTooLarge("external batch must hold 1.." +
                        std::to_string(kExternalBatchSize) + " APIs, got " +
                        std::to_string(batch.size()));
  std::ostringstream u;
  u << "Target vulnerability: " << to_string(cwe) << " (" << cwe_name(cwe)
    << ")\n"
    << cwe_description(cwe) << "\n\n"
    << "Classify each API below as exactly one of:\n"
    << "- Source: its return value may carry attacker-controlled data.\n"
    << "- Sink: attacker-controlled data reaching one of its arguments causes "
       "the vulnerability above; list those argument positions in sink_args "
       "(0-based, -1 for the receiver object).\n"
    << "- TaintPropagator: it passes data from its arguments or receiver to "
       "its return value without being a sink itself.\n"
    << "- None: none of the above.\n\n";
  if (!fewshot.empty()) {
    u << "Examples:\n";
    for (std::size_t i = 0; i < fewshot.size(); ++i)
      u << "Example " << (i + 1) << ": " << exemplar_line(fewshot[i]) << '\n';
    u << '\n';
  }
  u << "APIs:\n" << kExternalHeader << '\n';
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto &a = batch[i].api;
    u << i << ',' << csv_field(a.package) << ',' << csv_field(a.class_name)
      << ',' << csv_field(a.method) << ',' << csv_field(a.signature_text())
      << '\n';
  }
  u << "\nAnswer with a JSON array holding one object per API: "
       "[{\"api_index\": <index>, \"label\": "
       "\"Source\"|\"Sink\"|\"TaintPropagator\"|\"None\", \"sink_args\": "
       "[<positions>], \"explanation\": \"<short reason>\"}]\n";
  return {{ChatRole::System, std::string(kLabelSystem)},
          {ChatRole::User, u.str()}};
}

std::vector<ChatMessage>
build_internal_prompt(const std::vector<InternalParamCandidate> &batch,
                      const std::optional<std::string> &readme) {
  if (batch.empty() || batch.size() > kInternalBatchSize)
    throw BatchTooLarge("internal batch must hold 1.." +
                        std::to_string(kInternalBatchSize) +
                        " parameters, got " + std::to_string(batch.size()));
  std::ostringstream u;
  if (readme && !readme->empty())
    u << "Project readme (excerpt):\n"
      << readme->substr(0, kReadmeExcerpt) << "\n\n";
  u << "The parameters below belong to public functions of this library. "
       "Any downstream application could call these functions with values "
       "of its choosing. For each parameter, decide whether a downstream "
       "caller could pass malicious input through it, so that it should be "
       "treated as a Source of untrusted data. Otherwise answer None.\n\n";

  std::set<std::string> documented;
  std::ostringstream docs;
  for (const auto &c : batch)
    if (c.doc && !c.doc->empty() && documented.insert(c.function).second)
      docs << c.function << ": " << *c.doc << '\n';
  if (!documented.empty())
    u << "Documentation:\n" << docs.str() << '\n';

  u << "Parameters:\n" << kInternalHeader << '\n';
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto &c = batch[i];
    u << i << ',' << csv_field(c.api.package) << ','
      << csv_field(c.api.class_name) << ',' << csv_field(c.api.method) << ','
      << csv_field(c.api.signature_text()) << ',' << c.position << ','
      << csv_field(c.param_name) << '\n';
  }
  u << "\nAnswer with a JSON array holding one object per parameter: "
       "[{\"api_index\": <index>, \"label\": \"Source\"|\"None\", "
       "\"explanation\": \"<short reason>\"}]\n";
  return {{ChatRole::System, std::string(kLabelSystem)},
          {ChatRole::User, u.str()}};
}

ParsedLabels parse_label_response(std::string_view text,
                                  std::size_t batch_size) {
  auto raw = extract_first_json(text, '[');
  if (!raw)
    throw UnparseableResponse("no JSON array in response");
  auto arr = json::parse(*raw);
  ParsedLabels out;
  for (const auto &e : arr) {
    if (!e.is_object() || !e.contains("api_index") ||
        !e["api_index"].is_number_integer() || !e.contains("label") ||
        !e["label"].is_string()) {
      ++out.dropped;
      continue;
    }
    auto idx = e["api_index"].get<long long>();
    auto label = parse_label(e["label"].get<std::string>());
    if (idx < 0 || static_cast<std::size_t>(idx) >= batch_size || !label) {
      ++out.dropped;
      continue;
    }
    LabelRow row;
    row.api_index = static_cast<int>(idx);
    row.label = *label;
    if (auto it = e.find("sink_args"); it != e.end() && it->is_array())
      for (const auto &p : *it)
        if (p.is_number_integer())
          row.sink_args.push_back(p.get<int>());
    if (row.label == Label::Sink && row.sink_args.empty()) {
      ++out.dropped;
      continue;
    }
    if (auto it = e.find("explanation"); it != e.end() && it->is_string())
      row.explanation = it->get<std::string>();
    out.rows.push_back(std::move(row));
  }
  return out;
}

std::vector<TaintSpec> LabeledSpecs::all() const {
  std::vector<TaintSpec> out = sources;
  out.insert(out.end(), sinks.begin(), sinks.end());
  out.insert(out.end(), propagators.begin(), propagators.end());
  sort_specs(out);
  return out;
}

std::vector<std::pair<std::size_t, std::size_t>> batch_ranges(std::size_t n,
                                                              std::size_t size) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t b = 0; b < n; b += size)
    out.emplace_back(b, std::min(n, b + size));
  return out;
}

namespace {

struct BatchJob {
  bool internal = false;
  std::size_t begin = 0;
  std::size_t end = 0;
};

struct BatchResult {
  std::optional<ParsedLabels> parsed;
  std::exception_ptr error;
};

} // namespace

LabelOutcome label_specs(const std::vector<ExternalCandidate> &external,
                         const std::vector<InternalParamCandidate> &internal,
                         ChatClient &llm, Cwe cwe, const LabelOptions &opts) {
  const auto fewshot = opts.fewshot ? *opts.fewshot : default_exemplars(cwe);

  std::vector<BatchJob> jobs;
  for (auto [b, e] : batch_ranges(external.size(), kExternalBatchSize))
    jobs.push_back({false, b, e});
  for (auto [b, e] : batch_ranges(internal.size(), kInternalBatchSize))
    jobs.push_back({true, b, e});

  std::vector<BatchResult> results(jobs.size());
  auto run = [&](std::size_t i) {
    const auto &job = jobs[i];
    try {
      std::vector<ChatMessage> prompt;
      if (job.internal)
        prompt = build_internal_prompt(
            {internal.begin() + job.begin, internal.begin() + job.end},
            opts.readme);
      else
        prompt = build_external_prompt(
            {external.begin() + job.begin, external.begin() + job.end}, cwe,
            fewshot);
      results[i].parsed =
          parse_label_response(llm.chat(prompt), job.end - job.begin);
    } catch (...) {
      results[i].error = std::current_exception();
    }
  };

  std::size_t workers = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::max(opts.parallelism, 1)), 1, jobs.size() + 1);
  if (workers <= 1 || jobs.size() <= 1) {
    for (std::size_t i = 0; i < jobs.size(); ++i)
      run(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w)
      pool.emplace_back([&] {
        for (std::size_t i; (i = next.fetch_add(1)) < jobs.size();)
          run(i);
      });
    for (auto &t : pool)
      t.join();
  }

  LabelOutcome out;
  out.specs.cwe = cwe;
  out.batches = static_cast<int>(jobs.size());
  std::exception_ptr first_transport;
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    const auto &job = jobs[i];
    auto &res = results[i];
    if (res.error) {
      try {
        std::rethrow_exception(res.error);
      } catch (const TransportError &) {
        if (!first_transport)
          first_transport = res.error;
      } catch (const UnparseableResponse &) {
      }
      out.failed_batches.push_back(static_cast<int>(i));
      continue;
    }
    out.dropped_rows += res.parsed->dropped;
    std::set<int> seen;
    for (const auto &row : res.parsed->rows) {
      if (!seen.insert(row.api_index).second) {
        ++out.dropped_rows;
        continue;
      }
      auto idx = job.begin + static_cast<std::size_t>(row.api_index);
      if (job.internal) {
        const auto &c = internal[idx];
        if (row.label != Label::Source || !opts.roles.sources)
          continue;
        TaintSpec s{SpecNodeType::Parameter, c.api, Role::Source, cwe};
        s.api.position = c.position;
        s.api.is_external = false;
        out.specs.sources.push_back(std::move(s));
        continue;
      }
      const auto &c = external[idx];
      TaintSpec s{SpecNodeType::ReturnValue, c.api, Role::Source, cwe};
      s.api.position.reset();
      s.api.is_external = true;
      switch (row.label) {
      case Label::Source:
        if (opts.roles.sources && c.may_be_source)
          out.specs.sources.push_back(s);
        break;
      case Label::TaintPropagator:
        if (opts.roles.propagators && c.may_be_source) {
          s.role = Role::TaintPropagator;
          out.specs.propagators.push_back(s);
        }
        break;
      case Label::Sink:
        if (!opts.roles.sinks)
          break;
        for (int p : row.sink_args) {
          if (!std::binary_search(c.sink_positions.begin(),
                                  c.sink_positions.end(), p))
            continue;
          TaintSpec k = s;
          k.node_type = SpecNodeType::Argument;
          k.role = Role::Sink;
          k.api.position = p;
          out.specs.sinks.push_back(std::move(k));
        }
        break;
      case Label::None:
        break;
      }
    }
  }

  // Anything else (AuthError, NonRetryable4xx) already escaped above.
  if (!jobs.empty() && out.failed_batches.size() == jobs.size() &&
      first_transport)
    std::rethrow_exception(first_transport);

  sort_specs(out.specs.sources);
  sort_specs(out.specs.sinks);
  sort_specs(out.specs.propagators);
  return out;
}

} // namespace taintlens
