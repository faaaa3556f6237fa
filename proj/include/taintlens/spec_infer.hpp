#pragma once

#include "taintlens/candidates.hpp"
#include "taintlens/graph.hpp"
#include "taintlens/llm.hpp"

#include <nlohmann/json.hpp>

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace taintlens {

inline constexpr std::size_t kExternalBatchSize = 30;
inline constexpr std::size_t kInternalBatchSize = 20;
inline constexpr std::size_t kReadmeExcerpt = 2000;

/// Header of the CSV table in external labeling prompts.
inline constexpr std::string_view kExternalHeader =
    "index,package,class,method,signature";
/// Header of the CSV table in internal labeling prompts.
inline constexpr std::string_view kInternalHeader =
    "index,package,class,method,signature,parameter_index,parameter_name";

class BatchTooLarge : public std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};
class UnparseableResponse : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class Label { Source, Sink, TaintPropagator, None };

std::string_view to_string(Label label);
std::optional<Label> parse_label(std::string_view text);

struct Exemplar {
  ApiSignature api;
  Label label = Label::None;
  std::vector<int> sink_args;
  std::string explanation;
};

/// Built-in standard-library exemplars for `cwe`.
std::vector<Exemplar> default_exemplars(Cwe cwe);
/// Exemplars for `cwe` from a file shaped like the built-in table:
/// {"CWE-22": [{"package", "class", "method", "signature", "label", ...}]}.
std::vector<Exemplar> exemplars_from_json(const nlohmann::json &table, Cwe cwe);

std::vector<ChatMessage>
build_external_prompt(const std::vector<ExternalCandidate> &batch, Cwe cwe,
                      const std::vector<Exemplar> &fewshot);

std::vector<ChatMessage>
build_internal_prompt(const std::vector<InternalParamCandidate> &batch,
                      const std::optional<std::string> &readme);

struct LabelRow {
  int api_index = 0;
  Label label = Label::None;
  std::vector<int> sink_args;
  std::optional<std::string> explanation;

  bool operator==(const LabelRow &) const = default;
};

struct ParsedLabels {
  std::vector<LabelRow> rows;
  int dropped = 0;
};

/// Rows from the first JSON array in `text`. Out-of-range indices, unknown
/// labels and sinks without arguments are dropped and counted.
ParsedLabels parse_label_response(std::string_view text, std::size_t batch_size);

struct LabeledSpecs {
  std::vector<TaintSpec> sources;
  std::vector<TaintSpec> sinks;
  std::vector<TaintSpec> propagators;
  Cwe cwe = Cwe::Cwe22;

  bool operator==(const LabeledSpecs &) const = default;
  /// sources, sinks and propagators concatenated, canonically sorted.
  std::vector<TaintSpec> all() const;
};

struct RoleFilter {
  bool sources = true;
  bool sinks = true;
  bool propagators = true;
};

struct LabelOptions {
  RoleFilter roles;
  std::optional<std::vector<Exemplar>> fewshot;
  std::optional<std::string> readme;
  /// Batches in flight at once.
  int parallelism = 1;
};

struct LabelOutcome {
  LabeledSpecs specs;
  /// Indices of failed batches: external batches first, then internal.
  std::vector<int> failed_batches;
  int batches = 0;
  int dropped_rows = 0;

  bool partial() const { return !failed_batches.empty(); }
};

/// Runs LabelSpecs over both candidate kinds. Batches that fail with a
/// TransportError or UnparseableResponse are recorded in failed_batches;
/// if every batch fails with TransportError that error is rethrown.
/// AuthError always propagates.
LabelOutcome label_specs(const std::vector<ExternalCandidate> &external,
                         const std::vector<InternalParamCandidate> &internal,
                         ChatClient &llm, Cwe cwe, const LabelOptions &opts = {});

/// Batch boundaries used by label_specs: [begin, end) pairs.
std::vector<std::pair<std::size_t, std::size_t>> batch_ranges(std::size_t n,
                                                              std::size_t size);

} // namespace taintlens
